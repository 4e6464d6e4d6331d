#pragma once

#include "clademap/data_model.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace clademap {

/// Random source for the simulator. Wraps mt19937_64 with a portable
/// uniform(0,1) so draws do not depend on the standard library vendor.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform01() * static_cast<double>(n)); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Seed for replicate `index`; independent of how replicates are scheduled.
std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t index);

struct MosaicParams {
  double mismatch_rate = 0.0;
  /// 4 Ne; switch probability between adjacent sites is 1 - exp(-scale * Morgans / N).
  double switch_scale = 0.0;

  static MosaicParams defaults(std::size_t n_haplotypes);
};

/// One haplotype copied as a mosaic of panel haplotypes.
std::vector<std::uint8_t> simulate_haplotype(const HaplotypePanel& panel, const RecombinationMap& map,
                                             const MosaicParams& params, SimRng& rng);

struct DiseaseModel {
  std::vector<std::size_t> causal_sites;
  /// Per risk-allele multiplicative relative risk, one per causal site.
  std::vector<double> relative_risks;
  double baseline_risk = 0.05;

  void validate(const HaplotypePanel& panel) const;
};

struct SimConfig {
  std::size_t n_cases = 0;
  std::size_t n_controls = 0;
  std::uint64_t seed = 0;
  /// Panel sites reported in the output study, sorted.
  std::vector<std::size_t> typed_mask;
  bool include_causal = false;
  std::size_t max_draws = 20'000'000;
  MosaicParams mosaic;
};

struct SimulatedStudy {
  /// Genotypes at typed sites; TypedSite::panel_site indexes the simulation panel.
  GenotypeStudy study;
  /// Risk-allele (minor allele) counts per causal site per individual.
  std::vector<std::vector<std::uint8_t>> causal_genotypes;
  std::size_t draws = 0;
};

/// Rejection sampling of individuals until both quotas are met. Disease
/// probability is baseline x prod RR^count, capped at 1.
SimulatedStudy simulate_case_control(const HaplotypePanel& panel, const RecombinationMap& map,
                                     const DiseaseModel& model, const SimConfig& config);

/// Re-expresses `study` against another panel by matching site positions;
/// sites absent from `target` are dropped.
GenotypeStudy rebase_study(const GenotypeStudy& study, const HaplotypePanel& source, const HaplotypePanel& target);

enum class PairModel { A, B };

struct MafClass {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double maf) const { return maf > 0.0 && maf >= lo && maf <= hi; }
};

inline constexpr MafClass kRareClass{0.0, 0.02 - 1e-12};
inline constexpr MafClass kCommonClass{0.05, 0.20};

/// Causal site pairs within `max_distance_bp`. Model A pairs are (rare, common);
/// Model B pairs are (i, j) with i < j, both common.
std::vector<std::pair<std::size_t, std::size_t>> select_causal_pairs(const HaplotypePanel& panel, PairModel model,
                                                                     std::int64_t max_distance_bp = 15'000);

struct ThinSpec {
  double density_per_kb = 1.0;
  /// Upper edges of MAF bins over (0, 0.5]; the last edge is forced to 0.5.
  std::vector<double> maf_bin_edges{0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  /// Target share per bin; empty means the full panel's own histogram.
  std::vector<double> bin_targets;
  std::vector<std::size_t> must_include;
  std::int64_t density_window_bp = 20'000;
  std::uint64_t seed = 0;
};

struct ThinResult {
  std::vector<std::size_t> sites;
  HaplotypePanel panel;
  std::size_t target_count = 0;
  /// Largest relative deviation of per-window density from the target.
  double max_density_deviation = 0.0;
  std::vector<double> bin_targets;
  std::vector<double> bin_achieved;
  bool feasible = true;
  std::string diagnostics;
};

ThinResult thin_panel(const HaplotypePanel& panel, const ThinSpec& spec);

/// Squared allelic correlation of two binary columns; 0 if either is monomorphic.
double allele_r2(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y);

/// Polymorphic sites of `full` whose r^2 with every site of `thinned` is at most r2_max.
std::vector<std::size_t> select_poorly_tagged_sites(const HaplotypePanel& full, const HaplotypePanel& thinned,
                                                    double r2_max = 0.2);

struct ReplicateRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> causal_positions;
  std::vector<double> relative_risks;
  std::size_t n_cases = 0;
  std::size_t n_controls = 0;
  std::size_t draws = 0;
  std::string gen_file;
  std::string sample_file;
};

std::string manifest_json(const std::string& model_name, std::uint64_t base_seed,
                          const std::vector<ReplicateRecord>& records);

}  // namespace clademap
