#pragma once

#include "clademap/allele_table.hpp"
#include "clademap/data_model.hpp"
#include "clademap/tipset.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace clademap {

struct HmmParams {
  /// Per-allele copying error lambda, in (0, 0.5).
  double mismatch_rate = 0.0;
  /// Converts genetic distance in Morgans to the population-scaled rate
  /// used in the per-chain stay probability exp(-rho/N).
  double switch_scale = 0.0;
  /// Panel sites used on each side of the focal position.
  std::size_t window_sites = 200;

  /// lambda = theta/(2(N+theta)) with Watterson theta; switch scale 4 Ne.
  static HmmParams defaults(std::size_t n_haplotypes);
  void validate() const;
};

/// Expected number of copies of each panel haplotype at one position for
/// one individual; sums to 2.
struct CopyDosage {
  std::vector<double> q;
  /// Set when the window held no observed genotype and q is uniform.
  bool no_typed_sites = false;
};

/// Posterior over ordered copy pairs (k1, k2) at one position. Symmetric;
/// the unordered pair {k1,k2} has mass at(k1,k2) + at(k2,k1) for k1 != k2.
struct PairPosterior {
  std::size_t n = 0;
  std::vector<double> mass;

  double at(std::size_t k1, std::size_t k2) const { return mass[k1 * n + k2]; }
};

/// Copying posterior for `individual` at `focal_position`, using the typed
/// sites among the `window_sites` panel sites on each side of it.
CopyDosage copying_posterior(const HaplotypePanel& panel, const RecombinationMap& map, const GenotypeStudy& study,
                             std::size_t individual, std::int64_t focal_position, const HmmParams& params,
                             PairPosterior* pair_posterior = nullptr);

/// Same model evaluated at several sorted positions with one forward-backward
/// pass over the union of their windows.
std::vector<CopyDosage> copying_posterior_multi(const HaplotypePanel& panel, const RecombinationMap& map,
                                                const GenotypeStudy& study, std::size_t individual,
                                                std::span<const std::int64_t> focal_positions,
                                                const HmmParams& params);

/// e = sum over the clade of q(k).
double clade_dosage(std::span<const double> q, const TipSet& clade);

struct GenotypeProbabilities {
  double p0 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
};

/// Probability of carrying 0/1/2 copies of a mutation on the branch subtending `clade`.
GenotypeProbabilities branch_genotype_probabilities(const PairPosterior& posterior, const TipSet& clade);

/// One row `snp_id pos a0 a1 P0 P1 P2 ...` per branch SNP.
void write_branch_genotype_row(std::ostream& out, const std::string& snp_id, std::int64_t position,
                               const std::vector<GenotypeProbabilities>& probabilities);

/// Expected allele-count 2x2 table from per-individual dosages.
AlleleCountTable dosage_table(std::span<const double> dosages, std::span<const std::uint8_t> phenotypes);

/// Per-position totals of q over cases and over controls; clade sums of
/// these give every branch's table without revisiting individuals.
struct DosageSums {
  std::vector<double> cases;
  std::vector<double> controls;
  std::size_t n_cases = 0;
  std::size_t n_controls = 0;

  AlleleCountTable clade_table(const TipSet& clade) const;
  double case_sum(const TipSet& clade) const;
  double control_sum(const TipSet& clade) const;
};

/// q for every individual at every position: result[position][individual].
std::vector<std::vector<CopyDosage>> study_copy_dosages(const HaplotypePanel& panel, const RecombinationMap& map,
                                                        const GenotypeStudy& study,
                                                        std::span<const std::int64_t> positions,
                                                        const HmmParams& params, unsigned threads = 1);

/// Case/control totals at every position, without keeping per-individual q.
std::vector<DosageSums> study_dosage_sums(const HaplotypePanel& panel, const RecombinationMap& map,
                                          const GenotypeStudy& study, std::span<const std::int64_t> positions,
                                          const HmmParams& params, unsigned threads = 1);

DosageSums sum_dosages(const std::vector<CopyDosage>& per_individual, std::span<const std::uint8_t> phenotypes);

}  // namespace clademap
