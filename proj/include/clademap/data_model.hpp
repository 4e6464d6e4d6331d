#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace clademap {

/// One row of a legend file.
struct SiteInfo {
  std::string id;
  std::int64_t position = 0;
  std::string allele0;
  std::string allele1;
};

/// N phased reference haplotypes over L biallelic sites. Stored site-major,
/// since every consumer walks sites and looks at all haplotypes at once.
class HaplotypePanel {
 public:
  HaplotypePanel() = default;
  /// `site_alleles[s][k]` is the allele of haplotype k at site s.
  HaplotypePanel(std::vector<SiteInfo> legend, std::vector<std::vector<std::uint8_t>> site_alleles);

  std::size_t n_haplotypes() const { return n_haplotypes_; }
  std::size_t n_sites() const { return legend_.size(); }

  std::uint8_t allele(std::size_t haplotype, std::size_t site) const {
    return alleles_[site * n_haplotypes_ + haplotype];
  }
  std::span<const std::uint8_t> site_alleles(std::size_t site) const {
    return {alleles_.data() + site * n_haplotypes_, n_haplotypes_};
  }
  std::vector<std::uint8_t> haplotype(std::size_t k) const;

  const SiteInfo& site(std::size_t s) const { return legend_[s]; }
  const std::vector<SiteInfo>& legend() const { return legend_; }
  std::int64_t position(std::size_t s) const { return legend_[s].position; }
  std::vector<std::int64_t> positions() const;

  /// Number of haplotypes carrying allele 1 at `site`.
  std::size_t allele1_count(std::size_t site) const;
  double minor_allele_frequency(std::size_t site) const;
  /// The minor allele (0 or 1); allele 1 on an exact 50/50 split.
  std::uint8_t minor_allele(std::size_t site) const;

  /// Index of the site at `position_bp`, or npos.
  std::size_t find_position(std::int64_t position_bp) const;
  /// First site with position >= position_bp (n_sites() when none).
  std::size_t lower_bound(std::int64_t position_bp) const;

  /// Panel restricted to the given (strictly increasing) site indices.
  HaplotypePanel subset_sites(std::span<const std::size_t> sites) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::size_t n_haplotypes_ = 0;
  std::vector<SiteInfo> legend_;
  std::vector<std::uint8_t> alleles_;
};

/// A study SNP as it appeared in the gen file, mapped onto a panel site.
struct TypedSite {
  std::string id;
  std::int64_t position = 0;
  std::string allele0;
  std::string allele1;
  std::size_t panel_site = 0;
  /// True when the gen file's allele labels are reversed relative to the legend.
  bool flipped = false;
};

inline constexpr std::int8_t kMissingGenotype = -1;

/// K individuals genotyped at a subset of panel sites, with binary phenotypes.
/// Genotypes are stored individual-major in panel orientation (count of allele 1).
class GenotypeStudy {
 public:
  GenotypeStudy() = default;
  GenotypeStudy(std::vector<TypedSite> sites, std::vector<std::string> sample_ids,
                std::vector<std::int8_t> genotypes, std::vector<std::uint8_t> phenotypes);

  std::size_t n_individuals() const { return phenotypes_.size(); }
  std::size_t n_typed() const { return sites_.size(); }
  const std::vector<TypedSite>& typed_sites() const { return sites_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::uint8_t>& phenotypes() const { return phenotypes_; }

  std::int8_t genotype(std::size_t individual, std::size_t typed) const {
    return genotypes_[individual * sites_.size() + typed];
  }
  std::span<const std::int8_t> individual_genotypes(std::size_t individual) const {
    return {genotypes_.data() + individual * sites_.size(), sites_.size()};
  }

  std::size_t n_cases() const;
  std::size_t n_controls() const;

  /// Same genotypes, different phenotype vector (e.g. a permutation).
  GenotypeStudy with_phenotypes(std::vector<std::uint8_t> phenotypes) const;

 private:
  std::vector<TypedSite> sites_;
  std::vector<std::string> sample_ids_;
  std::vector<std::int8_t> genotypes_;
  std::vector<std::uint8_t> phenotypes_;
};

struct MapPoint {
  std::int64_t position = 0;
  double rate_cm_per_mb = 0.0;
  double cumulative_cm = 0.0;
};

/// Piecewise-linear genetic map.
class RecombinationMap {
 public:
  RecombinationMap() = default;
  explicit RecombinationMap(std::vector<MapPoint> points);

  /// Constant-rate map through [start_bp, end_bp].
  static RecombinationMap uniform(double rate_cm_per_mb, std::int64_t start_bp, std::int64_t end_bp);

  const std::vector<MapPoint>& points() const { return points_; }
  bool empty() const { return points_.empty(); }

  /// Cumulative cM at `position_bp`: linear interpolation inside the map,
  /// extrapolation with the nearest end's rate outside it.
  double genetic_position(std::int64_t position_bp) const;

 private:
  std::vector<MapPoint> points_;
};

/// Genetic distance in cM from `from_bp` to `to_bp` (requires from_bp <= to_bp).
double genetic_distance(const RecombinationMap& map, std::int64_t from_bp, std::int64_t to_bp);

struct PositionGrid {
  std::vector<std::int64_t> positions_bp;
};

PositionGrid make_grid(std::int64_t region_start_bp, std::int64_t region_end_bp, std::int64_t spacing_bp);

/// Beta(a, c) penetrance prior plus the 2-vs-1 prior odds and the
/// normal prior sd on the per-allele log-odds effect.
struct PriorSpec {
  double a = 20.0;
  double c = 30.0;
  double prior_odds_2v1 = 1.0;
  double effect_prior_sd = 0.2;

  void validate() const;
};

// ---- file IO ---------------------------------------------------------------

HaplotypePanel load_panel(const std::filesystem::path& legend_path, const std::filesystem::path& haps_path);
HaplotypePanel read_panel(std::istream& legend, std::istream& haps);
void write_panel(const HaplotypePanel& panel, std::ostream& legend, std::ostream& haps);
void save_panel(const HaplotypePanel& panel, const std::filesystem::path& legend_path,
                const std::filesystem::path& haps_path);

struct LoadOptions {
  /// Skip study SNPs absent from the panel instead of failing.
  bool drop_unmatched = false;
};

struct LoadReport {
  std::vector<std::string> warnings;
};

GenotypeStudy load_genotypes(const std::filesystem::path& gen_path, const std::filesystem::path& sample_path,
                             const HaplotypePanel& panel, const LoadOptions& options = {},
                             LoadReport* report = nullptr);
GenotypeStudy read_genotypes(std::istream& gen, std::istream& sample, const HaplotypePanel& panel,
                             const LoadOptions& options = {}, LoadReport* report = nullptr);
/// Writes in the gen file's original allele orientation.
void write_genotypes(const GenotypeStudy& study, std::ostream& gen, std::ostream& sample);
void save_genotypes(const GenotypeStudy& study, const std::filesystem::path& gen_path,
                    const std::filesystem::path& sample_path);

RecombinationMap load_map(const std::filesystem::path& path);
RecombinationMap read_map(std::istream& in);
void write_map(const RecombinationMap& map, std::ostream& out);

/// Shortest round-trippable decimal representation.
std::string format_double(double value);

}  // namespace clademap
