#include "clademap/data_model.hpp"

#include "clademap/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace clademap {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

/// getline that strips a trailing CR.
bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::string where(std::string_view file, std::size_t line_no) {
  return std::string(file) + " line " + std::to_string(line_no) + ": ";
}

std::int64_t parse_int(std::string_view tok, std::string_view file, std::size_t line_no) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    throw InputError(where(file, line_no) + "invalid integer '" + std::string(tok) + "'");
  return v;
}

double parse_real(std::string_view tok, std::string_view file, std::size_t line_no) {
  double v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size() || !std::isfinite(v))
    throw InputError(where(file, line_no) + "invalid number '" + std::string(tok) + "'");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

char complement_base(char b) {
  switch (b) {
    case 'A': return 'T';
    case 'T': return 'A';
    case 'C': return 'G';
    case 'G': return 'C';
    case 'a': return 't';
    case 't': return 'a';
    case 'c': return 'g';
    case 'g': return 'c';
    default: return b;
  }
}

std::string complement(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = complement_base(ch);
  return out;
}

}  // namespace

// ---- HaplotypePanel --------------------------------------------------------

HaplotypePanel::HaplotypePanel(std::vector<SiteInfo> legend,
                               std::vector<std::vector<std::uint8_t>> site_alleles)
    : legend_(std::move(legend)) {
  if (legend_.empty()) throw InputError("panel has no sites");
  if (site_alleles.size() != legend_.size())
    throw InputError("panel allele rows (" + std::to_string(site_alleles.size()) +
                     ") do not match legend rows (" + std::to_string(legend_.size()) + ")");
  n_haplotypes_ = site_alleles.front().size();
  if (n_haplotypes_ < 2) throw InputError("panel needs at least 2 haplotypes");
  alleles_.reserve(n_haplotypes_ * legend_.size());
  for (std::size_t s = 0; s < legend_.size(); ++s) {
    if (s > 0 && legend_[s].position <= legend_[s - 1].position)
      throw InputError("nonmonotone position at site " + std::to_string(s + 1));
    if (site_alleles[s].size() != n_haplotypes_)
      throw InputError("site " + std::to_string(s + 1) + " has " + std::to_string(site_alleles[s].size()) +
                       " haplotypes, expected " + std::to_string(n_haplotypes_));
    for (auto a : site_alleles[s]) {
      if (a > 1) throw InputError("non-binary allele at site " + std::to_string(s + 1));
      alleles_.push_back(a);
    }
  }
}

std::vector<std::uint8_t> HaplotypePanel::haplotype(std::size_t k) const {
  std::vector<std::uint8_t> h(n_sites());
  for (std::size_t s = 0; s < n_sites(); ++s) h[s] = allele(k, s);
  return h;
}

std::vector<std::int64_t> HaplotypePanel::positions() const {
  std::vector<std::int64_t> out;
  out.reserve(legend_.size());
  for (const auto& s : legend_) out.push_back(s.position);
  return out;
}

std::size_t HaplotypePanel::allele1_count(std::size_t site) const {
  auto row = site_alleles(site);
  return static_cast<std::size_t>(std::count(row.begin(), row.end(), std::uint8_t{1}));
}

double HaplotypePanel::minor_allele_frequency(std::size_t site) const {
  const double f = static_cast<double>(allele1_count(site)) / static_cast<double>(n_haplotypes_);
  return std::min(f, 1.0 - f);
}

std::uint8_t HaplotypePanel::minor_allele(std::size_t site) const {
  return 2 * allele1_count(site) <= n_haplotypes_ ? 1 : 0;
}

std::size_t HaplotypePanel::lower_bound(std::int64_t position_bp) const {
  auto it = std::lower_bound(legend_.begin(), legend_.end(), position_bp,
                             [](const SiteInfo& s, std::int64_t p) { return s.position < p; });
  return static_cast<std::size_t>(it - legend_.begin());
}

std::size_t HaplotypePanel::find_position(std::int64_t position_bp) const {
  const std::size_t i = lower_bound(position_bp);
  return (i < legend_.size() && legend_[i].position == position_bp) ? i : npos;
}

HaplotypePanel HaplotypePanel::subset_sites(std::span<const std::size_t> sites) const {
  std::vector<SiteInfo> legend;
  std::vector<std::vector<std::uint8_t>> rows;
  legend.reserve(sites.size());
  rows.reserve(sites.size());
  for (auto s : sites) {
    legend.push_back(legend_.at(s));
    auto row = site_alleles(s);
    rows.emplace_back(row.begin(), row.end());
  }
  return HaplotypePanel(std::move(legend), std::move(rows));
}

// ---- GenotypeStudy ---------------------------------------------------------

GenotypeStudy::GenotypeStudy(std::vector<TypedSite> sites, std::vector<std::string> sample_ids,
                             std::vector<std::int8_t> genotypes, std::vector<std::uint8_t> phenotypes)
    : sites_(std::move(sites)),
      sample_ids_(std::move(sample_ids)),
      genotypes_(std::move(genotypes)),
      phenotypes_(std::move(phenotypes)) {
  if (sample_ids_.size() != phenotypes_.size())
    throw InputError("sample id count does not match phenotype count");
  if (genotypes_.size() != sites_.size() * phenotypes_.size())
    throw InputError("genotype matrix size does not match sites x individuals");
  for (std::size_t t = 1; t < sites_.size(); ++t)
    if (sites_[t].panel_site <= sites_[t - 1].panel_site)
      throw InputError("typed sites must map to strictly increasing panel sites");
  for (auto p : phenotypes_)
    if (p > 1) throw InputError("phenotype outside {0,1}");
  for (auto g : genotypes_)
    if (g != kMissingGenotype && (g < 0 || g > 2)) throw InputError("genotype outside {0,1,2,NA}");
  if (n_cases() == 0 || n_controls() == 0) throw InputError("study needs at least one case and one control");
}

std::size_t GenotypeStudy::n_cases() const {
  return static_cast<std::size_t>(std::count(phenotypes_.begin(), phenotypes_.end(), std::uint8_t{1}));
}

std::size_t GenotypeStudy::n_controls() const { return phenotypes_.size() - n_cases(); }

GenotypeStudy GenotypeStudy::with_phenotypes(std::vector<std::uint8_t> phenotypes) const {
  return GenotypeStudy(sites_, sample_ids_, genotypes_, std::move(phenotypes));
}

// ---- RecombinationMap ------------------------------------------------------

RecombinationMap::RecombinationMap(std::vector<MapPoint> points) : points_(std::move(points)) {
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (points_[i].position <= points_[i - 1].position)
      throw InputError("map positions must be strictly increasing (point " + std::to_string(i + 1) + ")");
    if (points_[i].cumulative_cm < points_[i - 1].cumulative_cm)
      throw InputError("map cumulative cM decreases at point " + std::to_string(i + 1));
  }
  for (const auto& p : points_)
    if (p.rate_cm_per_mb < 0) throw InputError("negative recombination rate in map");
}

RecombinationMap RecombinationMap::uniform(double rate_cm_per_mb, std::int64_t start_bp, std::int64_t end_bp) {
  const double span_cm = rate_cm_per_mb * static_cast<double>(end_bp - start_bp) / 1e6;
  return RecombinationMap({{start_bp, rate_cm_per_mb, 0.0}, {end_bp, rate_cm_per_mb, span_cm}});
}

double RecombinationMap::genetic_position(std::int64_t position_bp) const {
  if (points_.empty()) throw InputError("recombination map is empty");
  const auto& first = points_.front();
  const auto& last = points_.back();
  if (position_bp <= first.position)
    return first.cumulative_cm - first.rate_cm_per_mb * static_cast<double>(first.position - position_bp) / 1e6;
  if (position_bp >= last.position)
    return last.cumulative_cm + last.rate_cm_per_mb * static_cast<double>(position_bp - last.position) / 1e6;
  auto it = std::upper_bound(points_.begin(), points_.end(), position_bp,
                             [](std::int64_t p, const MapPoint& m) { return p < m.position; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double frac =
      static_cast<double>(position_bp - lo.position) / static_cast<double>(hi.position - lo.position);
  return lo.cumulative_cm + frac * (hi.cumulative_cm - lo.cumulative_cm);
}

double genetic_distance(const RecombinationMap& map, std::int64_t from_bp, std::int64_t to_bp) {
  if (map.empty()) throw InputError("recombination map is empty");
  if (from_bp > to_bp) throw std::invalid_argument("genetic_distance requires from_bp <= to_bp");
  if (from_bp == to_bp) return 0.0;
  return std::max(0.0, map.genetic_position(to_bp) - map.genetic_position(from_bp));
}

PositionGrid make_grid(std::int64_t region_start_bp, std::int64_t region_end_bp, std::int64_t spacing_bp) {
  if (region_start_bp >= region_end_bp) throw InputError("grid region start must precede end");
  if (spacing_bp <= 0) throw InputError("grid spacing must be positive");
  PositionGrid grid;
  for (std::int64_t p = region_start_bp; p <= region_end_bp; p += spacing_bp) grid.positions_bp.push_back(p);
  return grid;
}

void PriorSpec::validate() const {
  if (!(std::isfinite(a) && a > 0 && std::isfinite(c) && c > 0))
    throw InputError("Beta prior parameters must be finite and positive");
  if (!(prior_odds_2v1 > 0 && std::isfinite(prior_odds_2v1))) throw InputError("prior odds must be positive");
  if (!(effect_prior_sd > 0 && std::isfinite(effect_prior_sd)))
    throw InputError("effect prior sd must be positive");
}

// ---- formatting ------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, p);
}

// ---- panel IO --------------------------------------------------------------

HaplotypePanel read_panel(std::istream& legend_in, std::istream& haps_in) {
  std::string line;
  std::vector<SiteInfo> legend;
  std::size_t line_no = 0;
  // Line numbers count data rows; the header is row 0.
  if (!read_line(legend_in, line)) throw InputError("legend: empty file");
  while (read_line(legend_in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4) throw InputError(where("legend", line_no) + "expected 4 columns, got " +
                                          std::to_string(tok.size()));
    SiteInfo s{std::string(tok[0]), parse_int(tok[1], "legend", line_no), std::string(tok[2]),
               std::string(tok[3])};
    if (!legend.empty() && s.position <= legend.back().position)
      throw InputError("legend: nonmonotone position at line " + std::to_string(line_no));
    legend.push_back(std::move(s));
  }

  std::vector<std::vector<std::uint8_t>> rows;
  line_no = 0;
  std::size_t n = 0;
  while (read_line(haps_in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (rows.empty()) n = tok.size();
    if (tok.size() != n)
      throw InputError(where("haps", line_no) + "expected " + std::to_string(n) + " tokens, got " +
                       std::to_string(tok.size()));
    std::vector<std::uint8_t> row(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (tok[k] == "0")
        row[k] = 0;
      else if (tok[k] == "1")
        row[k] = 1;
      else
        throw InputError(where("haps", line_no) + "non-binary allele token '" + std::string(tok[k]) + "'");
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() != legend.size())
    throw InputError("legend has " + std::to_string(legend.size()) + " sites but haps has " +
                     std::to_string(rows.size()) + " rows");
  return HaplotypePanel(std::move(legend), std::move(rows));
}

HaplotypePanel load_panel(const std::filesystem::path& legend_path, const std::filesystem::path& haps_path) {
  auto legend = open_in(legend_path);
  auto haps = open_in(haps_path);
  return read_panel(legend, haps);
}

void write_panel(const HaplotypePanel& panel, std::ostream& legend, std::ostream& haps) {
  legend << "id position a0 a1\n";
  for (const auto& s : panel.legend())
    legend << s.id << ' ' << s.position << ' ' << s.allele0 << ' ' << s.allele1 << '\n';
  std::string row;
  for (std::size_t s = 0; s < panel.n_sites(); ++s) {
    row.clear();
    for (auto a : panel.site_alleles(s)) {
      if (!row.empty()) row.push_back(' ');
      row.push_back(static_cast<char>('0' + a));
    }
    haps << row << '\n';
  }
}

void save_panel(const HaplotypePanel& panel, const std::filesystem::path& legend_path,
                const std::filesystem::path& haps_path) {
  auto legend = open_out(legend_path);
  auto haps = open_out(haps_path);
  write_panel(panel, legend, haps);
}

// ---- genotype IO -----------------------------------------------------------

GenotypeStudy read_genotypes(std::istream& gen, std::istream& sample, const HaplotypePanel& panel,
                             const LoadOptions& options, LoadReport* report) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> ids;
  std::vector<std::uint8_t> phenotypes;
  if (!read_line(sample, line)) throw InputError("sample: empty file");
  while (read_line(sample, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw InputError(where("sample", line_no) + "expected 'id phenotype'");
    if (tok[1] != "0" && tok[1] != "1")
      throw InputError(where("sample", line_no) + "phenotype outside {0,1}: '" + std::string(tok[1]) + "'");
    ids.emplace_back(tok[0]);
    phenotypes.push_back(tok[1] == "1" ? 1 : 0);
  }
  const std::size_t k = ids.size();

  struct Row {
    TypedSite site;
    std::vector<std::int8_t> g;
  };
  std::vector<Row> rows;
  line_no = 0;
  while (read_line(gen, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4 + k)
      throw InputError(where("gen", line_no) + "expected " + std::to_string(4 + k) + " columns, got " +
                       std::to_string(tok.size()));
    TypedSite site{std::string(tok[0]), parse_int(tok[1], "gen", line_no), std::string(tok[2]),
                   std::string(tok[3]), 0, false};
    const std::size_t ps = panel.find_position(site.position);
    if (ps == HaplotypePanel::npos) {
      const std::string msg = where("gen", line_no) + "untyped-in-panel SNP " + site.id + " at position " +
                              std::to_string(site.position);
      if (!options.drop_unmatched) throw InputError(msg);
      if (report) report->warnings.push_back(msg + " (dropped)");
      continue;
    }
    const auto& ref = panel.site(ps);
    if (site.allele0 == ref.allele0 && site.allele1 == ref.allele1) {
      site.flipped = false;
    } else if (site.allele0 == ref.allele1 && site.allele1 == ref.allele0) {
      site.flipped = true;
    } else if (complement(site.allele0) == ref.allele0 && complement(site.allele1) == ref.allele1) {
      site.flipped = false;
    } else if (complement(site.allele0) == ref.allele1 && complement(site.allele1) == ref.allele0) {
      site.flipped = true;
    } else {
      const std::string msg = where("gen", line_no) + "alleles " + site.allele0 + "/" + site.allele1 +
                              " do not match legend " + ref.allele0 + "/" + ref.allele1;
      if (!options.drop_unmatched) throw InputError(msg);
      if (report) report->warnings.push_back(msg + " (dropped)");
      continue;
    }
    site.panel_site = ps;
    std::vector<std::int8_t> g(k);
    for (std::size_t i = 0; i < k; ++i) {
      const auto t = tok[4 + i];
      std::int8_t v;
      if (t == "0")
        v = 0;
      else if (t == "1")
        v = 1;
      else if (t == "2")
        v = 2;
      else if (t == "NA")
        v = kMissingGenotype;
      else
        throw InputError(where("gen", line_no) + "genotype token outside {0,1,2,NA}: '" + std::string(t) + "'");
      if (site.flipped && v != kMissingGenotype) v = static_cast<std::int8_t>(2 - v);
      g[i] = v;
    }
    rows.push_back({std::move(site), std::move(g)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.site.panel_site < b.site.panel_site; });
  for (std::size_t t = 1; t < rows.size(); ++t)
    if (rows[t].site.panel_site == rows[t - 1].site.panel_site)
      throw InputError("gen: duplicate SNP at position " + std::to_string(rows[t].site.position));

  std::vector<TypedSite> sites;
  sites.reserve(rows.size());
  std::vector<std::int8_t> genotypes(rows.size() * k);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t i = 0; i < k; ++i) genotypes[i * rows.size() + t] = rows[t].g[i];
    sites.push_back(std::move(rows[t].site));
  }
  return GenotypeStudy(std::move(sites), std::move(ids), std::move(genotypes), std::move(phenotypes));
}

GenotypeStudy load_genotypes(const std::filesystem::path& gen_path, const std::filesystem::path& sample_path,
                             const HaplotypePanel& panel, const LoadOptions& options, LoadReport* report) {
  auto gen = open_in(gen_path);
  auto sample = open_in(sample_path);
  return read_genotypes(gen, sample, panel, options, report);
}

void write_genotypes(const GenotypeStudy& study, std::ostream& gen, std::ostream& sample) {
  std::string row;
  for (std::size_t t = 0; t < study.n_typed(); ++t) {
    const auto& s = study.typed_sites()[t];
    row = s.id + ' ' + std::to_string(s.position) + ' ' + s.allele0 + ' ' + s.allele1;
    for (std::size_t i = 0; i < study.n_individuals(); ++i) {
      auto g = study.genotype(i, t);
      row.push_back(' ');
      if (g == kMissingGenotype) {
        row += "NA";
      } else {
        if (s.flipped) g = static_cast<std::int8_t>(2 - g);
        row.push_back(static_cast<char>('0' + g));
      }
    }
    gen << row << '\n';
  }
  sample << "id phenotype\n";
  for (std::size_t i = 0; i < study.n_individuals(); ++i)
    sample << study.sample_ids()[i] << ' ' << static_cast<int>(study.phenotypes()[i]) << '\n';
}

void save_genotypes(const GenotypeStudy& study, const std::filesystem::path& gen_path,
                    const std::filesystem::path& sample_path) {
  auto gen = open_out(gen_path);
  auto sample = open_out(sample_path);
  write_genotypes(study, gen, sample);
}

// ---- map IO ----------------------------------------------------------------

RecombinationMap read_map(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!read_line(in, line)) throw InputError("map: empty file");
  std::vector<MapPoint> points;
  while (read_line(in, line)) {
    ++line_no;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3) throw InputError(where("map", line_no) + "expected 3 columns");
    MapPoint p{parse_int(tok[0], "map", line_no), parse_real(tok[1], "map", line_no),
               parse_real(tok[2], "map", line_no)};
    if (!points.empty() && p.position <= points.back().position)
      throw InputError("map: nonmonotone position at line " + std::to_string(line_no));
    points.push_back(p);
  }
  if (points.empty()) throw InputError("map: no points");
  return RecombinationMap(std::move(points));
}

RecombinationMap load_map(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_map(in);
}

void write_map(const RecombinationMap& map, std::ostream& out) {
  out << "position rate_cM_per_Mb cumulative_cM\n";
  for (const auto& p : map.points())
    out << p.position << ' ' << format_double(p.rate_cm_per_mb) << ' ' << format_double(p.cumulative_cm) << '\n';
}

}  // namespace clademap
