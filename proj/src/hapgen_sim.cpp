#include "clademap/hapgen_sim.hpp"

#include "clademap/errors.hpp"
#include "clademap/treesim.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace clademap {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t index) {
  return splitmix64(splitmix64(base_seed) ^ (index * 0xD1B54A32D192ED03ull + 1));
}

MosaicParams MosaicParams::defaults(std::size_t n_haplotypes) {
  MosaicParams p;
  const double theta = watterson_theta(n_haplotypes);
  p.mismatch_rate = theta / (2.0 * (static_cast<double>(n_haplotypes) + theta));
  p.switch_scale = 4.0 * kDefaultEffectivePopulationSize;
  return p;
}

namespace {

std::vector<double> switch_probabilities(const HaplotypePanel& panel, const RecombinationMap& map,
                                         const MosaicParams& params) {
  const std::size_t l = panel.n_sites();
  const double n = static_cast<double>(panel.n_haplotypes());
  std::vector<double> p(l > 0 ? l - 1 : 0);
  double prev = map.genetic_position(panel.position(0));
  for (std::size_t s = 0; s + 1 < l; ++s) {
    const double next = map.genetic_position(panel.position(s + 1));
    p[s] = -std::expm1(-params.switch_scale * std::max(0.0, next - prev) / 100.0 / n);
    prev = next;
  }
  return p;
}

void mosaic_into(const HaplotypePanel& panel, const std::vector<double>& switches, double lambda, SimRng& rng,
                 std::vector<std::uint8_t>& out) {
  const std::size_t n = panel.n_haplotypes();
  out.resize(panel.n_sites());
  std::size_t k = rng.below(n);
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (s > 0 && rng.uniform01() < switches[s - 1]) k = rng.below(n);
    std::uint8_t a = panel.allele(k, s);
    if (lambda > 0.0 && rng.uniform01() < lambda) a ^= 1u;
    out[s] = a;
  }
}

}  // namespace

std::vector<std::uint8_t> simulate_haplotype(const HaplotypePanel& panel, const RecombinationMap& map,
                                             const MosaicParams& params, SimRng& rng) {
  std::vector<std::uint8_t> out;
  mosaic_into(panel, switch_probabilities(panel, map, params), params.mismatch_rate, rng, out);
  return out;
}

void DiseaseModel::validate(const HaplotypePanel& panel) const {
  if (causal_sites.empty() || causal_sites.size() > 2) throw InputError("disease model needs one or two causal sites");
  if (relative_risks.size() != causal_sites.size()) throw InputError("one relative risk per causal site is required");
  if (causal_sites.size() == 2 && causal_sites[0] == causal_sites[1]) throw InputError("causal sites must be distinct");
  for (std::size_t s : causal_sites)
    if (s >= panel.n_sites()) throw InputError("causal site outside the panel");
  for (double rr : relative_risks)
    if (!(rr >= 0.0) || !std::isfinite(rr)) throw InputError("relative risks must be finite and >= 0");
  if (!(baseline_risk > 0.0 && baseline_risk < 1.0)) throw InputError("baseline risk must lie in (0, 1)");
}

SimulatedStudy simulate_case_control(const HaplotypePanel& panel, const RecombinationMap& map,
                                     const DiseaseModel& model, const SimConfig& config) {
  model.validate(panel);
  if (config.n_cases == 0 || config.n_controls == 0) throw InputError("case and control counts must be > 0");
  std::vector<std::size_t> typed = config.typed_mask;
  if (config.include_causal) typed.insert(typed.end(), model.causal_sites.begin(), model.causal_sites.end());
  std::sort(typed.begin(), typed.end());
  typed.erase(std::unique(typed.begin(), typed.end()), typed.end());
  if (!config.include_causal)
    std::erase_if(typed, [&](std::size_t s) {
      return std::find(model.causal_sites.begin(), model.causal_sites.end(), s) != model.causal_sites.end();
    });
  if (typed.empty()) throw InputError("typed_mask is empty");
  for (std::size_t s : typed)
    if (s >= panel.n_sites()) throw InputError("typed site outside the panel");

  const std::size_t nc = model.causal_sites.size();
  std::vector<std::uint8_t> risk_allele(nc);
  for (std::size_t c = 0; c < nc; ++c) risk_allele[c] = panel.minor_allele(model.causal_sites[c]);

  const auto switches = switch_probabilities(panel, map, config.mosaic);
  SimRng rng(config.seed);
  const std::size_t total = config.n_cases + config.n_controls;
  std::vector<std::int8_t> genotypes;
  genotypes.reserve(total * typed.size());
  std::vector<std::uint8_t> phenotypes;
  phenotypes.reserve(total);
  SimulatedStudy out;
  out.causal_genotypes.assign(nc, {});

  std::vector<std::uint8_t> h1, h2;
  std::size_t cases = 0, controls = 0;
  while (cases < config.n_cases || controls < config.n_controls) {
    if (out.draws >= config.max_draws)
      throw ModelError("case/control quota not reached after " + std::to_string(out.draws) + " draws (" +
                       std::to_string(cases) + " cases, " + std::to_string(controls) + " controls)");
    ++out.draws;
    mosaic_into(panel, switches, config.mosaic.mismatch_rate, rng, h1);
    mosaic_into(panel, switches, config.mosaic.mismatch_rate, rng, h2);
    double risk = model.baseline_risk;
    std::array<std::uint8_t, 2> counts{};
    for (std::size_t c = 0; c < nc; ++c) {
      const std::size_t s = model.causal_sites[c];
      counts[c] = static_cast<std::uint8_t>((h1[s] == risk_allele[c]) + (h2[s] == risk_allele[c]));
      risk *= std::pow(model.relative_risks[c], counts[c]);
    }
    const bool is_case = rng.uniform01() < std::min(risk, 1.0);
    if (is_case ? cases >= config.n_cases : controls >= config.n_controls) continue;
    (is_case ? cases : controls) += 1;
    phenotypes.push_back(is_case ? 1 : 0);
    for (std::size_t s : typed) genotypes.push_back(static_cast<std::int8_t>(h1[s] + h2[s]));
    for (std::size_t c = 0; c < nc; ++c) out.causal_genotypes[c].push_back(counts[c]);
  }

  std::vector<TypedSite> sites;
  for (std::size_t s : typed) {
    const auto& info = panel.site(s);
    sites.push_back({info.id, info.position, info.allele0, info.allele1, s, false});
  }
  std::vector<std::string> ids(total);
  for (std::size_t i = 0; i < total; ++i) ids[i] = "sim" + std::to_string(i + 1);
  out.study = GenotypeStudy(std::move(sites), std::move(ids), std::move(genotypes), std::move(phenotypes));
  return out;
}

GenotypeStudy rebase_study(const GenotypeStudy& study, const HaplotypePanel& source, const HaplotypePanel& target) {
  std::vector<TypedSite> sites;
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < study.n_typed(); ++t) {
    const auto& ts = study.typed_sites()[t];
    const std::size_t p = target.find_position(source.position(ts.panel_site));
    if (p == HaplotypePanel::npos) continue;
    if (target.site(p).allele0 != source.site(ts.panel_site).allele0 ||
        target.site(p).allele1 != source.site(ts.panel_site).allele1)
      throw InputError("panels disagree on alleles at position " + std::to_string(ts.position));
    TypedSite copy = ts;
    copy.panel_site = p;
    sites.push_back(std::move(copy));
    keep.push_back(t);
  }
  std::vector<std::int8_t> genotypes;
  genotypes.reserve(study.n_individuals() * keep.size());
  for (std::size_t i = 0; i < study.n_individuals(); ++i)
    for (std::size_t t : keep) genotypes.push_back(study.genotype(i, t));
  return GenotypeStudy(std::move(sites), study.sample_ids(), std::move(genotypes), study.phenotypes());
}

std::vector<std::pair<std::size_t, std::size_t>> select_causal_pairs(const HaplotypePanel& panel, PairModel model,
                                                                     std::int64_t max_distance_bp) {
  const std::size_t l = panel.n_sites();
  std::vector<double> maf(l);
  for (std::size_t s = 0; s < l; ++s) maf[s] = panel.minor_allele_frequency(s);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = i + 1; j < l && panel.position(j) - panel.position(i) <= max_distance_bp; ++j) {
      if (model == PairModel::B) {
        if (kCommonClass.contains(maf[i]) && kCommonClass.contains(maf[j])) pairs.emplace_back(i, j);
      } else if (kRareClass.contains(maf[i]) && kCommonClass.contains(maf[j])) {
        pairs.emplace_back(i, j);
      } else if (kRareClass.contains(maf[j]) && kCommonClass.contains(maf[i])) {
        pairs.emplace_back(j, i);
      }
    }
  }
  return pairs;
}

namespace {

std::size_t maf_bin(double maf, const std::vector<double>& edges) {
  for (std::size_t b = 0; b < edges.size(); ++b)
    if (maf <= edges[b]) return b;
  return edges.size() - 1;
}

// Largest-remainder apportionment of `total` by `shares`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& shares) {
  std::vector<std::size_t> q(shares.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t b = 0; b < shares.size(); ++b) {
    const double exact = shares[b] * static_cast<double>(total);
    q[b] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += q[b];
    rem.emplace_back(exact - static_cast<double>(q[b]), b);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; used < total && i < rem.size(); ++i, ++used) ++q[rem[i].second];
  return q;
}

}  // namespace

ThinResult thin_panel(const HaplotypePanel& panel, const ThinSpec& spec) {
  if (!(spec.density_per_kb > 0.0)) throw InputError("target density must be > 0");
  if (spec.maf_bin_edges.empty()) throw InputError("at least one MAF bin is required");
  std::vector<double> edges = spec.maf_bin_edges;
  if (!std::is_sorted(edges.begin(), edges.end())) throw InputError("MAF bin edges must be sorted");
  edges.back() = 0.5;
  const std::size_t nbins = edges.size();
  const std::size_t l = panel.n_sites();

  std::vector<std::size_t> bin(l);
  std::vector<double> full_hist(nbins, 0.0);
  for (std::size_t s = 0; s < l; ++s) {
    bin[s] = maf_bin(panel.minor_allele_frequency(s), edges);
    full_hist[bin[s]] += 1.0;
  }
  ThinResult r;
  r.bin_targets = spec.bin_targets;
  if (r.bin_targets.empty()) {
    for (double& v : full_hist) v /= static_cast<double>(l);
    r.bin_targets = full_hist;
  }
  if (r.bin_targets.size() != nbins) throw InputError("one target share per MAF bin is required");

  const double span_kb = static_cast<double>(panel.position(l - 1) - panel.position(0)) / 1000.0;
  r.target_count = std::min<std::size_t>(l, static_cast<std::size_t>(std::llround(spec.density_per_kb * span_kb)));
  r.target_count = std::max(r.target_count, spec.must_include.size());
  const auto quota = apportion(r.target_count, r.bin_targets);

  std::vector<char> chosen(l, 0);
  std::vector<std::size_t> have(nbins, 0);
  for (std::size_t s : spec.must_include) {
    if (s >= l) throw InputError("must_include site outside the panel");
    if (!chosen[s]) ++have[bin[s]];
    chosen[s] = 1;
  }
  SimRng rng(spec.seed);
  std::ostringstream diag;
  for (std::size_t b = 0; b < nbins; ++b) {
    std::vector<std::size_t> candidates;
    for (std::size_t s = 0; s < l; ++s)
      if (bin[s] == b && !chosen[s]) candidates.push_back(s);
    const std::size_t need = quota[b] > have[b] ? quota[b] - have[b] : 0;
    const double offset = rng.uniform01();
    if (need >= candidates.size()) {
      if (need > candidates.size())
        diag << "bin " << b << ": wanted " << need << " more sites, only " << candidates.size() << " available; ";
      for (std::size_t s : candidates) chosen[s] = 1;
      continue;
    }
    // Systematic sample in position order keeps each bin spread along the region.
    const double step = static_cast<double>(candidates.size()) / static_cast<double>(need);
    for (std::size_t i = 0; i < need; ++i)
      chosen[candidates[static_cast<std::size_t>((offset + static_cast<double>(i)) * step)]] = 1;
  }
  for (std::size_t s = 0; s < l; ++s)
    if (chosen[s]) r.sites.push_back(s);
  r.panel = panel.subset_sites(r.sites);

  r.bin_achieved.assign(nbins, 0.0);
  for (std::size_t s : r.sites) r.bin_achieved[bin[s]] += 1.0;
  for (double& v : r.bin_achieved) v /= static_cast<double>(r.sites.size());
  for (std::size_t b = 0; b < nbins; ++b)
    if (std::abs(r.bin_achieved[b] - r.bin_targets[b]) > 0.05) {
      r.feasible = false;
      diag << "bin " << b << ": share " << r.bin_achieved[b] << " vs target " << r.bin_targets[b] << "; ";
    }

  const std::int64_t start = panel.position(0);
  const std::int64_t end = panel.position(l - 1);
  const double expected = spec.density_per_kb * static_cast<double>(spec.density_window_bp) / 1000.0;
  for (std::int64_t w = start; w + spec.density_window_bp <= end + 1; w += spec.density_window_bp) {
    const auto count = std::count_if(r.sites.begin(), r.sites.end(), [&](std::size_t s) {
      return panel.position(s) >= w && panel.position(s) < w + spec.density_window_bp;
    });
    r.max_density_deviation =
        std::max(r.max_density_deviation, std::abs(static_cast<double>(count) - expected) / expected);
  }
  if (r.max_density_deviation > 0.2) {
    r.feasible = false;
    diag << "window density deviates by up to " << r.max_density_deviation * 100.0 << "% from target; ";
  }
  r.diagnostics = diag.str();
  return r;
}

double allele_r2(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  const double n = static_cast<double>(x.size());
  double px = 0.0, py = 0.0, pxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    px += x[k];
    py += y[k];
    pxy += x[k] & y[k];
  }
  px /= n;
  py /= n;
  pxy /= n;
  const double denom = px * (1.0 - px) * py * (1.0 - py);
  if (denom <= 0.0) return 0.0;
  const double d = pxy - px * py;
  return d * d / denom;
}

std::vector<std::size_t> select_poorly_tagged_sites(const HaplotypePanel& full, const HaplotypePanel& thinned,
                                                    double r2_max) {
  if (full.n_haplotypes() != thinned.n_haplotypes()) throw InputError("panels have different haplotype counts");
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < full.n_sites(); ++s) {
    if (full.allele1_count(s) == 0 || full.allele1_count(s) == full.n_haplotypes()) continue;
    bool tagged = false;
    for (std::size_t t = 0; t < thinned.n_sites() && !tagged; ++t)
      tagged = allele_r2(full.site_alleles(s), thinned.site_alleles(t)) > r2_max;
    if (!tagged) out.push_back(s);
  }
  return out;
}

std::string manifest_json(const std::string& model_name, std::uint64_t base_seed,
                          const std::vector<ReplicateRecord>& records) {
  nlohmann::json doc;
  doc["model"] = model_name;
  doc["seed"] = base_seed;
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : records) {
    reps.push_back({{"index", r.index},
                    {"seed", r.seed},
                    {"causal_positions", r.causal_positions},
                    {"relative_risks", r.relative_risks},
                    {"n_cases", r.n_cases},
                    {"n_controls", r.n_controls},
                    {"draws", r.draws},
                    {"gen", r.gen_file},
                    {"sample", r.sample_file}});
  }
  doc["replicates"] = std::move(reps);
  return doc.dump(2);
}

}  // namespace clademap
