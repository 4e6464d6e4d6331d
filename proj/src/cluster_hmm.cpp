#include "clademap/cluster_hmm.hpp"

#include "clademap/errors.hpp"
#include "clademap/parallel.hpp"
#include "clademap/treesim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace clademap {

HmmParams HmmParams::defaults(std::size_t n_haplotypes) {
  HmmParams p;
  const double theta = watterson_theta(n_haplotypes);
  p.mismatch_rate = theta / (2.0 * (static_cast<double>(n_haplotypes) + theta));
  p.switch_scale = 4.0 * kDefaultEffectivePopulationSize;
  return p;
}

void HmmParams::validate() const {
  if (!(mismatch_rate > 0.0 && mismatch_rate < 0.5)) throw InputError("mismatch_rate must lie in (0, 0.5)");
  if (!(switch_scale >= 0.0) || !std::isfinite(switch_scale)) throw InputError("switch_scale must be >= 0");
  if (window_sites == 0) throw InputError("window_sites must be >= 1");
}

namespace {

struct Step {
  double cm = 0.0;
  std::int64_t position = 0;
  int typed = -1;  // observed typed-site index, or -1 for a virtual focal site
  int focal = -1;
};

// E[g][s]: P(observed genotype g | copied allele sum s).
using EmissionTable = std::array<std::array<double, 3>, 3>;

EmissionTable emission_table(double lambda) {
  const double a = 1.0 - lambda;
  EmissionTable e{};
  e[0] = {a * a, a * lambda, lambda * lambda};
  e[1] = {2.0 * a * lambda, a * a + lambda * lambda, 2.0 * a * lambda};
  e[2] = {lambda * lambda, a * lambda, a * a};
  return e;
}

class DiploidChain {
 public:
  explicit DiploidChain(std::size_t n) : n_(n), rows_(n), cols_(n) {}

  // x <- K x for one interval with per-chain stay probability s.
  void transition(std::vector<double>& x, double s) {
    if (s >= 1.0) return;
    const double nd = static_cast<double>(n_);
    std::fill(rows_.begin(), rows_.end(), 0.0);
    std::fill(cols_.begin(), cols_.end(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double* row = x.data() + i * n_;
      for (std::size_t j = 0; j < n_; ++j) {
        rows_[i] += row[j];
        cols_[j] += row[j];
      }
      total += rows_[i];
    }
    const double stay = s * s;
    const double one = s * (1.0 - s) / nd;
    const double both = (1.0 - s) * (1.0 - s) / (nd * nd) * total;
    for (std::size_t i = 0; i < n_; ++i) {
      double* row = x.data() + i * n_;
      const double ri = one * rows_[i] + both;
      for (std::size_t j = 0; j < n_; ++j) row[j] = stay * row[j] + ri + one * cols_[j];
    }
  }

  void emit(std::vector<double>& x, std::span<const std::uint8_t> alleles, const std::array<double, 3>& e) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double* row = x.data() + i * n_;
      const std::uint8_t ai = alleles[i];
      for (std::size_t j = 0; j < n_; ++j) row[j] *= e[ai + alleles[j]];
    }
  }

 private:
  std::size_t n_;
  std::vector<double> rows_;
  std::vector<double> cols_;
};

void normalize(std::vector<double>& x) {
  double total = 0.0;
  for (double v : x) total += v;
  if (!(total > 0.0) || !std::isfinite(total)) throw ModelError("copying HMM underflow");
  const double inv = 1.0 / total;
  for (double& v : x) v *= inv;
}

CopyDosage uniform_dosage(std::size_t n) {
  CopyDosage d;
  d.q.assign(n, 2.0 / static_cast<double>(n));
  d.no_typed_sites = true;
  return d;
}

struct Window {
  std::size_t lo = 0;
  std::size_t hi = 0;  // inclusive
};

Window focal_window(const HaplotypePanel& panel, std::int64_t position, std::size_t w) {
  const std::size_t r = panel.lower_bound(position);
  Window win;
  win.lo = r >= w ? r - w : 0;
  win.hi = std::min(panel.n_sites(), r + w) - 1;
  return win;
}

bool observed_in(const GenotypeStudy& study, std::size_t individual, const Window& win) {
  const auto& sites = study.typed_sites();
  const auto g = study.individual_genotypes(individual);
  for (std::size_t t = 0; t < sites.size(); ++t)
    if (sites[t].panel_site >= win.lo && sites[t].panel_site <= win.hi && g[t] != kMissingGenotype) return true;
  return false;
}

// Forward-backward over the observed typed sites in [lo, hi] plus one
// virtual site per focal position; returns the normalized ordered pair
// posterior at each focal position.
std::vector<std::vector<double>> pair_posteriors(const HaplotypePanel& panel, const RecombinationMap& map,
                                                 const GenotypeStudy& study, std::size_t individual,
                                                 std::span<const std::int64_t> focals, const Window& span,
                                                 const HmmParams& params) {
  const std::size_t n = panel.n_haplotypes();
  const std::size_t nn = n * n;
  const auto& sites = study.typed_sites();
  const auto g = study.individual_genotypes(individual);

  std::vector<Step> steps;
  for (std::size_t t = 0; t < sites.size(); ++t) {
    if (sites[t].panel_site < span.lo || sites[t].panel_site > span.hi || g[t] == kMissingGenotype) continue;
    steps.push_back({0.0, panel.position(sites[t].panel_site), static_cast<int>(t), -1});
  }
  for (std::size_t f = 0; f < focals.size(); ++f) steps.push_back({0.0, focals[f], -1, static_cast<int>(f)});
  std::stable_sort(steps.begin(), steps.end(), [](const Step& a, const Step& b) { return a.position < b.position; });
  for (auto& st : steps) st.cm = map.genetic_position(st.position);

  const double nd = static_cast<double>(n);
  auto stay = [&](std::size_t i) {
    const double morgans = std::max(0.0, steps[i].cm - steps[i - 1].cm) / 100.0;
    return std::exp(-params.switch_scale * morgans / nd);
  };
  const EmissionTable table = emission_table(params.mismatch_rate);
  DiploidChain chain(n);

  std::vector<std::vector<double>> stored(focals.size());
  std::vector<double> x(nn, 1.0 / static_cast<double>(nn));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) chain.transition(x, stay(i));
    if (steps[i].typed >= 0) {
      const auto t = static_cast<std::size_t>(steps[i].typed);
      chain.emit(x, panel.site_alleles(sites[t].panel_site), table[static_cast<std::size_t>(g[t])]);
      normalize(x);
    } else {
      stored[static_cast<std::size_t>(steps[i].focal)] = x;
    }
  }

  std::fill(x.begin(), x.end(), 1.0);
  for (std::size_t i = steps.size(); i-- > 0;) {
    if (steps[i].typed >= 0) {
      const auto t = static_cast<std::size_t>(steps[i].typed);
      chain.emit(x, panel.site_alleles(sites[t].panel_site), table[static_cast<std::size_t>(g[t])]);
    } else {
      auto& post = stored[static_cast<std::size_t>(steps[i].focal)];
      for (std::size_t k = 0; k < nn; ++k) post[k] *= x[k];
      normalize(post);
    }
    if (i > 0) {
      chain.transition(x, stay(i));
      normalize(x);
    }
  }
  return stored;
}

CopyDosage dosage_from_pairs(const std::vector<double>& post, std::size_t n) {
  CopyDosage d;
  d.q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double m = post[i * n + j];
      d.q[i] += m;
      d.q[j] += m;
    }
  return d;
}

void check_individual(const GenotypeStudy& study, std::size_t individual) {
  if (individual >= study.n_individuals()) throw InputError("individual index out of range");
}

}  // namespace

CopyDosage copying_posterior(const HaplotypePanel& panel, const RecombinationMap& map, const GenotypeStudy& study,
                             std::size_t individual, std::int64_t focal_position, const HmmParams& params,
                             PairPosterior* pair_posterior) {
  params.validate();
  check_individual(study, individual);
  const std::size_t n = panel.n_haplotypes();
  const Window win = focal_window(panel, focal_position, params.window_sites);
  if (!observed_in(study, individual, win)) {
    if (pair_posterior) {
      pair_posterior->n = n;
      pair_posterior->mass.assign(n * n, 1.0 / static_cast<double>(n * n));
    }
    return uniform_dosage(n);
  }
  const std::int64_t focal[1] = {focal_position};
  auto posts = pair_posteriors(panel, map, study, individual, focal, win, params);
  CopyDosage d = dosage_from_pairs(posts[0], n);
  if (pair_posterior) {
    pair_posterior->n = n;
    pair_posterior->mass = std::move(posts[0]);
  }
  return d;
}

std::vector<CopyDosage> copying_posterior_multi(const HaplotypePanel& panel, const RecombinationMap& map,
                                                const GenotypeStudy& study, std::size_t individual,
                                                std::span<const std::int64_t> focal_positions,
                                                const HmmParams& params) {
  params.validate();
  check_individual(study, individual);
  if (!std::is_sorted(focal_positions.begin(), focal_positions.end()))
    throw InputError("focal positions must be sorted");
  const std::size_t n = panel.n_haplotypes();
  std::vector<CopyDosage> out(focal_positions.size());
  if (focal_positions.empty()) return out;

  std::vector<std::int64_t> active;
  std::vector<std::size_t> active_index;
  for (std::size_t f = 0; f < focal_positions.size(); ++f) {
    if (observed_in(study, individual, focal_window(panel, focal_positions[f], params.window_sites))) {
      active.push_back(focal_positions[f]);
      active_index.push_back(f);
    } else {
      out[f] = uniform_dosage(n);
    }
  }
  if (active.empty()) return out;
  Window span = focal_window(panel, active.front(), params.window_sites);
  span.hi = focal_window(panel, active.back(), params.window_sites).hi;
  auto posts = pair_posteriors(panel, map, study, individual, active, span, params);
  for (std::size_t a = 0; a < active.size(); ++a) out[active_index[a]] = dosage_from_pairs(posts[a], n);
  return out;
}

double clade_dosage(std::span<const double> q, const TipSet& clade) {
  if (clade.size() != q.size()) throw InputError("clade size does not match the panel");
  double e = 0.0;
  for (std::size_t k : clade.members()) e += q[k];
  return e;
}

GenotypeProbabilities branch_genotype_probabilities(const PairPosterior& posterior, const TipSet& clade) {
  if (clade.size() != posterior.n) throw InputError("clade size does not match the panel");
  GenotypeProbabilities p;
  for (std::size_t i = 0; i < posterior.n; ++i) {
    const int in_i = clade.test(i) ? 1 : 0;
    for (std::size_t j = 0; j < posterior.n; ++j) {
      const double m = posterior.at(i, j);
      switch (in_i + (clade.test(j) ? 1 : 0)) {
        case 0: p.p0 += m; break;
        case 1: p.p1 += m; break;
        default: p.p2 += m; break;
      }
    }
  }
  return p;
}

void write_branch_genotype_row(std::ostream& out, const std::string& snp_id, std::int64_t position,
                               const std::vector<GenotypeProbabilities>& probabilities) {
  out << snp_id << ' ' << position << " 0 1";
  for (const auto& p : probabilities)
    out << ' ' << format_double(p.p0) << ' ' << format_double(p.p1) << ' ' << format_double(p.p2);
  out << '\n';
}

AlleleCountTable dosage_table(std::span<const double> dosages, std::span<const std::uint8_t> phenotypes) {
  if (dosages.size() != phenotypes.size()) throw InputError("dosage count does not match phenotype count");
  double case_e = 0.0, control_e = 0.0;
  std::size_t cases = 0, controls = 0;
  for (std::size_t i = 0; i < dosages.size(); ++i) {
    if (phenotypes[i]) {
      case_e += dosages[i];
      ++cases;
    } else {
      control_e += dosages[i];
      ++controls;
    }
  }
  AlleleCountTable t;
  t.controls = {2.0 * static_cast<double>(controls) - control_e, control_e};
  t.cases = {2.0 * static_cast<double>(cases) - case_e, case_e};
  return t;
}

double DosageSums::case_sum(const TipSet& clade) const { return clade_dosage(cases, clade); }
double DosageSums::control_sum(const TipSet& clade) const { return clade_dosage(controls, clade); }

AlleleCountTable DosageSums::clade_table(const TipSet& clade) const {
  const double ce = case_sum(clade);
  const double ue = control_sum(clade);
  AlleleCountTable t;
  t.controls = {2.0 * static_cast<double>(n_controls) - ue, ue};
  t.cases = {2.0 * static_cast<double>(n_cases) - ce, ce};
  return t;
}

DosageSums sum_dosages(const std::vector<CopyDosage>& per_individual, std::span<const std::uint8_t> phenotypes) {
  if (per_individual.size() != phenotypes.size()) throw InputError("dosage count does not match phenotype count");
  DosageSums s;
  if (per_individual.empty()) return s;
  const std::size_t n = per_individual.front().q.size();
  s.cases.assign(n, 0.0);
  s.controls.assign(n, 0.0);
  for (std::size_t i = 0; i < per_individual.size(); ++i) {
    auto& dst = phenotypes[i] ? s.cases : s.controls;
    (phenotypes[i] ? s.n_cases : s.n_controls) += 1;
    for (std::size_t k = 0; k < n; ++k) dst[k] += per_individual[i].q[k];
  }
  return s;
}

std::vector<std::vector<CopyDosage>> study_copy_dosages(const HaplotypePanel& panel, const RecombinationMap& map,
                                                        const GenotypeStudy& study,
                                                        std::span<const std::int64_t> positions,
                                                        const HmmParams& params, unsigned threads) {
  const std::size_t m = study.n_individuals();
  std::vector<std::vector<CopyDosage>> by_individual(m);
  parallel_for(m, threads, [&](std::size_t i) {
    by_individual[i] = copying_posterior_multi(panel, map, study, i, positions, params);
  });
  std::vector<std::vector<CopyDosage>> out(positions.size(), std::vector<CopyDosage>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < positions.size(); ++p) out[p][i] = std::move(by_individual[i][p]);
  return out;
}

std::vector<DosageSums> study_dosage_sums(const HaplotypePanel& panel, const RecombinationMap& map,
                                          const GenotypeStudy& study, std::span<const std::int64_t> positions,
                                          const HmmParams& params, unsigned threads) {
  const std::size_t m = study.n_individuals();
  const std::size_t n = panel.n_haplotypes();
  std::vector<std::vector<CopyDosage>> by_individual(m);
  parallel_for(m, threads, [&](std::size_t i) {
    by_individual[i] = copying_posterior_multi(panel, map, study, i, positions, params);
  });
  const auto& pheno = study.phenotypes();
  std::vector<DosageSums> out(positions.size());
  for (auto& s : out) {
    s.cases.assign(n, 0.0);
    s.controls.assign(n, 0.0);
    s.n_cases = study.n_cases();
    s.n_controls = study.n_controls();
  }
  // Summed in individual order so the result does not depend on `threads`.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < positions.size(); ++p) {
      auto& dst = pheno[i] ? out[p].cases : out[p].controls;
      const auto& q = by_individual[i][p].q;
      for (std::size_t k = 0; k < n; ++k) dst[k] += q[k];
    }
  return out;
}

}  // namespace clademap
