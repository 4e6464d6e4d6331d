#include "clademap/assoc_bayes.hpp"

#include "clademap/errors.hpp"
#include "clademap/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace clademap {

namespace {

constexpr double kLn10 = 2.302585092994045684;
constexpr double kNegTolerance = 1e-9;

double log_beta(double x, double y) { return std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y); }

double clamp_count(double v) {
  if (v < -kNegTolerance || !std::isfinite(v)) throw InputError("allele count table has a negative entry");
  return std::max(v, 0.0);
}

// One class: log of the Beta integral ratio B(n1 + a, n0 + c) / B(a, c).
double class_term(double cases, double controls, double a, double c, double lb0) {
  return log_beta(cases + a, controls + c) - lb0;
}

}  // namespace

double log_bf_table(const AlleleCountTable& table, const PriorSpec& prior) {
  prior.validate();
  if (table.classes() < 2 || table.cases.size() != table.classes())
    throw InputError("allele count table needs at least two classes");
  const double lb0 = log_beta(prior.a, prior.c);
  double alt = 0.0, n_a = 0.0, n_u = 0.0;
  for (std::size_t j = 0; j < table.classes(); ++j) {
    const double ca = clamp_count(table.cases[j]);
    const double co = clamp_count(table.controls[j]);
    alt += class_term(ca, co, prior.a, prior.c, lb0);
    n_a += ca;
    n_u += co;
  }
  return alt - class_term(n_a, n_u, prior.a, prior.c, lb0);
}

std::vector<double> branch_prior_weights(const MarginalTree& tree) {
  std::vector<double> w(tree.branches.size());
  double total = 0.0;
  for (std::size_t b = 0; b < w.size(); ++b) {
    w[b] = expected_branch_length(tree.branches[b].n_death, tree.branches[b].n_birth);
    total += w[b];
  }
  for (double& v : w) v /= total;
  return w;
}

double log_weighted_sum(const std::vector<double>& log_terms, const std::vector<double>& weights) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_terms.size(); ++i)
    if (weights[i] > 0.0) hi = std::max(hi, log_terms[i]);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < log_terms.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i] * std::exp(log_terms[i] - hi);
    wsum += weights[i];
  }
  return hi + std::log(acc / wsum);
}

OneMutationResult bf_position_1mut(const MarginalTree& tree, const DosageSums& sums, const PriorSpec& prior) {
  const auto weights = branch_prior_weights(tree);
  OneMutationResult r;
  r.branch_log_bf.resize(tree.branches.size());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < tree.branches.size(); ++b) {
    r.branch_log_bf[b] = log_bf_table(sums.clade_table(tree.branches[b].tips), prior);
    const double contribution = r.branch_log_bf[b] + std::log(weights[b]);
    if (contribution > best) {
      best = contribution;
      r.best_branch = static_cast<int>(b);
    }
  }
  r.log10_bf = log_weighted_sum(r.branch_log_bf, weights) / kLn10;
  return r;
}

std::vector<TipSet> carrier_classes(const TipSet& first, const TipSet& second) {
  if (first.size() != second.size()) throw InputError("clades come from different trees");
  if (first == second) throw InputError("carrier classes need two distinct clades");
  std::vector<TipSet> classes;
  if (!first.intersects(second)) {
    classes = {first, second, (first | second).complement()};
  } else if (first.is_subset_of(second)) {
    classes = {first, second - first, second.complement()};
  } else if (second.is_subset_of(first)) {
    classes = {second, first - second, first.complement()};
  } else {
    // Not possible for clades of one tree; fall back to the full pattern split.
    classes = {first & second, first - second, second - first, (first | second).complement()};
  }
  std::erase_if(classes, [](const TipSet& t) { return t.none(); });
  return classes;
}

AlleleCountTable pair_table(const TipSet& first, const TipSet& second, const DosageSums& sums) {
  AlleleCountTable t;
  for (const auto& cls : carrier_classes(first, second)) {
    t.controls.push_back(sums.control_sum(cls));
    t.cases.push_back(sums.case_sum(cls));
  }
  return t;
}

TwoMutationResult bf_position_2mut(const MarginalTree& tree, const DosageSums& sums, const PriorSpec& prior) {
  prior.validate();
  const auto weights = branch_prior_weights(tree);
  const std::size_t nb = tree.branches.size();
  const std::size_t n = tree.n_tips;
  const double total_case = 2.0 * static_cast<double>(sums.n_cases);
  const double total_control = 2.0 * static_cast<double>(sums.n_controls);
  const double lb0 = log_beta(prior.a, prior.c);
  const double null_term = class_term(total_case, total_control, prior.a, prior.c, lb0);

  std::vector<double> sc(nb), su(nb);
  std::vector<std::size_t> size(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    sc[b] = sums.case_sum(tree.branches[b].tips);
    su[b] = sums.control_sum(tree.branches[b].tips);
    size[b] = tree.branches[b].tips.count();
  }
  auto term = [&](double ca, double co) { return class_term(clamp_count(ca), clamp_count(co), prior.a, prior.c, lb0); };

  std::vector<double> log_terms, pair_w;
  std::vector<std::pair<int, int>> pairs;
  auto enumerate = [&](bool require_three) {
    for (std::size_t i = 0; i < nb; ++i) {
      const TipSet& ti = tree.branches[i].tips;
      for (std::size_t j = i + 1; j < nb; ++j) {
        const TipSet& tj = tree.branches[j].tips;
        double lbf;
        if (!ti.intersects(tj)) {
          const bool has_rest = size[i] + size[j] < n;
          if (require_three && !has_rest) continue;
          lbf = term(sc[i], su[i]) + term(sc[j], su[j]);
          if (has_rest) lbf += term(total_case - sc[i] - sc[j], total_control - su[i] - su[j]);
        } else {
          const bool i_inner = size[i] < size[j];
          const std::size_t in = i_inner ? i : j;
          const std::size_t out = i_inner ? j : i;
          lbf = term(sc[in], su[in]) + term(sc[out] - sc[in], su[out] - su[in]) +
                term(total_case - sc[out], total_control - su[out]);
        }
        log_terms.push_back(lbf - null_term);
        pair_w.push_back(weights[i] * weights[j]);
        pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  };
  TwoMutationResult r;
  enumerate(true);
  if (pairs.empty()) {
    enumerate(false);
    r.collapsed_fallback = true;
  }
  r.admissible_pairs = pairs.size();
  if (pairs.empty()) throw ModelError("tree has no branch pairs");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double contribution = log_terms[p] + std::log(pair_w[p]);
    if (contribution > best) {
      best = contribution;
      r.best_pair = pairs[p];
    }
  }
  r.log10_bf = log_weighted_sum(log_terms, pair_w) / kLn10;
  return r;
}

double posterior_two_vs_one(double log10_bf1, double log10_bf2, double prior_odds) {
  if (!(prior_odds > 0.0) || !std::isfinite(log10_bf1) || !std::isfinite(log10_bf2))
    throw InputError("posterior_two_vs_one needs finite Bayes factors and positive prior odds");
  const double x = std::log10(prior_odds) + log10_bf2 - log10_bf1;
  if (x >= 0.0) return 1.0 / (1.0 + std::pow(10.0, -x));
  const double t = std::pow(10.0, x);
  return t / (1.0 + t);
}

BayesResult evaluate_position(const MarginalTree& tree, const DosageSums& sums, const PriorSpec& prior) {
  BayesResult r;
  r.position_bp = tree.focal_position;
  const auto one = bf_position_1mut(tree, sums, prior);
  const auto two = bf_position_2mut(tree, sums, prior);
  r.log10_bf1 = one.log10_bf;
  r.log10_bf2 = two.log10_bf;
  r.posterior_2v1 = posterior_two_vs_one(r.log10_bf1, r.log10_bf2, prior.prior_odds_2v1);
  r.best_branch = one.best_branch;
  r.best_branch_tips = tree.branches[static_cast<std::size_t>(one.best_branch)].tips;
  r.branch_table = sums.clade_table(r.best_branch_tips);
  r.best_pair = two.best_pair;
  r.pair_tips_first = tree.branches[static_cast<std::size_t>(two.best_pair.first)].tips;
  r.pair_tips_second = tree.branches[static_cast<std::size_t>(two.best_pair.second)].tips;
  r.pair_table = pair_table(r.pair_tips_first, r.pair_tips_second, sums);
  return r;
}

ScanParams default_scan_params(const HaplotypePanel& panel) {
  ScanParams p;
  p.treesim = TreesimParams::defaults(panel.n_haplotypes());
  p.hmm = HmmParams::defaults(panel.n_haplotypes());
  return p;
}

namespace {

BayesResult failed(std::int64_t position, const std::string& message) {
  BayesResult r;
  r.position_bp = position;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.log10_bf1 = r.log10_bf2 = r.posterior_2v1 = nan;
  r.error = message;
  return r;
}

}  // namespace

std::vector<BayesResult> scan_with_trees(const HaplotypePanel& panel, const RecombinationMap& map,
                                         const GenotypeStudy& study, const std::vector<MarginalTree>& trees,
                                         const PriorSpec& prior, const ScanParams& params) {
  prior.validate();
  params.hmm.validate();
  if (study.n_cases() == 0 || study.n_controls() == 0) throw InputError("study needs at least one case and one control");
  std::vector<std::int64_t> positions;
  for (const auto& t : trees) {
    if (t.n_tips != panel.n_haplotypes()) throw InputError("tree tip count does not match the panel");
    positions.push_back(t.focal_position);
  }
  if (!std::is_sorted(positions.begin(), positions.end())) throw InputError("trees must be in position order");
  const auto sums = study_dosage_sums(panel, map, study, positions, params.hmm, params.threads);
  std::vector<BayesResult> out(trees.size());
  parallel_for(trees.size(), params.threads, [&](std::size_t p) {
    try {
      out[p] = evaluate_position(trees[p], sums[p], prior);
    } catch (const std::exception& e) {
      out[p] = failed(trees[p].focal_position, e.what());
    }
  });
  return out;
}

std::vector<BayesResult> scan(const HaplotypePanel& panel, const RecombinationMap& map, const GenotypeStudy& study,
                              const std::vector<std::int64_t>& grid, const PriorSpec& prior,
                              const ScanParams& params, std::vector<MarginalTree>* trees_out) {
  params.treesim.validate();
  auto trees = build_trees(panel, map, grid, params.treesim, params.threads);
  auto results = scan_with_trees(panel, map, study, trees, prior, params);
  if (trees_out) *trees_out = std::move(trees);
  return results;
}

void write_scan_tsv(const std::vector<BayesResult>& results, std::ostream& out) {
  out << "position\tlog10_bf1\tlog10_bf2\tposterior_2v1\tbest_branch\tbest_pair\n";
  for (const auto& r : results) {
    out << r.position_bp << '\t';
    if (!r.ok()) {
      out << "NA\tNA\tNA\tNA\tNA\n";
      continue;
    }
    out << format_double(r.log10_bf1) << '\t' << format_double(r.log10_bf2) << '\t'
        << format_double(r.posterior_2v1) << '\t' << r.best_branch << '\t' << r.best_pair.first << ','
        << r.best_pair.second << '\n';
  }
}

namespace {

nlohmann::json table_json(const AlleleCountTable& t) {
  return {{"controls", t.controls}, {"cases", t.cases}};
}

}  // namespace

std::string scan_json(const std::vector<BayesResult>& results, const PriorSpec& prior) {
  nlohmann::json doc;
  doc["prior"] = {{"a", prior.a}, {"c", prior.c}, {"prior_odds_2v1", prior.prior_odds_2v1}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json row;
    row["position"] = r.position_bp;
    if (!r.ok()) {
      row["error"] = r.error;
      rows.push_back(std::move(row));
      continue;
    }
    row["log10_bf1"] = r.log10_bf1;
    row["log10_bf2"] = r.log10_bf2;
    row["posterior_2v1"] = r.posterior_2v1;
    row["best_branch"] = {{"id", r.best_branch}, {"tips", r.best_branch_tips.to_hex()},
                          {"table", table_json(r.branch_table)}};
    row["best_pair"] = {{"ids", {r.best_pair.first, r.best_pair.second}},
                        {"tips", {r.pair_tips_first.to_hex(), r.pair_tips_second.to_hex()}},
                        {"table", table_json(r.pair_table)}};
    rows.push_back(std::move(row));
  }
  doc["positions"] = std::move(rows);
  return doc.dump(2);
}

MomentEstimate relative_risk_prior_moments(const PriorSpec& prior, std::size_t draws, std::uint64_t seed) {
  prior.validate();
  if (draws < 2) throw InputError("need at least two draws");
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> ga(prior.a, 1.0), gc(prior.c, 1.0);
  auto beta = [&] {
    const double x = ga(rng);
    return x / (x + gc(rng));
  };
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double ratio = beta() / beta();
    const double delta = ratio - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (ratio - mean);
  }
  return {mean, std::sqrt(m2 / static_cast<double>(draws - 1))};
}

}  // namespace clademap
