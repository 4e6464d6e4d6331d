#include "clademap/effect_size.hpp"

#include "clademap/cluster_hmm.hpp"
#include "clademap/errors.hpp"
#include "clademap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>

namespace clademap {

namespace {

constexpr double kGradientTolerance = 1e-8;

struct Objective {
  double value = 0.0;
  double g_mu = 0.0, g_beta = 0.0;
  double h_mm = 0.0, h_mb = 0.0, h_bb = 0.0;  // observed information
};

Objective evaluate(std::span<const double> e, std::span<const std::uint8_t> y, double mu, double beta,
                   double precision) {
  Objective o;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double eta = mu + beta * e[i];
    // log(1 + exp(eta)) without overflow.
    const double softplus = eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    const double p = 1.0 / (1.0 + std::exp(-eta));
    const double r = (y[i] ? 1.0 : 0.0) - p;
    const double w = p * (1.0 - p);
    o.value += (y[i] ? eta : 0.0) - softplus;
    o.g_mu += r;
    o.g_beta += r * e[i];
    o.h_mm += w;
    o.h_mb += w * e[i];
    o.h_bb += w * e[i] * e[i];
  }
  o.value -= 0.5 * precision * beta * beta;
  o.g_beta -= precision * beta;
  o.h_bb += precision;
  return o;
}

}  // namespace

LogisticFit branch_logistic_map(std::span<const double> dosages, std::span<const std::uint8_t> phenotypes,
                                double effect_prior_sd, int max_iterations) {
  if (dosages.size() != phenotypes.size()) throw InputError("dosage count does not match phenotype count");
  if (!(effect_prior_sd > 0.0)) throw InputError("effect_prior_sd must be > 0");
  const auto cases = static_cast<std::size_t>(std::count_if(phenotypes.begin(), phenotypes.end(), [](auto v) { return v != 0; }));
  if (cases == 0 || cases == phenotypes.size()) throw InputError("need at least one case and one control");
  const auto [lo, hi] = std::minmax_element(dosages.begin(), dosages.end());
  if (*hi - *lo < 1e-12) throw InputError("degenerate covariate");

  const double precision = 1.0 / (effect_prior_sd * effect_prior_sd);
  const double ybar = static_cast<double>(cases) / static_cast<double>(phenotypes.size());
  double mu = std::log(ybar / (1.0 - ybar));
  double beta = 0.0;
  Objective o = evaluate(dosages, phenotypes, mu, beta, precision);
  LogisticFit fit;
  for (int it = 0; it < max_iterations; ++it) {
    fit.gradient_norm = std::hypot(o.g_mu, o.g_beta);
    if (fit.gradient_norm < kGradientTolerance) break;
    const double det = o.h_mm * o.h_bb - o.h_mb * o.h_mb;
    if (!(det > 0.0)) throw ModelError("observed information is not positive definite");
    const double d_mu = (o.h_bb * o.g_mu - o.h_mb * o.g_beta) / det;
    const double d_beta = (o.h_mm * o.g_beta - o.h_mb * o.g_mu) / det;
    double step = 1.0;
    Objective next;
    for (int halving = 0; halving < 50; ++halving, step *= 0.5) {
      next = evaluate(dosages, phenotypes, mu + step * d_mu, beta + step * d_beta, precision);
      if (next.value >= o.value - 1e-12 * std::abs(o.value)) break;
    }
    mu += step * d_mu;
    beta += step * d_beta;
    o = next;
    fit.iterations = it + 1;
  }
  fit.gradient_norm = std::hypot(o.g_mu, o.g_beta);
  if (!(fit.gradient_norm < kGradientTolerance)) throw ModelError("logistic fit did not converge");
  const double det = o.h_mm * o.h_bb - o.h_mb * o.h_mb;
  if (!(det > 0.0)) throw ModelError("observed information is not positive definite");
  fit.beta_hat = beta;
  fit.intercept = mu;
  fit.sigma_hat = std::sqrt(o.h_mm / det);
  return fit;
}

double EffectPosterior::odds_ratio() const { return std::exp(beta_star); }

double EffectPosterior::density(double beta) const {
  double d = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const double z = (beta - components[i].beta_hat) / components[i].sigma_hat;
    d += weights[i] * std::exp(-0.5 * z * z) / (components[i].sigma_hat * std::sqrt(2.0 * std::numbers::pi));
  }
  return d;
}

EffectPosterior mixture_effect(std::vector<BranchEffect> components) {
  if (components.empty()) throw ModelError("no branch could be fitted");
  EffectPosterior post;
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& c : components) {
    if (!(c.prior_weight > 0.0)) throw InputError("branch prior weights must be > 0");
    hi = std::max(hi, c.log_bf + std::log(c.prior_weight));
  }
  double total = 0.0;
  for (const auto& c : components) {
    post.weights.push_back(std::exp(c.log_bf + std::log(c.prior_weight) - hi));
    total += post.weights.back();
  }
  for (std::size_t i = 0; i < components.size(); ++i) {
    post.weights[i] /= total;
    post.beta_star += post.weights[i] * components[i].beta_hat;
  }
  post.components = std::move(components);
  return post;
}

EffectPosterior position_effect(const MarginalTree& tree, const std::vector<std::vector<double>>& copy_dosages,
                                std::span<const std::uint8_t> phenotypes, const std::vector<double>& branch_log_bf,
                                double effect_prior_sd, unsigned threads, std::vector<int>* failed_branches) {
  if (branch_log_bf.size() != tree.branches.size()) throw InputError("one Bayes factor per branch is required");
  const auto weights = branch_prior_weights(tree);
  const std::size_t nb = tree.branches.size();
  std::vector<std::optional<BranchEffect>> fits(nb);
  parallel_for(nb, threads, [&](std::size_t b) {
    std::vector<double> e(copy_dosages.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = clade_dosage(copy_dosages[i], tree.branches[b].tips);
    try {
      const auto fit = branch_logistic_map(e, phenotypes, effect_prior_sd);
      fits[b] = BranchEffect{static_cast<int>(b), fit.beta_hat, fit.sigma_hat, branch_log_bf[b], weights[b]};
    } catch (const std::exception&) {
    }
  });
  std::vector<BranchEffect> ok;
  for (std::size_t b = 0; b < nb; ++b) {
    if (fits[b])
      ok.push_back(*fits[b]);
    else if (failed_branches)
      failed_branches->push_back(static_cast<int>(b));
  }
  return mixture_effect(std::move(ok));
}

void write_effect_report(std::ostream& out, std::int64_t position, const EffectPosterior& posterior) {
  out << "position\tbranch\tbeta\tse\tlog_bf\tweight\n";
  for (std::size_t i = 0; i < posterior.components.size(); ++i) {
    const auto& c = posterior.components[i];
    out << position << '\t' << c.branch << '\t' << format_double(c.beta_hat) << '\t' << format_double(c.sigma_hat)
        << '\t' << format_double(c.log_bf) << '\t' << format_double(posterior.weights[i]) << '\n';
  }
  out << "#beta_star\tor_star\n";
  out << "#" << format_double(posterior.beta_star) << '\t' << format_double(posterior.odds_ratio()) << '\n';
}

}  // namespace clademap
