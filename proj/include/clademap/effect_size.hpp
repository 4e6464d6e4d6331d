#pragma once

#include "clademap/assoc_bayes.hpp"
#include "clademap/treesim.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace clademap {

struct LogisticFit {
  double beta_hat = 0.0;
  double sigma_hat = 0.0;
  double intercept = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// MAP of logit P(case) = mu + beta e with flat prior on mu and N(0, sd^2)
/// on beta. Throws InputError("degenerate covariate") for constant dosages
/// and ModelError when Newton does not converge.
LogisticFit branch_logistic_map(std::span<const double> dosages, std::span<const std::uint8_t> phenotypes,
                                double effect_prior_sd, int max_iterations = 100);

struct BranchEffect {
  int branch = -1;
  double beta_hat = 0.0;
  double sigma_hat = 0.0;
  double log_bf = 0.0;
  double prior_weight = 0.0;
};

struct EffectPosterior {
  std::vector<BranchEffect> components;
  /// w_b proportional to BF_b P(b), same order as components.
  std::vector<double> weights;
  double beta_star = 0.0;

  double odds_ratio() const;
  /// Mixture of normals evaluated at beta.
  double density(double beta) const;
};

/// BF-and-prior weighted combination of per-branch fits.
EffectPosterior mixture_effect(std::vector<BranchEffect> components);

/// Per-branch fits for one position. Branches whose fit fails are left out.
EffectPosterior position_effect(const MarginalTree& tree, const std::vector<std::vector<double>>& copy_dosages,
                                std::span<const std::uint8_t> phenotypes, const std::vector<double>& branch_log_bf,
                                double effect_prior_sd, unsigned threads = 1,
                                std::vector<int>* failed_branches = nullptr);

/// `position branch beta se log_bf weight` rows and a `beta_star or_star` summary.
void write_effect_report(std::ostream& out, std::int64_t position, const EffectPosterior& posterior);

}  // namespace clademap
