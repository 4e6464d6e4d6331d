#pragma once

#include "clademap/allele_table.hpp"
#include "clademap/cluster_hmm.hpp"
#include "clademap/data_model.hpp"
#include "clademap/treesim.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace clademap {

/// Natural-log Bayes factor of a C-class table: one Beta(a, c) "case share"
/// per class against a single shared one. Counts may be real-valued.
double log_bf_table(const AlleleCountTable& table, const PriorSpec& prior);

/// Branch prior P(b) proportional to expected coalescent length; indexed by branch id.
std::vector<double> branch_prior_weights(const MarginalTree& tree);

/// Log-sum-exp over `log_terms` with weights (weights need not be normalized).
double log_weighted_sum(const std::vector<double>& log_terms, const std::vector<double>& weights);

struct OneMutationResult {
  double log10_bf = 0.0;
  /// Natural-log BF per branch id.
  std::vector<double> branch_log_bf;
  /// Branch with the largest BF x P(b).
  int best_branch = -1;
};

OneMutationResult bf_position_1mut(const MarginalTree& tree, const DosageSums& sums, const PriorSpec& prior);

/// Carrier classes induced by two distinct branches: disjoint clades give
/// {only first, only second, neither}; nested ones give {both, only outer,
/// neither}. Empty classes are dropped.
std::vector<TipSet> carrier_classes(const TipSet& first, const TipSet& second);

struct TwoMutationResult {
  double log10_bf = 0.0;
  std::pair<int, int> best_pair{-1, -1};
  std::size_t admissible_pairs = 0;
  /// True when no pair had three classes and all distinct pairs were used.
  bool collapsed_fallback = false;
};

/// Expected allele counts per carrier class of the pair (b1, b2).
AlleleCountTable pair_table(const TipSet& first, const TipSet& second, const DosageSums& sums);

TwoMutationResult bf_position_2mut(const MarginalTree& tree, const DosageSums& sums, const PriorSpec& prior);

/// prior_odds 10^(bf2-bf1) / (1 + prior_odds 10^(bf2-bf1)).
double posterior_two_vs_one(double log10_bf1, double log10_bf2, double prior_odds);

struct BayesResult {
  std::int64_t position_bp = 0;
  double log10_bf1 = 0.0;
  double log10_bf2 = 0.0;
  double posterior_2v1 = 0.0;
  int best_branch = -1;
  std::pair<int, int> best_pair{-1, -1};
  TipSet best_branch_tips;
  TipSet pair_tips_first;
  TipSet pair_tips_second;
  AlleleCountTable branch_table;
  AlleleCountTable pair_table;
  /// Non-empty when this position failed; numeric fields are then NaN.
  std::string error;

  bool ok() const { return error.empty(); }
};

/// Association statistics at one position from its tree and dosage sums.
BayesResult evaluate_position(const MarginalTree& tree, const DosageSums& sums, const PriorSpec& prior);

struct ScanParams {
  TreesimParams treesim;
  HmmParams hmm;
  unsigned threads = 1;
};

ScanParams default_scan_params(const HaplotypePanel& panel);

/// Trees, copying posteriors and Bayes factors at every grid position.
/// Per-position failures are reported in BayesResult::error.
std::vector<BayesResult> scan(const HaplotypePanel& panel, const RecombinationMap& map, const GenotypeStudy& study,
                              const std::vector<std::int64_t>& grid, const PriorSpec& prior,
                              const ScanParams& params, std::vector<MarginalTree>* trees_out = nullptr);

/// Same, reusing previously built trees (one per grid position, same order).
std::vector<BayesResult> scan_with_trees(const HaplotypePanel& panel, const RecombinationMap& map,
                                         const GenotypeStudy& study, const std::vector<MarginalTree>& trees,
                                         const PriorSpec& prior, const ScanParams& params);

/// Tab-separated `position log10_bf1 log10_bf2 posterior_2v1 best_branch best_pair`.
void write_scan_tsv(const std::vector<BayesResult>& results, std::ostream& out);
/// JSON with tables and hex tip masks for every reported branch.
std::string scan_json(const std::vector<BayesResult>& results, const PriorSpec& prior);

struct MomentEstimate {
  double mean = 0.0;
  double sd = 0.0;
};

/// Monte Carlo mean and sd of p/q for independent p, q ~ Beta(a, c).
MomentEstimate relative_risk_prior_moments(const PriorSpec& prior, std::size_t draws, std::uint64_t seed);

}  // namespace clademap
