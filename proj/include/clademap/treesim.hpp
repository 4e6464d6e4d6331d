#pragma once

#include "clademap/data_model.hpp"
#include "clademap/tipset.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace clademap {

/// Expected length (in coalescent time units) of a branch that was alive
/// while the number of lineages fell from `n_birth` to `n_death`:
/// sum_{i=n_death}^{n_birth} 2/(i(i-1)). Requires 2 <= n_death <= n_birth.
double expected_branch_length(int n_death, int n_birth);

/// Watterson-style per-site theta for n haplotypes: 1 / sum_{i=1}^{n-1} 1/i.
double watterson_theta(std::size_t n_haplotypes);

inline constexpr double kDefaultEffectivePopulationSize = 11418.0;

struct TreesimParams {
  /// Scaled mutation rate per site.
  double theta = 0.0;
  /// Converts genetic distance in Morgans to population-scaled rho (4 Ne).
  double rho_scale = 4.0 * kDefaultEffectivePopulationSize;
  /// Panel sites used on each side of the focal site.
  std::size_t window_sites = 200;

  static TreesimParams defaults(std::size_t n_haplotypes);
  void validate() const;
};

struct Branch {
  int id = 0;
  int parent = -1;
  TipSet tips;
  /// Live lineages right after the branch was created (N for tips).
  int n_birth = 0;
  /// Live lineages just before the branch coalesced away.
  int n_death = 0;
};

/// Rooted binary genealogy at one focal position. Node ids: tips are
/// 0..N-1, internal nodes N..2N-2 in coalescence order, root is 2N-2.
/// `branches[i]` is the branch above node i; the root has none.
struct MarginalTree {
  std::int64_t focal_position = 0;
  std::size_t n_tips = 0;
  std::vector<Branch> branches;

  int root_id() const { return static_cast<int>(2 * n_tips - 2); }
  std::vector<int> children(int node) const;
  bool operator==(const MarginalTree& other) const;
};

/// Throws InputError when the structural invariants do not hold.
void validate_tree(const MarginalTree& tree);

double total_expected_length(const MarginalTree& tree);

// ---- greedy construction ---------------------------------------------------

enum class EventKind { Coalescence = 0, Mutation = 1, Recombination = 2 };

struct Event {
  EventKind kind = EventKind::Coalescence;
  /// Lower lineage id for coalescences, the touched lineage otherwise.
  int lineage = -1;
  /// Partner lineage of a coalescence, -1 otherwise.
  int partner = -1;
  /// Panel site index of a mutation, or of the site left of a breakpoint.
  int site = -1;
  double log_score = 0.0;

  /// Deterministic tie order: kind, lineage, partner, site.
  bool precedes(const Event& other) const;
  bool same_move(const Event& other) const {
    return kind == other.kind && lineage == other.lineage && partner == other.partner && site == other.site;
  }
};

struct Lineage {
  int id = 0;
  /// Inclusive panel-site range still tracked; always contains the focal site.
  int lo = 0;
  int hi = 0;
  /// Alleles over the construction window (derived = 1); meaningful on [lo, hi].
  std::vector<std::uint8_t> seq;
  TipSet tips;
  int n_birth = 0;
};

/// Everything about the panel that scoring needs, fixed for one construction.
struct TreesimContext {
  std::int64_t focal_position = 0;
  int focal_site = 0;
  int window_lo = 0;
  int window_hi = 0;
  std::size_t n_tips = 0;
  double theta = 0.0;
  /// rho for the gap between site s and s+1, indexed by s - window_lo.
  std::vector<double> gap_rho;

  double rho_after(int site) const { return gap_rho[static_cast<std::size_t>(site - window_lo)]; }
};

/// Current set of live lineages.
struct TreesimState {
  std::vector<Lineage> lineages;
  int next_id = 0;
};

/// Focal site (nearest panel site, ties to the left), window and per-gap rho.
TreesimContext make_treesim_context(const HaplotypePanel& panel, const RecombinationMap& map,
                                    std::int64_t focal_position, const TreesimParams& params);

/// Tip lineages with the minor allele of each window site coded as derived.
TreesimState initial_state(const HaplotypePanel& panel, const TreesimContext& ctx);

/// All candidate next events with log(prior rate x likelihood ratio).
/// Returned in tie order. Requires at least two live lineages.
std::vector<Event> enumerate_events(const TreesimState& state, const TreesimContext& ctx);

/// Highest-scoring event; scores within kTieTolerance (log scale) of the
/// maximum count as tied and the tie order decides.
const Event& select_event(const std::vector<Event>& candidates);
inline constexpr double kTieTolerance = 1e-9;

struct TreeRecorder {
  std::vector<Branch> nodes;
};

/// Applies `event` to `state`; records births/deaths of coalescing lineages.
void apply_event(TreesimState& state, const Event& event, const TreesimContext& ctx, TreeRecorder& recorder);

/// Li-Stephens conditional log-likelihood of `target` restricted to
/// [lo, hi] given the donor lineages.
double log_copying_likelihood(const std::vector<std::uint8_t>& target, int lo, int hi,
                              const std::vector<const Lineage*>& donors, const TreesimContext& ctx);

struct BuildResult {
  MarginalTree tree;
  std::vector<Event> trace;
};

/// Greedy approximation to the posterior-modal marginal tree at `focal_position`.
BuildResult build_tree_traced(const HaplotypePanel& panel, const RecombinationMap& map,
                              std::int64_t focal_position, const TreesimParams& params);
MarginalTree build_tree(const HaplotypePanel& panel, const RecombinationMap& map, std::int64_t focal_position,
                        const TreesimParams& params);

/// One tree per grid position, built on `threads` workers; output is in grid order.
std::vector<MarginalTree> build_trees(const HaplotypePanel& panel, const RecombinationMap& map,
                                      const std::vector<std::int64_t>& positions, const TreesimParams& params,
                                      unsigned threads = 1);

// ---- tree store ------------------------------------------------------------

inline constexpr int kTreeStoreVersion = 1;

void write_tree_store(const std::vector<MarginalTree>& trees, std::ostream& out);
std::vector<MarginalTree> read_tree_store(std::istream& in);
void save_tree_store(const std::vector<MarginalTree>& trees, const std::filesystem::path& path);
std::vector<MarginalTree> load_tree_store(const std::filesystem::path& path);

/// Newick with `[&tips=..,epoch=m-n]` comments; leaves are named h<index>.
std::string to_newick(const MarginalTree& tree);

}  // namespace clademap
