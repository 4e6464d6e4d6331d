#include "clademap/treesim.hpp"

#include "clademap/errors.hpp"
#include "clademap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace clademap {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Per-site log-likelihood prefix sums of the copying model, walking either
/// left-to-right (out[s] = log pi(target[lo..s])) or right-to-left
/// (out[s] = log pi(target[s..hi])). Indexed by s - lo.
std::vector<double> copying_prefix(const std::vector<std::uint8_t>& target, int lo, int hi,
                                   const std::vector<const Lineage*>& donors, const TreesimContext& ctx,
                                   bool reverse) {
  const std::size_t len = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> out(len);
  const std::size_t nd = donors.size();
  if (nd == 0) {
    for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<double>(reverse ? len - i : i + 1) * std::log(0.5);
    return out;
  }
  const double dn = static_cast<double>(nd);
  const double lambda = ctx.theta / (2.0 * (dn + ctx.theta));
  std::vector<double> f(nd);
  auto emission = [&](std::size_t d, int s) {
    const Lineage& donor = *donors[d];
    if (s < donor.lo || s > donor.hi) return 0.5;
    const auto w = static_cast<std::size_t>(s - ctx.window_lo);
    return target[w] == donor.seq[w] ? 1.0 - lambda : lambda;
  };

  double log_acc = 0.0;
  const int first = reverse ? hi : lo;
  const int step = reverse ? -1 : 1;
  for (int s = first, i = 0; i < static_cast<int>(len); ++i, s += step) {
    if (i == 0) {
      for (std::size_t d = 0; d < nd; ++d) f[d] = emission(d, s) / dn;
    } else {
      const double rho = ctx.rho_after(reverse ? s : s - 1);
      const double jump = -std::expm1(-rho / dn);
      // f is normalized to sum 1 after every site.
      const double spread = jump / dn;
      for (std::size_t d = 0; d < nd; ++d) f[d] = emission(d, s) * ((1.0 - jump) * f[d] + spread);
    }
    double total = 0.0;
    for (double v : f) total += v;
    log_acc += std::log(total);
    for (double& v : f) v /= total;
    out[reverse ? len - 1 - static_cast<std::size_t>(i) : static_cast<std::size_t>(i)] = log_acc;
  }
  return out;
}

}  // namespace

double expected_branch_length(int n_death, int n_birth) {
  if (n_death < 2 || n_death > n_birth)
    throw std::invalid_argument("expected_branch_length requires 2 <= n_death <= n_birth");
  double sum = 0.0;
  for (int i = n_death; i <= n_birth; ++i) sum += 2.0 / (static_cast<double>(i) * static_cast<double>(i - 1));
  return sum;
}

double watterson_theta(std::size_t n_haplotypes) {
  double h = 0.0;
  for (std::size_t i = 1; i < n_haplotypes; ++i) h += 1.0 / static_cast<double>(i);
  return h > 0 ? 1.0 / h : 1.0;
}

TreesimParams TreesimParams::defaults(std::size_t n_haplotypes) {
  TreesimParams p;
  p.theta = watterson_theta(n_haplotypes);
  return p;
}

void TreesimParams::validate() const {
  if (!(theta > 0 && std::isfinite(theta))) throw InputError("treesim theta must be positive");
  if (!(rho_scale > 0 && std::isfinite(rho_scale))) throw InputError("treesim rho scale must be positive");
  if (window_sites < 1) throw InputError("treesim window must contain at least one site per side");
}

std::vector<int> MarginalTree::children(int node) const {
  std::vector<int> out;
  for (const auto& b : branches)
    if (b.parent == node) out.push_back(b.id);
  return out;
}

bool MarginalTree::operator==(const MarginalTree& other) const {
  if (focal_position != other.focal_position || n_tips != other.n_tips ||
      branches.size() != other.branches.size())
    return false;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& x = branches[i];
    const auto& y = other.branches[i];
    if (x.id != y.id || x.parent != y.parent || x.n_birth != y.n_birth || x.n_death != y.n_death ||
        !(x.tips == y.tips))
      return false;
  }
  return true;
}

void validate_tree(const MarginalTree& tree) {
  const int n = static_cast<int>(tree.n_tips);
  if (n < 2) throw InputError("tree needs at least 2 tips");
  if (tree.branches.size() != static_cast<std::size_t>(2 * n - 2))
    throw InputError("tree has " + std::to_string(tree.branches.size()) + " branches, expected " +
                     std::to_string(2 * n - 2));
  std::vector<TipSet> node_tips(static_cast<std::size_t>(2 * n - 1), TipSet(tree.n_tips));
  std::vector<int> child_count(static_cast<std::size_t>(2 * n - 1), 0);
  for (std::size_t i = 0; i < tree.branches.size(); ++i) {
    const auto& b = tree.branches[i];
    if (b.id != static_cast<int>(i)) throw InputError("branch ids must equal their index");
    if (b.parent < n || b.parent > 2 * n - 2 || b.parent <= b.id)
      throw InputError("branch " + std::to_string(b.id) + " has invalid parent " + std::to_string(b.parent));
    if (b.tips.size() != tree.n_tips) throw InputError("tip set size mismatch");
    if (!(2 <= b.n_death && b.n_death <= b.n_birth && b.n_birth <= n))
      throw InputError("branch " + std::to_string(b.id) + " has invalid epoch");
    child_count[static_cast<std::size_t>(b.parent)]++;
    node_tips[static_cast<std::size_t>(b.parent)] |= b.tips;
    if (b.id < n && !(b.tips == TipSet::single(tree.n_tips, static_cast<std::size_t>(b.id))))
      throw InputError("tip branch " + std::to_string(b.id) + " must carry exactly its own tip");
  }
  for (int v = n; v <= 2 * n - 2; ++v) {
    if (child_count[static_cast<std::size_t>(v)] != 2)
      throw InputError("internal node " + std::to_string(v) + " does not have two children");
    if (v < 2 * n - 2 && !(node_tips[static_cast<std::size_t>(v)] == tree.branches[static_cast<std::size_t>(v)].tips))
      throw InputError("internal branch " + std::to_string(v) + " tip set is not the union of its children");
  }
  if (!(node_tips[static_cast<std::size_t>(2 * n - 2)] == TipSet::full(tree.n_tips)))
    throw InputError("root does not subtend all tips");
}

double total_expected_length(const MarginalTree& tree) {
  double total = 0.0;
  for (const auto& b : tree.branches) total += expected_branch_length(b.n_death, b.n_birth);
  return total;
}

bool Event::precedes(const Event& other) const {
  if (kind != other.kind) return static_cast<int>(kind) < static_cast<int>(other.kind);
  if (lineage != other.lineage) return lineage < other.lineage;
  if (partner != other.partner) return partner < other.partner;
  return site < other.site;
}

TreesimContext make_treesim_context(const HaplotypePanel& panel, const RecombinationMap& map,
                                    std::int64_t focal_position, const TreesimParams& params) {
  params.validate();
  TreesimContext ctx;
  ctx.focal_position = focal_position;
  ctx.n_tips = panel.n_haplotypes();
  ctx.theta = params.theta;
  const std::size_t upper = panel.lower_bound(focal_position);
  std::size_t focal;
  if (upper == 0) {
    focal = 0;
  } else if (upper == panel.n_sites()) {
    focal = panel.n_sites() - 1;
  } else {
    const auto left_gap = focal_position - panel.position(upper - 1);
    const auto right_gap = panel.position(upper) - focal_position;
    focal = right_gap < left_gap ? upper : upper - 1;
  }
  const auto w = static_cast<std::int64_t>(params.window_sites);
  const auto f = static_cast<std::int64_t>(focal);
  ctx.focal_site = static_cast<int>(focal);
  ctx.window_lo = static_cast<int>(std::max<std::int64_t>(0, f - w));
  ctx.window_hi = static_cast<int>(std::min<std::int64_t>(static_cast<std::int64_t>(panel.n_sites()) - 1, f + w));
  for (int s = ctx.window_lo; s < ctx.window_hi; ++s) {
    const double cm = genetic_distance(map, panel.position(static_cast<std::size_t>(s)),
                                       panel.position(static_cast<std::size_t>(s + 1)));
    ctx.gap_rho.push_back(params.rho_scale * cm / 100.0);
  }
  return ctx;
}

TreesimState initial_state(const HaplotypePanel& panel, const TreesimContext& ctx) {
  TreesimState state;
  const std::size_t n = panel.n_haplotypes();
  const auto width = static_cast<std::size_t>(ctx.window_hi - ctx.window_lo + 1);
  std::vector<std::uint8_t> minor(width);
  for (std::size_t w = 0; w < width; ++w) minor[w] = panel.minor_allele(static_cast<std::size_t>(ctx.window_lo) + w);
  for (std::size_t k = 0; k < n; ++k) {
    Lineage l;
    l.id = static_cast<int>(k);
    l.lo = ctx.window_lo;
    l.hi = ctx.window_hi;
    l.seq.resize(width);
    for (std::size_t w = 0; w < width; ++w)
      l.seq[w] = panel.allele(k, static_cast<std::size_t>(ctx.window_lo) + w) == minor[w] ? 1 : 0;
    l.tips = TipSet::single(n, k);
    l.n_birth = static_cast<int>(n);
    state.lineages.push_back(std::move(l));
  }
  state.next_id = static_cast<int>(n);
  return state;
}

double log_copying_likelihood(const std::vector<std::uint8_t>& target, int lo, int hi,
                              const std::vector<const Lineage*>& donors, const TreesimContext& ctx) {
  return copying_prefix(target, lo, hi, donors, ctx, false).back();
}

namespace {

std::size_t widx(const TreesimContext& ctx, int site) { return static_cast<std::size_t>(site - ctx.window_lo); }

bool sequences_agree(const Lineage& a, const Lineage& b, const TreesimContext& ctx) {
  const int lo = std::max(a.lo, b.lo);
  const int hi = std::min(a.hi, b.hi);
  for (int s = lo; s <= hi; ++s)
    if (a.seq[widx(ctx, s)] != b.seq[widx(ctx, s)]) return false;
  return true;
}

Lineage merged(const Lineage& a, const Lineage& b, const TreesimContext& ctx) {
  Lineage m;
  m.lo = std::min(a.lo, b.lo);
  m.hi = std::max(a.hi, b.hi);
  m.seq.assign(a.seq.size(), 0);
  for (int s = m.lo; s <= m.hi; ++s) {
    const auto w = widx(ctx, s);
    m.seq[w] = (s >= a.lo && s <= a.hi) ? a.seq[w] : b.seq[w];
  }
  m.tips = a.tips | b.tips;
  return m;
}

std::vector<const Lineage*> donors_except(const TreesimState& state, int skip_a, int skip_b) {
  std::vector<const Lineage*> out;
  for (const auto& l : state.lineages)
    if (l.id != skip_a && l.id != skip_b) out.push_back(&l);
  return out;
}

}  // namespace

std::vector<Event> enumerate_events(const TreesimState& state, const TreesimContext& ctx) {
  const auto& lin = state.lineages;
  if (lin.size() < 2) throw std::invalid_argument("enumerate_events needs at least two live lineages");
  std::vector<Event> events;
  const double log_mut_prior = std::log(ctx.theta / 2.0);

  std::vector<double> whole(lin.size());
  for (std::size_t i = 0; i < lin.size(); ++i) {
    const auto& a = lin[i];
    const auto donors = donors_except(state, a.id, -1);
    const auto prefix = copying_prefix(a.seq, a.lo, a.hi, donors, ctx, false);
    whole[i] = prefix.back();

    // Mutations: derived alleles carried by no other lineage tracking the site.
    for (int s = a.lo; s <= a.hi; ++s) {
      const auto w = widx(ctx, s);
      if (a.seq[w] != 1) continue;
      bool singleton = true;
      for (const auto& b : lin) {
        if (b.id != a.id && s >= b.lo && s <= b.hi && b.seq[w] == 1) {
          singleton = false;
          break;
        }
      }
      if (!singleton) continue;
      auto mutated = a.seq;
      mutated[w] = 0;
      const double lr = log_copying_likelihood(mutated, a.lo, a.hi, donors, ctx) - whole[i];
      events.push_back({EventKind::Mutation, a.id, -1, s, log_mut_prior + lr});
    }

    // Recombinations: every breakpoint inside the active interval.
    if (a.hi > a.lo) {
      const auto suffix = copying_prefix(a.seq, a.lo, a.hi, donors, ctx, true);
      for (int g = a.lo; g < a.hi; ++g) {
        const double rho = ctx.rho_after(g);
        double score = kNegInf;
        if (rho > 0) {
          const double lr = prefix[static_cast<std::size_t>(g - a.lo)] +
                            suffix[static_cast<std::size_t>(g + 1 - a.lo)] - whole[i];
          score = std::log(rho / 2.0) + lr;
        }
        events.push_back({EventKind::Recombination, a.id, -1, g, score});
      }
    }
  }

  // Coalescences of compatible pairs.
  for (std::size_t i = 0; i < lin.size(); ++i) {
    for (std::size_t j = i + 1; j < lin.size(); ++j) {
      const auto& a = lin[i];
      const auto& b = lin[j];
      if (!sequences_agree(a, b, ctx)) continue;
      const auto rest = donors_except(state, a.id, b.id);
      const Lineage m = merged(a, b, ctx);
      const double log_m = log_copying_likelihood(m.seq, m.lo, m.hi, rest, ctx);
      const double log_a = log_copying_likelihood(a.seq, a.lo, a.hi, rest, ctx);
      const double log_b = log_copying_likelihood(b.seq, b.lo, b.hi, rest, ctx);
      // Symmetrized chain rule: P(a,b | rest) via both orders.
      const double log_pair = 0.5 * ((log_b + whole[i]) + (log_a + whole[j]));
      const int lo_id = std::min(a.id, b.id);
      const int hi_id = std::max(a.id, b.id);
      events.push_back({EventKind::Coalescence, lo_id, hi_id, -1, log_m - log_pair});
    }
  }

  std::sort(events.begin(), events.end(), [](const Event& x, const Event& y) { return x.precedes(y); });
  return events;
}

const Event& select_event(const std::vector<Event>& candidates) {
  if (candidates.empty()) throw ModelError("no candidate event exists");
  double best = kNegInf;
  for (const auto& e : candidates) best = std::max(best, e.log_score);
  if (best == kNegInf) throw ModelError("no candidate event has positive score");
  for (const auto& e : candidates)
    if (e.log_score >= best - kTieTolerance) return e;
  return candidates.front();  // unreachable
}

void apply_event(TreesimState& state, const Event& event, const TreesimContext& ctx, TreeRecorder& recorder) {
  auto& lin = state.lineages;
  auto find = [&](int id) {
    auto it = std::find_if(lin.begin(), lin.end(), [id](const Lineage& l) { return l.id == id; });
    if (it == lin.end()) throw std::invalid_argument("event references a dead lineage");
    return it;
  };
  switch (event.kind) {
    case EventKind::Mutation: {
      auto it = find(event.lineage);
      it->seq[widx(ctx, event.site)] = 0;
      break;
    }
    case EventKind::Recombination: {
      auto it = find(event.lineage);
      if (event.site < ctx.focal_site)
        it->lo = event.site + 1;
      else
        it->hi = event.site;
      break;
    }
    case EventKind::Coalescence: {
      const int live = static_cast<int>(lin.size());
      auto ia = find(event.lineage);
      auto ib = find(event.partner);
      Lineage m = merged(*ia, *ib, ctx);
      m.id = state.next_id++;
      m.n_birth = live - 1;
      for (int child : {event.lineage, event.partner}) {
        auto& node = recorder.nodes.at(static_cast<std::size_t>(child));
        node.parent = m.id;
        node.n_death = live;
      }
      auto& parent = recorder.nodes.at(static_cast<std::size_t>(m.id));
      parent.tips = m.tips;
      parent.n_birth = m.n_birth;
      lin.erase(std::remove_if(lin.begin(), lin.end(),
                               [&](const Lineage& l) { return l.id == event.lineage || l.id == event.partner; }),
                lin.end());
      lin.push_back(std::move(m));
      break;
    }
  }
}

BuildResult build_tree_traced(const HaplotypePanel& panel, const RecombinationMap& map, std::int64_t focal_position,
                              const TreesimParams& params) {
  const TreesimContext ctx = make_treesim_context(panel, map, focal_position, params);
  TreesimState state = initial_state(panel, ctx);
  const std::size_t n = panel.n_haplotypes();

  TreeRecorder recorder;
  recorder.nodes.resize(2 * n - 1);
  for (std::size_t v = 0; v < recorder.nodes.size(); ++v) {
    recorder.nodes[v].id = static_cast<int>(v);
    recorder.nodes[v].tips = v < n ? TipSet::single(n, v) : TipSet(n);
    recorder.nodes[v].n_birth = static_cast<int>(n);
  }

  BuildResult result;
  while (state.lineages.size() > 1) {
    const auto candidates = enumerate_events(state, ctx);
    const Event chosen = select_event(candidates);
    result.trace.push_back(chosen);
    apply_event(state, chosen, ctx, recorder);
  }

  result.tree.focal_position = focal_position;
  result.tree.n_tips = n;
  recorder.nodes.pop_back();  // root
  result.tree.branches = std::move(recorder.nodes);
  return result;
}

MarginalTree build_tree(const HaplotypePanel& panel, const RecombinationMap& map, std::int64_t focal_position,
                        const TreesimParams& params) {
  return build_tree_traced(panel, map, focal_position, params).tree;
}

std::vector<MarginalTree> build_trees(const HaplotypePanel& panel, const RecombinationMap& map,
                                      const std::vector<std::int64_t>& positions, const TreesimParams& params,
                                      unsigned threads) {
  std::vector<MarginalTree> trees(positions.size());
  parallel_for(positions.size(), threads,
               [&](std::size_t i) { trees[i] = build_tree(panel, map, positions[i], params); });
  return trees;
}

}  // namespace clademap
