#include "coalescent_sim.hpp"

#include "clademap/tipset.hpp"
#include "clademap/treesim.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <stdexcept>

namespace testkit {

using clademap::TipSet;

namespace {

struct Segment {
  double l, r;
  TipSet tips;
};

using Lineage = std::vector<Segment>;

double span(const Lineage& x) { return x.back().r - x.front().l; }

Lineage merge(const Lineage& a, const Lineage& b, std::size_t n) {
  std::vector<double> cuts;
  for (const auto* lin : {&a, &b})
    for (const auto& s : *lin) {
      cuts.push_back(s.l);
      cuts.push_back(s.r);
    }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  Lineage out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double l = cuts[i], r = cuts[i + 1];
    TipSet t(n);
    bool covered = false;
    for (const auto* lin : {&a, &b})
      for (const auto& s : *lin)
        if (s.l <= l && s.r >= r) {
          t |= s.tips;
          covered = true;
        }
    if (!covered || t.count() == n) continue;
    if (!out.empty() && out.back().r == l && out.back().tips == t)
      out.back().r = r;
    else
      out.push_back({l, r, t});
  }
  return out;
}

}  // namespace

SimulatedPanel simulate_coalescent_panel(const CoalescentSpec& spec) {
  const std::size_t n = spec.n_haplotypes;
  if (n < 2) throw std::invalid_argument("need at least two haplotypes");
  const double length = static_cast<double>(spec.length_bp);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Lineage> lineages;
  for (std::size_t k = 0; k < n; ++k) lineages.push_back({{0.0, length, TipSet::single(n, k)}});

  std::map<std::int64_t, TipSet> mutations;
  while (lineages.size() > 1) {
    const double k = static_cast<double>(lineages.size());
    const double coal = k * (k - 1.0) / 2.0;
    double rec_total = 0.0;
    for (const auto& x : lineages) rec_total += spec.rho_per_bp / 2.0 * span(x);
    const double dt = std::exponential_distribution<double>(coal + rec_total)(rng);

    for (const auto& x : lineages)
      for (const auto& s : x) {
        const double mean = spec.theta_per_bp / 2.0 * (s.r - s.l) * dt;
        const int count = std::poisson_distribution<int>(mean)(rng);
        for (int m = 0; m < count; ++m) {
          const auto bp = static_cast<std::int64_t>(s.l + unif(rng) * (s.r - s.l));
          mutations.emplace(spec.start_bp + std::min<std::int64_t>(bp, spec.length_bp - 1), s.tips);
        }
      }

    if (unif(rng) * (coal + rec_total) < coal) {
      const auto i = static_cast<std::size_t>(unif(rng) * k);
      auto j = static_cast<std::size_t>(unif(rng) * (k - 1.0));
      if (j >= i) ++j;
      Lineage m = merge(lineages[i], lineages[j], n);
      lineages.erase(lineages.begin() + static_cast<std::ptrdiff_t>(std::max(i, j)));
      lineages.erase(lineages.begin() + static_cast<std::ptrdiff_t>(std::min(i, j)));
      if (!m.empty()) lineages.push_back(std::move(m));
    } else {
      double pick = unif(rng) * rec_total;
      std::size_t i = 0;
      for (; i + 1 < lineages.size(); ++i) {
        pick -= spec.rho_per_bp / 2.0 * span(lineages[i]);
        if (pick < 0) break;
      }
      const Lineage x = lineages[i];
      const double cut = x.front().l + unif(rng) * span(x);
      Lineage left, right;
      for (const auto& s : x) {
        if (s.r <= cut) {
          left.push_back(s);
        } else if (s.l >= cut) {
          right.push_back(s);
        } else {
          left.push_back({s.l, cut, s.tips});
          right.push_back({cut, s.r, s.tips});
        }
      }
      if (left.empty() || right.empty()) continue;
      lineages[i] = std::move(left);
      lineages.push_back(std::move(right));
    }
    std::erase_if(lineages, [](const Lineage& x) { return x.empty(); });
  }
  if (mutations.empty()) throw std::runtime_error("coalescent simulation produced no segregating sites");

  std::vector<clademap::SiteInfo> legend;
  std::vector<std::vector<std::uint8_t>> alleles;
  for (const auto& [pos, tips] : mutations) {
    legend.push_back({"s" + std::to_string(pos), pos, "A", "G"});
    std::vector<std::uint8_t> col(n);
    for (std::size_t h = 0; h < n; ++h) col[h] = tips.test(h) ? 1 : 0;
    alleles.push_back(std::move(col));
  }
  SimulatedPanel out;
  out.panel = clademap::HaplotypePanel(std::move(legend), std::move(alleles));
  const double rate = spec.rho_per_bp / (4.0 * clademap::kDefaultEffectivePopulationSize) * 1e8;
  out.map = clademap::RecombinationMap::uniform(rate, spec.start_bp, spec.start_bp + spec.length_bp);
  return out;
}

}  // namespace testkit
