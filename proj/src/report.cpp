#include "clademap/report.hpp"

#include "clademap/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace clademap {

using nlohmann::json;

double report_round(double value) {
  const double r = std::round(value * 1000.0) / 1000.0;
  return r == 0.0 ? 0.0 : r;  // no "-0"
}

namespace {

std::vector<int> plotting_order(const MarginalTree& tree) {
  std::vector<int> order;
  std::function<void(int)> visit = [&](int node) {
    const auto kids = tree.children(node);
    if (kids.empty()) {
      order.push_back(node);
      return;
    }
    for (int k : kids) visit(k);
  };
  visit(tree.root_id());
  return order;
}

struct ClassSplit {
  std::vector<TipSet> sets;
  std::vector<std::string> names;
};

ClassSplit named_classes(const TipSet& first, int first_id, const TipSet& second, int second_id) {
  ClassSplit c;
  const std::string a = "b" + std::to_string(first_id);
  const std::string b = "b" + std::to_string(second_id);
  if (!first.intersects(second)) {
    c.sets = {first, second, (first | second).complement()};
    c.names = {a + " only", b + " only", "neither"};
  } else if (first.is_subset_of(second)) {
    c.sets = {first, second - first, second.complement()};
    c.names = {"both", b + " only", "neither"};
  } else {
    c.sets = {second, first - second, first.complement()};
    c.names = {"both", a + " only", "neither"};
  }
  for (std::size_t i = c.sets.size(); i-- > 0;)
    if (c.sets[i].none()) {
      c.sets.erase(c.sets.begin() + static_cast<std::ptrdiff_t>(i));
      c.names.erase(c.names.begin() + static_cast<std::ptrdiff_t>(i));
    }
  return c;
}

std::string num(double v) { return format_double(report_round(v)); }

json rounded(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(report_round(x));
  return out;
}

json table_json(const AlleleCountTable& t) { return {{"controls", rounded(t.controls)}, {"cases", rounded(t.cases)}}; }

AlleleCountTable table_from_json(const json& j) {
  AlleleCountTable t;
  t.controls = j.at("controls").get<std::vector<double>>();
  t.cases = j.at("cases").get<std::vector<double>>();
  return t;
}

}  // namespace

RegionReport make_region_report(const std::vector<BayesResult>& results, const std::vector<MarginalTree>& trees,
                                const HaplotypePanel& panel, const RecombinationMap& map, std::int64_t from_bp,
                                std::int64_t to_bp, std::size_t slice_half_width) {
  RegionReport rep;
  const BayesResult* focal = nullptr;
  for (const auto& r : results) {
    if (r.position_bp < from_bp || r.position_bp > to_bp || !r.ok()) continue;
    rep.track.push_back({r.position_bp, r.log10_bf1, r.log10_bf2});
    if (!focal || r.log10_bf2 > focal->log10_bf2) focal = &r;
  }
  if (!focal) throw InputError("region " + std::to_string(from_bp) + "-" + std::to_string(to_bp) +
                               " has no computed positions");
  rep.focal = *focal;
  rep.focal_position = focal->position_bp;
  const auto tree_it = std::find_if(trees.begin(), trees.end(),
                                    [&](const MarginalTree& t) { return t.focal_position == rep.focal_position; });
  if (tree_it == trees.end()) throw InputError("no stored tree at the focal position");
  rep.tree = *tree_it;
  if (rep.tree.n_tips != panel.n_haplotypes()) throw InputError("tree tip count does not match the panel");
  for (int b : {rep.focal.best_branch, rep.focal.best_pair.first, rep.focal.best_pair.second})
    if (b < 0 || static_cast<std::size_t>(b) >= rep.tree.branches.size())
      throw InputError("scan result references a branch missing from the tree");
  rep.tip_order = plotting_order(rep.tree);

  for (const auto& t : rep.track) rep.map_trace.push_back({t.position, map.genetic_position(t.position)});

  const std::size_t centre = std::min(panel.lower_bound(rep.focal_position), panel.n_sites() - 1);
  const std::size_t lo = centre >= slice_half_width ? centre - slice_half_width : 0;
  const std::size_t hi = std::min(panel.n_sites(), centre + slice_half_width);
  for (std::size_t s = lo; s < hi; ++s) {
    rep.slice_sites.push_back(s);
    rep.slice_positions.push_back(panel.position(s));
  }
  rep.slice_alleles.assign(panel.n_haplotypes(), {});
  for (std::size_t h = 0; h < panel.n_haplotypes(); ++h)
    for (std::size_t s : rep.slice_sites) rep.slice_alleles[h].push_back(panel.allele(h, s));

  const auto& b1 = rep.tree.branches[static_cast<std::size_t>(rep.focal.best_pair.first)];
  const auto& b2 = rep.tree.branches[static_cast<std::size_t>(rep.focal.best_pair.second)];
  const auto classes = named_classes(b1.tips, b1.id, b2.tips, b2.id);
  rep.pair_class_names = classes.names;
  rep.pair_class.assign(panel.n_haplotypes(), -1);
  for (std::size_t c = 0; c < classes.sets.size(); ++c)
    for (std::size_t h : classes.sets[c].members()) rep.pair_class[h] = static_cast<int>(c);
  return rep;
}

std::string region_report_json(const RegionReport& rep) {
  json doc;
  doc["focal_position"] = rep.focal_position;
  const auto& f = rep.focal;
  doc["focal"] = {{"log10_bf1", report_round(f.log10_bf1)},
                  {"log10_bf2", report_round(f.log10_bf2)},
                  {"posterior_2v1", report_round(f.posterior_2v1)},
                  {"best_branch", {{"id", f.best_branch}, {"tips", f.best_branch_tips.to_hex()},
                                   {"table", table_json(f.branch_table)}}},
                  {"best_pair", {{"ids", {f.best_pair.first, f.best_pair.second}},
                                 {"tips", {f.pair_tips_first.to_hex(), f.pair_tips_second.to_hex()}},
                                 {"classes", rep.pair_class_names},
                                 {"table", table_json(f.pair_table)}}}};
  json track = json::array();
  for (const auto& t : rep.track)
    track.push_back({{"position", t.position}, {"log10_bf1", report_round(t.log10_bf1)},
                     {"log10_bf2", report_round(t.log10_bf2)}});
  doc["track"] = std::move(track);
  json trace = json::array();
  for (const auto& m : rep.map_trace) trace.push_back({{"position", m.position}, {"cm", report_round(m.cm)}});
  doc["map_trace"] = std::move(trace);
  json branches = json::array();
  for (const auto& b : rep.tree.branches)
    branches.push_back({{"id", b.id}, {"parent", b.parent}, {"tips", b.tips.to_hex()},
                        {"n_birth", b.n_birth}, {"n_death", b.n_death}});
  doc["tree"] = {{"n_tips", rep.tree.n_tips}, {"newick", to_newick(rep.tree)}, {"branches", std::move(branches)}};
  doc["tip_order"] = rep.tip_order;
  json rows = json::array();
  for (const auto& row : rep.slice_alleles) {
    std::string s;
    for (auto a : row) s.push_back(static_cast<char>('0' + a));
    rows.push_back(std::move(s));
  }
  doc["haplotypes"] = {{"positions", rep.slice_positions}, {"rows", std::move(rows)}, {"pair_class", rep.pair_class}};
  return doc.dump(2);
}

namespace {

constexpr int kWidth = 1000;
constexpr int kMargin = 60;
const char* kClassColours[] = {"#d62728", "#1f77b4", "#bbbbbb", "#2ca02c"};

std::string fmt(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

void text(std::ostringstream& out, double x, double y, const std::string& s, int size = 12,
          const char* anchor = "start") {
  out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
      << "\">" << s << "</text>\n";
}

void table_text(std::ostringstream& out, double x, double y, const std::string& title, const AlleleCountTable& t,
                const std::vector<std::string>& columns) {
  text(out, x, y, title, 13);
  for (std::size_t c = 0; c < columns.size(); ++c) text(out, x + 90.0 + 110.0 * static_cast<double>(c), y + 18.0, columns[c], 11);
  text(out, x, y + 36.0, "controls", 12);
  text(out, x, y + 54.0, "cases", 12);
  for (std::size_t c = 0; c < t.classes(); ++c) {
    const double cx = x + 90.0 + 110.0 * static_cast<double>(c);
    text(out, cx, y + 36.0, num(t.controls[c]), 12);
    text(out, cx, y + 54.0, num(t.cases[c]), 12);
  }
}

}  // namespace

std::string region_report_svg(const RegionReport& rep) {
  std::ostringstream out;
  const int height = 1060;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  const double plot_w = kWidth - 2.0 * kMargin;

  // Panel 1: Bayes factor track and map trace.
  {
    const double top = 30.0, h = 180.0;
    text(out, kMargin, top - 10.0, "log10 Bayes factors (1-mutation blue, 2-mutation red); map in grey", 13);
    const auto x_lo = static_cast<double>(rep.track.front().position);
    const auto x_hi = static_cast<double>(rep.track.back().position);
    auto px = [&](std::int64_t p) {
      return x_hi > x_lo ? kMargin + plot_w * (static_cast<double>(p) - x_lo) / (x_hi - x_lo) : kMargin + plot_w / 2.0;
    };
    double y_max = 1.0;
    for (const auto& t : rep.track) y_max = std::max({y_max, t.log10_bf1, t.log10_bf2});
    double y_min = 0.0;
    for (const auto& t : rep.track) y_min = std::min({y_min, t.log10_bf1, t.log10_bf2});
    auto py = [&](double v) { return top + h - h * (v - y_min) / (y_max - y_min); };
    out << "<rect x=\"" << kMargin << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(plot_w) << "\" height=\"" << fmt(h)
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    const double cm_lo = rep.map_trace.front().cm, cm_hi = rep.map_trace.back().cm;
    auto line = [&](const char* colour, const char* dash, auto value) {
      out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"" << dash << " points=\"";
      for (std::size_t i = 0; i < rep.track.size(); ++i)
        out << (i ? " " : "") << fmt(px(rep.track[i].position)) << ',' << fmt(value(i));
      out << "\"/>\n";
    };
    line("#999999", " stroke-dasharray=\"2,2\"", [&](std::size_t i) {
      return cm_hi > cm_lo ? top + h - h * (rep.map_trace[i].cm - cm_lo) / (cm_hi - cm_lo) : top + h;
    });
    line("#1f77b4", "", [&](std::size_t i) { return py(rep.track[i].log10_bf1); });
    line("#d62728", "", [&](std::size_t i) { return py(rep.track[i].log10_bf2); });
    out << "<line x1=\"" << fmt(px(rep.focal_position)) << "\" x2=\"" << fmt(px(rep.focal_position)) << "\" y1=\""
        << fmt(top) << "\" y2=\"" << fmt(top + h) << "\" stroke=\"black\" stroke-dasharray=\"4,3\"/>\n";
    text(out, kMargin, top + h + 18.0,
         "focal " + std::to_string(rep.focal_position) + "  log10 BF1 " + num(rep.focal.log10_bf1) + "  log10 BF2 " +
             num(rep.focal.log10_bf2) + "  P(2 vs 1) " + num(rep.focal.posterior_2v1),
         12);
  }

  // Panel 2: haplotype matrix, rows in tree order, class strip on the left.
  const std::size_t n = rep.tree.n_tips;
  {
    const double top = 250.0, h = 330.0;
    text(out, kMargin, top - 10.0, "panel haplotypes near the focal position (dark = allele 1)", 13);
    const double row_h = h / static_cast<double>(n);
    const std::size_t cols = rep.slice_sites.size();
    const double col_w = cols ? (plot_w - 20.0) / static_cast<double>(cols) : 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto hap = static_cast<std::size_t>(rep.tip_order[r]);
      const double y = top + row_h * static_cast<double>(r);
      const int cls = rep.pair_class[hap];
      out << "<rect x=\"" << kMargin << "\" y=\"" << fmt(y) << "\" width=\"14\" height=\"" << fmt(row_h)
          << "\" fill=\"" << kClassColours[std::clamp(cls, 0, 3)] << "\"/>\n";
      for (std::size_t c = 0; c < cols; ++c) {
        if (!rep.slice_alleles[hap][c]) continue;
        out << "<rect x=\"" << fmt(kMargin + 20.0 + col_w * static_cast<double>(c)) << "\" y=\"" << fmt(y)
            << "\" width=\"" << fmt(col_w) << "\" height=\"" << fmt(row_h) << "\" fill=\"#333\"/>\n";
      }
    }
  }

  // Panel 3: tree; tips along x in plotting order, internal nodes by coalescence rank.
  {
    const double top = 620.0, h = 200.0;
    text(out, kMargin, top - 10.0, "marginal tree at the focal position (dotted: best pair, thick: best branch)", 13);
    std::vector<double> x(2 * n - 1, 0.0), y(2 * n - 1, top + h);
    for (std::size_t r = 0; r < n; ++r)
      x[static_cast<std::size_t>(rep.tip_order[r])] = kMargin + plot_w * (static_cast<double>(r) + 0.5) / static_cast<double>(n);
    for (std::size_t node = n; node < 2 * n - 1; ++node) {
      const auto kids = rep.tree.children(static_cast<int>(node));
      x[node] = 0.5 * (x[static_cast<std::size_t>(kids[0])] + x[static_cast<std::size_t>(kids[1])]);
      y[node] = top + h - h * static_cast<double>(node - n + 1) / static_cast<double>(n - 1);
    }
    for (const auto& b : rep.tree.branches) {
      const auto i = static_cast<std::size_t>(b.id);
      const auto p = static_cast<std::size_t>(b.parent);
      const bool in_pair = b.id == rep.focal.best_pair.first || b.id == rep.focal.best_pair.second;
      const bool best = b.id == rep.focal.best_branch;
      const char* colour = in_pair ? kClassColours[b.id == rep.focal.best_pair.first ? 0 : 1] : "#555";
      out << "<path d=\"M" << fmt(x[i]) << ',' << fmt(y[i]) << " V" << fmt(y[p]) << " H" << fmt(x[p])
          << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << (best ? 3 : 1) << "\""
          << (in_pair ? " stroke-dasharray=\"3,2\"" : "") << "/>\n";
    }
  }

  // Panel 4: expected allele-count tables.
  {
    const double top = 870.0;
    table_text(out, kMargin, top, "1-mutation model, branch b" + std::to_string(rep.focal.best_branch),
               rep.focal.branch_table, {"non-carrier", "carrier"});
    table_text(out, kMargin + 460.0, top,
               "2-mutation model, branches b" + std::to_string(rep.focal.best_pair.first) + " and b" +
                   std::to_string(rep.focal.best_pair.second),
               rep.focal.pair_table, rep.pair_class_names);
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<BayesResult> read_scan_json(const std::string& text, std::size_t n_tips) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("scan sidecar is not valid JSON: ") + e.what());
  }
  std::vector<BayesResult> out;
  try {
    for (const auto& row : doc.at("positions")) {
      BayesResult r;
      r.position_bp = row.at("position").get<std::int64_t>();
      if (row.contains("error")) {
        r.error = row.at("error").get<std::string>();
        r.log10_bf1 = r.log10_bf2 = r.posterior_2v1 = std::nan("");
        out.push_back(std::move(r));
        continue;
      }
      r.log10_bf1 = row.at("log10_bf1").get<double>();
      r.log10_bf2 = row.at("log10_bf2").get<double>();
      r.posterior_2v1 = row.at("posterior_2v1").get<double>();
      const auto& bb = row.at("best_branch");
      r.best_branch = bb.at("id").get<int>();
      r.best_branch_tips = TipSet::from_hex(bb.at("tips").get<std::string>(), n_tips);
      r.branch_table = table_from_json(bb.at("table"));
      const auto& bp = row.at("best_pair");
      r.best_pair = {bp.at("ids").at(0).get<int>(), bp.at("ids").at(1).get<int>()};
      r.pair_tips_first = TipSet::from_hex(bp.at("tips").at(0).get<std::string>(), n_tips);
      r.pair_tips_second = TipSet::from_hex(bp.at("tips").at(1).get<std::string>(), n_tips);
      r.pair_table = table_from_json(bp.at("table"));
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("scan sidecar is malformed: ") + e.what());
  }
  return out;
}

}  // namespace clademap
