#include "doctest.h"

#include "clademap/cli.hpp"
#include "clademap/hapgen_sim.hpp"
#include "clademap/report.hpp"
#include "coalescent_sim.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

using namespace clademap;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Panel, map and a simulated study written once for every test case.
struct Fixture {
  fs::path dir;
  std::int64_t start = 0;
  std::int64_t end = 0;

  Fixture() {
    dir = fs::temp_directory_path() / "clademap_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    testkit::CoalescentSpec spec;
    spec.n_haplotypes = 16;
    spec.length_bp = 30'000;
    spec.seed = 4;
    const auto sim = testkit::simulate_coalescent_panel(spec);
    save_panel(sim.panel, dir / "p.legend", dir / "p.haps");
    std::ofstream(dir / "p.map") << [&] {
      std::ostringstream m;
      write_map(sim.map, m);
      return m.str();
    }();
    std::vector<std::size_t> typed;
    for (std::size_t s = 0; s < sim.panel.n_sites(); s += 3) typed.push_back(s);
    SimConfig cfg;
    cfg.n_cases = 30;
    cfg.n_controls = 30;
    cfg.seed = 2;
    cfg.typed_mask = typed;
    cfg.mosaic = MosaicParams::defaults(16);
    const auto study = simulate_case_control(sim.panel, sim.map, {{typed[1] + 1}, {2.0}, 0.1}, cfg);
    save_genotypes(study.study, dir / "s.gen", dir / "s.sample");
    start = spec.start_bp + 5'000;
    end = spec.start_bp + 25'000;
  }

  std::vector<std::string> inputs() const {
    return {"--legend", (dir / "p.legend").string(), "--haps", (dir / "p.haps").string(), "--map",
            (dir / "p.map").string()};
  }
  std::vector<std::string> study() const {
    return {"--gen", (dir / "s.gen").string(), "--sample", (dir / "s.sample").string()};
  }
  std::vector<std::string> scan_args(const std::string& prefix) const {
    std::vector<std::string> a{"scan"};
    for (const auto& v : inputs()) a.push_back(v);
    for (const auto& v : study()) a.push_back(v);
    for (const auto& v : {"--region-start", "", "--region-end", "", "--grid-spacing", "5000", "--window", "12",
                          "--out", ""})
      a.push_back(v);
    a[a.size() - 9] = std::to_string(start);
    a[a.size() - 7] = std::to_string(end);
    a.back() = (dir / prefix).string();
    return a;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void collect_numbers(const nlohmann::json& j, std::set<std::string>& out) {
  if (j.is_number()) {
    out.insert(format_double(report_round(j.get<double>())));
  } else if (j.is_structured()) {
    for (const auto& v : j) collect_numbers(v, out);
  }
}

}  // namespace

TEST_CASE("help and parse errors") {
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"scan", "--bogus"}).code == 1);
  CHECK(invoke({"frobnicate"}).code == 1);
}

TEST_CASE("missing input files are input errors") {
  const auto r = invoke({"scan", "--legend", "/nonexistent/a", "--haps", "/nonexistent/b", "--map", "/nonexistent/c",
                      "--gen", "x", "--sample", "y", "--out", "/tmp/never"});
  CHECK(r.code == 1);
  CHECK(r.err.find("input error") != std::string::npos);
}

TEST_CASE("empty grid gives a header-only table") {
  const auto& f = fixture();
  auto args = f.scan_args("empty");
  args[args.size() - 9] = std::to_string(f.end);
  args[args.size() - 7] = std::to_string(f.start);
  const auto r = invoke(args);
  CHECK(r.code == 0);
  CHECK(slurp(f.dir / "empty.tsv") == "position\tlog10_bf1\tlog10_bf2\tposterior_2v1\tbest_branch\tbest_pair\n");
}

TEST_CASE("scan, report and their consistency") {
  const auto& f = fixture();
  const auto r = invoke(f.scan_args("run1"));
  REQUIRE(r.code == 0);
  CHECK(invoke(f.scan_args("run2")).code == 0);
  CHECK(slurp(f.dir / "run1.tsv") == slurp(f.dir / "run2.tsv"));
  CHECK(slurp(f.dir / "run1.json") == slurp(f.dir / "run2.json"));

  // Rows sorted by position, one per grid point.
  std::istringstream tsv(slurp(f.dir / "run1.tsv"));
  std::string line;
  std::getline(tsv, line);
  std::int64_t previous = -1;
  int rows = 0;
  while (std::getline(tsv, line)) {
    const auto pos = std::stoll(line.substr(0, line.find('\t')));
    CHECK(pos > previous);
    previous = pos;
    ++rows;
  }
  CHECK(rows == 5);

  // Sidecar branch ids exist in the stored trees.
  const auto trees = load_tree_store(f.dir / "run1.trees");
  const auto results = read_scan_json(slurp(f.dir / "run1.json"), 16);
  REQUIRE(results.size() == trees.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].position_bp == trees[i].focal_position);
    CHECK(results[i].best_branch < static_cast<int>(trees[i].branches.size()));
    CHECK(results[i].best_pair.second < static_cast<int>(trees[i].branches.size()));
    CHECK(results[i].best_branch_tips == trees[i].branches[static_cast<std::size_t>(results[i].best_branch)].tips);
  }

  std::vector<std::string> rep{"region-report"};
  for (const auto& v : f.inputs()) rep.push_back(v);
  for (const auto& v : {"--scan", "", "--out", ""}) rep.push_back(v);
  rep[rep.size() - 3] = (f.dir / "run1").string();
  rep.back() = (f.dir / "rep1").string();
  REQUIRE(invoke(rep).code == 0);
  rep.back() = (f.dir / "rep2").string();
  REQUIRE(invoke(rep).code == 0);
  const std::string svg = slurp(f.dir / "rep1.svg");
  CHECK(svg == slurp(f.dir / "rep2.svg"));
  CHECK(svg.rfind("<svg", 0) == 0);

  const auto doc = nlohmann::json::parse(slurp(f.dir / "rep1.json"));
  std::set<std::string> numbers;
  collect_numbers(doc, numbers);
  const std::regex text_node(">([^<>]+)<");
  const std::regex number(R"(-?\d+(\.\d+)?(e-?\d+)?)");
  std::size_t checked = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), text_node); it != std::sregex_iterator(); ++it) {
    const std::string text = (*it)[1];
    for (auto n = std::sregex_iterator(text.begin(), text.end(), number); n != std::sregex_iterator(); ++n) {
      INFO("svg number " << (*n)[0] << " in '" << text << "'");
      CHECK(numbers.count((*n)[0]) == 1);
      ++checked;
    }
  }
  CHECK(checked > 10);

  // The focal position is the leftmost maximum of log10 BF2.
  std::int64_t best_pos = 0;
  double best = -1e300;
  for (const auto& res : results)
    if (res.log10_bf2 > best) {
      best = res.log10_bf2;
      best_pos = res.position_bp;
    }
  CHECK(doc["focal_position"].get<std::int64_t>() == best_pos);
}

TEST_CASE("single-position region and empty region") {
  const auto& f = fixture();
  REQUIRE(invoke(f.scan_args("one")).code == 0);
  std::vector<std::string> rep{"region-report"};
  for (const auto& v : f.inputs()) rep.push_back(v);
  const std::string pos = std::to_string(f.start + 5000);
  for (const auto& v : {"--scan", "", "--from", "", "--to", "", "--out", ""}) rep.push_back(v);
  rep[rep.size() - 7] = (f.dir / "one").string();
  rep[rep.size() - 5] = pos;
  rep[rep.size() - 3] = pos;
  rep.back() = (f.dir / "single").string();
  REQUIRE(invoke(rep).code == 0);
  const auto doc = nlohmann::json::parse(slurp(f.dir / "single.json"));
  CHECK(doc["track"].size() == 1);

  rep[rep.size() - 5] = "1";
  rep[rep.size() - 3] = "2";
  CHECK(invoke(rep).code == 1);
}

TEST_CASE("config file supplies options") {
  const auto& f = fixture();
  auto args = f.scan_args("cfg");
  // Drop --window 12 from the command line and put it in the config.
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--window") {
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
  std::ofstream(f.dir / "scan.ini") << "[scan]\nwindow=12\n";
  args.insert(args.begin(), {"--config", (f.dir / "scan.ini").string()});
  REQUIRE(invoke(args).code == 0);
  REQUIRE(invoke(f.scan_args("nocfg")).code == 0);
  CHECK(slurp(f.dir / "cfg.tsv") == slurp(f.dir / "nocfg.tsv"));
}

TEST_CASE("trees, export and effect size commands") {
  const auto& f = fixture();
  std::vector<std::string> bt{"build-trees"};
  for (const auto& v : f.inputs()) bt.push_back(v);
  const std::string pos = std::to_string(f.start);
  for (const auto& v : {"--region-start", "", "--region-end", "", "--window", "12", "--out", "", "--newick"})
    bt.push_back(v);
  bt[bt.size() - 8] = pos;
  bt[bt.size() - 6] = std::to_string(f.start + 1);
  bt[bt.size() - 2] = (f.dir / "t.trees").string();
  const auto r = invoke(bt);
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find(';') != std::string::npos);

  std::vector<std::string> ex{"export-branch-genotypes"};
  for (const auto& v : f.inputs()) ex.push_back(v);
  for (const auto& v : f.study()) ex.push_back(v);
  for (const auto& v : {"--window", "12", "--trees", "", "--position", "", "--branches", "0", "3", "--out", ""})
    ex.push_back(v);
  ex[ex.size() - 8] = (f.dir / "t.trees").string();
  ex[ex.size() - 6] = pos;
  ex.back() = (f.dir / "branches.txt").string();
  REQUIRE(invoke(ex).code == 0);
  std::istringstream rows(slurp(f.dir / "branches.txt"));
  std::string line;
  int n_rows = 0;
  while (std::getline(rows, line)) {
    std::istringstream tok(line);
    std::string id, p, a0, a1;
    tok >> id >> p >> a0 >> a1;
    double t[3];
    int triples = 0;
    while (tok >> t[0] >> t[1] >> t[2]) {
      CHECK(t[0] + t[1] + t[2] == doctest::Approx(1.0).epsilon(1e-9));
      ++triples;
    }
    CHECK(triples == 60);
    ++n_rows;
  }
  CHECK(n_rows == 2);

  ex[ex.size() - 4] = "999";
  CHECK(invoke(ex).code == 1);

  std::vector<std::string> ef{"effect-size"};
  for (const auto& v : f.inputs()) ef.push_back(v);
  for (const auto& v : f.study()) ef.push_back(v);
  for (const auto& v : {"--window", "12", "--trees", "", "--position", "", "--out", ""}) ef.push_back(v);
  ef[ef.size() - 5] = (f.dir / "t.trees").string();
  ef[ef.size() - 3] = pos;
  ef.back() = (f.dir / "effect.tsv").string();
  const auto e = invoke(ef);
  REQUIRE(e.code == 0);
  CHECK(slurp(f.dir / "effect.tsv").find("#beta_star") != std::string::npos);
}

TEST_CASE("simulate command") {
  const auto& f = fixture();
  std::vector<std::string> sim{"simulate"};
  for (const auto& v : f.inputs()) sim.push_back(v);
  for (const auto& v : {"--model", "B", "--rra", "2.5", "--rrb", "1.3", "--replicates", "3", "--cases", "20",
                        "--controls", "20", "--seed", "5", "--out-dir", ""})
    sim.push_back(v);
  sim.back() = (f.dir / "simA").string();
  const auto r = invoke(sim);
  REQUIRE(r.code == 0);
  for (int i = 1; i <= 3; ++i) {
    CHECK(fs::exists(f.dir / "simA" / ("rep" + std::to_string(i) + ".gen")));
    CHECK(fs::exists(f.dir / "simA" / ("rep" + std::to_string(i) + ".sample")));
  }
  sim.back() = (f.dir / "simB").string();
  REQUIRE(invoke(sim).code == 0);
  CHECK(slurp(f.dir / "simA" / "manifest.json") == slurp(f.dir / "simB" / "manifest.json"));
  CHECK(slurp(f.dir / "simA" / "rep2.gen") == slurp(f.dir / "simB" / "rep2.gen"));
  const auto manifest = nlohmann::json::parse(slurp(f.dir / "simA" / "manifest.json"));
  CHECK(manifest["replicates"].size() == 3);

  // A panel with no rare sites has no Model A pairs.
  const std::string dir = (f.dir / "common").string();
  fs::create_directories(dir);
  std::ofstream(dir + "/c.legend") << "id position a0 a1\na 100 A G\nb 200 A G\n";
  std::ofstream(dir + "/c.haps") << "0 1 0 1\n1 1 0 0\n";
  const auto none = invoke({"simulate", "--legend", dir + "/c.legend", "--haps", dir + "/c.haps", "--map",
                         (f.dir / "p.map").string(), "--model", "A", "--out-dir", dir + "/out"});
  CHECK(none.code == 1);
  CHECK(none.err.find("no causal pairs") != std::string::npos);
}
