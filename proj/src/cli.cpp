#include "clademap/cli.hpp"

#include "clademap/assoc_bayes.hpp"
#include "clademap/cluster_hmm.hpp"
#include "clademap/effect_size.hpp"
#include "clademap/errors.hpp"
#include "clademap/hapgen_sim.hpp"
#include "clademap/parallel.hpp"
#include "clademap/report.hpp"
#include "clademap/treesim.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

namespace clademap::cli {

namespace fs = std::filesystem;

namespace {

struct Inputs {
  std::string legend, haps, map, gen, sample;
  bool drop_unmatched = false;
};

struct GridArgs {
  std::optional<std::int64_t> start, end;
  std::int64_t spacing = 5000;
};

struct ModelArgs {
  std::optional<double> theta, rho_scale, mismatch_rate, switch_scale;
  std::size_t window = 200;
  unsigned threads = 1;
};

void add_panel(CLI::App* app, Inputs& in) {
  app->add_option("--legend", in.legend, "Panel legend file")->required();
  app->add_option("--haps", in.haps, "Panel haplotype file")->required();
  app->add_option("--map", in.map, "Recombination map file")->required();
}

void add_study(CLI::App* app, Inputs& in) {
  app->add_option("--gen", in.gen, "Study genotype file")->required();
  app->add_option("--sample", in.sample, "Study sample file")->required();
  app->add_flag("--drop-unmatched", in.drop_unmatched, "Skip study SNPs absent from the panel");
}

void add_grid(CLI::App* app, GridArgs& g) {
  app->add_option("--region-start", g.start, "First grid position (default: first panel site)");
  app->add_option("--region-end", g.end, "Last grid position (default: last panel site)");
  app->add_option("--grid-spacing", g.spacing, "Grid spacing in bp")->check(CLI::PositiveNumber);
}

void add_model(CLI::App* app, ModelArgs& m) {
  app->add_option("--theta", m.theta, "Per-site mutation rate for tree building");
  app->add_option("--rho-scale", m.rho_scale, "Population-scaled recombination per Morgan for tree building");
  app->add_option("--mismatch-rate", m.mismatch_rate, "Copying error for the diploid HMM");
  app->add_option("--switch-scale", m.switch_scale, "Population-scaled recombination per Morgan for the HMM");
  app->add_option("--window", m.window, "Panel sites on each side of a position")->check(CLI::PositiveNumber);
  app->add_option("--threads", m.threads, "Worker threads")->check(CLI::PositiveNumber);
}

void add_prior(CLI::App* app, PriorSpec& p) {
  app->add_option("--a", p.a, "Beta prior shape a");
  app->add_option("--c", p.c, "Beta prior shape c");
  app->add_option("--prior-odds", p.prior_odds_2v1, "Prior odds of 2 vs 1 mutations");
  app->add_option("--effect-prior-sd", p.effect_prior_sd, "Prior sd of the per-allele log odds ratio");
}

ScanParams scan_params(const HaplotypePanel& panel, const ModelArgs& m) {
  ScanParams p = default_scan_params(panel);
  if (m.theta) p.treesim.theta = *m.theta;
  if (m.rho_scale) p.treesim.rho_scale = *m.rho_scale;
  if (m.mismatch_rate) p.hmm.mismatch_rate = *m.mismatch_rate;
  if (m.switch_scale) p.hmm.switch_scale = *m.switch_scale;
  p.treesim.window_sites = p.hmm.window_sites = m.window;
  p.threads = m.threads;
  p.treesim.validate();
  p.hmm.validate();
  return p;
}

std::vector<std::int64_t> grid_positions(const HaplotypePanel& panel, const GridArgs& g) {
  const std::int64_t start = g.start.value_or(panel.position(0));
  const std::int64_t end = g.end.value_or(panel.position(panel.n_sites() - 1));
  if (end < start) return {};
  return make_grid(start, end, g.spacing).positions_bp;
}

HaplotypePanel load_panel_inputs(const Inputs& in) { return load_panel(in.legend, in.haps); }

GenotypeStudy load_study(const Inputs& in, const HaplotypePanel& panel, std::ostream& err) {
  LoadOptions opt;
  opt.drop_unmatched = in.drop_unmatched;
  LoadReport report;
  auto study = load_genotypes(in.gen, in.sample, panel, opt, &report);
  for (const auto& w : report.warnings) err << "note: " << w << '\n';
  return study;
}

// Writes through a temporary file so readers never see a partial output.
void write_atomically(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
    if (!out) throw InputError("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const MarginalTree& tree_at(const std::vector<MarginalTree>& trees, std::int64_t position) {
  for (const auto& t : trees)
    if (t.focal_position == position) return t;
  throw InputError("no stored tree at position " + std::to_string(position));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-mapping association scans over inferred genealogies"};
  app.set_config("--config", "", "Key-value file providing any of the options");
  app.require_subcommand(1);

  Inputs in;
  GridArgs grid;
  ModelArgs model;
  PriorSpec prior;
  std::string out_path;

  auto* scan_cmd = app.add_subcommand("scan", "Bayes factor scan over a region");
  add_panel(scan_cmd, in);
  add_study(scan_cmd, in);
  add_grid(scan_cmd, grid);
  add_model(scan_cmd, model);
  add_prior(scan_cmd, prior);
  double threshold = 4.0;
  std::string trees_in;
  scan_cmd->add_option("--out", out_path, "Output prefix (.tsv, .json, .trees)")->required();
  scan_cmd->add_option("--threshold", threshold, "log10 Bayes factor reported as a hit");
  scan_cmd->add_option("--trees", trees_in, "Reuse a tree store instead of building trees");

  auto* trees_cmd = app.add_subcommand("build-trees", "Build marginal trees on a grid");
  add_panel(trees_cmd, in);
  add_grid(trees_cmd, grid);
  add_model(trees_cmd, model);
  trees_cmd->add_option("--out", out_path, "Tree store path")->required();
  bool newick = false;
  trees_cmd->add_flag("--newick", newick, "Also print trees in Newick form");

  auto* report_cmd = app.add_subcommand("region-report", "JSON and SVG summary of a scanned region");
  add_panel(report_cmd, in);
  std::string scan_prefix;
  std::int64_t from = std::numeric_limits<std::int64_t>::min(), to = std::numeric_limits<std::int64_t>::max();
  report_cmd->add_option("--scan", scan_prefix, "Prefix of a completed scan")->required();
  report_cmd->add_option("--from", from, "Region start");
  report_cmd->add_option("--to", to, "Region end");
  report_cmd->add_option("--out", out_path, "Output prefix (.json, .svg)")->required();

  auto* sim_cmd = app.add_subcommand("simulate", "Simulate case-control datasets from a panel");
  add_panel(sim_cmd, in);
  std::string sim_model = "A";
  double rra = 1.0, rrb = 1.0, baseline = 0.05, typed_density = 0.33;
  std::size_t replicates = 1, n_cases = 500, n_controls = 500, max_draws = 20'000'000;
  std::uint64_t seed = 1;
  std::string out_dir;
  sim_cmd->add_option("--model", sim_model, "A (rare + common) or B (two common)")->check(CLI::IsMember({"A", "B"}));
  sim_cmd->add_option("--rra", rra, "Relative risk at the first causal site");
  sim_cmd->add_option("--rrb", rrb, "Relative risk at the second causal site");
  sim_cmd->add_option("--baseline-risk", baseline, "Disease probability with no risk alleles");
  sim_cmd->add_option("--replicates", replicates, "Number of datasets");
  sim_cmd->add_option("--cases", n_cases, "Cases per dataset");
  sim_cmd->add_option("--controls", n_controls, "Controls per dataset");
  sim_cmd->add_option("--typed-density", typed_density, "Typed SNPs per kb");
  sim_cmd->add_option("--max-draws", max_draws, "Draw budget per dataset");
  sim_cmd->add_option("--seed", seed, "Base seed");
  sim_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* export_cmd = app.add_subcommand("export-branch-genotypes", "Genotype probabilities for branch SNPs");
  add_panel(export_cmd, in);
  add_study(export_cmd, in);
  add_model(export_cmd, model);
  std::int64_t position = 0;
  std::vector<int> branch_ids;
  export_cmd->add_option("--trees", trees_in, "Tree store")->required();
  export_cmd->add_option("--position", position, "Grid position")->required();
  export_cmd->add_option("--branches", branch_ids, "Branch ids (default: all)");
  export_cmd->add_option("--out", out_path, "Output file")->required();

  auto* effect_cmd = app.add_subcommand("effect-size", "Branch-averaged effect size at a position");
  add_panel(effect_cmd, in);
  add_study(effect_cmd, in);
  add_model(effect_cmd, model);
  add_prior(effect_cmd, prior);
  effect_cmd->add_option("--trees", trees_in, "Tree store")->required();
  effect_cmd->add_option("--position", position, "Grid position")->required();
  effect_cmd->add_option("--out", out_path, "Output file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  try {
    prior.validate();
    if (scan_cmd->parsed()) {
      const auto panel = load_panel_inputs(in);
      const auto map = load_map(in.map);
      const auto study = load_study(in, panel, err);
      const auto params = scan_params(panel, model);
      std::vector<MarginalTree> trees;
      std::vector<BayesResult> results;
      if (!trees_in.empty()) {
        trees = load_tree_store(trees_in);
        results = scan_with_trees(panel, map, study, trees, prior, params);
      } else {
        results = scan(panel, map, study, grid_positions(panel, grid), prior, params, &trees);
      }
      std::ostringstream tsv;
      write_scan_tsv(results, tsv);
      std::ostringstream store;
      write_tree_store(trees, store);
      write_atomically(out_path + ".tsv", tsv.str());
      write_atomically(out_path + ".json", scan_json(results, prior));
      write_atomically(out_path + ".trees", store.str());
      std::size_t hits = 0, failures = 0;
      for (const auto& r : results) {
        if (!r.ok()) {
          ++failures;
          err << "position " << r.position_bp << " failed: " << r.error << '\n';
        } else if (std::max(r.log10_bf1, r.log10_bf2) > threshold) {
          ++hits;
        }
      }
      out << results.size() << " positions, " << hits << " above log10 BF " << format_double(threshold) << ", "
          << failures << " failed\n";
      return kSuccess;
    }
    if (trees_cmd->parsed()) {
      const auto panel = load_panel_inputs(in);
      const auto map = load_map(in.map);
      const auto params = scan_params(panel, model);
      const auto trees = build_trees(panel, map, grid_positions(panel, grid), params.treesim, params.threads);
      std::ostringstream store;
      write_tree_store(trees, store);
      write_atomically(out_path, store.str());
      if (newick)
        for (const auto& t : trees) out << t.focal_position << '\t' << to_newick(t) << '\n';
      return kSuccess;
    }
    if (report_cmd->parsed()) {
      const auto panel = load_panel_inputs(in);
      const auto map = load_map(in.map);
      const auto results = read_scan_json(read_file(scan_prefix + ".json"), panel.n_haplotypes());
      const auto trees = load_tree_store(scan_prefix + ".trees");
      const auto report = make_region_report(results, trees, panel, map, from, to);
      write_atomically(out_path + ".json", region_report_json(report));
      write_atomically(out_path + ".svg", region_report_svg(report));
      out << "focal position " << report.focal_position << '\n';
      return kSuccess;
    }
    if (sim_cmd->parsed()) {
      const auto panel = load_panel_inputs(in);
      const auto map = load_map(in.map);
      const auto pairs = select_causal_pairs(panel, sim_model == "A" ? PairModel::A : PairModel::B);
      if (pairs.empty()) throw InputError("no causal pairs in the panel satisfy model " + sim_model);
      ThinSpec thin;
      thin.density_per_kb = typed_density;
      thin.seed = seed;
      const auto typed = thin_panel(panel, thin);
      std::vector<ReplicateRecord> records;
      for (std::size_t r = 0; r < replicates; ++r) {
        const std::uint64_t rep_seed = replicate_seed(seed, r);
        SimRng pick(rep_seed);
        const auto [site_a, site_b] = pairs[pick.below(pairs.size())];
        DiseaseModel dm{{site_a, site_b}, {rra, rrb}, baseline};
        SimConfig cfg;
        cfg.n_cases = n_cases;
        cfg.n_controls = n_controls;
        cfg.seed = pick.next();
        cfg.typed_mask = typed.sites;
        cfg.max_draws = max_draws;
        cfg.mosaic = MosaicParams::defaults(panel.n_haplotypes());
        const auto sim = simulate_case_control(panel, map, dm, cfg);
        const std::string stem = "rep" + std::to_string(r + 1);
        std::ostringstream gen, sample;
        write_genotypes(sim.study, gen, sample);
        write_atomically(fs::path(out_dir) / (stem + ".gen"), gen.str());
        write_atomically(fs::path(out_dir) / (stem + ".sample"), sample.str());
        records.push_back({r, rep_seed, {panel.position(site_a), panel.position(site_b)}, {rra, rrb}, n_cases,
                           n_controls, sim.draws, stem + ".gen", stem + ".sample"});
      }
      write_atomically(fs::path(out_dir) / "manifest.json", manifest_json(sim_model, seed, records));
      out << replicates << " datasets written to " << out_dir << '\n';
      return kSuccess;
    }
    if (export_cmd->parsed() || effect_cmd->parsed()) {
      const auto panel = load_panel_inputs(in);
      const auto map = load_map(in.map);
      const auto study = load_study(in, panel, err);
      const auto params = scan_params(panel, model);
      const auto trees = load_tree_store(trees_in);
      const auto& tree = tree_at(trees, position);
      std::ostringstream body;
      if (export_cmd->parsed()) {
        if (branch_ids.empty())
          for (const auto& b : tree.branches) branch_ids.push_back(b.id);
        for (int b : branch_ids)
          if (b < 0 || static_cast<std::size_t>(b) >= tree.branches.size())
            throw InputError("branch " + std::to_string(b) + " is not in the tree");
        const std::size_t m = study.n_individuals();
        std::vector<PairPosterior> posts(m);
        parallel_for(m, params.threads, [&](std::size_t i) {
          copying_posterior(panel, map, study, i, position, params.hmm, &posts[i]);
        });
        for (int b : branch_ids) {
          std::vector<GenotypeProbabilities> probs(m);
          for (std::size_t i = 0; i < m; ++i)
            probs[i] = branch_genotype_probabilities(posts[i], tree.branches[static_cast<std::size_t>(b)].tips);
          write_branch_genotype_row(body, "branch" + std::to_string(b), position, probs);
        }
      } else {
        const std::int64_t pos[1] = {position};
        const auto dosages = study_copy_dosages(panel, map, study, pos, params.hmm, params.threads)[0];
        const auto sums = sum_dosages(dosages, study.phenotypes());
        const auto one = bf_position_1mut(tree, sums, prior);
        std::vector<std::vector<double>> q(dosages.size());
        for (std::size_t i = 0; i < dosages.size(); ++i) q[i] = dosages[i].q;
        std::vector<int> failed;
        const auto post =
            position_effect(tree, q, study.phenotypes(), one.branch_log_bf, prior.effect_prior_sd, params.threads, &failed);
        if (!failed.empty()) err << "note: " << failed.size() << " branches could not be fitted\n";
        write_effect_report(body, position, post);
        out << "beta_star " << format_double(post.beta_star) << " odds ratio " << format_double(post.odds_ratio())
            << '\n';
      }
      write_atomically(out_path, body.str());
      return kSuccess;
    }
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace clademap::cli
