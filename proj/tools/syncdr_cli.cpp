// Command-line front end: dataset export, training runs, sweeps, the PPP
// ablation, distillation, reports and feature dumps.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "syncdr/config.hpp"
#include "syncdr/encoder.hpp"
#include "syncdr/errors.hpp"
#include "syncdr/experiment.hpp"

namespace fs = std::filesystem;
using namespace syncdr;

namespace {

struct CommonOptions {
  std::string config_path;
  int seeds = 0;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts, const std::string& default_out) {
  cmd->add_option("--config", opts.config_path, "Experiment config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seeds", opts.seeds, "Use seeds 0..N-1 instead of experiment.seeds")->check(CLI::PositiveNumber);
  cmd->add_option("--out", opts.out, "Output directory")->default_val(default_out);
  cmd->add_option("--set", opts.overrides, "Extra 'key=value' setting applied after the config file");
}

ExperimentConfig load(const CommonOptions& opts) {
  ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seeds > 0) {
    cfg.seeds.clear();
    for (int s = 0; s < opts.seeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  cfg.validate();
  return cfg;
}

void print_failures(const ExperimentResult& r) {
  for (const SeedFailure& f : r.failures) {
    std::cerr << "seed " << f.seed << " failed: " << f.error << '\n';
  }
}

int finish_experiment(const ExperimentResult& r) {
  print_failures(r);
  if (r.all_failed()) return exit_code_for(r.first_error);
  return r.partial() ? exit_code::kPartialSeeds : exit_code::kSuccess;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult r = run_experiment(cfg);
  if (!r.all_failed()) {
    write_experiment(out, cfg, r);
    std::cout << render_report_text(r.rows);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "%s: %zu seed(s) ok, %zu failed, %.1f s -> %s\n", method_name(cfg.method), r.rows.size(),
               r.failures.size(), secs, out.c_str());
  return finish_experiment(r);
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out) {
  const SweepResult sweep = run_sweep(cfg);
  write_sweep(out, sweep);
  for (const SweepCell& c : sweep.cells) {
    print_failures(c.result);
    const MeanStd p1 = c.result.aggregate("prec1");
    std::printf("%s  prec1 %.4f ± %.4f\n", c.config.name.c_str(), p1.mean, p1.std);
  }
  std::printf("spearman(%s, prec1) = %.4f\n", sweep.param.c_str(), sweep.spearman_prec1);
  return sweep.any_partial() ? exit_code::kPartialSeeds : exit_code::kSuccess;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& out) {
  const AblationResult ab = run_ablation(cfg);
  write_ablation(out, ab);
  print_failures(ab.with_ppp);
  print_failures(ab.without_ppp);
  for (const AblationPair& p : ab.pairs) {
    std::printf("seed %llu  syncdr %.4f  syncdr-no-ppp %.4f  delta %+.4f\n", static_cast<unsigned long long>(p.seed),
                p.with_ppp, p.without_ppp, p.delta);
  }
  std::printf("mean delta %+.4f ± %.4f\n", ab.delta.mean, ab.delta.std);
  const bool partial = !ab.with_ppp.failures.empty() || !ab.without_ppp.failures.empty();
  return partial ? exit_code::kPartialSeeds : exit_code::kSuccess;
}

int cmd_report(const std::string& dir, const std::string& out) {
  std::vector<MetricsRow> rows;
  for (const std::string& f : find_metrics_files(dir)) {
    const auto part = read_metrics_csv(f);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) {
    std::cerr << "report: no results found under " << dir << '\n';
    return exit_code::kEmptyReport;
  }
  const std::string text = render_report_text(rows);
  std::cout << text;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file((fs::path(out) / "report.txt").string(), text);
    write_text_file((fs::path(out) / "report.csv").string(), render_report_csv(rows));
  }
  return exit_code::kSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale cross-domain retrieval lab with synthetic translations"};
  app.require_subcommand(1);

  CommonOptions gen_opts, run_opts, sweep_opts, ablate_opts, distill_opts, dump_opts;
  bool with_oracle = false;
  std::string method;
  std::string sweep_param, sweep_values;
  std::string report_dir, report_out;
  std::string checkpoint;

  auto* gen = app.add_subcommand("gen-data", "Generate and export the benchmark and synthetic sets");
  add_common(gen, gen_opts, "data");
  gen->add_flag("--with-oracle", with_oracle, "Include hidden latents in the export");

  auto* run = app.add_subcommand("run", "Train and evaluate one method over all seeds");
  add_common(run, run_opts, "results/run");
  run->add_option("--method", method, "Override experiment.method");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a swept parameter");
  add_common(sweep, sweep_opts, "results/sweep");
  sweep->add_option("--method", method, "Override experiment.method");
  sweep->add_option("--param", sweep_param, "Override sweep.param");
  sweep->add_option("--values", sweep_values, "Override sweep.values (comma separated)");

  auto* ablate = app.add_subcommand("ablate-ppp", "Paired comparison of syncdr with and without PPP");
  add_common(ablate, ablate_opts, "results/ablate-ppp");

  auto* distill = app.add_subcommand("distill", "Train by similarity distillation from the semantic oracle");
  add_common(distill, distill_opts, "results/distill");

  auto* report = app.add_subcommand("report", "Render tables from every metrics.csv under a directory");
  report->add_option("dir", report_dir, "Results directory")->required();
  report->add_option("--out", report_out, "Also write report.txt and report.csv here");

  auto* dump = app.add_subcommand("dump-features", "Write encoded test features as JSON lines");
  add_common(dump, dump_opts, "results/features");
  dump->add_option("--checkpoint", checkpoint, "Encoder checkpoint (default: <out>/seed_<s>/ab/checkpoint.bin)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::kSuccess : exit_code::kConfig;
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = load(gen_opts);
      generate_data(gen_opts.out, cfg, with_oracle);
      std::cerr << "wrote " << gen_opts.out << '\n';
      return exit_code::kSuccess;
    }
    if (*run) {
      if (!method.empty()) run_opts.overrides.push_back("experiment.method=" + method);
      return cmd_run(load(run_opts), run_opts.out);
    }
    if (*sweep) {
      if (!method.empty()) sweep_opts.overrides.push_back("experiment.method=" + method);
      if (!sweep_param.empty()) sweep_opts.overrides.push_back("sweep.param=" + sweep_param);
      if (!sweep_values.empty()) sweep_opts.overrides.push_back("sweep.values=" + sweep_values);
      return cmd_sweep(load(sweep_opts), sweep_opts.out);
    }
    if (*ablate) return cmd_ablate(load(ablate_opts), ablate_opts.out);
    if (*distill) {
      distill_opts.overrides.push_back("experiment.method=distill");
      return cmd_run(load(distill_opts), distill_opts.out);
    }
    if (*report) return cmd_report(report_dir, report_out);
    if (*dump) {
      const ExperimentConfig cfg = load(dump_opts);
      if (checkpoint.empty()) {
        checkpoint = (fs::path(dump_opts.out) / ("seed_" + std::to_string(cfg.seeds.front())) / "ab" /
                      "checkpoint.bin")
                         .string();
      }
      const std::string path = (fs::path(dump_opts.out) / "features.jsonl").string();
      dump_features(path, cfg, load_checkpoint(checkpoint));
      std::cerr << "wrote " << path << '\n';
      return exit_code::kSuccess;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(std::current_exception());
  }
  return exit_code::kUnexpected;
}
