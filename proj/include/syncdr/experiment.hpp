#pragma once

// Experiment orchestration: per-seed data preparation, training and
// evaluation, aggregation over seeds, sweeps and the PPP ablation, plus the
// result files each command writes.

#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "syncdr/benchmark.hpp"
#include "syncdr/config.hpp"
#include "syncdr/metrics.hpp"
#include "syncdr/trainer.hpp"

namespace syncdr {

/// Concrete seeds for one seed index of an experiment.
struct SeedPlan {
  std::uint64_t seed = 0;
  BenchmarkConfig benchmark;
  SplitSpec split;
  TranslationConfig translation;
  EncoderConfig encoder;
  TrainConfig train;
};

SeedPlan derive_seed_plan(const ExperimentConfig& cfg, std::uint64_t seed);

bool method_uses_synthetic(Method m);
LossWeights method_loss_weights(const ExperimentConfig& cfg);

struct PreparedData {
  Dataset dataset;
  DataSplit split;
  std::vector<DomainSample> syn_a;  ///< translations of split.train_b into A
  std::vector<DomainSample> syn_b;  ///< translations of split.train_a into B
  /// Real train-part samples of every class, the class-mean references of
  /// the synthetic-data analysis.
  std::vector<DomainSample> reference_a, reference_b;
};

/// Generates the benchmark, the split (with the category sets exchanged when
/// `swapped`) and, when `with_synthetic`, both synthetic sets.
PreparedData prepare_data(const SeedPlan& plan, bool swapped, bool with_synthetic);

struct SingleRun {
  bool swapped = false;
  TrainResult train;
  std::vector<PrecisionAtK> test;
  std::optional<SyntheticAnalysis> analysis;
};

SingleRun run_single(const ExperimentConfig& cfg, const SeedPlan& plan, bool swapped);

/// Ordered metric columns of a result row.
const std::vector<std::string>& metric_columns();

struct MetricsRow {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<std::optional<double>> values;  ///< aligned with metric_columns()

  std::optional<double> get(const std::string& column) const;
};

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string error;
};

struct ExperimentResult {
  std::string scenario;
  std::string method;
  std::vector<MetricsRow> rows;  ///< one per successful seed, in seed order
  std::vector<std::vector<SingleRun>> runs;  ///< aligned with rows
  std::vector<SeedFailure> failures;
  std::exception_ptr first_error;

  bool all_failed() const { return rows.empty() && !failures.empty(); }
  bool partial() const { return !rows.empty() && !failures.empty(); }
  MeanStd aggregate(const std::string& column) const;
};

MetricsRow make_row(const ExperimentConfig& cfg, std::uint64_t seed, const std::vector<SingleRun>& runs);

/// Trains and evaluates every seed; per-seed errors are recorded rather than
/// thrown.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes config.txt, metrics.json, metrics.csv, report.txt, report.csv and a
/// seed_<s>/<ab|ba>/ directory with history.csv and checkpoint.bin per
/// training run.
void write_experiment(const std::string& dir, const ExperimentConfig& cfg, const ExperimentResult& result);

// ---------------------------------------------------------------------------
// Sweeps and ablations

/// Sets a sweepable parameter (p_keep, edit_strength, overlap_frac,
/// lambda_cdm, tau_ppp) on a copy of `base`.
ExperimentConfig with_sweep_value(const ExperimentConfig& base, const std::string& param, double value);

/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SweepCell {
  double value = 0.0;
  ExperimentConfig config;
  ExperimentResult result;
};

struct SweepResult {
  std::string param;
  std::vector<SweepCell> cells;
  double spearman_prec1 = 0.0;

  bool any_partial() const;
};

SweepResult run_sweep(const ExperimentConfig& base);
void write_sweep(const std::string& dir, const SweepResult& sweep);

struct AblationPair {
  std::uint64_t seed = 0;
  double with_ppp = 0.0;
  double without_ppp = 0.0;
  double delta = 0.0;
};

struct AblationResult {
  ExperimentConfig with_config, without_config;
  ExperimentResult with_ppp, without_ppp;
  std::vector<AblationPair> pairs;
  MeanStd delta;
};

AblationResult run_ablation(const ExperimentConfig& cfg);
void write_ablation(const std::string& dir, const AblationResult& ablation);

// ---------------------------------------------------------------------------
// Data export and feature dumps

void generate_data(const std::string& dir, const ExperimentConfig& cfg, bool with_oracle);

/// Encodes the test sets of the first seed and writes features.jsonl.
void dump_features(const std::string& path, const ExperimentConfig& cfg, const EncoderParams& params);

// ---------------------------------------------------------------------------
// Result files and reports

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// Methods × scenarios tables of "mean ± std" Prec@K cells with a trailing
/// Average column (mean of scenario means ± pooled std).
std::string render_report_text(const std::vector<MetricsRow>& rows);
std::string render_report_csv(const std::vector<MetricsRow>& rows);

/// Every metrics.csv below `dir`, in sorted path order.
std::vector<std::string> find_metrics_files(const std::string& dir);

void write_text_file(const std::string& path, const std::string& contents);

// ---------------------------------------------------------------------------
// Process exit codes of the command-line front end

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kUnexpected = 1;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kDivergence = 4;
inline constexpr int kPartialSeeds = 5;
inline constexpr int kEmptyReport = 6;
}  // namespace exit_code

/// Maps an error raised by any module to its exit code; null maps to success.
int exit_code_for(const std::exception_ptr& error);

}  // namespace syncdr
