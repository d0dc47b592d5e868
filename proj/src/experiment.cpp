#include "syncdr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "syncdr/errors.hpp"
#include "syncdr/rng.hpp"

namespace syncdr {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ojson json_value(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

std::string assignment_name(bool swapped) { return swapped ? "ba" : "ab"; }

std::vector<DomainSample> concat(const std::vector<DomainSample>& a, const std::vector<DomainSample>& b) {
  std::vector<DomainSample> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

SeedPlan derive_seed_plan(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedPlan plan;
  plan.seed = seed;
  plan.benchmark = cfg.benchmark;
  plan.benchmark.master_seed = mix_seed(cfg.benchmark.master_seed, seed);
  plan.split = cfg.split;
  plan.split.split_seed = mix_seed(cfg.split.split_seed, seed);
  plan.translation = cfg.translation;
  plan.translation.seed = mix_seed(cfg.translation.seed, seed);
  plan.encoder = cfg.resolved_encoder();
  plan.encoder.init_seed = mix_seed(cfg.encoder.init_seed, seed);
  plan.train = cfg.train;
  plan.train.seed = mix_seed(cfg.train.seed, seed);
  return plan;
}

bool method_uses_synthetic(Method m) { return m == Method::SynCdr || m == Method::SynCdrNoPpp; }

LossWeights method_loss_weights(const ExperimentConfig& cfg) {
  LossWeights w = cfg.loss;
  switch (cfg.method) {
    case Method::InDomainId:
      w.lambda_cdm = 0.0;
      w.use_ppp = false;
      break;
    case Method::Cds:
    case Method::SynCdrNoPpp:
      w.use_ppp = false;
      break;
    default:
      break;
  }
  return w;
}

PreparedData prepare_data(const SeedPlan& plan, bool swapped, bool with_synthetic) {
  PreparedData d;
  d.dataset = generate_benchmark(plan.benchmark);
  SplitSpec spec = plan.split;
  spec.swap_categories = swapped;
  d.split = make_split(d.dataset, spec);
  if (with_synthetic) {
    d.syn_b = generate_synthetic_set(d.dataset, d.split.train_a, Domain::B, plan.translation);
    d.syn_a = generate_synthetic_set(d.dataset, d.split.train_b, Domain::A, plan.translation);
  }
  for (const DomainSample& s : d.dataset.samples) {
    if (d.split.assignment.at(s.instance_id) != SplitPart::Train) continue;
    (s.domain == Domain::A ? d.reference_a : d.reference_b).push_back(s);
  }
  return d;
}

SingleRun run_single(const ExperimentConfig& cfg, const SeedPlan& plan, bool swapped) {
  const bool synthetic = method_uses_synthetic(cfg.method);
  const PreparedData d = prepare_data(plan, swapped, synthetic);

  TrainConfig tc = plan.train;
  if (cfg.method == Method::ImagenetInitOnly) tc.epochs = 0;
  const TrainingData td{d.split.train_a, d.split.train_b, d.syn_a, d.syn_b, d.split.val_a, d.split.val_b};
  const Objective objective = cfg.method == Method::Distill ? Objective::Distill : Objective::SelfSupervised;

  SingleRun run;
  run.swapped = swapped;
  run.train = train(td, plan.encoder, method_loss_weights(cfg), tc, objective);
  run.test = bidirectional_eval(d.split.test_a, d.split.test_b, run.train.best);
  if (synthetic) {
    run.analysis = analyze_synthetic(d.syn_b, d.syn_a, d.split.train_a, d.split.train_b, d.reference_a,
                                     d.reference_b, cfg.analysis_featurizer);
  }
  return run;
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "prec1_a_to_b",  "prec1_b_to_a",  "prec1",        "prec5_a_to_b",      "prec5_b_to_a",
      "prec5",         "prec15_a_to_b", "prec15_b_to_a", "prec15",           "ncm_accuracy",
      "distance_to_source", "similarity_to_real_target",
  };
  return cols;
}

std::optional<double> MetricsRow::get(const std::string& column) const {
  const auto& cols = metric_columns();
  const auto it = std::find(cols.begin(), cols.end(), column);
  if (it == cols.end()) throw ContractViolation("unknown metric column '" + column + "'");
  return values.at(static_cast<std::size_t>(it - cols.begin()));
}

MeanStd ExperimentResult::aggregate(const std::string& column) const {
  std::vector<double> v;
  for (const MetricsRow& r : rows) {
    if (const auto x = r.get(column)) v.push_back(*x);
  }
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  return mean_std(v);
}

MetricsRow make_row(const ExperimentConfig& cfg, std::uint64_t seed, const std::vector<SingleRun>& runs) {
  if (runs.empty()) throw ContractViolation("make_row: no runs");
  MetricsRow row;
  row.scenario = cfg.name;
  row.method = method_name(cfg.method);
  row.seed = seed;
  const double n = static_cast<double>(runs.size());
  for (std::size_t ki = 0; ki < kDefaultKs.size(); ++ki) {
    double ab = 0.0, ba = 0.0, avg = 0.0;
    for (const SingleRun& r : runs) {
      ab += r.test.at(ki).a_to_b;
      ba += r.test.at(ki).b_to_a;
      avg += r.test.at(ki).average;
    }
    row.values.push_back(ab / n);
    row.values.push_back(ba / n);
    row.values.push_back(avg / n);
  }
  if (runs.front().analysis) {
    double dist = 0.0, ncm = 0.0, sim = 0.0;
    for (const SingleRun& r : runs) {
      ncm += r.analysis->ncm_accuracy;
      dist += r.analysis->distance_to_source;
      sim += r.analysis->similarity_to_real_target;
    }
    row.values.push_back(ncm / n);
    row.values.push_back(dist / n);
    row.values.push_back(sim / n);
  } else {
    row.values.insert(row.values.end(), 3, std::nullopt);
  }
  return row;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.scenario = cfg.name;
  result.method = method_name(cfg.method);
  for (const std::uint64_t seed : cfg.seeds) {
    try {
      const SeedPlan plan = derive_seed_plan(cfg, seed);
      std::vector<SingleRun> runs;
      runs.push_back(run_single(cfg, plan, false));
      if (cfg.swap_protocol) runs.push_back(run_single(cfg, plan, true));
      result.rows.push_back(make_row(cfg, seed, runs));
      result.runs.push_back(std::move(runs));
    } catch (const std::exception& e) {
      result.failures.push_back({seed, e.what()});
      if (!result.first_error) result.first_error = std::current_exception();
    }
  }
  return result;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << contents;
  if (!out) throw DataError("write failed: " + path);
}

namespace {

ojson experiment_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  ojson j;
  j["scenario"] = result.scenario;
  j["method"] = result.method;
  j["seeds"] = cfg.seeds;
  j["swap_protocol"] = cfg.swap_protocol;
  ojson per_seed = ojson::array();
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const MetricsRow& row = result.rows[i];
    ojson s;
    s["seed"] = row.seed;
    ojson metrics = ojson::object();
    for (std::size_t c = 0; c < metric_columns().size(); ++c) metrics[metric_columns()[c]] = json_value(row.values[c]);
    s["metrics"] = metrics;
    ojson runs = ojson::array();
    for (const SingleRun& r : result.runs[i]) {
      runs.push_back({{"assignment", assignment_name(r.swapped)},
                      {"best_epoch", r.train.best_epoch},
                      {"best_val_prec1", r.train.best_val_prec1},
                      {"initial_val_prec1", r.train.initial_val_prec1}});
    }
    s["runs"] = runs;
    per_seed.push_back(s);
  }
  j["per_seed"] = per_seed;
  ojson agg = ojson::object();
  for (const std::string& col : metric_columns()) {
    const MeanStd ms = result.aggregate(col);
    agg[col] = {{"mean", json_value(ms.mean)}, {"std", json_value(ms.std)}};
  }
  j["aggregate"] = agg;
  ojson failures = ojson::array();
  for (const SeedFailure& f : result.failures) failures.push_back({{"seed", f.seed}, {"error", f.error}});
  j["failures"] = failures;
  return j;
}

}  // namespace

void write_experiment(const std::string& dir, const ExperimentConfig& cfg, const ExperimentResult& result) {
  const fs::path root(dir);
  ensure_dir(root);
  write_text_file((root / "config.txt").string(), render_config(cfg));
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    for (const SingleRun& r : result.runs[i]) {
      const fs::path run_dir = root / ("seed_" + std::to_string(result.rows[i].seed)) / assignment_name(r.swapped);
      ensure_dir(run_dir);
      write_history_csv((run_dir / "history.csv").string(), r.train.history);
      save_checkpoint((run_dir / "checkpoint.bin").string(), r.train.best);
    }
  }
  write_text_file((root / "metrics.json").string(), experiment_json(cfg, result).dump(2) + "\n");
  write_metrics_csv((root / "metrics.csv").string(), result.rows);
  write_text_file((root / "report.txt").string(), render_report_text(result.rows));
  write_text_file((root / "report.csv").string(), render_report_csv(result.rows));
}

// ---------------------------------------------------------------------------
// Sweeps and ablations

ExperimentConfig with_sweep_value(const ExperimentConfig& base, const std::string& param, double value) {
  static const std::map<std::string, std::string> keys = {
      {"p_keep", "translation.p_keep"},    {"edit_strength", "translation.edit_strength"},
      {"overlap_frac", "split.overlap"},   {"overlap", "split.overlap"},
      {"lambda_cdm", "loss.lambda_cdm"},   {"tau_ppp", "loss.tau_ppp"},
  };
  const auto it = keys.find(param);
  if (it == keys.end()) {
    throw ConfigError("unknown sweep parameter '" + param +
                      "' (expected p_keep, edit_strength, overlap_frac, lambda_cdm or tau_ppp)");
  }
  ExperimentConfig cfg = base;
  apply_setting(cfg, it->second, format_double(value));
  cfg.name = param + "=" + format_double(value);
  cfg.sweep_param.clear();
  cfg.sweep_values.clear();
  cfg.validate();
  return cfg;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ContractViolation("spearman: length mismatch");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

bool SweepResult::any_partial() const {
  return std::any_of(cells.begin(), cells.end(),
                     [](const SweepCell& c) { return !c.result.failures.empty(); });
}

SweepResult run_sweep(const ExperimentConfig& base) {
  if (base.sweep_param.empty()) throw ConfigError("sweep.param is not set");
  if (base.sweep_values.empty()) throw ConfigError("sweep.values must not be empty");
  SweepResult sweep;
  sweep.param = base.sweep_param;
  for (const double v : base.sweep_values) {
    SweepCell cell;
    cell.value = v;
    cell.config = with_sweep_value(base, base.sweep_param, v);
    sweep.cells.push_back(std::move(cell));
  }
  std::vector<double> xs, ys;
  for (SweepCell& cell : sweep.cells) {
    cell.result = run_experiment(cell.config);
    if (cell.result.rows.empty()) continue;
    xs.push_back(cell.value);
    ys.push_back(cell.result.aggregate("prec1").mean);
  }
  if (xs.empty()) std::rethrow_exception(sweep.cells.front().result.first_error);
  sweep.spearman_prec1 = spearman(xs, ys);
  return sweep;
}

void write_sweep(const std::string& dir, const SweepResult& sweep) {
  const fs::path root(dir);
  ensure_dir(root);
  std::ostringstream csv;
  csv << "param,value,scenario,method,seeds_ok,seeds_failed";
  const std::vector<std::string> summary_cols = {"prec1", "prec5", "prec15", "ncm_accuracy", "distance_to_source",
                                                 "similarity_to_real_target"};
  for (const auto& c : summary_cols) csv << ',' << c << "_mean," << c << "_std";
  csv << '\n';
  ojson j;
  j["param"] = sweep.param;
  ojson cells = ojson::array();
  std::vector<MetricsRow> all_rows;
  for (const SweepCell& cell : sweep.cells) {
    write_experiment((root / cell.config.name).string(), cell.config, cell.result);
    csv << sweep.param << ',' << csv_double(cell.value) << ',' << cell.config.name << ','
        << method_name(cell.config.method) << ',' << cell.result.rows.size() << ',' << cell.result.failures.size();
    for (const auto& c : summary_cols) {
      const MeanStd ms = cell.result.aggregate(c);
      csv << ',' << (std::isfinite(ms.mean) ? csv_double(ms.mean) : "") << ','
          << (std::isfinite(ms.std) ? csv_double(ms.std) : "");
    }
    csv << '\n';
    const MeanStd p1 = cell.result.aggregate("prec1");
    cells.push_back({{"value", cell.value},
                     {"scenario", cell.config.name},
                     {"prec1_mean", json_value(p1.mean)},
                     {"prec1_std", json_value(p1.std)},
                     {"seeds_failed", cell.result.failures.size()}});
    all_rows.insert(all_rows.end(), cell.result.rows.begin(), cell.result.rows.end());
  }
  j["cells"] = cells;
  j["spearman_prec1"] = json_value(sweep.spearman_prec1);
  write_text_file((root / "sweep.csv").string(), csv.str());
  write_text_file((root / "sweep.json").string(), j.dump(2) + "\n");
  write_text_file((root / "report.txt").string(), render_report_text(all_rows));
  write_text_file((root / "report.csv").string(), render_report_csv(all_rows));
}

AblationResult run_ablation(const ExperimentConfig& cfg) {
  if (cfg.method != Method::SynCdr) {
    throw ConfigError(std::string("ablate-ppp requires experiment.method = syncdr, got ") + method_name(cfg.method));
  }
  AblationResult ab;
  ab.with_config = cfg;
  ab.without_config = cfg;
  ab.without_config.method = Method::SynCdrNoPpp;
  ab.with_ppp = run_experiment(ab.with_config);
  ab.without_ppp = run_experiment(ab.without_config);
  if (ab.with_ppp.all_failed()) std::rethrow_exception(ab.with_ppp.first_error);
  if (ab.without_ppp.all_failed()) std::rethrow_exception(ab.without_ppp.first_error);
  std::vector<double> deltas;
  for (const MetricsRow& w : ab.with_ppp.rows) {
    for (const MetricsRow& wo : ab.without_ppp.rows) {
      if (w.seed != wo.seed) continue;
      AblationPair p;
      p.seed = w.seed;
      p.with_ppp = *w.get("prec1");
      p.without_ppp = *wo.get("prec1");
      p.delta = p.with_ppp - p.without_ppp;
      ab.pairs.push_back(p);
      deltas.push_back(p.delta);
    }
  }
  if (deltas.empty()) throw DataError("ablate-ppp: no seed succeeded in both arms");
  ab.delta = mean_std(deltas);
  return ab;
}

void write_ablation(const std::string& dir, const AblationResult& ab) {
  const fs::path root(dir);
  ensure_dir(root);
  write_experiment((root / method_name(ab.with_config.method)).string(), ab.with_config, ab.with_ppp);
  write_experiment((root / method_name(ab.without_config.method)).string(), ab.without_config, ab.without_ppp);
  std::ostringstream csv;
  csv << "seed,syncdr_prec1,syncdr_no_ppp_prec1,delta\n";
  ojson pairs = ojson::array();
  for (const AblationPair& p : ab.pairs) {
    csv << p.seed << ',' << csv_double(p.with_ppp) << ',' << csv_double(p.without_ppp) << ',' << csv_double(p.delta)
        << '\n';
    pairs.push_back({{"seed", p.seed}, {"syncdr", p.with_ppp}, {"syncdr_no_ppp", p.without_ppp}, {"delta", p.delta}});
  }
  ojson j;
  j["scenario"] = ab.with_config.name;
  j["pairs"] = pairs;
  j["delta_mean"] = json_value(ab.delta.mean);
  j["delta_std"] = json_value(ab.delta.std);
  write_text_file((root / "ablation.csv").string(), csv.str());
  write_text_file((root / "ablation.json").string(), j.dump(2) + "\n");
  std::vector<MetricsRow> rows = ab.with_ppp.rows;
  rows.insert(rows.end(), ab.without_ppp.rows.begin(), ab.without_ppp.rows.end());
  write_text_file((root / "report.txt").string(), render_report_text(rows));
  write_text_file((root / "report.csv").string(), render_report_csv(rows));
}

// ---------------------------------------------------------------------------
// Data export and feature dumps

void generate_data(const std::string& dir, const ExperimentConfig& cfg, bool with_oracle) {
  cfg.validate();
  const SeedPlan plan = derive_seed_plan(cfg, cfg.seeds.front());
  const PreparedData d = prepare_data(plan, false, true);
  ensure_dir(dir);
  const std::vector<DomainSample> synthetic = concat(d.syn_b, d.syn_a);
  ExportOptions options;
  options.with_oracle = with_oracle;
  export_dataset(dir, d.dataset, plan.split, d.split, plan.translation, synthetic, options);
  write_text_file((fs::path(dir) / "config.txt").string(), render_config(cfg));
}

void dump_features(const std::string& path, const ExperimentConfig& cfg, const EncoderParams& params) {
  cfg.validate();
  if (params.config.input_dim != cfg.benchmark.ambient_dim) {
    throw ConfigError("checkpoint input_dim " + std::to_string(params.config.input_dim) +
                      " does not match benchmark.ambient_dim " + std::to_string(cfg.benchmark.ambient_dim));
  }
  const SeedPlan plan = derive_seed_plan(cfg, cfg.seeds.front());
  const PreparedData d = prepare_data(plan, false, false);
  std::ostringstream out;
  for (const auto* set : {&d.split.test_a, &d.split.test_b}) {
    const LabeledFeatureSet f = encode_set(params, *set);
    for (std::size_t r = 0; r < f.size(); ++r) {
      const auto row = f.features.row(r);
      ojson line;
      line["instance_id"] = f.ids[r];
      line["domain"] = domain_name(f.domain);
      line["class_id"] = f.labels[r];
      line["features"] = std::vector<double>(row.begin(), row.end());
      out << line.dump() << '\n';
    }
  }
  const fs::path p(path);
  if (p.has_parent_path()) ensure_dir(p.parent_path());
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Result files and reports

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "scenario,method,seed";
  for (const auto& c : metric_columns()) out << ',' << c;
  out << '\n';
  for (const MetricsRow& r : rows) {
    out << r.scenario << ',' << r.method << ',' << r.seed;
    for (const auto& v : r.values) out << ',' << (v ? csv_double(*v) : "");
    out << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  auto fail = [&](int line, const std::string& why) -> DataError {
    return DataError(path + ":" + std::to_string(line) + ": " + why);
  };
  std::string line;
  std::string expected = "scenario,method,seed";
  for (const auto& c : metric_columns()) expected += "," + c;
  if (!std::getline(in, line) || line != expected) throw fail(1, "unexpected header");
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 3 + metric_columns().size()) throw fail(line_no, "wrong number of fields");
    MetricsRow row;
    row.scenario = fields[0];
    row.method = fields[1];
    try {
      std::size_t used = 0;
      row.seed = std::stoull(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("seed");
      for (std::size_t c = 3; c < fields.size(); ++c) {
        if (fields[c].empty()) {
          row.values.emplace_back();
          continue;
        }
        const double v = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::invalid_argument("value");
        row.values.emplace_back(v);
      }
    } catch (const std::exception&) {
      throw fail(line_no, "malformed number");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (const unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width, bool left) {
  const std::string fill(width - std::min(width, display_width(s)), ' ');
  return left ? s + fill : fill + s;
}

std::string pct(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f ± %.1f", 100.0 * mean, 100.0 * std);
  return buf;
}

struct Cell {
  MeanStd value;
  bool present = false;
};

/// Ordered (method, scenario) grid of aggregates for one metric column.
struct Grid {
  std::vector<std::string> methods, scenarios;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  bool any = false;

  Cell average(const std::string& method) const {
    std::vector<double> means, stds;
    for (const auto& s : scenarios) {
      const auto it = cells.find({method, s});
      if (it == cells.end() || !it->second.present) continue;
      means.push_back(it->second.value.mean);
      stds.push_back(it->second.value.std);
    }
    if (means.empty()) return {};
    double m = 0.0;
    for (double x : means) m += x;
    return {{m / static_cast<double>(means.size()), pooled_std(stds)}, true};
  }
};

template <typename T>
void add_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

Grid build_grid(const std::vector<MetricsRow>& rows, const std::string& column) {
  Grid g;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const MetricsRow& r : rows) {
    add_unique(g.methods, r.method);
    add_unique(g.scenarios, r.scenario);
    if (const auto v = r.get(column)) values[{r.method, r.scenario}].push_back(*v);
  }
  for (const auto& [key, v] : values) {
    g.cells[key] = {mean_std(v), true};
    g.any = true;
  }
  return g;
}

const std::vector<std::pair<std::string, std::string>>& report_tables() {
  static const std::vector<std::pair<std::string, std::string>> t = {
      {"prec1", "Prec@1"},
      {"prec5", "Prec@5"},
      {"prec15", "Prec@15"},
      {"ncm_accuracy", "Synthetic NCM accuracy"},
      {"distance_to_source", "Synthetic distance to source"},
      {"similarity_to_real_target", "Synthetic similarity to real target"},
  };
  return t;
}

}  // namespace

std::string render_report_text(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  if (rows.empty()) return "no results\n";
  bool first = true;
  for (const auto& [column, title] : report_tables()) {
    const Grid g = build_grid(rows, column);
    if (!g.any) continue;
    if (!first) out << '\n';
    first = false;
    out << title << " (%, mean ± std over seeds)\n";
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header = {"Method"};
    header.insert(header.end(), g.scenarios.begin(), g.scenarios.end());
    header.push_back("Average");
    table.push_back(header);
    for (const auto& m : g.methods) {
      std::vector<std::string> line = {m};
      for (const auto& s : g.scenarios) {
        const auto it = g.cells.find({m, s});
        line.push_back(it != g.cells.end() ? pct(it->second.value.mean, it->second.value.std) : "-");
      }
      const Cell avg = g.average(m);
      line.push_back(avg.present ? pct(avg.value.mean, avg.value.std) : "-");
      table.push_back(line);
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : table) {
      for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], display_width(line[c]));
    }
    for (std::size_t r = 0; r < table.size(); ++r) {
      for (std::size_t c = 0; c < table[r].size(); ++c) {
        if (c) out << "  ";
        out << pad(table[r][c], widths[c], c == 0);
      }
      out << '\n';
      if (r == 0) {
        std::size_t total = 0;
        for (std::size_t w : widths) total += w;
        out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
      }
    }
  }
  return out.str();
}

std::string render_report_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << "metric,method,scenario,mean,std\n";
  for (const auto& [column, title] : report_tables()) {
    const Grid g = build_grid(rows, column);
    if (!g.any) continue;
    for (const auto& m : g.methods) {
      for (const auto& s : g.scenarios) {
        const auto it = g.cells.find({m, s});
        if (it == g.cells.end()) continue;
        out << column << ',' << m << ',' << s << ',' << csv_double(it->second.value.mean) << ','
            << csv_double(it->second.value.std) << '\n';
      }
      const Cell avg = g.average(m);
      if (avg.present) {
        out << column << ',' << m << ",Average," << csv_double(avg.value.mean) << ',' << csv_double(avg.value.std)
            << '\n';
      }
    }
  }
  return out.str();
}

std::vector<std::string> find_metrics_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("results directory " + dir + " does not exist");
  std::vector<std::string> out;
  for (auto it = fs::recursive_directory_iterator(dir, ec); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_regular_file() && it->path().filename() == "metrics.csv") out.push_back(it->path().string());
  }
  if (ec) throw DataError("cannot scan " + dir + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

int exit_code_for(const std::exception_ptr& error) {
  if (!error) return exit_code::kSuccess;
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError&) {
    return exit_code::kConfig;
  } catch (const DivergenceError&) {
    return exit_code::kDivergence;
  } catch (const NumericError&) {
    return exit_code::kDivergence;
  } catch (const DataError&) {
    return exit_code::kData;
  } catch (const AlignmentError&) {
    return exit_code::kData;
  } catch (const LookupError&) {
    return exit_code::kData;
  } catch (const DimensionError&) {
    return exit_code::kData;
  } catch (const DegenerateInputError&) {
    return exit_code::kData;
  } catch (const ContractViolation&) {
    return exit_code::kData;
  } catch (...) {
    return exit_code::kUnexpected;
  }
}

}  // namespace syncdr
