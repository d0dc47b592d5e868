#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "syncdr/config.hpp"
#include "syncdr/errors.hpp"
#include "syncdr/experiment.hpp"

using namespace syncdr;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(Method m = Method::SynCdr) {
  ExperimentConfig c = parse_config(R"(
    benchmark.num_classes = 6
    benchmark.samples_per_class = 20
    train.epochs = 2
    train.batch_size = 8
    encoder.hidden_dims = 16
    encoder.output_dim = 8
    experiment.seeds = 0, 1
  )");
  c.method = m;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("syncdr_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing applies keys in order") {
  const ExperimentConfig c = parse_config(R"(
    # comment line
    experiment.method = cds
    translation.preset = noisy
    translation.p_keep = 0.7   # overrides the preset
    split.overlap = 0.5
    split.swap = false
    loss.tau_ppp = 0.2
    encoder.hidden_dims = 8, 4
    experiment.seeds = 3,4
  )");
  CHECK(c.method == Method::Cds);
  CHECK(c.translation.p_keep == 0.7);
  CHECK(c.translation.edit_strength == 1.0);
  CHECK(c.split.overlap_frac == 0.5);
  CHECK_FALSE(c.swap_protocol);
  CHECK(c.loss.tau_ppp == 0.2);
  CHECK(c.encoder.hidden_dims == std::vector<int>{8, 4});
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
}

TEST_CASE("config defaults") {
  const ExperimentConfig c;
  CHECK(c.seeds.size() == 3u);
  CHECK(c.method == Method::SynCdr);
  CHECK(c.translation.p_keep == 1.0);
  CHECK(c.translation.edit_strength == 1.0);
  CHECK(c.train.learning_rate == 0.003);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.epochs == 15);
  CHECK(c.resolved_encoder().input_dim == c.benchmark.ambient_dim);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("benchmark.colors = 3"), ConfigError);
  CHECK_THROWS_AS(parse_config("benchmark.num_classes = many"), ConfigError);
  CHECK_THROWS_AS(parse_config("benchmark.num_classes"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment.method = magic"), ConfigError);
  CHECK_THROWS_AS(parse_config("split.swap = maybe"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/syncdr.cfg"), ConfigError);
  try {
    parse_config("\n\nloss.tau = 1", "exp.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("exp.cfg:3") != std::string::npos);
  }
  ExperimentConfig c;
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig{};
  c.name = "a,b";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("rendered config parses back to the same config") {
  ExperimentConfig c = tiny(Method::Distill);
  c.loss.tau_ppp = 0.1 + 0.2;
  c.sweep_param = "p_keep";
  c.sweep_values = {0.25, 0.5};
  const std::string text = render_config(c);
  CHECK(render_config(parse_config(text)) == text);
  CHECK(parse_config(text).loss.tau_ppp == c.loss.tau_ppp);
}

TEST_CASE("method selectors set the active loss terms") {
  ExperimentConfig c;
  c.method = Method::InDomainId;
  CHECK(method_loss_weights(c).lambda_cdm == 0.0);
  CHECK_FALSE(method_loss_weights(c).use_ppp);
  CHECK_FALSE(method_uses_synthetic(c.method));
  c.method = Method::Cds;
  CHECK(method_loss_weights(c).lambda_cdm == 1.0);
  CHECK_FALSE(method_uses_synthetic(c.method));
  c.method = Method::SynCdrNoPpp;
  CHECK_FALSE(method_loss_weights(c).use_ppp);
  CHECK(method_uses_synthetic(c.method));
  c.method = Method::SynCdr;
  CHECK(method_loss_weights(c).use_ppp);
  CHECK(method_loss_weights(c).tau_ppp == 0.05);
}

TEST_CASE("seed plans differ across seeds and are reproducible") {
  const ExperimentConfig c;
  const SeedPlan a = derive_seed_plan(c, 0), b = derive_seed_plan(c, 1), a2 = derive_seed_plan(c, 0);
  CHECK(a.benchmark.master_seed != b.benchmark.master_seed);
  CHECK(a.train.seed != b.train.seed);
  CHECK(a.encoder.init_seed != b.encoder.init_seed);
  CHECK(a.benchmark.master_seed == a2.benchmark.master_seed);
}

TEST_CASE("spearman with ties") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ranks of y: 1, 2.5, 2.5, 4 -> Pearson of (1,2,3,4) with (1,2.5,2.5,4).
  const double expect = 4.5 / std::sqrt(5.0 * 4.5);
  CHECK(spearman({1, 2, 3, 4}, {0.1, 0.5, 0.5, 0.9}) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(std::isnan(spearman({1, 2, 3}, {5, 5, 5})));
}

TEST_CASE("run aggregates per-seed rows and writes its files") {
  const ExperimentConfig c = tiny();
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.rows.size() == 2u);
  CHECK(r.failures.empty());
  for (const auto& runs : r.runs) CHECK(runs.size() == 2u);
  for (const auto& row : r.rows) {
    for (const auto& col : metric_columns()) {
      REQUIRE(row.get(col).has_value());
      if (col.rfind("prec", 0) == 0) {
        CHECK(*row.get(col) >= 0.0);
        CHECK(*row.get(col) <= 1.0);
      }
    }
  }
  const double p0 = *r.rows[0].get("prec1"), p1 = *r.rows[1].get("prec1");
  const MeanStd agg = r.aggregate("prec1");
  CHECK(agg.mean == doctest::Approx((p0 + p1) / 2));
  CHECK(agg.std == doctest::Approx(std::abs(p0 - p1) / std::sqrt(2.0)));
  CHECK(*r.rows[0].get("prec1") ==
        doctest::Approx(0.5 * (*r.rows[0].get("prec1_a_to_b") + *r.rows[0].get("prec1_b_to_a"))));

  const fs::path dir = scratch_dir("run");
  write_experiment(dir.string(), c, r);
  for (const char* f : {"config.txt", "metrics.json", "metrics.csv", "report.txt", "report.csv",
                        "seed_0/ab/history.csv", "seed_0/ba/checkpoint.bin", "seed_1/ab/checkpoint.bin"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto j = nlohmann::json::parse(slurp(dir / "metrics.json"));
  CHECK(j["aggregate"]["prec1"]["std"].get<double>() == agg.std);
  CHECK(j["per_seed"].size() == 2u);

  const auto rows = read_metrics_csv((dir / "metrics.csv").string());
  REQUIRE(rows.size() == 2u);
  CHECK(rows[1].values == r.rows[1].values);
  CHECK(render_report_text(rows) == slurp(dir / "report.txt"));
  CHECK(render_report_csv(rows) == slurp(dir / "report.csv"));
  CHECK(load_checkpoint((dir / "seed_1/ba/checkpoint.bin").string()).bitwise_equal(r.runs[1][1].train.best));
  fs::remove_all(dir);
}

TEST_CASE("methods without synthetic data report no analysis; init-only does not train") {
  ExperimentConfig c = tiny(Method::ImagenetInitOnly);
  c.seeds = {0};
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.rows.size() == 1u);
  CHECK_FALSE(r.rows[0].get("ncm_accuracy").has_value());
  CHECK(r.runs[0][0].train.history.empty());
  CHECK(std::isnan(r.aggregate("ncm_accuracy").mean));
}

TEST_CASE("per-seed failures are recorded and all-failed runs keep the error") {
  ExperimentConfig c = tiny(Method::Distill);
  c.seeds = {0, 1};
  c.train.learning_rate = 1e308;
  const ExperimentResult r = run_experiment(c);
  CHECK(r.all_failed());
  CHECK(r.failures.size() == 2u);
  CHECK(exit_code_for(r.first_error) == exit_code::kDivergence);
}

TEST_CASE("exit codes by error kind") {
  auto code = [](auto e) { return exit_code_for(std::make_exception_ptr(e)); };
  CHECK(code(ConfigError("x")) == exit_code::kConfig);
  CHECK(code(DataError("x")) == exit_code::kData);
  CHECK(code(LookupError("x")) == exit_code::kData);
  CHECK(code(AlignmentError("x")) == exit_code::kData);
  CHECK(code(DivergenceError("x")) == exit_code::kDivergence);
  CHECK(code(NumericError("x")) == exit_code::kDivergence);
  CHECK(code(std::runtime_error("x")) == exit_code::kUnexpected);
  const std::set<int> distinct = {exit_code::kSuccess, exit_code::kConfig, exit_code::kData,
                                  exit_code::kDivergence, exit_code::kPartialSeeds, exit_code::kEmptyReport};
  CHECK(distinct.size() == 6u);
}

TEST_CASE("report tables: Average column is the mean of means with pooled std") {
  std::vector<MetricsRow> rows;
  auto add = [&](const std::string& scen, std::uint64_t seed, double p1) {
    MetricsRow r;
    r.scenario = scen;
    r.method = "cds";
    r.seed = seed;
    r.values.assign(metric_columns().size(), std::nullopt);
    r.values[2] = p1;
    rows.push_back(r);
  };
  add("x", 0, 0.2);
  add("x", 1, 0.4);
  add("y", 0, 0.5);
  add("y", 1, 0.9);
  const std::string csv = render_report_csv(rows);
  const double sx = std::sqrt(0.02), sy = std::sqrt(0.08);
  const double avg_mean = (0.3 + 0.7) / 2, avg_std = std::sqrt((sx * sx + sy * sy) / 2);
  std::istringstream in(csv);
  std::string line;
  bool found = false;
  while (std::getline(in, line)) {
    if (line.rfind("prec1,cds,Average,", 0) != 0) continue;
    found = true;
    std::stringstream ss(line.substr(std::string("prec1,cds,Average,").size()));
    std::string m, s;
    std::getline(ss, m, ',');
    std::getline(ss, s, ',');
    CHECK(std::stod(m) == doctest::Approx(avg_mean).epsilon(1e-15));
    CHECK(std::stod(s) == doctest::Approx(avg_std).epsilon(1e-15));
  }
  CHECK(found);
  const std::string text = render_report_text(rows);
  CHECK(text.find("30.0 ± 14.1") != std::string::npos);
  CHECK(text.find("50.0 ± 22.4") != std::string::npos);
  CHECK(render_report_text({}) == "no results\n");
}

TEST_CASE("malformed metrics files name the file") {
  const fs::path dir = scratch_dir("badcsv");
  fs::create_directories(dir);
  std::ofstream(dir / "metrics.csv") << "scenario,method\n";
  try {
    read_metrics_csv((dir / "metrics.csv").string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("metrics.csv") != std::string::npos);
  }
  CHECK(find_metrics_files(dir.string()).size() == 1u);
  CHECK_THROWS_AS(find_metrics_files((dir / "missing").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("single-value sweep reduces to a run") {
  ExperimentConfig c = tiny();
  c.seeds = {0};
  c.sweep_param = "p_keep";
  c.sweep_values = {0.5};
  const SweepResult s = run_sweep(c);
  REQUIRE(s.cells.size() == 1u);
  ExperimentConfig direct = tiny();
  direct.seeds = {0};
  direct.translation.p_keep = 0.5;
  const ExperimentResult r = run_experiment(direct);
  CHECK(s.cells[0].result.rows[0].values == r.rows[0].values);
  CHECK(s.cells[0].config.name == "p_keep=0.5");
  CHECK(std::isnan(s.spearman_prec1));

  c.sweep_param = "colour";
  CHECK_THROWS_AS(run_sweep(c), ConfigError);
  c.sweep_param = "p_keep";
  c.sweep_values = {1.5};
  CHECK_THROWS_AS(run_sweep(c), ConfigError);
  c.sweep_values.clear();
  CHECK_THROWS_AS(run_sweep(c), ConfigError);
}

TEST_CASE("sweep writes one directory per cell and a consolidated table") {
  ExperimentConfig c = tiny(Method::Cds);
  c.seeds = {0};
  c.sweep_param = "overlap_frac";
  c.sweep_values = {0.0, 1.0};
  const SweepResult s = run_sweep(c);
  const fs::path dir = scratch_dir("sweep");
  write_sweep(dir.string(), s);
  CHECK(fs::exists(dir / "overlap_frac=0" / "metrics.csv"));
  CHECK(fs::exists(dir / "overlap_frac=1" / "metrics.csv"));
  std::ifstream in(dir / "sweep.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);
  const auto j = nlohmann::json::parse(slurp(dir / "sweep.json"));
  CHECK(j["cells"].size() == 2u);
  fs::remove_all(dir);
}

TEST_CASE("PPP ablation pairs seeds and requires syncdr") {
  ExperimentConfig c = tiny();
  c.seeds = {0};
  const AblationResult a = run_ablation(c);
  const AblationResult b = run_ablation(c);
  REQUIRE(a.pairs.size() == 1u);
  CHECK(a.pairs[0].delta == a.pairs[0].with_ppp - a.pairs[0].without_ppp);
  CHECK(a.without_ppp.rows[0].values == b.without_ppp.rows[0].values);
  CHECK(a.without_ppp.runs[0][0].train.best.bitwise_equal(b.without_ppp.runs[0][0].train.best));
  CHECK_THROWS_AS(run_ablation(tiny(Method::Cds)), ConfigError);
}

TEST_CASE("generated data is byte-stable and the manifest follows the category split") {
  ExperimentConfig c;
  const fs::path dir = scratch_dir("gen");
  generate_data((dir / "a").string(), c, true);
  generate_data((dir / "b").string(), c, true);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(slurp(dir / "a" / "samples.jsonl") == slurp(dir / "b" / "samples.jsonl"));
  for (double rho : {0.0, 0.5, 1.0}) {
    c.split.overlap_frac = rho;
    generate_data((dir / "r").string(), c, false);
    const auto m = nlohmann::json::parse(slurp(dir / "r" / "manifest.json"));
    const int k = m["categories"]["per_domain"];
    CHECK(k == static_cast<int>(std::lround(20 / (2.0 - rho))));
    const auto a = m["categories"]["classes_a"].get<std::vector<int>>();
    const auto b = m["categories"]["classes_b"].get<std::vector<int>>();
    std::vector<int> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    CHECK(static_cast<int>(both.size()) == 2 * k - 20);
  }
  fs::remove_all(dir);
}

TEST_CASE("feature dump writes one line per test sample") {
  ExperimentConfig c = tiny();
  const EncoderParams p = init_encoder(c.resolved_encoder());
  const fs::path dir = scratch_dir("dump");
  dump_features((dir / "features.jsonl").string(), c, p);
  std::ifstream in(dir / "features.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["features"].size() == 8u);
    ++n;
  }
  CHECK(n == 2 * 6 * 6);
  EncoderConfig wrong = c.resolved_encoder();
  wrong.input_dim = 5;
  CHECK_THROWS_AS(dump_features((dir / "x.jsonl").string(), c, init_encoder(wrong)), ConfigError);
  fs::remove_all(dir);
}
