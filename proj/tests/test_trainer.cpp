#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "syncdr/errors.hpp"
#include "syncdr/trainer.hpp"
#include "test_util.hpp"

using namespace syncdr;

namespace {

struct Fixture {
  Dataset dataset;
  DataSplit split;
  std::vector<DomainSample> syn_a, syn_b;

  explicit Fixture(std::uint64_t seed = 1, int classes = 6, int per_class = 20) {
    BenchmarkConfig cfg;
    cfg.num_classes = classes;
    cfg.samples_per_class = per_class;
    cfg.master_seed = seed;
    dataset = generate_benchmark(cfg);
    SplitSpec spec;
    spec.split_seed = seed;
    split = make_split(dataset, spec);
    TranslationConfig tc;
    tc.seed = seed;
    syn_b = generate_synthetic_set(dataset, split.train_a, Domain::B, tc);
    syn_a = generate_synthetic_set(dataset, split.train_b, Domain::A, tc);
  }

  TrainingData data(bool synthetic = true) const {
    TrainingData d{split.train_a, split.train_b, {}, {}, split.val_a, split.val_b};
    if (synthetic) {
      d.syn_a = syn_a;
      d.syn_b = syn_b;
    }
    return d;
  }
};

TrainConfig small_train(int epochs = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  return t;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.hidden_dims = {16};
  e.output_dim = 8;
  return e;
}

}  // namespace

TEST_CASE("build_batches: step count, alignment and per-epoch multisets") {
  BenchmarkConfig cfg;
  cfg.num_classes = 4;
  cfg.samples_per_class = 32;
  const Dataset d = generate_benchmark(cfg);
  const DataSplit split = make_split(d, SplitSpec{});
  REQUIRE(split.train_a.size() == 32u);
  const auto syn_b = generate_synthetic_set(d, split.train_a, Domain::B, TranslationConfig{});
  const auto syn_a = generate_synthetic_set(d, split.train_b, Domain::A, TranslationConfig{});

  const auto e1 = build_batches(split.train_a, split.train_b, syn_a, syn_b, 16, 1);
  CHECK(e1.size() == 2u);
  std::vector<std::size_t> idx1, idx2;
  for (const auto& step : e1) {
    REQUIRE(step.real_a.size() == 16u);
    for (std::size_t i = 0; i < step.real_a.size(); ++i) {
      CHECK(syn_b[step.syn_b[i]].pair_id == split.train_a[step.real_a[i]].instance_id);
      CHECK(syn_a[step.syn_a[i]].pair_id == split.train_b[step.real_b[i]].instance_id);
    }
    idx1.insert(idx1.end(), step.real_a.begin(), step.real_a.end());
  }
  for (const auto& step : build_batches(split.train_a, split.train_b, syn_a, syn_b, 16, 2)) {
    idx2.insert(idx2.end(), step.real_a.begin(), step.real_a.end());
  }
  CHECK(idx1 != idx2);
  std::sort(idx1.begin(), idx1.end());
  std::sort(idx2.begin(), idx2.end());
  CHECK(idx1 == idx2);
  for (std::size_t i = 0; i < idx1.size(); ++i) CHECK(idx1[i] == i);

  auto broken = syn_b;
  broken[3].pair_id = 123456789;
  CHECK_THROWS_AS(build_batches(split.train_a, split.train_b, syn_a, broken, 16, 1), AlignmentError);
}

TEST_CASE("build_batches covers a pool of 64 in two steps of 32") {
  BenchmarkConfig cfg;
  cfg.num_classes = 2;
  cfg.samples_per_class = 128;
  const Dataset d = generate_benchmark(cfg);
  SplitSpec spec;
  spec.overlap_frac = 1.0;
  const DataSplit split = make_split(d, spec);
  REQUIRE(split.train_a.size() == 128u);
  const std::vector<DomainSample> pool_a(split.train_a.begin(), split.train_a.begin() + 64);
  CHECK(build_batches(pool_a, split.train_b, {}, {}, 32, 7).size() == 4u);
  CHECK(build_batches(pool_a, pool_a, {}, {}, 32, 7).size() == 2u);
}

TEST_CASE("sgd_step examples") {
  using ad::Tensor;
  {
    std::vector<Tensor> p = {Tensor::parameter({1}, {1.0})};
    std::vector<std::vector<double>> v(1);
    p[0].zero_grad();
    p[0].mutable_grad()[0] = 1.0;  // d/dx of x²/2 at x = 1
    sgd_step(p, v, 0.1, 0.0);
    CHECK(p[0].values()[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  {
    std::vector<Tensor> p = {Tensor::parameter({2}, {0.5, -1.0})};
    std::vector<std::vector<double>> v = {{0.2, 0.4}};
    p[0].zero_grad();
    sgd_step(p, v, 0.1, 0.9);
    CHECK(v[0][0] == doctest::Approx(0.18));
    CHECK(v[0][1] == doctest::Approx(0.36));
    CHECK(p[0].values()[0] == doctest::Approx(0.5 - 0.1 * 0.18));
  }
  {
    std::mt19937_64 rng(3);
    std::vector<Tensor> p = {testutil::random_parameter(1, 5, rng)};
    std::vector<std::vector<double>> v(1);
    for (int it = 0; it < 300; ++it) {
      ad::Graph g;
      g.backward(g.scale(g.sum(g.matmul_bt(p[0], p[0])), 0.5));
      sgd_step(p, v, 0.1, 0.9);
    }
    double sq = 0.0;
    for (double x : p[0].values()) sq += x * x;
    CHECK(0.5 * sq < 1e-6);
  }
  {
    std::vector<Tensor> p = {Tensor::parameter({1}, {1.0})};
    std::vector<std::vector<double>> v(1);
    p[0].zero_grad();
    p[0].mutable_grad()[0] = std::nan("");
    CHECK_THROWS_AS(sgd_step(p, v, 0.1, 0.9), DivergenceError);
  }
}

TEST_CASE("zero epochs returns the initialized encoder") {
  const Fixture f;
  const TrainResult r = train(f.data(), small_encoder(), LossWeights{}, small_train(0));
  CHECK(r.history.empty());
  CHECK(r.best_epoch == 0);
  CHECK(r.best.bitwise_equal(init_encoder(small_encoder())));
  CHECK(r.best_val_prec1 == r.initial_val_prec1);
}

TEST_CASE("training is bit-reproducible and keeps the best epoch") {
  const Fixture f;
  LossWeights w;
  w.tau_ppp = 0.05;
  const TrainResult a = train(f.data(), small_encoder(), w, small_train(4));
  const TrainResult b = train(f.data(), small_encoder(), w, small_train(4));
  REQUIRE(a.history.size() == 4u);
  CHECK(a.best.bitwise_equal(b.best));
  double best = -1.0;
  int best_epoch = 0;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    const EpochRecord& x = a.history[i];
    const EpochRecord& y = b.history[i];
    CHECK(x.total == y.total);
    CHECK(x.val_prec1 == y.val_prec1);
    for (double v : {x.id_a, x.id_b, x.cross_a, x.cross_b, x.ppp_a, x.ppp_b, x.total}) CHECK(std::isfinite(v));
    CHECK(x.ppp_a > 0.0);
    if (x.val_prec1 > best) {
      best = x.val_prec1;
      best_epoch = x.epoch;
    }
  }
  CHECK(std::abs(a.best_val_prec1 - best) <= 1e-12);
  CHECK(a.best_epoch == best_epoch);
  CHECK(validation_precision(a.best, f.split.val_a, f.split.val_b, 1) == a.best_val_prec1);
}

TEST_CASE("in-domain ID logs no cross-domain or PPP terms") {
  const Fixture f;
  LossWeights w;
  w.lambda_cdm = 0.0;
  w.use_ppp = false;
  const TrainResult r = train(f.data(false), small_encoder(), w, small_train(2));
  for (const auto& e : r.history) {
    CHECK(e.cross_a == 0.0);
    CHECK(e.cross_b == 0.0);
    CHECK(e.ppp_a == 0.0);
    CHECK(e.ppp_b == 0.0);
    CHECK(e.id_a > 0.0);
  }
}

TEST_CASE("distillation logs nonnegative KL and needs latents") {
  const Fixture f;
  const TrainResult r = train(f.data(false), small_encoder(), LossWeights{}, small_train(2), Objective::Distill);
  for (const auto& e : r.history) {
    CHECK(e.distill >= 0.0);
    CHECK(e.id_a == 0.0);
  }
  auto stripped = f.split.train_a;
  for (auto& s : stripped) s.latent.clear();
  TrainingData d = f.data(false);
  d.train_a = stripped;
  CHECK_THROWS_AS(train(d, small_encoder(), LossWeights{}, small_train(1), Objective::Distill), ContractViolation);
}

TEST_CASE("batch size larger than a pool is a config error") {
  const Fixture f;
  TrainConfig t = small_train(1);
  t.batch_size = 1000;
  CHECK_THROWS_AS(train(f.data(), small_encoder(), LossWeights{}, t), ConfigError);
  t = small_train(1);
  t.learning_rate = -1.0;
  CHECK_THROWS_AS(train(f.data(), small_encoder(), LossWeights{}, t), ConfigError);
}

TEST_CASE("ideal synthetic data lifts validation Prec@1 above the initial encoder") {
  for (std::uint64_t seed : {1, 2, 3}) {
    BenchmarkConfig cfg;
    cfg.master_seed = seed;
    const Dataset d = generate_benchmark(cfg);
    SplitSpec spec;
    spec.split_seed = seed;
    const DataSplit split = make_split(d, spec);
    TranslationConfig tc;
    tc.seed = seed;
    const auto syn_b = generate_synthetic_set(d, split.train_a, Domain::B, tc);
    const auto syn_a = generate_synthetic_set(d, split.train_b, Domain::A, tc);
    LossWeights w;
    w.tau_ppp = 0.05;
    TrainConfig t;
    t.seed = seed;
    EncoderConfig e;
    e.init_seed = seed;
    const TrainResult r = train({split.train_a, split.train_b, syn_a, syn_b, split.val_a, split.val_b}, e, w, t);
    REQUIRE_FALSE(r.history.empty());
    CHECK(r.history.back().val_prec1 > r.initial_val_prec1);
  }
}

TEST_CASE("history CSV has one row per epoch") {
  const Fixture f;
  const TrainResult r = train(f.data(), small_encoder(), LossWeights{}, small_train(2));
  const std::string path = (std::filesystem::temp_directory_path() / "syncdr_hist.csv").string();
  write_history_csv(path, r.history);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 3);
  std::filesystem::remove(path);
}
