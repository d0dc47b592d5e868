#include <doctest.h>

#include <cmath>
#include <random>

#include "syncdr/benchmark.hpp"
#include "syncdr/encoder.hpp"
#include "syncdr/errors.hpp"
#include "syncdr/metrics.hpp"
#include "test_util.hpp"

using namespace syncdr;

namespace {

LabeledFeatureSet make_set(const oracle::Rows& rows, std::vector<int> labels, Domain d = Domain::A) {
  LabeledFeatureSet s;
  s.features = testutil::to_matrix(rows);
  s.labels = std::move(labels);
  s.domain = d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.ids.push_back(static_cast<std::int64_t>(i));
    s.pair_ids.emplace_back();
  }
  return s;
}

std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> U(0, classes - 1);
  std::vector<int> out(n);
  for (int& l : out) l = U(rng);
  return out;
}

/// Unit rows on a coarse grid so that exactly tied similarities occur.
oracle::Rows coarse_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> U(-1, 1);
  oracle::Rows out(n, std::vector<double>(d));
  for (auto& r : out) {
    do {
      for (double& x : r) x = U(rng);
    } while (oracle::dot(r, r) == 0.0);
    r = oracle::unit(r);
  }
  return out;
}

}  // namespace

TEST_CASE("prec_at_k with shared one-hot class indicators is perfect") {
  oracle::Rows q, g;
  std::vector<int> ql, gl;
  for (int c = 0; c < 4; ++c) {
    std::vector<double> e(4, 0.0);
    e[static_cast<std::size_t>(c)] = 1.0;
    for (int i = 0; i < 3; ++i) {
      q.push_back(e);
      ql.push_back(c);
      g.push_back(e);
      gl.push_back(c);
    }
  }
  for (int k = 1; k <= 3; ++k) CHECK(prec_at_k(make_set(q, ql), make_set(g, gl, Domain::B), k) == 1.0);
}

TEST_CASE("prec_at_k is at chance for random labels") {
  std::mt19937_64 rng(11);
  const auto q = oracle::random_unit_rows(2000, 8, rng), g = oracle::random_unit_rows(400, 8, rng);
  const double p = prec_at_k(make_set(q, random_labels(2000, 2, rng)), make_set(g, random_labels(400, 2, rng)), 1);
  CHECK(std::abs(p - 0.5) < 0.05);
}

TEST_CASE("prec_at_k contract") {
  std::mt19937_64 rng(1);
  const auto q = make_set(oracle::random_unit_rows(3, 4, rng), {0, 1, 0});
  const auto g = make_set(oracle::random_unit_rows(2, 4, rng), {0, 1});
  CHECK_THROWS_AS(prec_at_k(q, make_set({}, {}), 1), ContractViolation);
  CHECK_THROWS_AS(prec_at_k(q, g, 3), ContractViolation);
  CHECK_THROWS_AS(prec_at_k(q, g, 0), ContractViolation);
}

TEST_CASE("metrics agree exactly with brute force on randomized instances") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> N(1, 50);
    const std::size_t nq = N(rng), ng = N(rng), d = 2 + seed % 5;
    const int classes = 1 + static_cast<int>(seed % 6);
    const bool coarse = seed % 3 == 0;
    const auto q = coarse ? coarse_rows(nq, d, rng) : oracle::random_unit_rows(nq, d, rng);
    const auto g = coarse ? coarse_rows(ng, d, rng) : oracle::random_unit_rows(ng, d, rng);
    const auto ql = random_labels(nq, classes, rng), gl = random_labels(ng, classes, rng);
    const int k = 1 + static_cast<int>(rng() % ng);
    CHECK(prec_at_k(make_set(q, ql), make_set(g, gl), k) == oracle::prec_at_k(q, ql, g, gl, k));

    // Reference covering every synthetic label.
    std::vector<int> rl = gl;
    for (int c = 0; c < classes; ++c) rl.push_back(c);
    auto ref = g;
    const auto extra = oracle::random_unit_rows(static_cast<std::size_t>(classes), d, rng);
    ref.insert(ref.end(), extra.begin(), extra.end());
    CHECK(ncm_accuracy(make_set(q, ql), make_set(ref, rl)) == oracle::ncm_accuracy(q, ql, ref, rl));
    CHECK(similarity_to_real_target(make_set(q, ql), make_set(ref, rl)) ==
          oracle::similarity_to_real_target(q, ql, ref, rl));

    LabeledFeatureSet syn = make_set(q, ql, Domain::B);
    std::vector<std::int64_t> src_ids, pairs;
    for (std::size_t j = 0; j < ref.size(); ++j) src_ids.push_back(1000 + static_cast<std::int64_t>(j));
    for (std::size_t i = 0; i < q.size(); ++i) {
      pairs.push_back(src_ids[rng() % src_ids.size()]);
      syn.pair_ids[i] = pairs.back();
    }
    LabeledFeatureSet src = make_set(ref, rl);
    src.ids = src_ids;
    CHECK(distance_to_source(syn, src) == oracle::distance_to_source(q, pairs, ref, src_ids));
  }
}

TEST_CASE("prec_at_k invariances") {
  std::mt19937_64 rng(5);
  const auto q = oracle::random_unit_rows(30, 4, rng), g = oracle::random_unit_rows(40, 4, rng);
  const auto ql = random_labels(30, 3, rng), gl = random_labels(40, 3, rng);
  const double base = prec_at_k(make_set(q, ql), make_set(g, gl), 5);

  // Rotation in the first two coordinates.
  const double c = std::cos(0.7), s = std::sin(0.7);
  auto rot = [&](oracle::Rows rows) {
    for (auto& r : rows) {
      const double x = r[0], y = r[1];
      r[0] = c * x - s * y;
      r[1] = s * x + c * y;
    }
    return rows;
  };
  CHECK(prec_at_k(make_set(rot(q), ql), make_set(rot(g), gl), 5) == doctest::Approx(base).epsilon(1e-12));

  auto pg = g;
  auto pl = gl;
  std::reverse(pg.begin(), pg.end());
  std::reverse(pl.begin(), pl.end());
  CHECK(prec_at_k(make_set(q, ql), make_set(pg, pl), 5) == base);
}

TEST_CASE("bidirectional precision is symmetric on identical sets and bounded") {
  std::mt19937_64 rng(6);
  const auto rows = oracle::random_unit_rows(25, 5, rng);
  const auto labels = random_labels(25, 4, rng);
  for (const auto& p : bidirectional_prec(make_set(rows, labels), make_set(rows, labels, Domain::B), kDefaultKs)) {
    CHECK(std::abs(p.a_to_b - p.b_to_a) < 1e-12);
    CHECK(p.average >= 0.0);
    CHECK(p.average <= 1.0);
  }
}

TEST_CASE("bidirectional_eval of the untrained encoder matches brute force") {
  const Dataset d = generate_benchmark(BenchmarkConfig{});
  const DataSplit split = make_split(d, SplitSpec{});
  const EncoderParams p = init_encoder(EncoderConfig{});
  const auto report = bidirectional_eval(split.test_a, split.test_b, p);
  const LabeledFeatureSet fa = encode_set(p, split.test_a), fb = encode_set(p, split.test_b);
  const auto ra = testutil::to_rows(fa.features), rb = testutil::to_rows(fb.features);
  REQUIRE(report.size() == 3u);
  for (const auto& r : report) {
    const double ab = oracle::prec_at_k(ra, fa.labels, rb, fb.labels, r.k);
    const double ba = oracle::prec_at_k(rb, fb.labels, ra, fa.labels, r.k);
    CHECK(r.a_to_b == ab);
    CHECK(r.b_to_a == ba);
    CHECK(r.average == 0.5 * (ab + ba));
  }
}

TEST_CASE("distance_to_source bounds and lookup errors") {
  auto src = make_set({{1, 0}, {0, 1}, {0.6, 0.8}}, {0, 1, 0});
  src.ids = {10, 11, 12};
  auto syn = make_set({{-1, 0}, {0, 1}, {0.8, 0.6}}, {0, 1, 0}, Domain::B);
  syn.pair_ids = {10, 11, 12};
  const double expect = ((1.0 - (-1.0)) + 0.0 + (1.0 - (0.6 * 0.8 + 0.8 * 0.6))) / 3.0;
  CHECK(distance_to_source(syn, src) == doctest::Approx(expect).epsilon(1e-15));

  auto antipodal = make_set({{-1, 0}}, {0}, Domain::B);
  antipodal.pair_ids = {10};
  CHECK(distance_to_source(antipodal, src) == 2.0);

  syn.pair_ids[1] = 99;
  CHECK_THROWS_AS(distance_to_source(syn, src), LookupError);
  syn.pair_ids[1] = std::nullopt;
  CHECK_THROWS_AS(distance_to_source(syn, src), LookupError);
}

TEST_CASE("ncm accuracy and similarity to real target on handmade instances") {
  const auto ref = make_set({{1, 0}, {0.8, 0.6}, {0, 1}, {-0.6, 0.8}}, {0, 0, 1, 1});
  const ClassMeans cm = class_means(ref);
  const oracle::Rows at_means = {{cm.means(0, 0), cm.means(0, 1)}, {cm.means(1, 0), cm.means(1, 1)}};
  CHECK(ncm_accuracy(make_set(at_means, {0, 1}), ref) == 1.0);
  CHECK(similarity_to_real_target(make_set(at_means, {0, 1}), ref) == doctest::Approx(1.0).epsilon(1e-15));

  const auto plain = make_set({{1, 0}, {0, 1}}, {0, 1});
  CHECK(similarity_to_real_target(make_set({{0, 1}, {1, 0}}, {0, 1}), plain) == 0.0);

  CHECK_THROWS_AS(ncm_accuracy(make_set({{1, 0}}, {2}), ref), ContractViolation);
  CHECK_THROWS_AS(similarity_to_real_target(make_set({{1, 0}}, {5}), ref), ContractViolation);

  // Equidistant from both means: the smaller class id wins.
  const auto sym = make_set({{1, 0}, {0, 1}}, {0, 1});
  const double h = std::sqrt(0.5);
  CHECK(ncm_accuracy(make_set({{h, h}}, {0}), sym) == 1.0);
  CHECK(ncm_accuracy(make_set({{h, h}}, {1}), sym) == 0.0);
}

TEST_CASE("oracle featurizers") {
  BenchmarkConfig cfg;
  cfg.within_class_std = 0.0;
  const Dataset d = generate_benchmark(cfg);
  const DataSplit split = make_split(d, SplitSpec{});
  const auto ident = oracle_featurize(split.test_a, Featurizer::Identity);
  for (std::size_t i = 0; i < split.test_a.size(); ++i) {
    for (std::size_t j = 0; j < ident.features.cols; ++j) {
      CHECK(std::abs(ident.features(i, j) - split.test_a[i].vec[j]) < 1e-15);
    }
  }
  const auto sem = oracle_featurize(split.test_b, Featurizer::Semantic);
  std::vector<DomainSample> ref;
  for (const auto& s : d.samples) {
    if (s.domain == Domain::B && split.assignment.at(s.instance_id) == SplitPart::Train) ref.push_back(s);
  }
  CHECK(ncm_accuracy(sem, oracle_featurize(ref, Featurizer::Semantic)) == 1.0);
  for (std::size_t i = 1; i < split.test_b.size(); ++i) {
    if (split.test_b[i].class_id == split.test_b[0].class_id) {
      CHECK(std::equal(sem.features.row(i).begin(), sem.features.row(i).end(), sem.features.row(0).begin()));
    }
  }

  auto stripped = split.test_a;
  for (auto& s : stripped) s.latent.clear();
  CHECK_THROWS_AS(oracle_featurize(stripped, Featurizer::Semantic), ContractViolation);
}

TEST_CASE("p_keep = 0 under ideal rendering gives zero NCM accuracy") {
  BenchmarkConfig cfg;
  cfg.within_class_std = 0.0;
  const Dataset d = generate_benchmark(cfg);
  const DataSplit split = make_split(d, SplitSpec{});
  TranslationConfig tc;
  tc.p_keep = 0.0;
  const auto syn = generate_synthetic_set(d, split.train_a, Domain::B, tc);
  std::vector<DomainSample> ref;
  for (const auto& s : d.samples) {
    if (s.domain == Domain::B && split.assignment.at(s.instance_id) == SplitPart::Train) ref.push_back(s);
  }
  CHECK(ncm_accuracy(oracle_featurize(syn, Featurizer::Identity), oracle_featurize(ref, Featurizer::Identity)) == 0.0);
}

TEST_CASE("aggregation") {
  const std::vector<double> v = {0.2, 0.4, 0.9};
  const MeanStd ms = mean_std(v);
  CHECK(ms.mean == doctest::Approx(0.5));
  CHECK(ms.std == doctest::Approx(std::sqrt(((0.09) + (0.01) + (0.16)) / 2.0)));
  CHECK(mean_std(std::vector<double>{0.3}).std == 0.0);
  const std::vector<double> stds = {0.1, 0.3};
  CHECK(pooled_std(stds) == doctest::Approx(std::sqrt((0.01 + 0.09) / 2.0)));
}

TEST_CASE("a class whose reference rows cancel has a zero mean") {
  const auto ref = make_set({{1, 0}, {-1, 0}, {0, 1}}, {0, 0, 1});
  const ClassMeans cm = class_means(ref);
  CHECK(cm.means(0, 0) == 0.0);
  CHECK(cm.means(0, 1) == 0.0);
  CHECK(similarity_to_real_target(make_set({{1, 0}}, {0}), ref) == 0.0);
  // Both classes score 0 against (1, 0); the tie goes to class 0.
  CHECK(ncm_accuracy(make_set({{1, 0}}, {0}), ref) == 1.0);
  CHECK(ncm_accuracy(make_set({{1, 0}}, {1}), ref) == 0.0);
}
