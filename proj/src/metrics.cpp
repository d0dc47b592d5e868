#include "syncdr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "syncdr/errors.hpp"

namespace syncdr {

void LabeledFeatureSet::validate() const {
  if (labels.size() != features.rows) throw AlignmentError("feature set: labels and rows differ in length");
  if (!ids.empty() && ids.size() != features.rows) throw AlignmentError("feature set: ids and rows differ in length");
  for (std::size_t r = 0; r < features.rows; ++r) {
    if (std::abs(l2_norm(features.row(r)) - 1.0) > 1e-9) {
      throw ContractViolation("feature set: row " + std::to_string(r) + " is not unit-norm");
    }
  }
}

LabeledFeatureSet oracle_featurize(std::span<const DomainSample> samples, Featurizer mode) {
  LabeledFeatureSet out;
  if (samples.empty()) return out;
  out.domain = samples.front().domain;
  const std::size_t dim = mode == Featurizer::Identity ? samples.front().vec.size()
                                                       : samples.front().latent.size();
  if (mode == Featurizer::Semantic && dim == 0) {
    throw ContractViolation("oracle_featurize: semantic mode requires latents");
  }
  out.features = Matrix(samples.size(), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const DomainSample& s = samples[i];
    const std::vector<double>& src = mode == Featurizer::Identity ? s.vec : s.latent;
    if (src.size() != dim) {
      throw ContractViolation(mode == Featurizer::Semantic
                                  ? "oracle_featurize: sample " + std::to_string(s.instance_id) + " has no latent"
                                  : "oracle_featurize: inconsistent vector lengths");
    }
    auto row = out.features.row(i);
    std::copy(src.begin(), src.end(), row.begin());
    normalize_in_place(row);
    out.labels.push_back(s.source_class_id);
    out.ids.push_back(s.instance_id);
    out.pair_ids.push_back(s.pair_id);
  }
  return out;
}

LabeledFeatureSet encode_set(const EncoderParams& params, std::span<const DomainSample> samples) {
  LabeledFeatureSet out;
  if (samples.empty()) return out;
  out.domain = samples.front().domain;
  Matrix inputs(samples.size(), samples.front().vec.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].vec.size() != inputs.cols) throw DimensionError("encode_set: inconsistent vector lengths");
    std::copy(samples[i].vec.begin(), samples[i].vec.end(), inputs.row(i).begin());
    out.labels.push_back(samples[i].source_class_id);
    out.ids.push_back(samples[i].instance_id);
    out.pair_ids.push_back(samples[i].pair_id);
  }
  out.features = encode(params, inputs);
  return out;
}

double prec_at_k(const LabeledFeatureSet& queries, const LabeledFeatureSet& gallery, int k) {
  if (gallery.size() == 0) throw ContractViolation("prec_at_k: empty gallery");
  if (queries.size() == 0) throw ContractViolation("prec_at_k: no queries");
  if (k < 1 || static_cast<std::size_t>(k) > gallery.size()) {
    throw ContractViolation("prec_at_k: K=" + std::to_string(k) + " outside [1, " +
                            std::to_string(gallery.size()) + "]");
  }
  if (queries.features.cols != gallery.features.cols) throw DimensionError("prec_at_k: feature widths differ");

  const std::size_t n = gallery.size();
  const auto K = static_cast<std::size_t>(k);
  std::vector<double> sims(n);
  std::vector<std::size_t> order(n);
  double total = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto qrow = queries.features.row(q);
    for (std::size_t j = 0; j < n; ++j) sims[j] = dot(qrow, gallery.features.row(j));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K), order.end(),
                      [&sims](std::size_t x, std::size_t y) {
                        return sims[x] > sims[y] || (sims[x] == sims[y] && x < y);
                      });
    std::size_t hits = 0;
    for (std::size_t t = 0; t < K; ++t) hits += gallery.labels[order[t]] == queries.labels[q] ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(K);
  }
  return total / static_cast<double>(queries.size());
}

std::vector<PrecisionAtK> bidirectional_prec(const LabeledFeatureSet& set_a, const LabeledFeatureSet& set_b,
                                             std::span<const int> ks) {
  std::vector<PrecisionAtK> out;
  for (int k : ks) {
    PrecisionAtK p;
    p.k = k;
    p.a_to_b = prec_at_k(set_a, set_b, k);
    p.b_to_a = prec_at_k(set_b, set_a, k);
    p.average = 0.5 * (p.a_to_b + p.b_to_a);
    out.push_back(p);
  }
  return out;
}

std::vector<PrecisionAtK> bidirectional_eval(std::span<const DomainSample> test_a,
                                             std::span<const DomainSample> test_b,
                                             const EncoderParams& params, std::span<const int> ks) {
  if (test_a.empty() || test_b.empty()) throw ContractViolation("bidirectional_eval: empty test set");
  return bidirectional_prec(encode_set(params, test_a), encode_set(params, test_b), ks);
}

double distance_to_source(const LabeledFeatureSet& synthetic, const LabeledFeatureSet& sources) {
  if (synthetic.size() == 0) throw ContractViolation("distance_to_source: empty synthetic set");
  std::unordered_map<std::int64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < sources.ids.size(); ++i) by_id.emplace(sources.ids[i], i);
  double total = 0.0;
  for (std::size_t i = 0; i < synthetic.size(); ++i) {
    const auto& pid = synthetic.pair_ids.at(i);
    if (!pid) throw LookupError("distance_to_source: synthetic row " + std::to_string(i) + " has no pair id");
    const auto it = by_id.find(*pid);
    if (it == by_id.end()) throw LookupError("distance_to_source: dangling pair id " + std::to_string(*pid));
    total += 1.0 - dot(sources.features.row(it->second), synthetic.features.row(i));
  }
  return total / static_cast<double>(synthetic.size());
}

ClassMeans class_means(const LabeledFeatureSet& reference) {
  int max_label = -1;
  for (int l : reference.labels) max_label = std::max(max_label, l);
  ClassMeans cm;
  const auto C = static_cast<std::size_t>(max_label + 1);
  cm.means = Matrix(C, reference.features.cols);
  cm.present.assign(C, false);
  for (std::size_t r = 0; r < reference.size(); ++r) {
    const auto c = static_cast<std::size_t>(reference.labels[r]);
    cm.present[c] = true;
    auto mean = cm.means.row(c);
    const auto f = reference.features.row(r);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += f[j];
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (cm.present[c]) normalize_in_place(cm.means.row(c));
  }
  return cm;
}

namespace {

const ClassMeans& require_classes(const ClassMeans& cm, const LabeledFeatureSet& synthetic, const char* op) {
  for (int l : synthetic.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= cm.present.size() || !cm.present[static_cast<std::size_t>(l)]) {
      throw ContractViolation(std::string(op) + ": class " + std::to_string(l) + " missing from reference");
    }
  }
  return cm;
}

}  // namespace

double ncm_accuracy(const LabeledFeatureSet& synthetic, const LabeledFeatureSet& reference) {
  if (synthetic.size() == 0) throw ContractViolation("ncm_accuracy: empty synthetic set");
  const ClassMeans cm = class_means(reference);
  require_classes(cm, synthetic, "ncm_accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < synthetic.size(); ++i) {
    const auto f = synthetic.features.row(i);
    int best = -1;
    double best_sim = 0.0;
    for (std::size_t c = 0; c < cm.present.size(); ++c) {
      if (!cm.present[c]) continue;
      const double s = dot(f, cm.means.row(c));
      if (best < 0 || s > best_sim) {
        best = static_cast<int>(c);
        best_sim = s;
      }
    }
    correct += best == synthetic.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(synthetic.size());
}

double similarity_to_real_target(const LabeledFeatureSet& synthetic, const LabeledFeatureSet& real_target) {
  if (synthetic.size() == 0) throw ContractViolation("similarity_to_real_target: empty synthetic set");
  const ClassMeans cm = class_means(real_target);
  require_classes(cm, synthetic, "similarity_to_real_target");
  double total = 0.0;
  for (std::size_t i = 0; i < synthetic.size(); ++i) {
    total += dot(synthetic.features.row(i), cm.means.row(static_cast<std::size_t>(synthetic.labels[i])));
  }
  return total / static_cast<double>(synthetic.size());
}

SyntheticAnalysis analyze_synthetic(std::span<const DomainSample> syn_b, std::span<const DomainSample> syn_a,
                                    std::span<const DomainSample> real_a, std::span<const DomainSample> real_b,
                                    std::span<const DomainSample> reference_a,
                                    std::span<const DomainSample> reference_b, Featurizer mode) {
  const auto fb = oracle_featurize(syn_b, mode);
  const auto fa = oracle_featurize(syn_a, mode);
  const auto src_a = oracle_featurize(real_a, mode);
  const auto src_b = oracle_featurize(real_b, mode);
  const auto ref_a = oracle_featurize(reference_a, mode);
  const auto ref_b = oracle_featurize(reference_b, mode);
  SyntheticAnalysis out;
  out.distance_to_source = 0.5 * (distance_to_source(fb, src_a) + distance_to_source(fa, src_b));
  out.ncm_accuracy = 0.5 * (ncm_accuracy(fb, ref_b) + ncm_accuracy(fa, ref_a));
  out.similarity_to_real_target =
      0.5 * (similarity_to_real_target(fb, ref_b) + similarity_to_real_target(fa, ref_a));
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

double pooled_std(std::span<const double> stds) {
  if (stds.empty()) return 0.0;
  double s = 0.0;
  for (double x : stds) s += x * x;
  return std::sqrt(s / static_cast<double>(stds.size()));
}

}  // namespace syncdr
