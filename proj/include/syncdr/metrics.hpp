#pragma once

// Cross-domain retrieval metrics and the synthetic-data analysis metrics
// (distance to source, nearest-class-mean accuracy, similarity to the real
// target class mean), plus the oracle featurizers used to compute them.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "syncdr/benchmark.hpp"
#include "syncdr/encoder.hpp"
#include "syncdr/matrix.hpp"

namespace syncdr {

struct LabeledFeatureSet {
  Matrix features;  ///< unit-norm rows
  std::vector<int> labels;
  Domain domain = Domain::A;
  std::vector<std::int64_t> ids;
  std::vector<std::optional<std::int64_t>> pair_ids;

  std::size_t size() const { return features.rows; }
  void validate() const;
};

enum class Featurizer {
  Identity,  ///< row-normalized observables
  Semantic,  ///< row-normalized hidden latents (upper-bound oracle)
};

/// Labels are the labels each sample is supposed to carry: the class for real
/// samples, the source's class for synthetic ones.
LabeledFeatureSet oracle_featurize(std::span<const DomainSample> samples, Featurizer mode);

/// Features produced by a trained encoder.
LabeledFeatureSet encode_set(const EncoderParams& params, std::span<const DomainSample> samples);

/// Mean over queries of the fraction of the top-K gallery items (descending
/// cosine similarity, ties to the lower gallery index) sharing the query's
/// label.
double prec_at_k(const LabeledFeatureSet& queries, const LabeledFeatureSet& gallery, int k);

inline constexpr int kDefaultKsArray[] = {1, 5, 15};
inline constexpr std::span<const int> kDefaultKs{kDefaultKsArray};

struct PrecisionAtK {
  int k = 1;
  double a_to_b = 0.0;
  double b_to_a = 0.0;
  double average = 0.0;
};

std::vector<PrecisionAtK> bidirectional_prec(const LabeledFeatureSet& set_a,
                                             const LabeledFeatureSet& set_b,
                                             std::span<const int> ks);

std::vector<PrecisionAtK> bidirectional_eval(std::span<const DomainSample> test_a,
                                             std::span<const DomainSample> test_b,
                                             const EncoderParams& params,
                                             std::span<const int> ks = kDefaultKs);

/// Mean of 1 - cos(source, synthetic) over synthetic rows, sources resolved
/// through pair ids.
double distance_to_source(const LabeledFeatureSet& synthetic, const LabeledFeatureSet& sources);

/// Unit-normalized per-class means of `reference`, indexed by class id
/// (rows of absent classes are left empty and flagged in `present`). A class
/// whose reference rows sum to zero keeps a zero mean.
struct ClassMeans {
  Matrix means;
  std::vector<bool> present;
};
ClassMeans class_means(const LabeledFeatureSet& reference);

/// Accuracy of nearest-class-mean prediction (ties to the smaller class id)
/// against each synthetic sample's label.
double ncm_accuracy(const LabeledFeatureSet& synthetic, const LabeledFeatureSet& reference);

/// Mean cosine between each synthetic row and the normalized mean of the real
/// target rows of the same label.
double similarity_to_real_target(const LabeledFeatureSet& synthetic,
                                 const LabeledFeatureSet& real_target);

struct SyntheticAnalysis {
  double distance_to_source = 0.0;
  double ncm_accuracy = 0.0;
  double similarity_to_real_target = 0.0;
};

/// Averages each metric over the two translation directions. `syn_b` holds
/// translations of `real_a` into B (scored against `reference_b`), and vice
/// versa.
SyntheticAnalysis analyze_synthetic(std::span<const DomainSample> syn_b,
                                    std::span<const DomainSample> syn_a,
                                    std::span<const DomainSample> real_a,
                                    std::span<const DomainSample> real_b,
                                    std::span<const DomainSample> reference_a,
                                    std::span<const DomainSample> reference_b, Featurizer mode);

// ---------------------------------------------------------------------------
// Aggregation

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1); 0 for n < 2
};

MeanStd mean_std(std::span<const double> values);

/// sqrt of the mean of per-scenario variances.
double pooled_std(std::span<const double> stds);

}  // namespace syncdr
