#pragma once

// Minibatch SGD with classical momentum, per-epoch validation and early
// stopping on bidirectional validation Prec@1.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "syncdr/benchmark.hpp"
#include "syncdr/encoder.hpp"
#include "syncdr/losses.hpp"

namespace syncdr {

struct TrainConfig {
  double learning_rate = 0.003;
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 15;
  std::uint64_t seed = 5;
  int selection_k = 1;

  void validate() const;
};

enum class Objective {
  SelfSupervised,  ///< CDS terms (as weighted) plus optional PPP
  Distill,         ///< similarity distillation from the semantic oracle
};

/// Real training pools and their translations: `syn_b` holds the
/// translations of `train_a` into B, `syn_a` those of `train_b` into A.
/// Either synthetic set may be empty.
struct TrainingData {
  std::span<const DomainSample> train_a, train_b;
  std::span<const DomainSample> syn_a, syn_b;
  std::span<const DomainSample> val_a, val_b;
};

/// Indices of one optimization step. `syn_b[i]` pairs with `real_a[i]` and
/// `syn_a[i]` with `real_b[i]` (empty when no synthetic data is used).
struct StepBatch {
  std::vector<std::size_t> real_a, syn_b;
  std::vector<std::size_t> real_b, syn_a;
};

/// One epoch of steps: ceil(larger pool / m) steps, each pool walked through
/// a fresh permutation (the smaller pool draws another permutation when it
/// runs out).
std::vector<StepBatch> build_batches(std::span<const DomainSample> train_a,
                                     std::span<const DomainSample> train_b,
                                     std::span<const DomainSample> syn_a,
                                     std::span<const DomainSample> syn_b, int batch_size,
                                     std::uint64_t epoch_seed);

/// v <- momentum * v + g; p <- p - lr * v. Throws DivergenceError on a
/// non-finite gradient.
void sgd_step(std::span<ad::Tensor> params, std::vector<std::vector<double>>& velocity,
              double learning_rate, double momentum);

struct EpochRecord {
  int epoch = 0;
  double id_a = 0.0, id_b = 0.0;
  double cross_a = 0.0, cross_b = 0.0;
  double ppp_a = 0.0, ppp_b = 0.0;
  double distill = 0.0;
  double total = 0.0;
  double val_prec1 = 0.0;
};

struct TrainResult {
  EncoderParams best;
  int best_epoch = 0;  ///< 0 when no epoch ran
  double best_val_prec1 = 0.0;
  double initial_val_prec1 = 0.0;
  std::vector<EpochRecord> history;
};

TrainResult train(const TrainingData& data, const EncoderConfig& encoder, const LossWeights& weights,
                  const TrainConfig& config, Objective objective = Objective::SelfSupervised);

/// Bidirectional Prec@K averaged over directions, used for model selection.
double validation_precision(const EncoderParams& params, std::span<const DomainSample> val_a,
                            std::span<const DomainSample> val_b, int k);

void write_history_csv(const std::string& path, std::span<const EpochRecord> history);

}  // namespace syncdr
