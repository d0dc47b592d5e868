#include "syncdr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "syncdr/errors.hpp"
#include "syncdr/metrics.hpp"
#include "syncdr/rng.hpp"

namespace syncdr {

namespace {

/// For each real sample, the index of its translation; empty when there is
/// no synthetic set.
std::vector<std::size_t> pair_alignment(std::span<const DomainSample> real,
                                        std::span<const DomainSample> synthetic, const char* which) {
  if (synthetic.empty()) return {};
  if (synthetic.size() != real.size()) {
    throw AlignmentError(std::string("build_batches: ") + which + " has " + std::to_string(synthetic.size()) +
                         " synthetic samples for " + std::to_string(real.size()) + " real ones");
  }
  std::unordered_map<std::int64_t, std::size_t> by_pair;
  for (std::size_t j = 0; j < synthetic.size(); ++j) {
    if (!synthetic[j].pair_id) throw AlignmentError(std::string("build_batches: ") + which + " sample without pair id");
    if (!by_pair.emplace(*synthetic[j].pair_id, j).second) {
      throw AlignmentError(std::string("build_batches: ") + which + " pair id " +
                           std::to_string(*synthetic[j].pair_id) + " used twice");
    }
  }
  std::vector<std::size_t> out(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    const auto it = by_pair.find(real[i].instance_id);
    if (it == by_pair.end()) {
      throw AlignmentError(std::string("build_batches: ") + which + " lacks a translation of instance " +
                           std::to_string(real[i].instance_id));
    }
    out[i] = it->second;
  }
  return out;
}

/// Concatenated permutations of [0, pool), long enough for `needed` draws.
std::vector<std::size_t> index_stream(std::size_t pool, std::size_t needed, std::uint64_t seed,
                                      std::string_view tag) {
  std::vector<std::size_t> out;
  for (std::uint64_t round = 0; out.size() < needed; ++round) {
    std::vector<std::size_t> perm(pool);
    for (std::size_t i = 0; i < pool; ++i) perm[i] = i;
    RandomStream stream(seed, tag, round);
    stream.shuffle(perm);
    out.insert(out.end(), perm.begin(), perm.end());
  }
  out.resize(needed);
  return out;
}

Matrix stack_vectors(std::span<const DomainSample> pool, std::span<const std::size_t> idx,
                     bool latent = false) {
  const std::size_t dim = latent ? pool[idx[0]].latent.size() : pool[idx[0]].vec.size();
  Matrix m(idx.size(), dim);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto& v = latent ? pool[idx[r]].latent : pool[idx[r]].vec;
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

std::vector<std::int64_t> gather_ids(std::span<const DomainSample> pool, std::span<const std::size_t> idx) {
  std::vector<std::int64_t> ids(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) ids[r] = pool[idx[r]].instance_id;
  return ids;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

MemoryBank initial_bank(const EncoderParams& params, std::span<const DomainSample> real,
                        std::span<const DomainSample> synthetic, const LossWeights& w) {
  std::vector<DomainSample> pool(real.begin(), real.end());
  pool.insert(pool.end(), synthetic.begin(), synthetic.end());
  const auto idx = all_indices(pool.size());
  return MemoryBank(gather_ids(pool, idx), encode(params, stack_vectors(pool, idx)), w.bank_momentum,
                    w.tau_bank);
}

double value_or_zero(const ad::Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (selection_k < 1) throw ConfigError("train: selection_k must be positive");
}

std::vector<StepBatch> build_batches(std::span<const DomainSample> train_a, std::span<const DomainSample> train_b,
                                     std::span<const DomainSample> syn_a, std::span<const DomainSample> syn_b,
                                     int batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ConfigError("build_batches: batch size must be positive");
  if (train_a.empty() || train_b.empty()) throw ContractViolation("build_batches: empty training pool");
  const auto align_b = pair_alignment(train_a, syn_b, "syn_b");
  const auto align_a = pair_alignment(train_b, syn_a, "syn_a");

  const auto m = static_cast<std::size_t>(batch_size);
  const std::size_t larger = std::max(train_a.size(), train_b.size());
  const std::size_t steps = (larger + m - 1) / m;
  const auto order_a = index_stream(train_a.size(), larger, epoch_seed, "pool-a");
  const auto order_b = index_stream(train_b.size(), larger, epoch_seed, "pool-b");

  std::vector<StepBatch> out(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t begin = s * m;
    const std::size_t end = std::min(begin + m, larger);
    StepBatch& step = out[s];
    for (std::size_t p = begin; p < end; ++p) {
      step.real_a.push_back(order_a[p]);
      step.real_b.push_back(order_b[p]);
      if (!align_b.empty()) step.syn_b.push_back(align_b[order_a[p]]);
      if (!align_a.empty()) step.syn_a.push_back(align_a[order_b[p]]);
    }
  }
  return out;
}

void sgd_step(std::span<ad::Tensor> params, std::vector<std::vector<double>>& velocity, double learning_rate,
              double momentum) {
  if (velocity.size() != params.size()) velocity.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Tensor& p = params[k];
    auto& v = velocity[k];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    const auto g = p.grad();
    const bool has_grad = p.has_grad();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      if (!std::isfinite(gi)) {
        throw DivergenceError("sgd_step: non-finite gradient in parameter tensor " + std::to_string(k) +
                              " at coordinate " + std::to_string(i));
      }
      v[i] = momentum * v[i] + gi;
    }
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      values[i] -= learning_rate * v[i];
      if (!std::isfinite(values[i])) {
        throw DivergenceError("sgd_step: parameter tensor " + std::to_string(k) + " overflowed at coordinate " +
                              std::to_string(i));
      }
    }
  }
}

double validation_precision(const EncoderParams& params, std::span<const DomainSample> val_a,
                            std::span<const DomainSample> val_b, int k) {
  const int ks[] = {k};
  return bidirectional_eval(val_a, val_b, params, ks).front().average;
}

TrainResult train(const TrainingData& data, const EncoderConfig& encoder, const LossWeights& weights,
                  const TrainConfig& config, Objective objective) {
  config.validate();
  weights.validate();
  const std::size_t smallest = std::min(data.train_a.size(), data.train_b.size());
  if (static_cast<std::size_t>(config.batch_size) > smallest) {
    throw ConfigError("train: batch_size " + std::to_string(config.batch_size) +
                      " exceeds the smallest training pool (" + std::to_string(smallest) + ")");
  }

  if (objective == Objective::Distill) {
    for (const auto pool : {data.train_a, data.train_b}) {
      for (const DomainSample& s : pool) {
        if (s.latent.empty()) {
          throw ContractViolation("distill: training sample " + std::to_string(s.instance_id) +
                                  " has no latent; the semantic teacher needs oracle latents");
        }
      }
    }
  }

  EncoderParams params = init_encoder(encoder);
  std::vector<ad::Tensor> tensors = params.tensors();
  std::vector<std::vector<double>> velocity(tensors.size());

  TrainResult result;
  result.initial_val_prec1 = validation_precision(params, data.val_a, data.val_b, config.selection_k);
  result.best = params.clone();
  result.best_val_prec1 = result.initial_val_prec1;
  if (config.epochs == 0) return result;

  const bool self_supervised = objective == Objective::SelfSupervised;
  MemoryBank bank_a, bank_b;
  if (self_supervised) {
    bank_a = initial_bank(params, data.train_a, data.syn_a, weights);
    bank_b = initial_bank(params, data.train_b, data.syn_b, weights);
  }
  const bool use_ppp = self_supervised && weights.use_ppp && !data.syn_a.empty() && !data.syn_b.empty();
  LossWeights step_weights = weights;
  step_weights.use_ppp = use_ppp;

  double best = -std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto steps = build_batches(data.train_a, data.train_b, data.syn_a, data.syn_b, config.batch_size,
                                     mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const StepBatch& step = steps[s];
      ad::Graph g;
      auto forward = [&](std::span<const DomainSample> pool, std::span<const std::size_t> idx) {
        return encoder_forward(g, params, ad::Tensor::from_matrix(stack_vectors(pool, idx)));
      };
      const ad::Tensor f_real_a = forward(data.train_a, step.real_a);
      const ad::Tensor f_real_b = forward(data.train_b, step.real_b);

      ad::Tensor loss;
      std::vector<std::int64_t> ids_a, ids_b;
      ad::Tensor f_batch_a, f_batch_b;
      try {
        if (self_supervised) {
          ids_a = gather_ids(data.train_a, step.real_a);
          ids_b = gather_ids(data.train_b, step.real_b);
          f_batch_a = f_real_a;
          f_batch_b = f_real_b;
          ad::Tensor f_syn_a, f_syn_b;
          if (!step.syn_a.empty()) {
            f_syn_a = forward(data.syn_a, step.syn_a);
            f_batch_a = g.concat_rows(f_real_a, f_syn_a);
            const auto extra = gather_ids(data.syn_a, step.syn_a);
            ids_a.insert(ids_a.end(), extra.begin(), extra.end());
          }
          if (!step.syn_b.empty()) {
            f_syn_b = forward(data.syn_b, step.syn_b);
            f_batch_b = g.concat_rows(f_real_b, f_syn_b);
            const auto extra = gather_ids(data.syn_b, step.syn_b);
            ids_b.insert(ids_b.end(), extra.begin(), extra.end());
          }
          const TotalTerms t = total_loss(g, {f_batch_a, ids_a}, {f_batch_b, ids_b}, bank_a, bank_b,
                                          {f_real_a, f_syn_b}, {f_real_b, f_syn_a}, step_weights);
          rec.id_a += t.cds.id_a.item();
          rec.id_b += t.cds.id_b.item();
          rec.cross_a += value_or_zero(t.cds.cross_a);
          rec.cross_b += value_or_zero(t.cds.cross_b);
          rec.ppp_a += value_or_zero(t.ppp_a);
          rec.ppp_b += value_or_zero(t.ppp_b);
          loss = t.total;
        } else {
          const ad::Tensor teacher_a = ad::Tensor::from_matrix(stack_vectors(data.train_a, step.real_a, true));
          const ad::Tensor teacher_b = ad::Tensor::from_matrix(stack_vectors(data.train_b, step.real_b, true));
          const DistillTerms t = distill_loss(g, f_real_a, f_real_b, g.row_l2_normalize(teacher_a),
                                              g.row_l2_normalize(teacher_b));
          rec.distill += t.total.item();
          loss = t.total;
        }
        if (!std::isfinite(loss.item())) throw DivergenceError("non-finite loss");
        g.backward(loss);
        sgd_step(tensors, velocity, config.learning_rate, config.momentum);
      } catch (const DivergenceError& e) {
        throw DivergenceError("epoch " + std::to_string(epoch) + ", step " + std::to_string(s) + ": " + e.what());
      }
      rec.total += loss.item();

      if (self_supervised) {
        bank_a.update(ids_a, f_batch_a.to_matrix());
        bank_b.update(ids_b, f_batch_b.to_matrix());
      }
    }
    const double n = static_cast<double>(steps.size());
    for (double* v : {&rec.id_a, &rec.id_b, &rec.cross_a, &rec.cross_b, &rec.ppp_a, &rec.ppp_b, &rec.distill,
                      &rec.total}) {
      *v /= n;
    }
    rec.val_prec1 = validation_precision(params, data.val_a, data.val_b, config.selection_k);
    result.history.push_back(rec);
    if (rec.val_prec1 > best) {
      best = rec.val_prec1;
      result.best = params.clone();
      result.best_epoch = epoch;
      result.best_val_prec1 = rec.val_prec1;
    }
  }
  return result;
}

void write_history_csv(const std::string& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,id_a,id_b,cross_a,cross_b,ppp_a,ppp_b,distill,total,val_prec1\n";
  char buf[64];
  for (const EpochRecord& r : history) {
    out << r.epoch;
    for (double v : {r.id_a, r.id_b, r.cross_a, r.cross_b, r.ppp_a, r.ppp_b, r.distill, r.total, r.val_prec1}) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace syncdr
