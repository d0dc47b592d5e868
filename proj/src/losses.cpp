#include "syncdr/losses.hpp"

#include <cmath>

#include "syncdr/errors.hpp"

namespace syncdr {

MemoryBank::MemoryBank(std::vector<std::int64_t> ids, Matrix features, double momentum,
                       double temperature)
    : ids_(std::move(ids)), rows_(std::move(features)), momentum_(momentum), temperature_(temperature) {
  if (ids_.size() != rows_.rows) throw AlignmentError("memory bank: id count differs from row count");
  if (!(momentum_ >= 0.0 && momentum_ < 1.0)) throw ConfigError("memory bank: momentum must lie in [0, 1)");
  if (!(temperature_ > 0.0)) throw ConfigError("memory bank: temperature must be positive");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw AlignmentError("memory bank: duplicate instance id " + std::to_string(ids_[i]));
    }
  }
}

std::size_t MemoryBank::row_of(std::int64_t id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("memory bank: unknown instance id " + std::to_string(id));
  return it->second;
}

void MemoryBank::update(std::span<const std::int64_t> ids, const Matrix& new_features) {
  if (ids.size() != new_features.rows || new_features.cols != rows_.cols) {
    throw AlignmentError("memory bank update: feature matrix does not match ids/bank width");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto row = rows_.row(row_of(ids[i]));
    const auto f = new_features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = momentum_ * row[j] + (1.0 - momentum_) * f[j];
    if (normalize_in_place(row) == 0.0) {
      throw DegenerateInputError("memory bank update: row for id " + std::to_string(ids[i]) + " vanished");
    }
  }
  cache_valid_ = false;
}

const ad::Tensor& MemoryBank::as_tensor() const {
  if (!cache_valid_) {
    cached_ = ad::Tensor::from_matrix(rows_, false);
    cache_valid_ = true;
  }
  return cached_;
}

void LossWeights::validate() const {
  if (!(lambda_cdm >= 0.0)) throw ConfigError("loss: lambda_cdm must be >= 0");
  if (!(tau_ppp > 0.0)) throw ConfigError("loss: tau_ppp must be positive");
  if (!(tau_bank > 0.0)) throw ConfigError("loss: tau_bank must be positive");
  if (!(bank_momentum >= 0.0 && bank_momentum < 1.0)) {
    throw ConfigError("loss: bank_momentum must lie in [0, 1)");
  }
}

ad::Tensor ppp_loss(ad::Graph& g, const ad::Tensor& real, const ad::Tensor& synthetic, double tau) {
  if (real.rank() != 2 || synthetic.rank() != 2 || real.rows() != synthetic.rows()) {
    throw AlignmentError("ppp_loss: real " + ad::shape_string(real.shape()) + " and synthetic " +
                         ad::shape_string(synthetic.shape()) + " are not row-aligned");
  }
  const double inv_tau = 1.0 / tau;
  const ad::Tensor real_to_syn = g.scale(g.matmul_bt(real, synthetic), inv_tau);
  const ad::Tensor syn_to_real = g.scale(g.matmul_bt(synthetic, real), inv_tau);
  const ad::Tensor forward = g.mean(g.diagonal(g.log_softmax_rows(real_to_syn)));
  const ad::Tensor backward = g.mean(g.diagonal(g.log_softmax_rows(syn_to_real)));
  return g.scale(g.add(forward, backward), -1.0);
}

ad::Tensor id_loss(ad::Graph& g, const ad::Tensor& features, std::span<const std::int64_t> ids,
                   const MemoryBank& bank) {
  if (features.rows() != ids.size()) throw AlignmentError("id_loss: one instance id per feature row required");
  if (bank.empty()) throw ContractViolation("id_loss: empty memory bank");
  std::vector<std::size_t> own(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) own[i] = bank.row_of(ids[i]);
  const ad::Tensor logits = g.scale(g.matmul_bt(features, bank.as_tensor()), 1.0 / bank.temperature());
  return g.scale(g.mean(g.pick(g.log_softmax_rows(logits), own)), -1.0);
}

ad::Tensor cross_domain_entropy(ad::Graph& g, const ad::Tensor& features, const MemoryBank& other_bank) {
  if (other_bank.empty()) throw ContractViolation("cross_domain_entropy: empty memory bank");
  const ad::Tensor logits =
      g.scale(g.matmul_bt(features, other_bank.as_tensor()), 1.0 / other_bank.temperature());
  return g.mean(g.entropy_rows(g.softmax_rows(logits)));
}

CdsTerms cds_loss(ad::Graph& g, const DomainBatch& batch_a, const DomainBatch& batch_b,
                  const MemoryBank& bank_a, const MemoryBank& bank_b, const LossWeights& w) {
  CdsTerms t;
  t.id_a = id_loss(g, batch_a.features, batch_a.ids, bank_a);
  t.id_b = id_loss(g, batch_b.features, batch_b.ids, bank_b);
  t.total = g.add(t.id_a, t.id_b);
  if (w.lambda_cdm > 0.0) {
    t.cross_a = cross_domain_entropy(g, batch_a.features, bank_b);
    t.cross_b = cross_domain_entropy(g, batch_b.features, bank_a);
    t.total = g.add(t.total, g.scale(g.add(t.cross_a, t.cross_b), w.lambda_cdm));
  }
  return t;
}

TotalTerms total_loss(ad::Graph& g, const DomainBatch& batch_a, const DomainBatch& batch_b,
                      const MemoryBank& bank_a, const MemoryBank& bank_b,
                      const PppPairs& pairs_a, const PppPairs& pairs_b, const LossWeights& w) {
  TotalTerms t;
  t.cds = cds_loss(g, batch_a, batch_b, bank_a, bank_b, w);
  t.total = t.cds.total;
  if (w.use_ppp) {
    t.ppp_a = ppp_loss(g, pairs_a.real, pairs_a.synthetic, w.tau_ppp);
    t.ppp_b = ppp_loss(g, pairs_b.real, pairs_b.synthetic, w.tau_ppp);
    t.total = g.add(t.total, g.scale(g.add(t.ppp_a, t.ppp_b), 0.5));
  }
  return t;
}

DistillTerms distill_loss(ad::Graph& g, const ad::Tensor& student_a, const ad::Tensor& student_b,
                          const ad::Tensor& teacher_a, const ad::Tensor& teacher_b) {
  if (student_a.rank() != 2 || student_b.rank() != 2 || teacher_a.rank() != 2 || teacher_b.rank() != 2 ||
      student_a.rows() != teacher_a.rows() || student_b.rows() != teacher_b.rows() ||
      student_a.cols() != student_b.cols() || teacher_a.cols() != teacher_b.cols()) {
    throw AlignmentError("distill_loss: student " + ad::shape_string(student_a.shape()) + "/" +
                         ad::shape_string(student_b.shape()) + " and teacher " +
                         ad::shape_string(teacher_a.shape()) + "/" +
                         ad::shape_string(teacher_b.shape()) + " are not aligned");
  }
  // Teacher similarities never carry gradient.
  const ad::Tensor ta_c =
      ad::Tensor::constant(teacher_a.shape(), {teacher_a.values().begin(), teacher_a.values().end()});
  const ad::Tensor tb_c =
      ad::Tensor::constant(teacher_b.shape(), {teacher_b.values().begin(), teacher_b.values().end()});

  auto term = [&g](const ad::Tensor& s_x, const ad::Tensor& s_set, const ad::Tensor& t_x,
                   const ad::Tensor& t_set) {
    const ad::Tensor p = g.softmax_rows(g.matmul_bt(s_x, s_set));
    const ad::Tensor q = g.softmax_rows(g.matmul_bt(t_x, t_set));
    return g.mean(g.kl_rows(p, q));
  };
  DistillTerms t;
  t.a_to_b = term(student_a, student_b, ta_c, tb_c);
  t.a_to_a = term(student_a, student_a, ta_c, ta_c);
  t.b_to_a = term(student_b, student_a, tb_c, ta_c);
  t.b_to_b = term(student_b, student_b, tb_c, tb_c);
  t.total = g.add(g.add(t.a_to_b, t.a_to_a), g.add(t.b_to_a, t.b_to_b));
  return t;
}

}  // namespace syncdr
