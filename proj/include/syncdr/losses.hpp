#pragma once

// Training objectives: the pseudo-positive-pair contrastive loss, the
// cross-domain self-supervision criterion (memory-bank instance
// discrimination within a domain plus entropy minimization against the other
// domain's bank), their combination, and similarity distillation.

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "syncdr/autodiff.hpp"
#include "syncdr/matrix.hpp"

namespace syncdr {

/// One running unit-norm feature per training instance of a domain pool.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(std::vector<std::int64_t> ids, Matrix features, double momentum = 0.5,
             double temperature = 0.05);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  double momentum() const { return momentum_; }
  double temperature() const { return temperature_; }
  const Matrix& features() const { return rows_; }
  const std::vector<std::int64_t>& ids() const { return ids_; }

  /// Row of `id`; throws LookupError when absent.
  std::size_t row_of(std::int64_t id) const;

  /// row <- normalize(momentum * row + (1 - momentum) * feature).
  void update(std::span<const std::int64_t> ids, const Matrix& new_features);

  /// The bank as a constant tensor (no gradient ever flows into it).
  const ad::Tensor& as_tensor() const;

 private:
  std::vector<std::int64_t> ids_;
  std::unordered_map<std::int64_t, std::size_t> index_;
  Matrix rows_;
  double momentum_ = 0.5;
  double temperature_ = 0.05;
  mutable ad::Tensor cached_;
  mutable bool cache_valid_ = false;
};

struct LossWeights {
  double lambda_cdm = 1.0;    ///< weight of the cross-domain entropy terms
  double tau_ppp = 1.0;       ///< 1 reproduces the bare exponent of the PPP loss
  double tau_bank = 0.05;
  double bank_momentum = 0.5;
  bool use_ppp = true;        ///< PPP enters with the fixed coefficient 1/2

  void validate() const;
};

/// Two-directional contrastive loss; row i of `synthetic` must be the
/// translation of row i of `real`.
ad::Tensor ppp_loss(ad::Graph& g, const ad::Tensor& real, const ad::Tensor& synthetic,
                    double tau = 1.0);

/// Non-parametric instance discrimination against the bank of the same
/// domain.
ad::Tensor id_loss(ad::Graph& g, const ad::Tensor& features, std::span<const std::int64_t> ids,
                   const MemoryBank& bank);

/// Mean entropy of each feature's softmax similarity distribution over the
/// other domain's bank.
ad::Tensor cross_domain_entropy(ad::Graph& g, const ad::Tensor& features,
                                const MemoryBank& other_bank);

struct CdsTerms {
  ad::Tensor id_a, id_b, cross_a, cross_b;
  ad::Tensor total;
};

struct DomainBatch {
  ad::Tensor features;
  std::span<const std::int64_t> ids;
};

CdsTerms cds_loss(ad::Graph& g, const DomainBatch& batch_a, const DomainBatch& batch_b,
                  const MemoryBank& bank_a, const MemoryBank& bank_b, const LossWeights& w);

struct TotalTerms {
  CdsTerms cds;
  ad::Tensor ppp_a;  ///< real A against synthetic B; undefined when PPP is off
  ad::Tensor ppp_b;  ///< real B against synthetic A
  ad::Tensor total;
};

struct PppPairs {
  ad::Tensor real;
  ad::Tensor synthetic;
};

/// CDS over the augmented pools plus half the sum of the two PPP losses.
TotalTerms total_loss(ad::Graph& g, const DomainBatch& batch_a, const DomainBatch& batch_b,
                      const MemoryBank& bank_a, const MemoryBank& bank_b,
                      const PppPairs& pairs_a, const PppPairs& pairs_b, const LossWeights& w);

struct DistillTerms {
  ad::Tensor a_to_b, a_to_a, b_to_a, b_to_b;
  ad::Tensor total;
};

/// KL(student similarity distribution ‖ teacher similarity distribution)
/// over cross- and within-domain batch similarities. Teacher inputs are
/// treated as constants.
DistillTerms distill_loss(ad::Graph& g, const ad::Tensor& student_a, const ad::Tensor& student_b,
                          const ad::Tensor& teacher_a, const ad::Tensor& teacher_b);

}  // namespace syncdr
