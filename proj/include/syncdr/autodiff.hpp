#pragma once

// Minimal reverse-mode automatic differentiation over dense double arrays.
//
// A Tensor is a shared handle to a value buffer plus an optional gradient
// buffer. A Graph records every operation applied through it, in
// construction order; Graph::backward replays those records in reverse.
// Gradients are only propagated into tensors with requires_grad set, so
// constants (memory banks, teacher features) never receive a gradient.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "syncdr/matrix.hpp"

namespace syncdr::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_matrix(const Matrix& m, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return impl_->values.size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  std::span<const double> values() const { return impl_->values; }
  /// Mutable access for leaves (parameter updates, finite differencing).
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Handle semantics: gradient buffers are writable through const handles.
  std::span<double> mutable_grad() const { return impl_->grad; }
  void zero_grad() const;
  void clear_grad() const { impl_->grad.clear(); }

  Matrix to_matrix() const;
  /// Deep copy with the same requires_grad flag and no gradient.
  Tensor clone() const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;
  };

  Tensor(Shape shape, std::vector<double> values, bool requires_grad);

  void ensure_grad() const;

  std::shared_ptr<Impl> impl_;

  friend class Graph;
};

/// Records operations in creation order. Not thread-safe; one graph per
/// forward/backward pass.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Matrix algebra.
  Tensor matmul(const Tensor& a, const Tensor& b);
  /// a · bᵀ without materializing the transpose.
  Tensor matmul_bt(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  /// Adds a length-n bias vector to every row of an m×n matrix.
  Tensor add_row_bias(const Tensor& a, const Tensor& bias);
  Tensor scale(const Tensor& a, double factor);
  Tensor tanh(const Tensor& a);

  // Row-wise normalization and distributions.
  Tensor row_l2_normalize(const Tensor& a, double epsilon_norm = kEpsilonNorm);
  Tensor log_softmax_rows(const Tensor& a);
  Tensor softmax_rows(const Tensor& a);
  Tensor entropy_rows(const Tensor& p);
  Tensor kl_rows(const Tensor& p, const Tensor& q);

  // Indexing and reductions.
  /// out[r] = a[r][r] for a square matrix.
  Tensor diagonal(const Tensor& a);
  /// out[r] = a[r][columns[r]].
  Tensor pick(const Tensor& a, std::span<const std::size_t> columns);
  Tensor concat_rows(const Tensor& top, const Tensor& bottom);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);

  /// Populates grad for every requires_grad tensor touched by this graph.
  /// Gradients are reset before propagation, so calling backward twice on
  /// the same graph gives bit-identical results.
  void backward(const Tensor& loss);

  /// Clears the gradient buffers of every tensor recorded in the graph.
  void zero_grad();

  std::size_t num_records() const { return records_.size(); }

  static constexpr double kEpsilonNorm = 1e-12;

 private:
  struct Record {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backprop;
  };

  Tensor make_output(Shape shape, std::vector<double> values,
                     std::initializer_list<Tensor> inputs);
  void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backprop);

  std::vector<Record> records_;
};

/// Builds the scalar objective into the graph it is given.
using ScalarFunction = std::function<Tensor(Graph&)>;

/// Compares the analytic gradient of `fn` against central differences for
/// every coordinate of every parameter. Returns
/// max |analytic - numeric| / max(1, |numeric|).
double finite_diff_check(const ScalarFunction& fn, std::vector<Tensor> parameters,
                         double step = 1e-5);

}  // namespace syncdr::ad
