#include "syncdr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "syncdr/errors.hpp"

namespace syncdr::ad {

namespace {

std::size_t product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

void require_probability_rows(const Tensor& p, const char* op) {
  const std::size_t m = p.rows();
  const std::size_t n = p.cols();
  const auto v = p.values();
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = v[r * n + j];
      if (!(x >= 0.0)) {
        throw ContractViolation(std::string(op) + ": negative or NaN probability in row " +
                                std::to_string(r));
      }
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      std::ostringstream msg;
      msg << op << ": row " << r << " sums to " << s << ", not 1";
      throw ContractViolation(msg.str());
    }
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
  }
  if (values.size() != product(shape)) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " given " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), false);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
  return Tensor({m.rows, m.cols}, m.data, requires_grad);
}

std::size_t Tensor::rows() const { return rank() == 0 ? 1 : impl_->shape[0]; }

std::size_t Tensor::cols() const { return rank() < 2 ? 1 : impl_->shape[1]; }

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on non-scalar tensor " + shape_string(shape()));
  return impl_->values[0];
}

void Tensor::zero_grad() const { impl_->grad.assign(impl_->values.size(), 0.0); }

void Tensor::ensure_grad() const {
  if (impl_->grad.size() != impl_->values.size()) impl_->grad.assign(impl_->values.size(), 0.0);
}

Matrix Tensor::to_matrix() const {
  Matrix m(rows(), rank() == 2 ? cols() : 1);
  m.data.assign(impl_->values.begin(), impl_->values.end());
  return m;
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->values, impl_->requires_grad); }

// ---------------------------------------------------------------------------
// Graph plumbing

Tensor Graph::make_output(Shape shape, std::vector<double> values,
                          std::initializer_list<Tensor> inputs) {
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  return Tensor(std::move(shape), std::move(values), needs_grad);
}

void Graph::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backprop) {
  records_.push_back(Record{std::move(inputs), std::move(output), std::move(backprop)});
}

void Graph::zero_grad() {
  for (Record& rec : records_) {
    for (Tensor& t : rec.inputs) t.clear_grad();
    rec.output.clear_grad();
  }
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractViolation("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  for (Record& rec : records_) {
    for (Tensor& t : rec.inputs) {
      if (t.requires_grad()) t.zero_grad();
    }
    if (rec.output.requires_grad()) rec.output.zero_grad();
  }
  Tensor root = loss;
  if (!root.requires_grad()) return;
  root.zero_grad();
  root.mutable_grad()[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.requires_grad()) it->backprop();
  }
}

// ---------------------------------------------------------------------------
// Matrix algebra

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                         " · " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  Tensor y = make_output({m, n}, std::move(out), {a, b});
  record({a, b}, y, [a, b, y, m, k, n]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      a.ensure_grad();
      auto ga = a.mutable_grad();
      const auto bv = b.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      auto gb = b.mutable_grad();
      const auto av = a.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
  return y;
}

Tensor Graph::matmul_bt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_bt: inner dimensions disagree, " + shape_string(a.shape()) +
                         " · " + shape_string(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = s;
    }
  }
  Tensor y = make_output({m, n}, std::move(out), {a, b});
  record({a, b}, y, [a, b, y, m, k, n]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      a.ensure_grad();
      auto ga = a.mutable_grad();
      const auto bv = b.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
        }
      }
    }
    if (b.requires_grad()) {
      b.ensure_grad();
      auto gb = b.mutable_grad();
      const auto av = a.values();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
        }
      }
    }
  });
  return y;
}

Tensor Graph::transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Tensor y = make_output({n, m}, std::move(out), {a});
  record({a}, y, [a, y, m, n]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
  return y;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  Tensor y = make_output(a.shape(), std::move(out), {a, b});
  record({a, b}, y, [a, b, y]() mutable {
    const auto g = y.grad();
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      t->ensure_grad();
      auto gt = t->mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
  return y;
}

Tensor Graph::add_row_bias(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) {
    throw DimensionError("add_row_bias: bias " + shape_string(bias.shape()) +
                         " does not match matrix " + shape_string(a.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.values()[i * n + j] + bias.values()[j];
  Tensor y = make_output({m, n}, std::move(out), {a, bias});
  record({a, bias}, y, [a, bias, y, m, n]() mutable {
    const auto g = y.grad();
    if (a.requires_grad()) {
      a.ensure_grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bias.requires_grad()) {
      bias.ensure_grad();
      auto gb = bias.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
  return y;
}

Tensor Graph::scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  Tensor y = make_output(a.shape(), std::move(out), {a});
  record({a}, y, [a, y, factor]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
  return y;
}

Tensor Graph::tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  Tensor y = make_output(a.shape(), std::move(out), {a});
  record({a}, y, [a, y]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    const auto yv = y.values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
  return y;
}

// ---------------------------------------------------------------------------
// Row-wise normalization and distributions

Tensor Graph::row_l2_normalize(const Tensor& a, double epsilon_norm) {
  require_matrix(a, "row_l2_normalize");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.values().begin(), a.values().end());
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    std::span<double> row(out.data() + r * n, n);
    const double norm = l2_norm(row);
    if (!(norm >= epsilon_norm)) {
      std::ostringstream msg;
      msg << "row_l2_normalize: row " << r << " has norm " << norm << " below " << epsilon_norm;
      throw DegenerateInputError(msg.str());
    }
    norms[r] = norm;
    for (double& x : row) x /= norm;
  }
  Tensor y = make_output({m, n}, std::move(out), {a});
  record({a}, y, [a, y, m, n, norms = std::move(norms)]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    const auto yv = y.values();
    for (std::size_t r = 0; r < m; ++r) {
      double yg = 0.0;
      for (std::size_t j = 0; j < n; ++j) yg += yv[r * n + j] * g[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[r * n + j] += (g[r * n + j] - yv[r * n + j] * yg) / norms[r];
    }
  });
  return y;
}

Tensor Graph::log_softmax_rows(const Tensor& a) {
  require_matrix(a, "log_softmax_rows");
  require_finite(a.values(), "log_softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double mx = *std::max_element(av.begin() + r * n, av.begin() + (r + 1) * n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(av[r * n + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = av[r * n + j] - lse;
  }
  Tensor y = make_output({m, n}, std::move(out), {a});
  record({a}, y, [a, y, m, n]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    const auto yv = y.values();
    for (std::size_t r = 0; r < m; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[r * n + j] += g[r * n + j] - std::exp(yv[r * n + j]) * gs;
    }
  });
  return y;
}

Tensor Graph::softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  require_finite(a.values(), "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double mx = *std::max_element(av.begin() + r * n, av.begin() + (r + 1) * n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = std::exp(av[r * n + j] - mx);
      s += out[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= s;
  }
  Tensor y = make_output({m, n}, std::move(out), {a});
  record({a}, y, [a, y, m, n]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    const auto yv = y.values();
    for (std::size_t r = 0; r < m; ++r) {
      double gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) gy += g[r * n + j] * yv[r * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += yv[r * n + j] * (g[r * n + j] - gy);
    }
  });
  return y;
}

Tensor Graph::entropy_rows(const Tensor& p) {
  require_matrix(p, "entropy_rows");
  require_probability_rows(p, "entropy_rows");
  const std::size_t m = p.rows(), n = p.cols();
  std::vector<double> out(m, 0.0);
  const auto pv = p.values();
  for (std::size_t r = 0; r < m; ++r) {
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = pv[r * n + j];
      if (x > 0.0) h -= x * std::log(x);
    }
    out[r] = h;
  }
  Tensor y = make_output({m}, std::move(out), {p});
  record({p}, y, [p, y, m, n]() mutable {
    p.ensure_grad();
    auto gp = p.mutable_grad();
    const auto g = y.grad();
    const auto pv = p.values();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        const double x = pv[r * n + j];
        // d(-x ln x)/dx is unbounded at 0; zero entries contribute nothing.
        if (x > 0.0) gp[r * n + j] -= g[r] * (std::log(x) + 1.0);
      }
    }
  });
  return y;
}

Tensor Graph::kl_rows(const Tensor& p, const Tensor& q) {
  require_matrix(p, "kl_rows");
  require_same_shape(p, q, "kl_rows");
  require_probability_rows(p, "kl_rows");
  require_probability_rows(q, "kl_rows");
  const std::size_t m = p.rows(), n = p.cols();
  std::vector<double> out(m, 0.0);
  const auto pv = p.values();
  const auto qv = q.values();
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double pj = pv[r * n + j];
      if (pj <= 0.0) continue;
      const double qj = qv[r * n + j];
      if (qj <= 0.0) {
        throw NumericError("kl_rows: divergence undefined, q is zero where p > 0 (row " +
                           std::to_string(r) + ", column " + std::to_string(j) + ")");
      }
      s += pj * std::log(pj / qj);
    }
    out[r] = s;
  }
  Tensor y = make_output({m}, std::move(out), {p, q});
  record({p, q}, y, [p, q, y, m, n]() mutable {
    const auto g = y.grad();
    const auto pv = p.values();
    const auto qv = q.values();
    if (p.requires_grad()) {
      p.ensure_grad();
      auto gp = p.mutable_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) {
          const double pj = pv[r * n + j];
          if (pj > 0.0) gp[r * n + j] += g[r] * (std::log(pj / qv[r * n + j]) + 1.0);
        }
    }
    if (q.requires_grad()) {
      q.ensure_grad();
      auto gq = q.mutable_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) {
          const double pj = pv[r * n + j];
          if (pj > 0.0) gq[r * n + j] -= g[r] * pj / qv[r * n + j];
        }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Indexing and reductions

Tensor Graph::diagonal(const Tensor& a) {
  require_matrix(a, "diagonal");
  const std::size_t m = a.rows();
  if (a.cols() != m) throw DimensionError("diagonal: matrix not square " + shape_string(a.shape()));
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = a.values()[i * m + i];
  Tensor y = make_output({m}, std::move(out), {a});
  record({a}, y, [a, y, m]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    for (std::size_t i = 0; i < m; ++i) ga[i * m + i] += g[i];
  });
  return y;
}

Tensor Graph::pick(const Tensor& a, std::span<const std::size_t> columns) {
  require_matrix(a, "pick");
  const std::size_t m = a.rows(), n = a.cols();
  if (columns.size() != m) {
    throw DimensionError("pick: " + std::to_string(columns.size()) + " indices for " +
                         shape_string(a.shape()));
  }
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    if (cols[r] >= n) throw DimensionError("pick: column index out of range");
    out[r] = a.values()[r * n + cols[r]];
  }
  Tensor y = make_output({m}, std::move(out), {a});
  record({a}, y, [a, y, n, cols = std::move(cols)]() mutable {
    a.ensure_grad();
    auto ga = a.mutable_grad();
    const auto g = y.grad();
    for (std::size_t r = 0; r < cols.size(); ++r) ga[r * n + cols[r]] += g[r];
  });
  return y;
}

Tensor Graph::concat_rows(const Tensor& top, const Tensor& bottom) {
  require_matrix(top, "concat_rows");
  require_matrix(bottom, "concat_rows");
  if (top.cols() != bottom.cols()) {
    throw DimensionError("concat_rows: column mismatch " + shape_string(top.shape()) + " and " +
                         shape_string(bottom.shape()));
  }
  const std::size_t split = top.size();
  std::vector<double> out(top.values().begin(), top.values().end());
  out.insert(out.end(), bottom.values().begin(), bottom.values().end());
  Tensor y = make_output({top.rows() + bottom.rows(), top.cols()}, std::move(out), {top, bottom});
  record({top, bottom}, y, [top, bottom, y, split]() mutable {
    const auto g = y.grad();
    if (top.requires_grad()) {
      top.ensure_grad();
      auto gt = top.mutable_grad();
      for (std::size_t i = 0; i < split; ++i) gt[i] += g[i];
    }
    if (bottom.requires_grad()) {
      bottom.ensure_grad();
      auto gb = bottom.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
    }
  });
  return y;
}

Tensor Graph::sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  Tensor y = make_output({}, {s}, {a});
  record({a}, y, [a, y]() mutable {
    a.ensure_grad();
    const double g = y.grad()[0];
    for (double& ga : a.mutable_grad()) ga += g;
  });
  return y;
}

Tensor Graph::mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double x : a.values()) s += x;
  Tensor y = make_output({}, {s * inv}, {a});
  record({a}, y, [a, y, inv]() mutable {
    a.ensure_grad();
    const double g = y.grad()[0] * inv;
    for (double& ga : a.mutable_grad()) ga += g;
  });
  return y;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

double finite_diff_check(const ScalarFunction& fn, std::vector<Tensor> parameters, double step) {
  if (!(step > 0.0)) throw ContractViolation("finite_diff_check: step must be positive");

  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    Tensor loss = fn(g);
    if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: non-finite loss");
    g.backward(loss);
    for (const Tensor& p : parameters) {
      if (p.has_grad()) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
      } else {
        analytic.emplace_back(p.size(), 0.0);
      }
    }
  }

  auto evaluate = [&fn]() {
    Graph g;
    const double v = fn(g).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite perturbed loss");
    return v;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < parameters.size(); ++k) {
    auto values = parameters[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = evaluate();
      values[i] = original - step;
      const double minus = evaluate();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace syncdr::ad
