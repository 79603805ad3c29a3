#include "spencer/tensor.hpp"

#include <cmath>
#include <numeric>

#include "spencer/errors.hpp"
#include "spencer/rng.hpp"

namespace spencer {

namespace {

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) {
    if (d == 0) throw DimensionError("tensor shape has a zero dimension");
    n *= d;
  }
  return shape.empty() ? 0 : n;
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw DimensionError(std::string(what) + ": expected a matrix, got " +
                         shape_str(t));
}

}  // namespace

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> values) {
  const size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(size_t rows, size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::zeros(std::vector<size_t> shape) {
  return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

double Tensor::scalar_value() const {
  if (numel() != 1)
    throw ContractError("expected a scalar, got " + shape_str(*this));
  return data_[0];
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

std::string shape_str(const std::vector<size_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!std::isfinite(v))
      throw Error(std::string(what) + ": non-finite element");
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a) +
                         " x " + shape_str(b));
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* orow = po + i * n;
    for (size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = pb + t * n;
      for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt lhs");
  require_matrix(b, "matmul_nt rhs");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: inner dimensions disagree, " +
                         shape_str(a) + " x " + shape_str(b) + "^T");
  const size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out({m, n});
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    double* orow = out.data() + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      orow[j] = acc;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn lhs");
  require_matrix(b, "matmul_tn rhs");
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: inner dimensions disagree, " +
                         shape_str(a) + "^T x " + shape_str(b));
  const size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor out({m, n});
  for (size_t t = 0; t < k; ++t) {
    const double* arow = a.data() + t * m;
    const double* brow = b.data() + t * n;
    for (size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.data() + i * n;
      for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) {
    Tensor out = a;
    double* po = out.data();
    const double* pb = b.data();
    for (size_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
    return out;
  }
  // Bias-row broadcast: the only permitted mismatch.
  if (b.rows() == 1 && a.rank() == 2 && a.cols() == b.cols()) {
    Tensor out = a;
    for (size_t i = 0; i < a.rows(); ++i) {
      double* orow = out.data() + i * a.cols();
      const double* pb = b.data();
      for (size_t j = 0; j < a.cols(); ++j) orow[j] += pb[j];
    }
    return out;
  }
  throw DimensionError("add: incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.values_mut()) v *= c;
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values_mut()) v = std::tanh(v);
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values_mut()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values_mut()) {
    if (v <= 0.0) throw ParameterError("log: non-positive element");
    v = std::log(v);
  }
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values_mut()) v = std::fabs(v);
  return out;
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ParameterError("clamp: lo > hi");
  Tensor out = a;
  for (double& v : out.values_mut()) {
    if (v < lo) v = lo;
    if (v > hi) v = hi;
  }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel())
    throw DimensionError("dot: length mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  double acc = 0.0;
  for (size_t i = 0; i < a.numel(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double cosine(const Tensor& u, const Tensor& v) {
  if (u.numel() != v.numel())
    throw DimensionError("cosine: dimension mismatch " + shape_str(u) +
                         " vs " + shape_str(v));
  if (u.values().size() == v.values().size() &&
      std::equal(u.values().begin(), u.values().end(), v.values().begin()))
    return 1.0;  // self-similarity is exactly 1
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  if (uu == 0.0 || vv == 0.0)
    throw DegenerateVectorError("cosine: zero-norm input");
  double c = dot(u, v) / std::sqrt(uu * vv);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

bool dropout_keeps(double rate, uint64_t seed, size_t index) {
  return unit_double(counter_hash(seed, index)) >= rate;
}

Tensor apply_dropout(const Tensor& x, double rate, uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ParameterError("dropout: rate must be in [0, 1), got " +
                         std::to_string(rate));
  Tensor out = x;
  const double keep_scale = 1.0 / (1.0 - rate);
  double* p = out.data();
  for (size_t i = 0; i < out.numel(); ++i)
    p[i] = dropout_keeps(rate, seed, i) ? p[i] * keep_scale : 0.0;
  return out;
}

}  // namespace spencer
