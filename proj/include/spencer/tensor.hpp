#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spencer {

// Dense row-major array of 64-bit floats. Rank 0 is not a thing here:
// scalars are [1], vectors [n], matrices [r x c]. Values are immutable by
// convention once an op has produced them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);  // zero-filled
  Tensor(std::vector<size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> values);                 // [n]
  static Tensor matrix(size_t rows, size_t cols, std::vector<double> data);
  static Tensor zeros(std::vector<size_t> shape);
  static Tensor full(std::vector<size_t> shape, double v);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; a rank-1 tensor counts as a single row.
  size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  size_t cols() const { return rank() == 2 ? shape_[1] : numel(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }
  std::span<double> values_mut() { return data_; }

  double& at(size_t i) { return data_[i]; }
  double at(size_t i) const { return data_[i]; }
  double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols() + c]; }

  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  double scalar_value() const;  // requires numel() == 1

  void fill(double v);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const Tensor& t);
std::string shape_str(const std::vector<size_t>& shape);

// Throws Error when any element is NaN or infinite.
void check_finite(const Tensor& t, const char* what);

// ---- kernels -------------------------------------------------------------
// Forward math shared by the autodiff graph and by test oracles.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] * [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& a);

// Equal shapes, or b a single row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);  // requires strictly positive elements
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

// u.v / (|u||v|) in [-1, 1]. Bitwise-equal inputs short-circuit to 1.0 so
// self-similarity is exact. Zero-norm input throws DegenerateVectorError.
double cosine(const Tensor& u, const Tensor& v);

// Inverted dropout: zero with probability rate, survivors scaled by
// 1/(1-rate). Element i's fate depends only on (seed, i).
Tensor apply_dropout(const Tensor& x, double rate, uint64_t seed);
bool dropout_keeps(double rate, uint64_t seed, size_t index);

}  // namespace spencer
