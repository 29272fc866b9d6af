#pragma once

// Dense real arrays: row-major matrices, rank-4 (n,c,h,w) feature maps,
// axis reductions and a few linear-algebra helpers. Everything is float64.

#include <cstddef>
#include <span>
#include <vector>

namespace chaneq {

using Vector = std::vector<double>;
/// Length-C per-channel vector (gamma, beta, variances, gates).
using ChannelVector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// C x C symmetric matrix (covariances and their Newton iterates).
using CovMatrix = Matrix;

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// Row-major accumulation: out(i,j) = sum_k a(i,k) b(k,j), k ascending.
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix outer(std::span<const double> a, std::span<const double> b);

double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool is_symmetric(const Matrix& a, double tol = 1e-9);

/// Solves a x = b by LU with partial pivoting. Throws DegenerateInputError on a
/// numerically singular system.
Vector solve(const Matrix& a, std::span<const double> b);
Matrix inverse(const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t count() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  bool operator==(const Shape4&) const = default;
};

/// Rank-4 activation tensor, row-major over (n, c, i, j).
class FeatureMap {
 public:
  FeatureMap() = default;
  /// Zero-filled. All dims must be >= 1.
  explicit FeatureMap(Shape4 shape, double fill = 0.0);
  /// Takes ownership of `values`; rejects wrong length and non-finite entries.
  FeatureMap(Shape4 shape, std::vector<double> values);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t batch() const noexcept { return shape_.n; }
  std::size_t channels() const noexcept { return shape_.c; }
  std::size_t height() const noexcept { return shape_.h; }
  std::size_t width() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return ((n * shape_.c + c) * shape_.h + i) * shape_.w + j;
  }
  double& at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return data_[index(n, c, i, j)];
  }
  double at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[index(n, c, i, j)];
  }

  /// The contiguous (h, w) plane of sample n, channel c.
  std::span<double> plane(std::size_t n, std::size_t c) {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return {data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.plane()};
  }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  FeatureMap& operator+=(const FeatureMap& o);
  FeatureMap& operator*=(double s);

 private:
  Shape4 shape_{};
  std::vector<double> data_;
};

/// Channel-major C x (N*H*W) view of a feature map, copied into a matrix.
Matrix channel_matrix(const FeatureMap& x);

/// Bit mask naming the axes a reduction runs over.
enum Axis : unsigned { kAxisN = 1u, kAxisC = 2u, kAxisH = 4u, kAxisW = 8u };

/// Mean over the axes in `reduce`; result is indexed row-major over the kept
/// axes in (n, c, h, w) order. Accumulation follows storage order.
Vector mean_over(const FeatureMap& x, unsigned reduce);
/// Biased (divide-by-count) variance over the axes in `reduce`.
Vector variance_over(const FeatureMap& x, unsigned reduce);

}  // namespace chaneq
