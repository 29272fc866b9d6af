#include "chaneq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chaneq/error.hpp"

namespace chaneq {

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same(*this, o, "add");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same(*this, o, "subtract");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    const auto r = a.row(i);
    for (std::size_t k = 0; k < x.size(); ++k) acc += r[k] * x[k];
    out[i] = acc;
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t k = 0; k < out.size(); ++k) out.values()[k] *= b.values()[k];
  return out;
}

Matrix outer(std::span<const double> a, std::span<const double> b) {
  Matrix out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = a[i] * b[j];
  return out;
}

double trace(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("trace: matrix is not square");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same(a, b, "max_abs_diff");
  return max_abs_diff(std::span<const double>(a.values()), std::span<const double>(b.values()));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

Vector solve(const Matrix& a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw ShapeError("solve: dimension mismatch");
  Matrix lu = a;
  Vector x(b.begin(), b.end());
  double scale = 0.0;
  for (double v : lu.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (std::abs(lu(piv, k)) <= 1e-14 * std::max(scale, 1.0)) {
      throw DegenerateInputError("solve: matrix is numerically singular");
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      for (std::size_t j = k; j < n; ++j) lu(i, j) -= f * lu(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double acc = x[k];
    for (std::size_t j = k + 1; j < n; ++j) acc -= lu(k, j) * x[j];
    x[k] = acc / lu(k, k);
  }
  return x;
}

Matrix inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  Vector e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    const Vector col = solve(a, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

FeatureMap::FeatureMap(Shape4 shape, double fill) : shape_(shape) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
    throw ShapeError("FeatureMap: every dimension must be >= 1");
  }
  data_.assign(shape.count(), fill);
}

FeatureMap::FeatureMap(Shape4 shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
    throw ShapeError("FeatureMap: every dimension must be >= 1");
  }
  if (data_.size() != shape.count()) {
    throw ShapeError("FeatureMap: " + std::to_string(data_.size()) + " values for " +
                     std::to_string(shape.count()) + " entries");
  }
  if (!all_finite()) throw ContractError("FeatureMap: non-finite entry");
}

bool FeatureMap::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

FeatureMap& FeatureMap::operator+=(const FeatureMap& o) {
  if (!(shape_ == o.shape_)) throw ShapeError("FeatureMap add: shape mismatch");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

FeatureMap& FeatureMap::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix channel_matrix(const FeatureMap& x) {
  const auto& s = x.shape();
  const std::size_t hw = s.plane();
  Matrix m(s.c, s.n * hw);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto p = x.plane(n, c);
      std::copy(p.begin(), p.end(), m.row(c).begin() + static_cast<std::ptrdiff_t>(n * hw));
    }
  return m;
}

namespace {

struct ReductionIndex {
  std::size_t dims[4];
  bool keep[4];
  std::size_t out_size = 1;
  std::size_t count = 1;

  ReductionIndex(const Shape4& s, unsigned reduce) : dims{s.n, s.c, s.h, s.w} {
    const unsigned bits[4] = {kAxisN, kAxisC, kAxisH, kAxisW};
    for (int a = 0; a < 4; ++a) {
      keep[a] = (reduce & bits[a]) == 0;
      if (keep[a]) {
        out_size *= dims[a];
      } else {
        count *= dims[a];
      }
    }
  }

  std::size_t out_index(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    const std::size_t idx[4] = {n, c, i, j};
    std::size_t o = 0;
    for (int a = 0; a < 4; ++a)
      if (keep[a]) o = o * dims[a] + idx[a];
    return o;
  }
};

template <typename F>
void for_each_index(const Shape4& s, F&& f) {
  std::size_t k = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) f(n, c, i, j, k++);
}

}  // namespace

Vector mean_over(const FeatureMap& x, unsigned reduce) {
  const ReductionIndex r(x.shape(), reduce);
  Vector out(r.out_size, 0.0);
  const auto& v = x.values();
  for_each_index(x.shape(), [&](std::size_t n, std::size_t c, std::size_t i, std::size_t j,
                                std::size_t k) { out[r.out_index(n, c, i, j)] += v[k]; });
  for (double& o : out) o /= static_cast<double>(r.count);
  return out;
}

Vector variance_over(const FeatureMap& x, unsigned reduce) {
  const ReductionIndex r(x.shape(), reduce);
  const Vector mean = mean_over(x, reduce);
  Vector out(r.out_size, 0.0);
  const auto& v = x.values();
  for_each_index(x.shape(), [&](std::size_t n, std::size_t c, std::size_t i, std::size_t j,
                                std::size_t k) {
    const std::size_t o = r.out_index(n, c, i, j);
    const double d = v[k] - mean[o];
    out[o] += d * d;
  });
  for (double& o : out) o /= static_cast<double>(r.count);
  return out;
}

}  // namespace chaneq
