#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shortcut/errors.hpp"

namespace shortcut {

/// Dense vector of 64-bit floats.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vector(std::span<const double> values)
      : data_(values.begin(), values.end()) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  const std::vector<double>& values() const { return data_; }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix of 64-bit floats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Seedable 64-bit generator. Every stochastic operation takes one explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next() { return engine_(); }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

 private:
  std::mt19937_64 engine_;
};

inline Vector matvec(const Matrix& w, const Vector& x) {
  if (w.cols() != x.size()) {
    throw ShapeError("matvec: matrix is " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + " but vector has length " +
                     std::to_string(x.size()));
  }
  Vector out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* row = w.data() + i * w.cols();
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vector sigmoid(const Vector& x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

inline Vector tanh(const Vector& x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

/// Max-shifted softmax; writes into `out` (may alias `h`).
inline void softmax_into(std::span<const double> h, std::span<double> out) {
  const double mx = *std::max_element(h.begin(), h.end());
  double total = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    out[i] = std::exp(h[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
}

inline Vector softmax(const Vector& h) {
  if (h.empty()) throw ShapeError("softmax of empty vector");
  Vector out(h.size());
  softmax_into(h.span(), out.span());
  return out;
}

/// Standard deviation used by gaussian_init: 0.1 * (1/sqrt(fan_in))^(1/2),
/// i.e. samples from N(0, 1/sqrt(fan_in)) (second argument a variance) scaled by 0.1.
inline double gaussian_init_stddev(std::size_t fan_in) {
  return 0.1 * std::pow(static_cast<double>(fan_in), -0.25);
}

inline Matrix gaussian_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                            Rng& rng) {
  if (fan_in < 1) throw ShapeError("gaussian_init: fan_in must be >= 1");
  const double sd = gaussian_init_stddev(fan_in);
  Matrix m(rows, cols);
  for (double& v : m.span()) v = rng.normal(0.0, sd);
  return m;
}

/// Random orthogonal matrix: Householder QR of a Gaussian matrix, with the
/// columns of Q sign-corrected by diag(R) so the result is Haar distributed.
inline Matrix orthogonal_init(std::size_t n, Rng& rng) {
  if (n < 1) throw ShapeError("orthogonal_init: n must be >= 1");
  Matrix a(n, n);
  for (double& v : a.span()) v = rng.normal();

  // Reflectors are stored in the lower triangle of `a` plus `betas`.
  std::vector<double> betas(n, 0.0);
  std::vector<double> signs(n, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a(k, k) > 0 ? -norm : norm;  // R(k,k)
    signs[k] = alpha < 0 ? -1.0 : 1.0;
    a(k, k) -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < n; ++i) vnorm2 += a(i, k) * a(i, k);
    betas[k] = vnorm2 == 0.0 ? 0.0 : 2.0 / vnorm2;
    for (std::size_t j = k + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += a(i, k) * a(i, j);
      dot *= betas[k];
      for (std::size_t i = k; i < n; ++i) a(i, j) -= dot * a(i, k);
    }
  }

  // Q = H_0 H_1 ... H_{n-1}, accumulated right to left onto the identity.
  Matrix q = Matrix::identity(n);
  for (std::size_t kk = n; kk-- > 0;) {
    if (betas[kk] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = kk; i < n; ++i) dot += a(i, kk) * q(i, j);
      dot *= betas[kk];
      for (std::size_t i = kk; i < n; ++i) q(i, j) -= dot * a(i, kk);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(i, j) *= signs[j];
  return q;
}

}  // namespace shortcut
