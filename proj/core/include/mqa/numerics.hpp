#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

// Minimal dense double-precision array math used by the model layers.
// Everything here is a pure function of its inputs; no hidden state.

namespace mqa {

struct Vector {
  std::vector<double> data;

  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data(n, fill) {}
  Vector(std::initializer_list<double> init) : data(init) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double* begin() { return data.data(); }
  double* end() { return data.data() + data.size(); }
  const double* begin() const { return data.data(); }
  const double* end() const { return data.data() + data.size(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  friend bool operator==(const Vector& a, const Vector& b) { return a.data == b.data; }
};

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  static Matrix identity(std::size_t n);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

// g(x) = 1.7159 * tanh(2x/3), the scaled hyperbolic tangent.
double scaled_tanh(double x);
// dg/dx = (2/3) * 1.7159 * (1 - tanh^2(2x/3)).
double scaled_tanh_deriv(double x);

// 1 / (1 + exp(-x)), stable for |x| up to ~700.
double sigmoid(double x);

double relu(double x);
// Subgradient convention: relu_deriv(0) = 0.
double relu_deriv(double x);

// Max-subtracted softmax; output entries are positive and sum to 1.
Vector softmax(const Vector& logits);

// out = M v. Throws std::invalid_argument on shape mismatch, naming both shapes.
Vector matvec(const Matrix& m, const Vector& v);
// out += M v
void matvec_add(const Matrix& m, const Vector& v, Vector& out);
// out += M^T v
void matvec_transpose_add(const Matrix& m, const Vector& v, Vector& out);
// m += a b^T
void add_outer(Matrix& m, const Vector& a, const Vector& b);
// y += alpha * x
void axpy(double alpha, const Vector& x, Vector& y);
double dot(const Vector& a, const Vector& b);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// Deterministic, implementation-independent uniform fill in [lo, hi).
// Uses a splitmix64 stream so results are identical across platforms.
void fill_uniform(double* data, std::size_t n, std::uint64_t seed, double lo, double hi);

// Stable 64-bit hash (FNV-1a) used to derive per-tensor seeds.
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

// splitmix64-backed generator; fully specified output sequence.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // uniform in [0,1) with 53 random bits
  double next_double();
  // uniform integer in [0, n), n > 0
  std::uint64_t next_below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

}  // namespace mqa
