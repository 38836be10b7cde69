#include "mqa/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace mqa {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

double scaled_tanh(double x) { return 1.7159 * std::tanh(x * (2.0 / 3.0)); }

double scaled_tanh_deriv(double x) {
  const double t = std::tanh(x * (2.0 / 3.0));
  return 1.7159 * (2.0 / 3.0) * (1.0 - t * t);
}

double sigmoid(double x) {
  // Branch on sign so exp never overflows.
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double relu_deriv(double x) { return x > 0.0 ? 1.0 : 0.0; }

Vector softmax(const Vector& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = logits[0];
  for (double v : logits.data) mx = std::max(mx, v);
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (double& v : out.data) v *= inv;
  return out;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& m, const Vector& v) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch, matrix is " +
                              std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                              ", vector has length " + std::to_string(v.size()));
}

}  // namespace

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols != v.size()) shape_error("matvec", m, v);
  Vector out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

void matvec_add(const Matrix& m, const Vector& v, Vector& out) {
  if (m.cols != v.size()) shape_error("matvec_add", m, v);
  if (m.rows != out.size()) shape_error("matvec_add(out)", m, out);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] += acc;
  }
}

void matvec_transpose_add(const Matrix& m, const Vector& v, Vector& out) {
  if (m.rows != v.size()) shape_error("matvec_transpose_add", m, v);
  if (m.cols != out.size()) shape_error("matvec_transpose_add(out)", m, out);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    const double s = v[r];
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * s;
  }
}

void add_outer(Matrix& m, const Vector& a, const Vector& b) {
  if (m.rows != a.size()) shape_error("add_outer(rows)", m, a);
  if (m.cols != b.size()) shape_error("add_outer(cols)", m, b);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* row = m.row(r);
    const double s = a[r];
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += s * b[c];
  }
}

void axpy(double alpha, const Vector& x, Vector& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("axpy: length mismatch, " + std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: length mismatch, " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

bool all_finite(const Vector& v) {
  for (double x : v.data)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Matrix& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::uint64_t SplitMix64::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t SplitMix64::next_below(std::uint64_t n) { return next() % n; }

void fill_uniform(double* data, std::size_t n, std::uint64_t seed, double lo, double hi) {
  SplitMix64 rng(seed);
  const double span = hi - lo;
  for (std::size_t i = 0; i < n; ++i) data[i] = lo + span * rng.next_double();
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  SplitMix64 rng(seed ^ fnv1a64(tag));
  return rng.next();
}

}  // namespace mqa
