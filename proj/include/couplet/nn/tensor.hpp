#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "couplet/errors.hpp"

namespace couplet::nn {

/// Dense row-major matrix. Vectors are stored as n x 1.
template <class T>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), values(r * c, fill) {}

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T(1);
    return t;
  }

  T& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  std::size_t size() const { return values.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  void fill(T v) { std::fill(values.begin(), values.end(), v); }
};

/// Smallest probability mass added inside the log of cross_entropy.
inline constexpr double kCrossEntropyEpsilon = 1e-12;

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}
}  // namespace detail

/// out += W x
template <class T>
void matvec_acc(const Tensor<T>& W, std::span<const T> x, std::span<T> out) {
  detail::require(x.size() == W.cols && out.size() == W.rows,
                  "matvec: W is " + std::to_string(W.rows) + "x" + std::to_string(W.cols) +
                      ", x has " + std::to_string(x.size()) + ", out has " + std::to_string(out.size()));
  for (std::size_t r = 0; r < W.rows; ++r) {
    const T* w = W.values.data() + r * W.cols;
    T acc = 0;
    for (std::size_t c = 0; c < W.cols; ++c) acc += w[c] * x[c];
    out[r] += acc;
  }
}

/// out += W^T y
template <class T>
void matvec_t_acc(const Tensor<T>& W, std::span<const T> y, std::span<T> out) {
  detail::require(y.size() == W.rows && out.size() == W.cols,
                  "matvec_t: W is " + std::to_string(W.rows) + "x" + std::to_string(W.cols) +
                      ", y has " + std::to_string(y.size()) + ", out has " + std::to_string(out.size()));
  for (std::size_t r = 0; r < W.rows; ++r) {
    const T* w = W.values.data() + r * W.cols;
    const T yr = y[r];
    if (yr == T(0)) continue;
    for (std::size_t c = 0; c < W.cols; ++c) out[c] += w[c] * yr;
  }
}

/// G += y x^T
template <class T>
void outer_acc(Tensor<T>& G, std::span<const T> y, std::span<const T> x) {
  detail::require(y.size() == G.rows && x.size() == G.cols,
                  "outer: G is " + std::to_string(G.rows) + "x" + std::to_string(G.cols) +
                      ", y has " + std::to_string(y.size()) + ", x has " + std::to_string(x.size()));
  for (std::size_t r = 0; r < G.rows; ++r) {
    const T yr = y[r];
    if (yr == T(0)) continue;
    T* g = G.values.data() + r * G.cols;
    for (std::size_t c = 0; c < G.cols; ++c) g[c] += yr * x[c];
  }
}

/// Wx + b
template <class T>
std::vector<T> affine(std::span<const T> x, const Tensor<T>& W, std::span<const T> b) {
  detail::require(x.size() == W.cols && b.size() == W.rows,
                  "affine: x has " + std::to_string(x.size()) + ", W is " + std::to_string(W.rows) +
                      "x" + std::to_string(W.cols) + ", b has " + std::to_string(b.size()));
  std::vector<T> out(b.begin(), b.end());
  matvec_acc<T>(W, x, out);
  return out;
}

template <class T>
std::vector<T> softmax(std::span<const T> scores) {
  if (scores.empty()) throw std::invalid_argument("softmax: empty input");
  const T mx = *std::max_element(scores.begin(), scores.end());
  std::vector<T> out(scores.size());
  T sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

/// Log-probabilities in double regardless of T; decoding sums these.
template <class T>
std::vector<double> log_softmax(std::span<const T> scores) {
  if (scores.empty()) throw std::invalid_argument("log_softmax: empty input");
  const double mx = static_cast<double>(*std::max_element(scores.begin(), scores.end()));
  double sum = 0;
  for (T s : scores) sum += std::exp(static_cast<double>(s) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = static_cast<double>(scores[i]) - lse;
  return out;
}

/// -ln(pred[target] + 1e-12)
template <class T>
double cross_entropy(std::span<const T> pred, std::size_t target) {
  if (target >= pred.size())
    throw std::invalid_argument("cross_entropy: target " + std::to_string(target) + " out of range " +
                                std::to_string(pred.size()));
  return -std::log(static_cast<double>(pred[target]) + kCrossEntropyEpsilon);
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace couplet::nn
