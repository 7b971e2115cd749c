#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "couplet/errors.hpp"
#include "couplet/nn/tensor.hpp"
#include "couplet/rng.hpp"

namespace couplet::nn {

template <class T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;  // Adam first moment
  Tensor<T> v;  // Adam second moment
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class ClipMode { GlobalNorm, Elementwise };

/// Named trainable tensors. Iteration order is by name, so every traversal
/// (initialization, clipping, checkpointing) is deterministic.
template <class T>
class ParamSet {
 public:
  Param<T>& add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (entries_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Param<T> p{Tensor<T>(rows, cols), Tensor<T>(rows, cols), Tensor<T>(rows, cols), Tensor<T>(rows, cols)};
    return entries_.emplace(name, std::move(p)).first->second;
  }

  /// Adds a tensor with a given value (used by checkpoint loading).
  Param<T>& add(const std::string& name, Tensor<T> value) {
    auto& p = add(name, value.rows, value.cols);
    p.value = std::move(value);
    return p;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Param<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : entries_) n += p.value.size();
    return n;
  }

  std::size_t step_count() const { return step_count_; }

  void init_uniform(Rng& rng, double lo = -0.5, double hi = 0.5) {
    for (auto& [_, p] : entries_)
      for (auto& x : p.value.values) x = static_cast<T>(rng.uniform(lo, hi));
  }

  void zero_grad() {
    for (auto& [_, p] : entries_) p.grad.fill(T(0));
  }

  /// Copies values only. Shapes and names must match.
  void copy_values_from(const ParamSet& other) {
    for (auto& [name, p] : entries_) {
      const auto& src = other.at(name).value;
      if (!src.same_shape(p.value)) throw ShapeError("copy_values_from: shape mismatch for '" + name + "'");
      p.value.values = src.values;
    }
  }

  void reset_optimizer() {
    step_count_ = 0;
    for (auto& [_, p] : entries_) {
      p.m.fill(T(0));
      p.v.fill(T(0));
    }
  }

  /// One Adam update with bias correction, then zeroes gradients. Any
  /// non-finite gradient aborts before a single value is touched.
  void adam_step(double lr, const AdamConfig& cfg = {}) {
    for (const auto& [name, p] : entries_)
      if (!all_finite<T>(p.grad.values)) throw NumericError("adam_step: non-finite gradient in '" + name + "'");
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [_, p] : entries_) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.values[i];
        const double m = cfg.beta1 * p.m.values[i] + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * p.v.values[i] + (1.0 - cfg.beta2) * g * g;
        p.m.values[i] = static_cast<T>(m);
        p.v.values[i] = static_cast<T>(v);
        const double mhat = m / c1;
        const double vhat = v / c2;
        p.value.values[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
      }
    }
    zero_grad();
  }

 private:
  std::map<std::string, Param<T>> entries_;
  std::size_t step_count_ = 0;
};

template <class T>
double global_grad_norm(const ParamSet<T>& params) {
  double sq = 0;
  for (const auto& [_, p] : params)
    for (T g : p.grad.values) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

/// Rescales all gradients so the global L2 norm is at most max_norm.
/// Returns the applied scale (1 when nothing was clipped).
template <class T>
double clip_global_norm(ParamSet<T>& params, double max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double scale = max_norm / norm;
  for (auto& [_, p] : params)
    for (auto& g : p.grad.values) g = static_cast<T>(g * scale);
  return scale;
}

/// Clamps every gradient component to [-max_abs, max_abs]. Returns the number
/// of clamped components.
template <class T>
std::size_t clip_elementwise(ParamSet<T>& params, double max_abs) {
  if (!(max_abs > 0)) throw std::invalid_argument("clip_elementwise: max_abs must be positive");
  std::size_t clamped = 0;
  const T hi = static_cast<T>(max_abs);
  for (auto& [_, p] : params)
    for (auto& g : p.grad.values)
      if (g > hi || g < -hi) {
        g = g > hi ? hi : -hi;
        ++clamped;
      }
  return clamped;
}

}  // namespace couplet::nn
