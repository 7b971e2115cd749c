#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "couplet/nn/params.hpp"

namespace couplet::nn {

enum class CellKind { VanillaRnn, Lstm };

inline std::string_view to_string(CellKind k) { return k == CellKind::Lstm ? "lstm" : "rnn"; }

inline CellKind parse_cell_kind(std::string_view s) {
  if (s == "lstm") return CellKind::Lstm;
  if (s == "rnn" || s == "vanilla-rnn" || s == "vanilla") return CellKind::VanillaRnn;
  throw std::invalid_argument("unknown cell kind '" + std::string(s) + "' (expected lstm or rnn)");
}

/// Per-layer hidden vectors; `c` is empty for vanilla cells.
template <class T>
struct RecurrentState {
  std::vector<std::vector<T>> h;
  std::vector<std::vector<T>> c;

  const std::vector<T>& top() const { return h.back(); }
};

template <class T>
struct LayerCache {
  std::vector<T> x, h_prev, c_prev;
  std::vector<T> gates;  // activated: h for rnn; i,f,g,o for lstm
  std::vector<T> c, tanh_c, h;
};

template <class T>
using StepCache = std::vector<LayerCache<T>>;

/// Stacked recurrent cells. Layer 0 consumes the step input, layer k consumes
/// the output of layer k-1. Parameters live in a ParamSet under
/// `<prefix>.l<k>.{wx,wh,b}`.
///
///   rnn:  h = tanh(Wx x + Wh h' + b)
///   lstm: [i f g o] = Wx x + Wh h' + b;  c = s(f) c' + s(i) tanh(g);  h = s(o) tanh(c)
template <class T>
class RecurrentStack {
 public:
  static void declare(ParamSet<T>& params, const std::string& prefix, CellKind kind, std::size_t layers,
                      std::size_t input_dim, std::size_t hidden) {
    if (layers < 1 || hidden < 1) throw std::invalid_argument("recurrent stack needs layers >= 1 and hidden >= 1");
    const std::size_t g = kind == CellKind::Lstm ? 4 * hidden : hidden;
    for (std::size_t k = 0; k < layers; ++k) {
      const std::string p = prefix + ".l" + std::to_string(k);
      params.add(p + ".wx", g, k == 0 ? input_dim : hidden);
      params.add(p + ".wh", g, hidden);
      params.add(p + ".b", g, 1);
    }
  }

  /// Binds to tensors already present in `params`; the cell kind is inferred
  /// from the gate width.
  RecurrentStack(ParamSet<T>& params, const std::string& prefix) {
    for (std::size_t k = 0;; ++k) {
      const std::string p = prefix + ".l" + std::to_string(k);
      if (!params.contains(p + ".wx")) break;
      layers_.push_back({&params.at(p + ".wx"), &params.at(p + ".wh"), &params.at(p + ".b")});
    }
    if (layers_.empty()) throw ShapeError("no recurrent layers under prefix '" + prefix + "'");
    hidden_ = layers_[0].wh->value.cols;
    const std::size_t g = layers_[0].wh->value.rows;
    if (g == 4 * hidden_) {
      kind_ = CellKind::Lstm;
    } else if (g == hidden_) {
      kind_ = CellKind::VanillaRnn;
    } else {
      throw ShapeError("'" + prefix + "': gate width " + std::to_string(g) + " fits neither rnn nor lstm");
    }
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& L = layers_[k];
      const std::size_t in = k == 0 ? L.wx->value.cols : hidden_;
      if (L.wx->value.rows != g || L.wx->value.cols != in || L.wh->value.rows != g || L.wh->value.cols != hidden_ ||
          L.b->value.rows != g || L.b->value.cols != 1)
        throw ShapeError("'" + prefix + "': inconsistent shapes in layer " + std::to_string(k));
    }
  }

  CellKind kind() const { return kind_; }
  std::size_t layers() const { return layers_.size(); }
  std::size_t hidden() const { return hidden_; }
  std::size_t input_dim() const { return layers_[0].wx->value.cols; }

  RecurrentState<T> zero_state() const {
    RecurrentState<T> s;
    s.h.assign(layers_.size(), std::vector<T>(hidden_, T(0)));
    if (kind_ == CellKind::Lstm) s.c.assign(layers_.size(), std::vector<T>(hidden_, T(0)));
    return s;
  }

  /// Advances one time step. When `cache` is non-null it receives what
  /// backward_step needs.
  RecurrentState<T> step(const RecurrentState<T>& prev, std::span<const T> input, StepCache<T>* cache = nullptr) const {
    if (input.size() != input_dim())
      throw ShapeError("recurrent step: input has " + std::to_string(input.size()) + ", expected " +
                       std::to_string(input_dim()));
    if (prev.h.size() != layers_.size()) throw ShapeError("recurrent step: state layer count mismatch");
    RecurrentState<T> next;
    next.h.resize(layers_.size());
    if (kind_ == CellKind::Lstm) next.c.resize(layers_.size());
    if (cache) cache->assign(layers_.size(), {});
    std::vector<T> x(input.begin(), input.end());
    const std::size_t H = hidden_;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& L = layers_[k];
      std::vector<T> pre(L.b->value.values);
      matvec_acc<T>(L.wx->value, x, pre);
      matvec_acc<T>(L.wh->value, prev.h[k], pre);
      if (kind_ == CellKind::VanillaRnn) {
        for (auto& v : pre) v = std::tanh(v);
        next.h[k] = pre;
        if (cache) {
          auto& lc = (*cache)[k];
          lc.x = x;
          lc.h_prev = prev.h[k];
          lc.h = pre;
        }
      } else {
        for (std::size_t j = 0; j < H; ++j) {
          pre[j] = sigmoid(pre[j]);
          pre[H + j] = sigmoid(pre[H + j]);
          pre[2 * H + j] = std::tanh(pre[2 * H + j]);
          pre[3 * H + j] = sigmoid(pre[3 * H + j]);
        }
        std::vector<T> c(H), tc(H), h(H);
        for (std::size_t j = 0; j < H; ++j) {
          c[j] = pre[H + j] * prev.c[k][j] + pre[j] * pre[2 * H + j];
          tc[j] = std::tanh(c[j]);
          h[j] = pre[3 * H + j] * tc[j];
        }
        if (cache) {
          auto& lc = (*cache)[k];
          lc.x = x;
          lc.h_prev = prev.h[k];
          lc.c_prev = prev.c[k];
          lc.gates = pre;
          lc.c = c;
          lc.tanh_c = tc;
          lc.h = h;
        }
        next.h[k] = h;
        next.c[k] = std::move(c);
      }
      x = next.h[k];
    }
    return next;
  }

  /// Back-propagates one step. On entry `dstate` holds d(loss)/d(state after
  /// this step) arriving from the future; `dh_top` is the gradient on this
  /// step's top-layer output from everything else. On exit `dstate` holds
  /// d(loss)/d(state before this step) and the return value is d(loss)/d(input).
  std::vector<T> backward_step(const StepCache<T>& cache, std::span<const T> dh_top, RecurrentState<T>& dstate) const {
    const std::size_t H = hidden_;
    std::vector<T> dx_above(dh_top.begin(), dh_top.end());
    for (std::size_t kk = layers_.size(); kk-- > 0;) {
      const auto& L = layers_[kk];
      const auto& lc = cache[kk];
      std::vector<T> dh(H);
      for (std::size_t j = 0; j < H; ++j) dh[j] = dstate.h[kk][j] + dx_above[j];
      std::vector<T> dpre;
      if (kind_ == CellKind::VanillaRnn) {
        dpre.resize(H);
        for (std::size_t j = 0; j < H; ++j) dpre[j] = dh[j] * (T(1) - lc.h[j] * lc.h[j]);
      } else {
        dpre.resize(4 * H);
        auto& dc = dstate.c[kk];
        for (std::size_t j = 0; j < H; ++j) {
          const T i = lc.gates[j], f = lc.gates[H + j], g = lc.gates[2 * H + j], o = lc.gates[3 * H + j];
          const T dct = dc[j] + dh[j] * o * (T(1) - lc.tanh_c[j] * lc.tanh_c[j]);
          dpre[j] = dct * g * i * (T(1) - i);
          dpre[H + j] = dct * lc.c_prev[j] * f * (T(1) - f);
          dpre[2 * H + j] = dct * i * (T(1) - g * g);
          dpre[3 * H + j] = dh[j] * lc.tanh_c[j] * o * (T(1) - o);
          dc[j] = dct * f;
        }
      }
      outer_acc<T>(L.wx->grad, dpre, lc.x);
      outer_acc<T>(L.wh->grad, dpre, lc.h_prev);
      for (std::size_t j = 0; j < dpre.size(); ++j) L.b->grad.values[j] += dpre[j];
      std::vector<T> dhp(H, T(0));
      matvec_t_acc<T>(L.wh->value, dpre, dhp);
      dstate.h[kk] = std::move(dhp);
      std::vector<T> dx(L.wx->value.cols, T(0));
      matvec_t_acc<T>(L.wx->value, dpre, dx);
      dx_above = std::move(dx);
    }
    return dx_above;
  }

 private:
  struct Layer {
    Param<T>* wx;
    Param<T>* wh;
    Param<T>* b;
  };
  std::vector<Layer> layers_;
  std::size_t hidden_ = 0;
  CellKind kind_ = CellKind::Lstm;
};

}  // namespace couplet::nn
