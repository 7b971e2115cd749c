#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "couplet/nn/params.hpp"

namespace couplet::nn {

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares analytic gradients against central differences over every scalar
/// in `params`.
///
/// `loss()` must evaluate the objective from the current values without
/// touching gradients; `loss_and_grad()` must accumulate d(loss)/d(value) into
/// the gradient tensors. Relative error per scalar is
/// |a - n| / max(|a|, |n|, 1e-8); NaN anywhere yields a NaN result.
template <class LossFn, class LossGradFn>
GradCheckResult grad_check(ParamSet<double>& params, LossFn&& loss, LossGradFn&& loss_and_grad, double eps = 1e-5) {
  params.zero_grad();
  loss_and_grad();
  GradCheckResult res;
  for (auto& [name, p] : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.values[i];
      p.value.values[i] = saved + eps;
      const double up = loss();
      p.value.values[i] = saved - eps;
      const double down = loss();
      p.value.values[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = p.grad.values[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++res.checked;
      if (std::isnan(err)) {
        res.max_relative_error = std::numeric_limits<double>::quiet_NaN();
        res.worst_parameter = name;
        res.worst_index = i;
        return res;
      }
      if (err > res.max_relative_error) {
        res.max_relative_error = err;
        res.worst_parameter = name;
        res.worst_index = i;
      }
    }
  }
  params.zero_grad();
  return res;
}

}  // namespace couplet::nn
