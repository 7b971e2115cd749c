#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "couplet/errors.hpp"
#include "couplet/nn/params.hpp"
#include "couplet/rng.hpp"

namespace couplet {

struct TrainHyper {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 0.001;
  double clip = 5.0;
  nn::ClipMode clip_mode = nn::ClipMode::GlobalNorm;
  std::uint64_t seed = 1;
};

struct TrainLog {
  std::vector<double> train_loss;       // mean example loss per epoch
  std::vector<double> validation_loss;  // empty when there is no validation data
  std::size_t best_epoch = 0;           // 1-based; 0 = initial parameters kept
  std::size_t steps = 0;
};

/// Mini-batch Adam over a list of examples.
///
/// `loss_and_grad(example, scale)` returns the example loss and accumulates
/// scale * d(loss)/d(params); `loss(example)` evaluates without gradients.
/// Examples are reshuffled every epoch from `hyper.seed`. When validation data
/// is present the parameters from the best validation epoch are restored at
/// the end.
template <class T, class Example, class LossGradFn, class LossFn>
TrainLog run_training(nn::ParamSet<T>& params, const std::vector<Example>& train, const std::vector<Example>& validation,
                      const TrainHyper& hyper, LossGradFn&& loss_and_grad, LossFn&& loss) {
  if (hyper.epochs > 0 && train.empty()) throw std::invalid_argument("training: empty training set");
  if (hyper.batch_size == 0) throw std::invalid_argument("training: batch size must be positive");
  TrainLog log;
  Rng rng(Rng::mix(hyper.seed, 0x7472));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto validate = [&] {
    double sum = 0;
    for (const auto& ex : validation) sum += loss(ex);
    return sum / static_cast<double>(validation.size());
  };
  double best = validation.empty() ? 0.0 : validate();
  nn::ParamSet<T> best_params;
  if (!validation.empty() && hyper.epochs > 0) best_params = params;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      params.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const double l = loss_and_grad(train[order[k]], scale);
        if (!std::isfinite(l)) throw TrainingError("non-finite loss (epoch " + std::to_string(epoch) + ")", log.steps + 1);
        epoch_sum += l;
      }
      if (hyper.clip_mode == nn::ClipMode::GlobalNorm)
        nn::clip_global_norm(params, hyper.clip);
      else
        nn::clip_elementwise(params, hyper.clip);
      try {
        params.adam_step(hyper.lr);
      } catch (const NumericError& e) {
        throw TrainingError(e.what(), log.steps + 1);
      }
      ++log.steps;
    }
    log.train_loss.push_back(epoch_sum / static_cast<double>(train.size()));
    if (!validation.empty()) {
      const double v = validate();
      log.validation_loss.push_back(v);
      if (v < best) {
        best = v;
        log.best_epoch = epoch;
        best_params.copy_values_from(params);
      }
    }
  }
  if (!validation.empty() && hyper.epochs > 0) {
    params.copy_values_from(best_params);
  } else {
    log.best_epoch = hyper.epochs;
  }
  return log;
}

}  // namespace couplet
