#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "auhm/errors.hpp"
#include "auhm/tensor.hpp"

namespace auhm {

struct RmsPropConfig {
  double lr = 1e-3;
  double alpha = 0.99;
  double eps = 1e-8;
};

/// Running mean of squared gradients, one buffer per parameter, zero at start.
template <typename T>
struct RmsPropState {
  std::vector<std::vector<T>> square_avg;
};

/// v <- alpha*v + (1-alpha)*g^2;  p <- p - lr*g/(sqrt(v)+eps)
template <typename T>
void rmsprop_step(std::vector<Tensor<T>>& params, RmsPropState<T>& state,
                  const RmsPropConfig& cfg) {
  if (!(cfg.lr > 0.0)) {
    throw ConfigError("rmsprop: learning rate must be positive, got " +
                      std::to_string(cfg.lr));
  }
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) {
    throw ConfigError("rmsprop: alpha must lie in [0, 1)");
  }
  if (state.square_avg.empty()) {
    for (const auto& p : params) state.square_avg.emplace_back(p.numel(), T(0));
  }
  if (state.square_avg.size() != params.size()) {
    throw InternalError("rmsprop: state built for a different parameter list");
  }
  const T lr = static_cast<T>(cfg.lr), alpha = static_cast<T>(cfg.alpha),
          eps = static_cast<T>(cfg.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.has_grad()) continue;
    auto values = p.data();
    const auto grads = std::as_const(p).grad();
    auto& v = state.square_avg[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grads[i];
      v[i] = alpha * v[i] + (T(1) - alpha) * g * g;
      values[i] -= lr * g / (std::sqrt(v[i]) + eps);
    }
  }
}

}  // namespace auhm
