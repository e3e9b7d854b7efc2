#pragma once

#include <string>
#include <vector>

#include "bifc/diffcore/tape.hpp"
#include "bifc/diffcore/tensor.hpp"

namespace bifc {

enum class Direction { minimize, maximize };

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::vector<Tensor> velocity;  // one buffer per parameter, lazily sized
};

struct SgdUpdate {
  std::vector<Tensor> params;
  OptimizerState state;
};

/// Pure SGD-with-momentum step: v <- m v + g, p <- p -/+ lr v.
/// Throws without producing an update when any gradient is non-finite.
inline SgdUpdate sgd_step(const std::vector<Tensor>& params,
                          const std::vector<Tensor>& grads,
                          const OptimizerState& state, Direction direction) {
  if (!(state.learning_rate >= 0.0)) {
    throw Error("sgd: learning rate must be non-negative");
  }
  if (!(state.momentum >= 0.0 && state.momentum < 1.0)) {
    throw Error("sgd: momentum must lie in [0, 1)");
  }
  if (params.size() != grads.size()) {
    throw Error("sgd: " + std::to_string(grads.size()) + " gradients for " +
                std::to_string(params.size()) + " parameters");
  }
  if (!state.velocity.empty() && state.velocity.size() != params.size()) {
    throw Error("sgd: velocity buffers do not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "sgd");
    if (!state.velocity.empty()) {
      require_same_shape(params[i], state.velocity[i], "sgd velocity");
    }
    if (!grads[i].all_finite()) {
      throw Error("sgd: non-finite gradient for parameter " + std::to_string(i) +
                  "; update skipped");
    }
  }

  SgdUpdate next{params, state};
  if (next.state.velocity.empty()) {
    for (const Tensor& p : params) next.state.velocity.emplace_back(p.shape());
  }
  const double sign = direction == Direction::minimize ? -1.0 : 1.0;
  const double lr = state.learning_rate, m = state.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& v = next.state.velocity[i];
    Tensor& p = next.params[i];
    const Tensor& g = grads[i];
    for (std::size_t e = 0; e < p.size(); ++e) {
      v[e] = m * v[e] + g[e];
      p[e] += sign * lr * v[e];
    }
  }
  return next;
}

/// Stateful wrapper that owns the velocity buffers of one parameter set.
class SgdOptimizer {
 public:
  SgdOptimizer(ParameterSet params, double learning_rate, double momentum)
      : params_(std::move(params)) {
    state_.learning_rate = learning_rate;
    state_.momentum = momentum;
  }

  void step(const Gradients& grads, Direction direction = Direction::minimize) {
    SgdUpdate next =
        sgd_step(params_.snapshot(), grads.aligned(params_), state_, direction);
    params_.restore(next.params);
    state_ = std::move(next.state);
  }

  const ParameterSet& params() const noexcept { return params_; }
  const OptimizerState& state() const noexcept { return state_; }
  OptimizerState& state() noexcept { return state_; }

 private:
  ParameterSet params_;
  OptimizerState state_;
};

}  // namespace bifc
