#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bifc/diffcore/ops.hpp"
#include "bifc/diffcore/rng.hpp"
#include "bifc/diffcore/tape.hpp"

namespace bifc {

/// Something whose gradient is checked: either a free tensor (entered as a
/// tape variable) or a parameter (entered through Tape::param).
struct GradTarget {
  Tensor* tensor = nullptr;
  Parameter* param = nullptr;

  Tensor& value() const { return param ? param->value : *tensor; }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so near-zero gradients are
  /// compared in absolute terms.
  double floor = 1e-5;
  /// Coordinates checked per call; 0 = every coordinate.
  std::size_t sampled_coordinates = 0;
  /// Also compare one random directional derivative over all targets.
  bool directional = false;
  /// Redraws allowed when a perturbation crosses a kink.
  int max_redraws = 8;
};

struct GradCheckStats {
  std::size_t compared = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;  // perturbations that changed the branch pattern
  double max_error = 0.0;

  void merge(const GradCheckStats& o) {
    compared += o.compared;
    failed += o.failed;
    skipped += o.skipped;
    max_error = std::max(max_error, o.max_error);
  }
  bool passed() const { return compared > 0 && failed == 0; }
};

inline double grad_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite differences against the tape's reverse pass. `build`
/// receives one leaf per target, in order, and returns the function value;
/// non-scalar outputs are contracted with fixed random weights.
class GradChecker {
 public:
  using Build = std::function<Var(Tape&, const std::vector<Var>&)>;

  GradChecker(Build build, std::vector<GradTarget> targets, GradCheckOptions options = {})
      : build_(std::move(build)), targets_(std::move(targets)), opt_(options) {}

  GradCheckStats run(Rng& rng) {
    GradCheckStats stats;
    Tape tape;
    std::vector<Var> leaves = make_leaves(tape);
    Var loss = project(build_(tape, leaves), rng);
    const std::uint64_t sig = tape.branch_signature();
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (const Var& l : leaves) grads.push_back(tape.grad(l));

    std::size_t total = 0;
    for (const auto& t : targets_) total += t.value().size();
    if (total == 0) throw Error("gradcheck: no coordinates to check");

    const std::size_t coords = opt_.sampled_coordinates == 0
                                   ? total
                                   : std::min(total, opt_.sampled_coordinates);
    for (std::size_t c = 0; c < coords; ++c) {
      std::size_t flat = opt_.sampled_coordinates == 0
                             ? c
                             : static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(total - 1)));
      std::size_t ti = 0;
      while (flat >= targets_[ti].value().size()) flat -= targets_[ti++].value().size();
      auto numeric = central([&](double h) { targets_[ti].value()[flat] += h; }, sig);
      if (!numeric) {
        ++stats.skipped;
        continue;
      }
      record(stats, grads[ti][flat], *numeric);
    }

    if (opt_.directional) {
      for (int attempt = 0; attempt <= opt_.max_redraws; ++attempt) {
        std::vector<Tensor> dir;
        double norm2 = 0.0;
        for (const auto& t : targets_) {
          Tensor d(t.value().shape());
          for (double& v : d.values()) {
            v = normal(rng);
            norm2 += v * v;
          }
          dir.push_back(std::move(d));
        }
        const double inv = 1.0 / std::sqrt(norm2);
        double analytic = 0.0;
        for (std::size_t i = 0; i < dir.size(); ++i) {
          for (std::size_t e = 0; e < dir[i].size(); ++e) {
            dir[i][e] *= inv;
            analytic += grads[i][e] * dir[i][e];
          }
        }
        auto numeric = central(
            [&](double h) {
              for (std::size_t i = 0; i < dir.size(); ++i) {
                Tensor& v = targets_[i].value();
                for (std::size_t e = 0; e < v.size(); ++e) v[e] += h * dir[i][e];
              }
            },
            sig);
        if (!numeric) {
          ++stats.skipped;
          continue;
        }
        record(stats, analytic, *numeric);
        break;
      }
    }
    return stats;
  }

 private:
  std::vector<Var> make_leaves(Tape& tape) {
    std::vector<Var> leaves;
    for (const auto& t : targets_) {
      leaves.push_back(t.param ? tape.param(*t.param) : tape.variable(*t.tensor));
    }
    return leaves;
  }

  Var project(Var out, Rng& rng) {
    if (out.value().size() == 1) return out;
    if (!weights_ || weights_->shape() != out.shape()) {
      weights_ = random_tensor(out.shape(), rng, -1.0, 1.0);
    }
    return weighted_sum(out, *weights_);
  }

  // Function value and branch signature at the current target values.
  std::pair<double, std::uint64_t> evaluate() {
    Tape tape;
    std::vector<Var> leaves = make_leaves(tape);
    Var out = build_(tape, leaves);
    Var loss = out.value().size() == 1 ? out : weighted_sum(out, *weights_);
    return {loss.value().item(), tape.branch_signature()};
  }

  // (f(x + h) - f(x - h)) / 2h with `shift(delta)` moving the targets; empty
  // when either side lands on a different smooth piece.
  template <class Shift>
  std::optional<double> central(Shift shift, std::uint64_t sig) {
    const double h = opt_.step;
    const std::vector<Tensor> saved = snapshot();
    shift(h);
    const auto plus = evaluate();
    restore(saved);
    shift(-h);
    const auto minus = evaluate();
    restore(saved);
    if (plus.second != sig || minus.second != sig) return std::nullopt;
    return (plus.first - minus.first) / (2.0 * h);
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    for (const auto& t : targets_) out.push_back(t.value());
    return out;
  }
  void restore(const std::vector<Tensor>& saved) {
    for (std::size_t i = 0; i < targets_.size(); ++i) targets_[i].value() = saved[i];
  }

  void record(GradCheckStats& stats, double analytic, double numeric) const {
    const double err = grad_error(analytic, numeric, opt_.floor);
    ++stats.compared;
    stats.max_error = std::max(stats.max_error, err);
    if (!(err <= opt_.tolerance)) ++stats.failed;
  }

  Build build_;
  std::vector<GradTarget> targets_;
  GradCheckOptions opt_;
  std::optional<Tensor> weights_;
};

}  // namespace bifc
