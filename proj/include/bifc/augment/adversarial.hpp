#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "bifc/augment/augmentor.hpp"
#include "bifc/diffcore/optim.hpp"
#include "bifc/fusion/bifcnet.hpp"

namespace bifc {

struct StepLoss {
  double before = 0.0;
  std::optional<double> after;  // same batch and draws, after the update
};

struct RoundResult {
  StepLoss descent;  // theta step, phi frozen
  StepLoss ascent;   // phi step, theta frozen
};

enum class FrozenSide { segmenter, augmentor };

struct LossEval {
  double loss = 0.0;
  Gradients grads;
};

/// Mean cross-entropy of the segmenter over the augmented batch. The frozen
/// side enters the tape as constants.
template <Segmenter S>
LossEval augmented_loss(S& net, Augmentor& aug, const std::vector<Scene>& batch,
                        const std::vector<AugmentPlan>& plans, FrozenSide frozen,
                        bool with_grad) {
  if (batch.empty() || batch.size() != plans.size()) {
    throw Error("augmented_loss: batch and plan counts differ or are zero");
  }
  Tape tape;
  tape.freeze(frozen == FrozenSide::segmenter ? net.parameters() : aug.parameters());
  std::optional<Var> total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    AugmentedSample s = aug.apply(tape, batch[i], plans[i]);
    Var ce = softmax_cross_entropy(net.forward(tape, s.rgb, s.depth), mask_labels(s.label));
    total = total ? add(*total, ce) : ce;
  }
  Var loss = scale(*total, 1.0 / static_cast<double>(batch.size()));
  LossEval r;
  r.loss = loss.value().item();
  if (!std::isfinite(r.loss)) {
    throw Error("adversarial_round: non-finite loss, round aborted without update");
  }
  if (with_grad) r.grads = tape.backward(loss);
  return r;
}

/// One min-max round. Step A draws fresh augmentations and descends theta
/// with phi frozen; step B draws again and ascends phi with theta frozen.
/// With `measure`, each step's loss is re-evaluated on its own draws after
/// the update.
template <Segmenter S>
RoundResult adversarial_round(S& net, Augmentor& aug, const std::vector<Scene>& batch,
                              SgdOptimizer& theta_opt, SgdOptimizer& phi_opt, Rng& rng,
                              bool measure = true) {
  auto draw = [&] {
    std::vector<AugmentPlan> plans;
    plans.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) plans.push_back(draw_plan(aug.policy(), rng));
    return plans;
  };
  RoundResult r;

  const auto plans_a = draw();
  LossEval a = augmented_loss(net, aug, batch, plans_a, FrozenSide::augmentor, true);
  r.descent.before = a.loss;
  theta_opt.step(a.grads, Direction::minimize);
  if (measure) {
    r.descent.after =
        augmented_loss(net, aug, batch, plans_a, FrozenSide::augmentor, false).loss;
  }

  const auto plans_b = draw();
  LossEval b = augmented_loss(net, aug, batch, plans_b, FrozenSide::segmenter, true);
  r.ascent.before = b.loss;
  phi_opt.step(b.grads, Direction::maximize);
  if (measure) {
    r.ascent.after = augmented_loss(net, aug, batch, plans_b, FrozenSide::segmenter, false).loss;
  }
  return r;
}

}  // namespace bifc
