#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bifc/augment/adversarial.hpp"
#include "bifc/data/metrics.hpp"
#include "bifc/data/scene.hpp"
#include "bifc/diffcore/optim.hpp"
#include "bifc/fusion/bifcnet.hpp"

namespace bifc {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double lr_theta = 0.01;
  double lr_phi = 0.01;
  double momentum = 0.9;
  bool augment = false;
  /// Feed an all-zero depth map (RGB-only ablation).
  bool zero_depth = false;
  /// Evaluate the training set every this many epochs (and after the
  /// last); 0 = only after the last.
  std::size_t eval_every = 1;
  /// Stop after the first evaluation whose mIoU reaches this value.
  std::optional<double> target_miou;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs == 0) throw Error("train: epochs must be positive");
    if (batch_size == 0) throw Error("train: batch size must be positive");
    if (!(lr_theta >= 0.0) || !(lr_phi >= 0.0)) throw Error("train: learning rates must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("train: momentum must lie in [0, 1)");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training loss over the epoch's batches
  std::optional<SegMetrics> metrics;
};

inline std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,loss,miou,pa\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.loss << ',';
    if (e.metrics) {
      os << e.metrics->miou << ',' << e.metrics->pa;
    } else {
      os << "nan,nan";
    }
    os << '\n';
  }
  return os.str();
}

struct NetInput {
  Var rgb;
  Var depth;
};

inline NetInput make_input(Tape& tape, const Scene& scene, bool zero_depth = false) {
  scene.validate();
  Tensor depth = zero_depth ? Tensor(scene.depth.shape()) : depth_to_input(scene.depth);
  return {tape.constant(scene.rgb), tape.constant(std::move(depth))};
}

inline SegMask argmax_labels(const Tensor& logits) {
  require_rank(logits, 3, "argmax_labels");
  const std::size_t K = logits.dim(0), H = logits.dim(1), W = logits.dim(2);
  SegMask out(H, W, 0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < K; ++k) {
        if (logits.at(k, y, x) > logits.at(best, y, x)) best = k;
      }
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template <Segmenter S>
SegMask predict(S& net, const Scene& scene, bool zero_depth = false) {
  Tape tape;
  tape.freeze(net.parameters());
  const NetInput in = make_input(tape, scene, zero_depth);
  return argmax_labels(net.forward(tape, in.rgb, in.depth).value());
}

template <Segmenter S>
ConfusionMatrix confusion(S& net, const std::vector<Scene>& scenes, bool zero_depth = false) {
  if (scenes.empty()) throw Error("evaluate: no scenes");
  ConfusionMatrix conf;
  for (const Scene& s : scenes) conf.add(s.label, predict(net, s, zero_depth));
  return conf;
}

template <Segmenter S>
SegMetrics evaluate(S& net, const std::vector<Scene>& scenes, bool zero_depth = false) {
  return compute_metrics(confusion(net, scenes, zero_depth));
}

/// Mean cross-entropy of a clean (unaugmented) batch, with gradients.
template <Segmenter S>
LossEval clean_loss(S& net, const std::vector<const Scene*>& batch, bool zero_depth,
                    bool with_grad = true) {
  LossEval r;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Scene* s : batch) {
    Tape tape;
    const NetInput in = make_input(tape, *s, zero_depth);
    Var loss = softmax_cross_entropy(net.forward(tape, in.rgb, in.depth), mask_labels(s->label));
    const double v = loss.value().item();
    if (!std::isfinite(v)) throw Error("train: non-finite loss");
    r.loss += v * inv;
    if (with_grad) r.grads.accumulate(tape.backward(loss), inv);
  }
  return r;
}

/// Mini-batch SGD with momentum on cross-entropy. With `augment`, each batch
/// runs one adversarial round against `augmentor` instead of a plain step.
template <Segmenter S>
std::vector<EpochLog> train_segmentation(
    S& net, const std::vector<Scene>& scenes, const TrainConfig& cfg,
    Augmentor* augmentor = nullptr,
    const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (scenes.empty()) throw Error("train: dataset is empty");
  if (cfg.augment && !augmentor) throw Error("train: augmentation requested without augmentor");
  if (cfg.augment && cfg.zero_depth) {
    throw Error("train: the RGB-only ablation does not support augmentation");
  }
  SgdOptimizer theta_opt(net.parameters(), cfg.lr_theta, cfg.momentum);
  std::optional<SgdOptimizer> phi_opt;
  if (cfg.augment && augmentor) phi_opt.emplace(augmentor->parameters(), cfg.lr_phi, cfg.momentum);
  Rng rng = derive_rng(cfg.seed, 0x7a1);

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (cfg.augment) {
        std::vector<Scene> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(scenes[order[i]]);
        const RoundResult r =
            adversarial_round(net, *augmentor, batch, theta_opt, *phi_opt, rng, false);
        loss_sum += r.descent.before;
      } else {
        std::vector<const Scene*> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(&scenes[order[i]]);
        LossEval e = clean_loss(net, batch, cfg.zero_depth);
        theta_opt.step(e.grads, Direction::minimize);
        loss_sum += e.loss;
      }
      ++batches;
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(batches), std::nullopt};
    if ((cfg.eval_every && epoch % cfg.eval_every == 0) || epoch == cfg.epochs) {
      entry.metrics = evaluate(net, scenes, cfg.zero_depth);
    }
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (cfg.target_miou && entry.metrics && entry.metrics->miou >= *cfg.target_miou) break;
  }
  return log;
}

}  // namespace bifc
