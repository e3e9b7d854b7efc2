#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bifc/augment/augmentor.hpp"
#include "bifc/diffcore/gradcheck.hpp"
#include "bifc/fusion/bifcnet.hpp"
#include "bifc/fusion/fcf.hpp"
#include "bifc/fusion/fractal.hpp"

// Finite-difference checks for every differentiable operator and for the
// composed networks. Shared by the grad-check command and the test suite.

namespace bifc {

struct GradCase {
  std::string name;
  std::function<GradCheckStats(Rng&)> run;
};

struct GradCaseReport {
  std::string name;
  std::size_t seeds = 0;
  GradCheckStats stats;
  double seconds = 0.0;
  bool passed() const { return stats.passed(); }
};

namespace detail {

inline GradTarget target(Tensor& t) { return {&t, nullptr}; }

inline std::vector<GradTarget> param_targets(const ParameterSet& params) {
  std::vector<GradTarget> out;
  for (Parameter* p : params) out.push_back({nullptr, p});
  return out;
}

/// Check of a function of freshly drawn tensors, every coordinate.
inline GradCase tensor_case(std::string name, std::vector<Shape> shapes, double lo, double hi,
                            std::function<Var(const std::vector<Var>&)> fn) {
  return {name, [shapes, lo, hi, fn](Rng& rng) {
            std::vector<Tensor> values;
            for (const Shape& s : shapes) values.push_back(random_tensor(s, rng, lo, hi));
            std::vector<GradTarget> targets;
            for (Tensor& v : values) targets.push_back(target(v));
            GradChecker check([&](Tape&, const std::vector<Var>& in) { return fn(in); },
                              targets);
            return check.run(rng);
          }};
}

}  // namespace detail

inline std::vector<GradCase> gradient_cases() {
  using detail::tensor_case;
  std::vector<GradCase> cases;
  for (std::size_t k = 1; k <= 6; ++k) {
    cases.push_back(tensor_case("conv2d_k" + std::to_string(k), {{2, 5, 6}, {3, 2, k, k}}, -1, 1,
                                [](const std::vector<Var>& v) { return conv2d(v[0], v[1]); }));
  }
  cases.push_back(tensor_case("add_channel_bias", {{3, 4, 5}, {3}}, -1, 1,
                              [](const auto& v) { return add_channel_bias(v[0], v[1]); }));
  cases.push_back(tensor_case("relu", {{2, 4, 5}}, -1, 1, [](const auto& v) { return relu(v[0]); }));
  cases.push_back(
      tensor_case("log2shift", {{2, 4, 5}}, -1, 3, [](const auto& v) { return log2shift(v[0]); }));
  cases.push_back(
      tensor_case("sigmoid", {{2, 4, 5}}, -3, 3, [](const auto& v) { return sigmoid(v[0]); }));
  cases.push_back(tensor_case("tanh", {{2, 4, 5}}, -3, 3, [](const auto& v) { return tanh(v[0]); }));
  cases.push_back(
      tensor_case("clamp01", {{2, 4, 5}}, -0.5, 1.5, [](const auto& v) { return clamp01(v[0]); }));
  cases.push_back(tensor_case("add", {{2, 3, 4}, {2, 3, 4}}, -1, 1,
                              [](const auto& v) { return add(v[0], v[1]); }));
  cases.push_back(tensor_case("sub", {{2, 3, 4}, {2, 3, 4}}, -1, 1,
                              [](const auto& v) { return sub(v[0], v[1]); }));
  cases.push_back(tensor_case("mul", {{2, 3, 4}, {2, 3, 4}}, -1, 1,
                              [](const auto& v) { return mul(v[0], v[1]); }));
  cases.push_back(
      tensor_case("scale", {{2, 3, 4}}, -1, 1, [](const auto& v) { return scale(v[0], -1.7); }));
  cases.push_back(tensor_case("mul_channel", {{3, 4, 4}, {3}}, -1, 1,
                              [](const auto& v) { return mul_channel(v[0], v[1]); }));
  cases.push_back(tensor_case("sub_broadcast", {{3, 4, 4}, {1, 4, 4}}, -1, 1,
                              [](const auto& v) { return sub_broadcast(v[0], v[1]); }));
  cases.push_back(tensor_case("channel_mean", {{6, 3, 4}}, -1, 1,
                              [](const auto& v) { return channel_mean(v[0]); }));
  cases.push_back(tensor_case("channel_sum", {{6, 3, 4}}, -1, 1,
                              [](const auto& v) { return channel_sum(v[0]); }));
  cases.push_back(tensor_case("gap", {{4, 3, 5}}, -1, 1, [](const auto& v) { return gap(v[0]); }));
  cases.push_back(tensor_case("dense", {{7}, {5, 7}, {5}}, -1, 1,
                              [](const auto& v) { return dense(v[0], v[1], v[2]); }));
  cases.push_back(tensor_case("concat", {{2, 3, 4}, {1, 3, 4}, {3, 3, 4}}, -1, 1,
                              [](const auto& v) { return concat({v[0], v[1], v[2]}); }));
  cases.push_back(
      tensor_case("slice", {{5, 3, 4}}, -1, 1, [](const auto& v) { return slice(v[0], 1, 4); }));
  cases.push_back(
      tensor_case("avg_pool2", {{2, 6, 8}}, -1, 1, [](const auto& v) { return avg_pool2(v[0]); }));
  cases.push_back(tensor_case("upsample_bilinear_x2", {{2, 3, 4}}, -1, 1,
                              [](const auto& v) { return upsample_bilinear(v[0], 2); }));
  cases.push_back(tensor_case("upsample_bilinear_x8", {{1, 2, 3}}, -1, 1,
                              [](const auto& v) { return upsample_bilinear(v[0], 8); }));
  cases.push_back(tensor_case("sum", {{3, 4, 2}}, -1, 1, [](const auto& v) { return sum(v[0]); }));

  cases.push_back({"affine_resample", [](Rng& rng) {
                     Tensor image = random_tensor({2, 6, 7}, rng, -1, 1);
                     Tensor theta = random_tensor({6}, rng, -0.3, 0.3);
                     theta[0] += 1.0;
                     theta[4] += 1.0;
                     theta[2] = uniform(rng, -1.5, 1.5);
                     theta[5] = uniform(rng, -1.5, 1.5);
                     GradChecker check(
                         [](Tape&, const std::vector<Var>& v) { return affine_resample(v[0], v[1]); },
                         {detail::target(image), detail::target(theta)});
                     return check.run(rng);
                   }});
  cases.push_back({"bounded_sampling", [](Rng& rng) {
                     Tensor z = random_tensor({5}, rng, -2, 2);
                     const bool flip = uniform(rng, 0, 1) < 0.5;
                     GradChecker check(
                         [flip](Tape&, const std::vector<Var>& v) {
                           return bounded_sampling(v[0], flip, 16, 12);
                         },
                         {detail::target(z)});
                     return check.run(rng);
                   }});
  for (const bool ignore : {false, true}) {
    cases.push_back({ignore ? "softmax_cross_entropy_ignore" : "softmax_cross_entropy",
                     [ignore](Rng& rng) {
                       Tensor logits = random_tensor({4, 3, 4}, rng, -2, 2);
                       std::vector<int> labels(12);
                       for (int& l : labels) l = uniform_int(rng, 0, 3);
                       if (ignore) labels[0] = 0;
                       std::optional<int> ig = ignore ? std::optional<int>(0) : std::nullopt;
                       if (ignore && std::all_of(labels.begin(), labels.end(),
                                                 [](int l) { return l == 0; })) {
                         labels[1] = 1;
                       }
                       GradChecker check(
                           [labels, ig](Tape&, const std::vector<Var>& v) {
                             return softmax_cross_entropy(v[0], labels, ig);
                           },
                           {detail::target(logits)});
                       return check.run(rng);
                     }});
  }
  cases.push_back(tensor_case("fractal_slope", {{6, 3, 4}}, -0.5, 3,
                              [](const auto& v) { return fractal_slope(v[0]); }));

  cases.push_back({"fp_forward", [](Rng& rng) {
                     auto fp = std::make_unique<FPModule>("fp");
                     ParameterSet params;
                     fp->collect(params);
                     for (Parameter* p : params) {
                       for (double& v : p->value.values()) v *= uniform(rng, 0.5, 1.5);
                     }
                     Tensor x = random_tensor({3, 5, 5}, rng, -0.5, 2);
                     auto targets = detail::param_targets(params);
                     targets.push_back(detail::target(x));
                     GradChecker check(
                         [&fp](Tape& tape, const std::vector<Var>& v) {
                           return fp->forward(tape, v.back());
                         },
                         targets);
                     return check.run(rng);
                   }});
  cases.push_back({"fcf_forward", [](Rng& rng) {
                     Rng init = derive_rng(uniform_int(rng, 0, 1 << 30), 1);
                     auto fcf = std::make_unique<FCFModule>("fcf", 4, init, 2);
                     ParameterSet params;
                     fcf->collect(params);
                     Tensor rgb = random_tensor({4, 6, 6}, rng, -1, 2);
                     Tensor depth = random_tensor({4, 6, 6}, rng, -1, 2);
                     auto targets = detail::param_targets(params);
                     targets.push_back(detail::target(rgb));
                     targets.push_back(detail::target(depth));
                     GradCheckOptions opt;
                     opt.sampled_coordinates = 12;
                     opt.directional = true;
                     const std::size_t n = targets.size();
                     GradChecker check(
                         [&fcf, n](Tape& tape, const std::vector<Var>& v) {
                           return fcf->forward(tape, v[n - 2], v[n - 1]);
                         },
                         targets, opt);
                     return check.run(rng);
                   }});
  cases.push_back({"color_net", [](Rng& rng) {
                     Rng init = derive_rng(uniform_int(rng, 0, 1 << 30), 2);
                     auto net = std::make_unique<ColorNet>(init);
                     // A fresh net has a zero output layer; randomize it so
                     // every weight receives gradient.
                     fill_uniform(net->output().kernel.value, rng, -1, 1);
                     fill_uniform(net->output().bias.value, rng, -0.5, 0.5);
                     Tensor rgb = random_tensor({3, 4, 4}, rng, 0, 1);
                     auto targets = detail::param_targets(net->parameters());
                     targets.push_back(detail::target(rgb));
                     GradChecker check(
                         [&net](Tape& tape, const std::vector<Var>& v) {
                           return net->forward(tape, v.back());
                         },
                         targets);
                     return check.run(rng);
                   }});
  cases.push_back({"geo_net_resample", [](Rng& rng) {
                     Rng init = derive_rng(uniform_int(rng, 0, 1 << 30), 3);
                     auto net = std::make_unique<GeoNet>(init);
                     Tensor latent = random_tensor({GeoNet::kLatent}, rng, -2, 2);
                     Tensor image = random_tensor({1, 8, 8}, rng, 0, 1);
                     const bool flip = uniform(rng, 0, 1) < 0.5;
                     GradChecker check(
                         [&](Tape& tape, const std::vector<Var>&) {
                           Var theta = net->sampling(tape, latent, flip, 8, 8);
                           return affine_resample(tape.constant(image), theta);
                         },
                         detail::param_targets(net->parameters()));
                     return check.run(rng);
                   }});
  cases.push_back({"bifc_forward_loss", [](Rng& rng) {
                     BiFCNetConfig cfg;
                     cfg.seed = static_cast<std::uint64_t>(uniform_int(rng, 0, 1 << 30));
                     auto net = std::make_unique<BiFCNetMini>(cfg);
                     Tensor rgb = random_tensor({3, 16, 16}, rng, 0, 1);
                     Tensor depth = random_tensor({1, 16, 16}, rng, 0.5, 1.5);
                     std::vector<int> labels(256);
                     for (int& l : labels) l = uniform_int(rng, 0, 3);
                     GradCheckOptions opt;
                     opt.sampled_coordinates = 8;
                     opt.directional = true;
                     GradChecker check(
                         [&](Tape& tape, const std::vector<Var>&) {
                           Var logits =
                               net->forward(tape, tape.constant(rgb), tape.constant(depth));
                           return softmax_cross_entropy(logits, labels);
                         },
                         detail::param_targets(net->parameters()), opt);
                     return check.run(rng);
                   }});
  return cases;
}

/// Runs every case (or those whose name contains `filter`) over `seeds`
/// consecutive seeds starting at `first_seed`.
inline std::vector<GradCaseReport> run_gradient_suite(std::size_t seeds, std::uint64_t first_seed,
                                                      const std::string& filter = "") {
  std::vector<GradCaseReport> out;
  const auto cases = gradient_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    if (!filter.empty() && cases[c].name.find(filter) == std::string::npos) continue;
    GradCaseReport r;
    r.name = cases[c].name;
    r.seeds = seeds;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng = derive_rng(first_seed + s, c);
      r.stats.merge(cases[c].run(rng));
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(r);
  }
  return out;
}

}  // namespace bifc
