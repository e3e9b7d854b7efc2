#include <gtest/gtest.h>

#include <set>

#include "bifc/gradient_suite.hpp"

using namespace bifc;

namespace {

const std::vector<GradCase>& cases() {
  static const std::vector<GradCase> c = gradient_cases();
  return c;
}

std::vector<std::string> case_names() {
  std::vector<std::string> out;
  for (const auto& c : cases()) out.push_back(c.name);
  return out;
}

struct FaultGuard {
  explicit FaultGuard(std::string op) { debug::sign_flip_fault() = std::move(op); }
  ~FaultGuard() { debug::sign_flip_fault().clear(); }
};

}  // namespace

class GradCaseTest : public ::testing::TestWithParam<std::string> {};

TEST_P(GradCaseTest, PassesOnThreeSeeds) {
  const auto reports = run_gradient_suite(3, 21, GetParam());
  ASSERT_FALSE(reports.empty());
  for (const auto& r : reports) {
    if (r.name != GetParam()) continue;
    EXPECT_TRUE(r.passed()) << r.name << ": " << r.stats.failed << " of " << r.stats.compared
                            << " failed, max error " << r.stats.max_error;
  }
}

INSTANTIATE_TEST_SUITE_P(Suite, GradCaseTest, ::testing::ValuesIn(case_names()),
                         [](const auto& info) { return info.param; });

TEST(GradSuite, CoversRequiredOperators) {
  const auto names = case_names();
  const std::set<std::string> have(names.begin(), names.end());
  for (const char* n : {"conv2d_k1", "conv2d_k2", "conv2d_k3", "conv2d_k4", "conv2d_k5",
                        "conv2d_k6", "log2shift", "gap", "dense", "fractal_slope",
                        "affine_resample", "fcf_forward", "bifc_forward_loss"}) {
    EXPECT_TRUE(have.count(n)) << n;
  }
}

TEST(GradSuite, SignFlipIsDetected) {
  for (const char* op : {"conv2d", "log2shift", "gap"}) {
    FaultGuard guard(op);
    const auto reports = run_gradient_suite(1, 5, op == std::string("conv2d") ? "conv2d_k3" : op);
    ASSERT_FALSE(reports.empty());
    EXPECT_FALSE(reports.front().passed()) << op;
  }
}

TEST(GradSuite, FaultInOneOpLeavesOthersPassing) {
  FaultGuard guard("sigmoid");
  for (const auto& r : run_gradient_suite(1, 5, "tanh")) EXPECT_TRUE(r.passed());
}

TEST(GradSuite, DeterministicPerSeed) {
  const auto a = run_gradient_suite(2, 9, "fractal_slope");
  const auto b = run_gradient_suite(2, 9, "fractal_slope");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].stats.compared, b[i].stats.compared);
    EXPECT_EQ(a[i].stats.max_error, b[i].stats.max_error);
  }
}

TEST(GradChecker, CatchesWrongAnalyticGradient) {
  // x^2 implemented with a deliberately wrong derivative through a custom op.
  struct BadSquare final : Op {
    const char* name() const override { return "bad_square"; }
    Tensor forward(std::span<const Tensor* const> in) override {
      Tensor y = *in[0];
      for (double& v : y.values()) v *= v;
      return y;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) override {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += 3.0 * (*in[0])[i] * g[i];
    }
  };
  Rng rng(1);
  Tensor x = random_tensor({4}, rng, 0.5, 1.0);
  GradChecker check(
      [](Tape& tape, const std::vector<Var>& in) {
        return tape.apply(std::make_unique<BadSquare>(), {in[0]});
      },
      {detail::target(x)});
  const GradCheckStats s = check.run(rng);
  EXPECT_EQ(s.compared, 4u);
  EXPECT_EQ(s.failed, 4u);
}

TEST(GradChecker, RelativeErrorUsesFloor) {
  EXPECT_NEAR(grad_error(1.0, 1.1, 1e-5), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(grad_error(0.0, 1e-7, 1e-5), 1e-7 / 1e-5);
}
