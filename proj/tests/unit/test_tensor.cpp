#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "tsfm/errors.hpp"
#include "tsfm/gradcheck.hpp"
#include "tsfm/ops.hpp"
#include "tsfm/random.hpp"
#include "tsfm/tensor.hpp"
#include "tsfm/workbench.hpp"

using namespace tsfm;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void expect_near_all(const Tensor& t, const std::vector<double>& want, double tol) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "index " << i;
}

Tensor randn(Shape s, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = normal(rng);
  return Tensor(std::move(s), std::move(v), grad);
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, m)), values(m));
}

TEST(Matmul, HandComputedProduct) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 1}, {5, 6});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{17, 39}));
}

TEST(Matmul, InnerMismatchNamesBothShapes) {
  const Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
  }
}

TEST(Matmul, BackwardMatchesTransposedProducts) {
  Rng rng(3);
  const Tensor a = randn({3, 4}, rng, true), b = randn({4, 2}, rng, true);
  sum(matmul(a, b)).backward();
  // dA = 1·Bᵀ → row sums of B; dB = Aᵀ·1 → column sums of A.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a.grad()[i * 4 + k], b[k * 2] + b[k * 2 + 1], 1e-12);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(b.grad()[k * 2 + j], a[k] + a[4 + k] + a[8 + k], 1e-12);
}

TEST(Conv1d, IdentityTap) {
  const Tensor x({1, 4}, {1, 1, 1, 1});
  const Tensor k({1, 1, 1}, {1});
  EXPECT_EQ(values(conv1d(x, k, 1, 0)), (std::vector<double>{1, 1, 1, 1}));
}

TEST(Conv1d, SlidingWindowSum) {
  const Tensor x({1, 4}, {1, 2, 3, 4});
  const Tensor k({1, 1, 2}, {1, 1});
  EXPECT_EQ(values(conv1d(x, k, 1, 0)), (std::vector<double>{3, 5, 7}));
}

TEST(Conv1d, NoKernelFlip) {
  const Tensor x({1, 3}, {1, 2, 3});
  const Tensor k({1, 1, 2}, {1, 0});
  EXPECT_EQ(values(conv1d(x, k, 1, 0)), (std::vector<double>{1, 2}));
}

TEST(Conv1d, OutputLengthFormula) {
  Rng rng(1);
  for (std::size_t len : {5, 8, 13})
    for (std::size_t k : {1, 3, 4})
      for (std::size_t stride : {1, 2, 3})
        for (std::size_t pad : {0, 1, 2}) {
          if (len + 2 * pad < k) continue;
          const Tensor y = conv1d(randn({2, len}, rng), randn({3, 2, k}, rng), stride, pad);
          EXPECT_EQ(y.shape(), (Shape{3, (len + 2 * pad - k) / stride + 1}));
        }
}

TEST(Conv1d, KernelLongerThanPaddedInput) {
  EXPECT_THROW(conv1d(Tensor::zeros({1, 3}), Tensor::zeros({1, 1, 6}), 1, 1), DimensionError);
}

TEST(Conv1d, KernelGradientMatchesFiniteDifferences) {
  Rng rng(11);
  const Tensor x = randn({2, 9}, rng), k = randn({3, 2, 4}, rng, true), r = randn({3, 8}, rng);
  const double err = grad_check([&] { return sum(mul(conv1d(x, k, 1, 1), r)); }, {k});
  EXPECT_LT(err, 1e-4);
}

TEST(LayerNorm, ConstantRowGoesToZero) {
  const Tensor x({1, 3}, {5, 5, 5});
  const Tensor y = layer_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), 1e-5);
  expect_near_all(y, {0, 0, 0}, 1e-12);
}

TEST(LayerNorm, TwoPointClosedForm) {
  const Tensor x({1, 2}, {1, 3});
  const Tensor y = layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  expect_near_all(y, {-1, 1}, 1e-9);
}

TEST(LayerNorm, ZeroGammaCollapsesToBeta) {
  Rng rng(2);
  const Tensor y = layer_norm(randn({4, 3}, rng), Tensor::zeros({3}), Tensor::full({3}, 7.0));
  for (double v : y.data()) EXPECT_EQ(v, 7.0);
}

TEST(LayerNorm, RejectsNonPositiveEps) {
  EXPECT_THROW(layer_norm(Tensor::zeros({1, 2}), Tensor::zeros({2}), Tensor::zeros({2}), 0.0), ConfigError);
}

TEST(SoftmaxAttention, SingleTokenReturnsValue) {
  const Tensor q({1, 2}, {0.3, -1}), k({1, 2}, {2, 5}), v({1, 2}, {4, -6});
  expect_near_all(softmax_attention(q, k, v), {4, -6}, 1e-15);
}

TEST(SoftmaxAttention, IdenticalKeysAverageValues) {
  Rng rng(4);
  const Tensor q = randn({3, 4}, rng), v = randn({3, 4}, rng);
  const Tensor k({3, 4}, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4});
  const Tensor y = softmax_attention(q, k, v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y[i * 4 + j], (v[j] + v[4 + j] + v[8 + j]) / 3.0, 1e-12);
}

TEST(SoftmaxAttention, TwoTokenHandComputed) {
  const Tensor q({2, 2}, {1, 0, 0, 1}), k({2, 2}, {1, 0, 0, 1}), v({2, 2}, {1, 2, 3, 4});
  // Each query matches its own key with logit 1/√2 and the other with 0.
  const double w = std::exp(1 / std::sqrt(2.0)) / (std::exp(1 / std::sqrt(2.0)) + 1.0);
  expect_near_all(softmax_attention(q, k, v), {w * 1 + (1 - w) * 3, w * 2 + (1 - w) * 4, (1 - w) * 1 + w * 3, (1 - w) * 2 + w * 4},
                  1e-12);
}

TEST(SoftmaxAttention, WeightRowsSumToOne) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + trial, d = 2 + trial % 3;
    const Tensor w = attention_weights(scale(randn({n, d}, rng), 5.0), randn({n, d}, rng));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += w[i * n + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(SoftmaxAttention, StableForHugeLogits) {
  const Tensor q({2, 1}, {1e4, -1e4}), k({2, 1}, {1e4, 1e4}), v({2, 1}, {1, 2});
  const Tensor out = softmax_attention(q, k, v);
  for (double x : out.data()) EXPECT_TRUE(std::isfinite(x));
}

TEST(MultiheadAttention, SingleHeadSingleGroupMatchesSoftmaxAttention) {
  Rng rng(6);
  const Tensor q = randn({4, 3}, rng), k = randn({4, 3}, rng), v = randn({4, 3}, rng);
  const Tensor a = multihead_attention(q, k, v, 4, 1), b = softmax_attention(q, k, v);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
}

TEST(Elementwise, EluDefinition) {
  const Tensor y = elu(Tensor({3}, {0.0, -20.0, 2.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], -1.0, 1e-8);
  EXPECT_EQ(y[2], 2.0);
}

TEST(Elementwise, GeluKnownValues) {
  const Tensor y = gelu(Tensor({3}, {0.0, 1.0, -1.0}));
  EXPECT_EQ(y[0], 0.0);
  // Exact erf form: x·Φ(x).
  EXPECT_NEAR(y[1], 0.8413447460685429, 1e-6);
  EXPECT_NEAR(y[2], -0.15865525393145707, 1e-6);
}

TEST(Elementwise, AddMulBroadcastErrors) {
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2, 2}), Tensor::zeros({4})), DimensionError);
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(7);
  const Tensor x = randn({5, 5}, rng);
  RunContext ctx = RunContext::eval();
  EXPECT_EQ(values(dropout(x, 0.5, ctx)), values(x));
}

TEST(Dropout, TrainModeScalesKeptEntries) {
  const Tensor x = Tensor::full({1000}, 1.0);
  RunContext ctx = RunContext::train(1, 0);
  const Tensor y = dropout(x, 0.25, ctx);
  std::size_t kept = 0;
  for (double v : y.data()) {
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
      ++kept;
    }
  }
  EXPECT_GT(kept, 650u);
  EXPECT_LT(kept, 850u);
}

TEST(Dropout, MaskDependsOnSeedOpAndStep) {
  const Tensor x = Tensor::full({64}, 1.0);
  auto draw = [&](std::uint64_t seed, std::uint64_t step, int skip) {
    RunContext ctx = RunContext::train(seed, step);
    for (int i = 0; i < skip; ++i) dropout(x, 0.5, ctx);
    return values(dropout(x, 0.5, ctx));
  };
  EXPECT_EQ(draw(1, 2, 0), draw(1, 2, 0));
  EXPECT_NE(draw(1, 2, 0), draw(2, 2, 0));
  EXPECT_NE(draw(1, 2, 0), draw(1, 3, 0));
  EXPECT_NE(draw(1, 2, 0), draw(1, 2, 1));
}

TEST(Dropout, RejectsBadProbability) {
  RunContext ctx = RunContext::train(0, 0);
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, ctx), ConfigError);
  EXPECT_THROW(dropout(Tensor::zeros({2}), -0.1, ctx), ConfigError);
}

TEST(MeanPool, ConstantPoolThenRepeatIsIdentity) {
  const Tensor x = Tensor::full({2, 12}, 3.5);
  const Tensor pooled = mean_pool(x, 1, 4);
  ASSERT_EQ(pooled.shape(), (Shape{2, 3}));
  std::vector<double> up;
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 12; ++i) up.push_back(pooled[r * 3 + i / 4]);
  EXPECT_EQ(up, values(x));
}

TEST(MeanPool, WindowMustDivideAxis) { EXPECT_THROW(mean_pool(Tensor::zeros({2, 5}), 1, 2), DimensionError); }

TEST(Concat, JoinsAlongAxis) {
  const Tensor a({2, 1}, {1, 2}), b({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(values(concat({a, b}, 1)), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  EXPECT_EQ(values(concat({a, a}, 0)), (std::vector<double>{1, 2, 1, 2}));
}

TEST(FftMagnitude, CosineHasSingleDominantBin) {
  const std::size_t t = 40, k = 5;
  std::vector<double> v(t);
  for (std::size_t n = 0; n < t; ++n) v[n] = std::cos(2 * std::numbers::pi * k * n / t);
  const Tensor m = fft_magnitude(Tensor({t}, v));
  for (std::size_t f = 0; f < t; ++f) {
    if (f == k || f == t - k) {
      EXPECT_NEAR(m[f], t / 2.0, 1e-9);
    } else {
      EXPECT_NEAR(m[f], 0.0, 1e-9);
    }
  }
}

TEST(FftMagnitude, MatchesDirectDft) {
  Rng rng(8);
  const std::size_t t = 9;
  const Tensor x = randn({2, t}, rng);
  const Tensor m = fft_magnitude(x);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t f = 0; f < t; ++f) {
      double re = 0, im = 0;
      for (std::size_t n = 0; n < t; ++n) {
        re += x[r * t + n] * std::cos(2 * std::numbers::pi * f * n / t);
        im -= x[r * t + n] * std::sin(2 * std::numbers::pi * f * n / t);
      }
      EXPECT_NEAR(m[r * t + f], std::hypot(re, im), 1e-10);
    }
}

TEST(FftMagnitude, CarriesNoGradient) {
  const Tensor x = Tensor::full({4}, 1.0, true);
  EXPECT_FALSE(fft_magnitude(x).requires_grad());
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Rng rng(9);
  const Tensor x = randn({3, 2}, rng, true);
  sum(mul(x, x)).backward();
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x[i]);
}

TEST(Backward, UnreachableLeafGetsExactZero) {
  Rng rng(10);
  Tensor x = randn({3}, rng, true), unused = randn({3}, rng, true);
  unused.zero_grad();
  sum(x).backward();
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, BlockedPathGivesExactZero) {
  Tensor x = Tensor::full({3}, 2.0, true);
  x.zero_grad();
  const Tensor y = Tensor::full({3}, 1.0, true);
  sum(add(y, scale(x, 0.0))).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, SecondCallThrows) {
  const Tensor x = Tensor::full({2}, 1.0, true);
  const Tensor loss = sum(mul(x, x));
  loss.backward();
  EXPECT_THROW(loss.backward(), ContractError);
}

TEST(Backward, NonScalarLossThrows) {
  const Tensor x = Tensor::full({2}, 1.0, true);
  EXPECT_THROW(mul(x, x).backward(), ContractError);
}

TEST(Backward, ModifiedInputIsDetected) {
  Tensor x = Tensor::full({2}, 1.0, true);
  const Tensor loss = sum(mul(x, x));
  x.mutable_data()[0] = 5.0;
  EXPECT_THROW(loss.backward(), ContractError);
}

TEST(Backward, GradientsAccumulateAcrossGraphs) {
  Tensor x = Tensor::full({2}, 1.0, true);
  x.zero_grad();
  sum(x).backward();
  sum(scale(x, 2.0)).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 3.0);
}

TEST(Backward, NoGradGuardStopsRecording) {
  const Tensor x = Tensor::full({2}, 1.0, true);
  NoGradGuard guard;
  EXPECT_FALSE(mul(x, x).requires_grad());
}

TEST(GradCheck, QuadraticIsNearExact) {
  Rng rng(12);
  const Tensor x = randn({4}, rng, true), a = randn({4, 4}, rng);
  const double err = grad_check([&] { return sum(mul(x, reshape(matmul(a, reshape(x, {4, 1})), {4}))); }, {x});
  EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, DropoutWithFrozenMask) {
  Rng rng(13);
  const Tensor x = randn({6, 5}, rng, true);
  const double err = grad_check(
      [&] {
        RunContext ctx = RunContext::train(42, 7);
        return sum(mul(dropout(x, 0.4, ctx), x));
      },
      {x});
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, LayerNormComposite) {
  Rng rng(14);
  const Tensor x = randn({3, 5}, rng, true), g = randn({5}, rng, true), b = randn({5}, rng, true), r = randn({3, 5}, rng);
  EXPECT_LT(grad_check([&] { return sum(mul(gelu(layer_norm(x, g, b)), r)); }, {x, g, b}), 1e-4);
}

TEST(GradCheck, RandomCompositeGraph) {
  Rng rng(15);
  const Tensor x = randn({4, 6}, rng, true), w = randn({3, 6}, rng, true), r = randn({4, 3}, rng);
  const double err = grad_check(
      [&] {
        const Tensor h = elu(linear(x, w));
        return add(sum(mul(h, r)), mean(mul(l2_normalize_rows(x), x)));
      },
      {x, w});
  EXPECT_LT(err, 1e-4);
}

// Each registered tensor-core case draws fresh random shapes from its seed;
// ten shapes per case, three seeds each.
class RegistryShapes : public ::testing::TestWithParam<std::string> {};

TEST_P(RegistryShapes, TenShapesThreeSeeds) {
  for (const auto& c : workbench::gradcheck_registry()) {
    if (c.name != GetParam()) continue;
    for (std::uint64_t seed = 0; seed < 30; ++seed) EXPECT_LT(c.run(1000 + seed), 1e-4) << "seed " << 1000 + seed;
  }
}

namespace {
std::vector<std::string> tensor_core_cases() {
  std::vector<std::string> out;
  for (const auto& c : workbench::gradcheck_registry())
    if (c.module == "tensor-core") out.push_back(c.name);
  return out;
}
}  // namespace

INSTANTIATE_TEST_SUITE_P(TensorCore, RegistryShapes, ::testing::ValuesIn(tensor_core_cases()),
                         [](const auto& info) { return info.param; });

TEST(Determinism, ReExecutionIsBitIdentical) {
  auto run = [] {
    Rng rng(16);
    const Tensor x = randn({8, 4}, rng, true), w = randn({4, 4}, rng, true);
    RunContext ctx = RunContext::train(5, 1);
    const Tensor y = dropout(gelu(multihead_attention(linear(x, w), x, x, 4, 2)), 0.3, ctx);
    const Tensor loss = sum(mul(y, y));
    loss.backward();
    std::vector<double> out = values(y);
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}
