#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ovgt/tensor.hpp"
#include "test_support.hpp"

using namespace ovgt;
using ovgt::testing::max_gradient_error;
using ovgt::testing::probe;
using ovgt::testing::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tensor, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.size(-1), 3u);
}

TEST(Tensor, MatmulIdentity) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {3.5, -2, 7, 0.25});
  EXPECT_EQ(vals(matmul(eye, m)), vals(m));
}

TEST(Tensor, MatmulHandExpansion) {
  const Tensor a({1, 2}, {1, 2});
  const Tensor b({2, 1}, {3, 4});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c.item(), 11.0);
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
}

TEST(Tensor, MatmulGradientMatchesFiniteDifference) {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  EXPECT_LT(max_gradient_error([&] { return sum(matmul(a, b)); }, {a, b}), 1e-6);
}

TEST(Tensor, BatchedMatmulBroadcastsAndDifferentiates) {
  Rng rng(2);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 3, 5}));
  // second batch item computed directly
  double expect = 0.0;
  for (std::size_t k = 0; k < 4; ++k) expect += a.at({1, 2, k}) * b.at({k, 3});
  EXPECT_NEAR(c.at({1, 2, 3}), expect, 1e-14);
  EXPECT_LT(max_gradient_error([&] { return probe(matmul(a, b)); }, {a, b}), 1e-6);
}

TEST(Tensor, SoftmaxSymmetric) {
  const Tensor s = softmax(Tensor({2}, {0, 0}), 0);
  EXPECT_EQ(vals(s), (std::vector<double>{0.5, 0.5}));
}

TEST(Tensor, SoftmaxLargeLogitsDoNotOverflow) {
  const Tensor s = softmax(Tensor({2}, {1000, 0}), 0);
  EXPECT_NEAR(s.at({0}), 1.0, 1e-12);
  EXPECT_NEAR(s.at({1}), 0.0, 1e-12);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Rng rng(3);
  const Tensor x = random_tensor({6, 7}, rng, -20, 20, false);
  const Tensor s = softmax(x, 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(s.at({r, c}), 0.0);
      total += s.at({r, c});
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Tensor, SoftmaxJacobianMatchesFiniteDifference) {
  Rng rng(4);
  Tensor x = random_tensor({5}, rng, -2, 2);
  EXPECT_LT(max_gradient_error([&] { return probe(softmax(x, 0)); }, {x}), 1e-6);
  Tensor y = random_tensor({3, 4}, rng, -2, 2);
  EXPECT_LT(max_gradient_error([&] { return probe(softmax(y, 0)); }, {y}), 1e-6);
}

TEST(Tensor, LayerNormConstantRowIsZero) {
  const Tensor x({1, 4}, {3, 3, 3, 3});
  const Tensor y = layernorm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, LayerNormStandardizedRowIsEpsShrunk) {
  const Tensor y = layernorm(Tensor({2}, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  const double shrink = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y.at({0}), shrink, 1e-15);
  EXPECT_NEAR(y.at({1}), -shrink, 1e-15);
  EXPECT_NEAR(y.at({0}), 1.0, 1e-5);
}

TEST(Tensor, LayerNormGradientMatchesFiniteDifference) {
  Rng rng(5);
  Tensor x = random_tensor({3, 6}, rng, -2, 2);
  Tensor g = random_tensor({6}, rng, 0.5, 1.5);
  Tensor b = random_tensor({6}, rng);
  EXPECT_LT(max_gradient_error([&] { return probe(layernorm(x, g, b)); }, {x, g, b}), 1e-6);
}

TEST(Tensor, PatchifyZeroWeightsGiveZeroTokens) {
  Rng rng(6);
  const Tensor x = random_tensor({3, 8, 8}, rng, -1, 1, false);
  const Tensor out = patchify_conv(x, Tensor::zeros({3 * 4 * 4, 5}), Tensor::zeros({5}), 4);
  EXPECT_EQ(out.shape(), (Shape{4, 5}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, PatchifySinglePatch) {
  Rng rng(7);
  const Tensor x = random_tensor({2, 4, 4}, rng, -1, 1, false);
  const Tensor out = patchify_conv(x, random_tensor({32, 3}, rng, -1, 1, false), Tensor::zeros({3}), 4);
  EXPECT_EQ(out.shape(), (Shape{1, 3}));
}

TEST(Tensor, PatchifyRejectsIndivisibleInput) {
  EXPECT_THROW(patchify_conv(Tensor::zeros({1, 5, 4}), Tensor::zeros({4, 2}), Tensor::zeros({2}), 2), ShapeError);
}

namespace {

// Reshape-then-matmul reference built from independent primitives.
Tensor patchify_reference(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t p) {
  const std::size_t c = x.size(0), h = x.size(1), wd = x.size(2);
  const Tensor blocks = reshape(transpose(reshape(x, {c, h / p, p, wd / p, p}), {1, 3, 0, 2, 4}),
                                {(h / p) * (wd / p), c * p * p});
  return matmul(blocks, w) + b;
}

}  // namespace

TEST(Tensor, PatchifyEqualsReshapeMatmulReferenceBitwise) {
  Rng rng(8);
  struct Case {
    std::size_t c, h, w, p, dim;
  };
  for (const Case k : {Case{2, 4, 4, 2, 3}, Case{3, 8, 16, 4, 5}, Case{1, 6, 9, 3, 2}, Case{3, 32, 32, 8, 16}}) {
    const Tensor x = random_tensor({k.c, k.h, k.w}, rng, -1, 1, false);
    const Tensor w = random_tensor({k.c * k.p * k.p, k.dim}, rng, -1, 1, false);
    const Tensor b = random_tensor({k.dim}, rng, -1, 1, false);
    EXPECT_EQ(vals(patchify_conv(x, w, b, k.p)), vals(patchify_reference(x, w, b, k.p)));
  }
}

TEST(Tensor, PatchifyBatchedMatchesPerImage) {
  Rng rng(9);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng, -1, 1, false);
  const Tensor w = random_tensor({12, 4}, rng, -1, 1, false);
  const Tensor b = random_tensor({4}, rng, -1, 1, false);
  const Tensor batched = patchify_conv(x, w, b, 2);
  for (std::size_t n = 0; n < 2; ++n) {
    const Tensor single = patchify_conv(reshape(slice(x, 0, n, n + 1), {3, 4, 4}), w, b, 2);
    EXPECT_EQ(vals(reshape(slice(batched, 0, n, n + 1), {4, 4})), vals(single));
  }
}

TEST(Tensor, PatchifyGradientMatchesFiniteDifference) {
  Rng rng(10);
  Tensor x = random_tensor({2, 2, 4, 4}, rng);
  Tensor w = random_tensor({8, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  EXPECT_LT(max_gradient_error([&] { return probe(patchify_conv(x, w, b, 2)); }, {x, w, b}), 1e-6);
}

TEST(Tensor, BackwardOfSumIsOnes) {
  Rng rng(11);
  Tensor p = random_tensor({3, 2}, rng);
  sum(p).backward();
  for (double g : p.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tensor, BackwardOfSquareIsTwiceInput) {
  Rng rng(12);
  Tensor p = random_tensor({4}, rng);
  sum(p * p).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.grad()[i], 2.0 * p.values()[i]);
}

TEST(Tensor, RepeatedBackwardAccumulates) {
  Tensor p({2}, {1.0, 2.0}, true);
  const Tensor loss = sum(p * 3.0);
  loss.backward();
  loss.backward();
  EXPECT_EQ(vals(Tensor({2}, {p.grad()[0], p.grad()[1]})), (std::vector<double>{6.0, 6.0}));
  p.zero_grad();
  EXPECT_EQ(p.grad()[0], 0.0);
}

TEST(Tensor, SharedSubexpressionAccumulates) {
  Tensor x({1}, {0.7}, true);
  sum(x + x).backward();
  EXPECT_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  const Tensor y = x * 2.0;
  sum(y * y + y).backward();  // d/dx (4x^2 + 2x) = 8x + 2
  EXPECT_NEAR(x.grad()[0], 8.0 * 0.7 + 2.0, 1e-15);
}

TEST(Tensor, BackwardRequiresScalar) {
  Tensor p = Tensor::zeros({2}, true);
  EXPECT_THROW((p * 2.0).backward(), ShapeError);
}

TEST(Tensor, GradientPopulatedOnEveryReachableLeaf) {
  Rng rng(13);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor unused = random_tensor({2}, rng);
  sum(exp(a) * b).backward();
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_EQ(a.grad().size(), a.numel());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Tensor, NoGradGuardDropsGraph) {
  Tensor p = Tensor::full({2}, 1.0, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE((p * 2.0).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE((p * 2.0).requires_grad());
}

TEST(Tensor, BroadcastingArithmetic) {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor row({3}, {10, 20, 30});
  const Tensor col({2, 1}, {100, 200});
  EXPECT_EQ(vals(a + row), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ(vals(a * col), (std::vector<double>{100, 200, 300, 800, 1000, 1200}));
  EXPECT_EQ(vals(a - 1.0), (std::vector<double>{0, 1, 2, 3, 4, 5}));
  EXPECT_THROW(a + Tensor::zeros({2}), ShapeError);
}

TEST(Tensor, ElementwiseGradientsMatchFiniteDifference) {
  Rng rng(14);
  Tensor a = random_tensor({2, 3}, rng, 0.2, 1.5);
  Tensor b = random_tensor({3}, rng, 0.2, 1.5);
  Tensor c = random_tensor({2, 1}, rng, 0.2, 1.5);
  EXPECT_LT(max_gradient_error([&] { return probe(a + b - c); }, {a, b, c}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(a * b / c); }, {a, b, c}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(exp(a) + log(b)); }, {a, b}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(gelu(a - 0.8)); }, {a}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(softplus(a - 1.0) * sqrt(b)); }, {a, b}), 1e-6);
}

TEST(Tensor, KinkedOpsAwayFromKinks) {
  Tensor a({6}, {-1.2, -0.5, -0.1, 0.2, 0.9, 1.4}, true);
  EXPECT_LT(max_gradient_error([&] { return probe(abs(a)); }, {a}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(relu(a)); }, {a}), 1e-6);
  EXPECT_EQ(vals(relu(a)), (std::vector<double>{0, 0, 0, 0.2, 0.9, 1.4}));
}

TEST(Tensor, StructuralOpsRoundTrip) {
  Rng rng(15);
  const Tensor x = random_tensor({2, 3, 4}, rng, -1, 1, false);
  const Tensor joined = concat({slice(x, 2, 0, 1), slice(x, 2, 1, 4)}, 2);
  EXPECT_EQ(vals(joined), vals(x));
  const Tensor back = transpose(transpose(x, {2, 0, 1}), {1, 2, 0});
  EXPECT_EQ(vals(back), vals(x));
  EXPECT_EQ(transpose(x, 0, 2).shape(), (Shape{4, 3, 2}));
  EXPECT_EQ(transpose(x, 0, 2).at({3, 1, 0}), x.at({0, 1, 3}));
  EXPECT_THROW(reshape(x, {5, 5}), ShapeError);
  EXPECT_THROW(slice(x, 1, 2, 5), ShapeError);
}

TEST(Tensor, StructuralOpGradientsMatchFiniteDifference) {
  Rng rng(16);
  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor y = random_tensor({2, 2, 4}, rng);
  EXPECT_LT(max_gradient_error([&] { return probe(concat({x, y}, 1)); }, {x, y}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(slice(x, 2, 1, 3)); }, {x}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(transpose(x, {2, 0, 1})); }, {x}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(reshape(x, {4, 6})); }, {x}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(sum(x, 1, true)); }, {x}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return probe(mean(x, 2)); }, {x}), 1e-6);
  EXPECT_LT(max_gradient_error([&] { return mean(x * x); }, {x}), 1e-6);
}

TEST(Tensor, Reductions) {
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(sum(x).item(), 21.0);
  EXPECT_EQ(mean(x).item(), 3.5);
  EXPECT_EQ(vals(sum(x, 0)), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(vals(mean(x, 1)), (std::vector<double>{2, 5}));
  EXPECT_EQ(sum(x, 1, true).shape(), (Shape{2, 1}));
}

TEST(Tensor, GeluMatchesErfForm) {
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  const Tensor y = gelu(x);
  for (std::size_t i = 0; i < 3; ++i) {
    const double v = x.values()[i];
    EXPECT_NEAR(y.values()[i], 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)), 1e-15);
  }
}
