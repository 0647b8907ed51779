#include <gtest/gtest.h>

#include <random>

#include "depthbins/ops.hpp"
#include "test_util.hpp"

using namespace depthbins;
using testutil::graph_gradient_error;
using testutil::random_tensor;

namespace {

constexpr double kTol = 2e-2;  // float central differences

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<Scalar>(5)), ShapeError);
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.rows(), 6);
  EXPECT_EQ(t.cols(), 4);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
  EXPECT_EQ(t.reshaped({24}).shape(), std::vector<int>{24});
}

TEST(OpsGradient, MatmulAndLinear) {
  std::mt19937_64 rng(1);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::matmul(v[0], v[1]); },
                                 {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::matmul_nt(v[0], v[1]); },
                                 {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::linear(v[0], v[1], v[2]); },
                                 {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)}, rng),
            kTol);
}

TEST(OpsGradient, Elementwise) {
  std::mt19937_64 rng(2);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::add(v[0], v[1]); },
                                 {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::scale(v[0], 2.5f); }, {random_tensor({7}, rng)}, rng), kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::add_row_vector(v[0], v[1]); },
                                 {random_tensor({3, 4}, rng), random_tensor({4}, rng)}, rng),
            kTol);
  // Keep inputs away from the kink.
  Tensor x = random_tensor({20}, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::relu(v[0]); }, {x}, rng, 1e-3), kTol);
}

TEST(OpsGradient, SoftmaxAndNorms) {
  std::mt19937_64 rng(3);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::softmax_rows(v[0]); }, {random_tensor({4, 6}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::layer_norm(v[0], v[1], v[2]); },
                                 {random_tensor({4, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::group_norm(v[0], v[1], v[2], 2); },
                                 {random_tensor({3, 3, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng)}, rng),
            kTol);
}

TEST(OpsGradient, Conv2d) {
  std::mt19937_64 rng(4);
  for (int stride : {1, 2}) {
    EXPECT_LT(graph_gradient_error([stride](auto& v) { return ops::conv2d(v[0], v[1], v[2], 3, stride, 1); },
                                   {random_tensor({5, 6, 2}, rng), random_tensor({18, 3}, rng), random_tensor({3}, rng)},
                                   rng),
              kTol)
        << "stride " << stride;
  }
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::conv2d(v[0], v[1], nullptr, 1, 1, 0); },
                                 {random_tensor({4, 4, 3}, rng), random_tensor({3, 2}, rng)}, rng),
            kTol);
}

TEST(OpsGradient, ResizeSliceConcat) {
  std::mt19937_64 rng(5);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::resize_bilinear(v[0], 8, 12); },
                                 {random_tensor({4, 3, 2}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::slice_rows(v[0], 1, 3); }, {random_tensor({4, 3}, rng)}, rng),
            kTol);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::concat_rows({v[0], v[1]}); },
                                 {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)}, rng),
            kTol);
}

TEST(OpsGradient, Attention) {
  std::mt19937_64 rng(6);
  EXPECT_LT(graph_gradient_error([](auto& v) { return ops::attention(v[0], v[1], v[2], 2); },
                                 {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5, 4}, rng)},
                                 rng),
            kTol);
  std::vector<std::uint8_t> blocked(3 * 5, 0);
  blocked[1] = blocked[7] = 1;
  EXPECT_LT(graph_gradient_error([&](auto& v) { return ops::attention(v[0], v[1], v[2], 1, blocked); },
                                 {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5, 4}, rng)},
                                 rng),
            kTol);
}

TEST(Ops, AttentionWeightsAreNormalisedAndRespectMask) {
  std::mt19937_64 rng(7);
  std::vector<std::uint8_t> blocked(4 * 6, 0);
  blocked[0 * 6 + 2] = 1;
  Tensor w;
  ops::attention(leaf(random_tensor({4, 8}, rng), false), leaf(random_tensor({6, 8}, rng), false),
                 leaf(random_tensor({6, 8}, rng), false), 2, blocked, &w);
  ASSERT_EQ(w.shape(), (std::vector<int>{2, 4, 6}));
  for (int h = 0; h < 2; ++h) {
    for (int q = 0; q < 4; ++q) {
      double s = 0;
      for (int k = 0; k < 6; ++k) s += w[(h * 4 + q) * 6 + k];
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
    EXPECT_EQ(w[(h * 4 + 0) * 6 + 2], 0.0f);
  }
}

TEST(Ops, ResizeBilinearMatchesHalfPixelConvention) {
  // 2x upsampling of [0, 1] along a row: half-pixel centres give
  // 0, 0.25, 0.75, 1.
  Tensor x({1, 2, 1}, std::vector<Scalar>{0.0f, 1.0f});
  Var y = ops::resize_bilinear(constant(x), 1, 4);
  EXPECT_FLOAT_EQ(y->value[0], 0.0f);
  EXPECT_FLOAT_EQ(y->value[1], 0.25f);
  EXPECT_FLOAT_EQ(y->value[2], 0.75f);
  EXPECT_FLOAT_EQ(y->value[3], 1.0f);
}

TEST(Ops, ConstantInputsCarryNoClosures) {
  Var a = constant(Tensor({2, 2}, 1.0f));
  Var b = constant(Tensor({2, 2}, 2.0f));
  Var c = ops::matmul(a, b);
  EXPECT_FALSE(c->requires_grad);
  EXPECT_FALSE(static_cast<bool>(c->backward));
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  Var x = leaf(Tensor({1}, 3.0f), true);
  Var y = ops::add(x, x);  // dy/dx = 2
  run_backward(y);
  EXPECT_FLOAT_EQ(x->grad[0], 2.0f);
}

TEST(Autograd, GraphBindsParametersOnce) {
  ParameterStore store;
  Parameter& p = store.create("w", {2});
  p.value.fill(1.0f);
  Graph g(true);
  Var a = g.param(p);
  Var b = g.param(p);
  EXPECT_EQ(a.get(), b.get());
  Var s = ops::weighted_sum({ops::reshape(ops::slice_rows(ops::reshape(a, {2, 1}), 0, 1), {1})}, {3.0});
  g.backward(s);
  EXPECT_FLOAT_EQ(p.grad[0], 3.0f);
  EXPECT_FLOAT_EQ(p.grad[1], 0.0f);
  EXPECT_THROW(store.create("w", {1}), std::invalid_argument);
}

}  // namespace
