#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "lcnn/nn.hpp"
#include "test_util.hpp"

namespace lcnn {
namespace {

using testing::finite_difference;
using testing::max_rel_err;
using testing::random_matrix;

Network single_layer(Activation act) {
  Layer l{Matrix::identity(2), Matrix(2, 1), act};
  return Network(2, {l});
}

Network fixed_two_layer() {
  Layer l1{Matrix{{0.5, -1, 0.25}, {1.5, 0.5, -0.75}}, Matrix{{0.1}, {-0.2}}, Activation::ReLU};
  Layer l2{Matrix{{1, -2}, {0.5, 0.25}}, Matrix{{0.05}, {0}}, Activation::Identity};
  return Network(3, {l1, l2});
}

// Scalar-loop evaluation of one affine layer, independent of matmul.
Matrix straight_line_layer(const Layer& layer, const Matrix& x) {
  Matrix out(layer.out_dim(), x.cols());
  for (std::size_t b = 0; b < x.cols(); ++b)
    for (std::size_t i = 0; i < layer.out_dim(); ++i) {
      double acc = layer.bias(i, 0);
      for (std::size_t k = 0; k < layer.in_dim(); ++k) acc += layer.weight(i, k) * x(k, b);
      out(i, b) = layer.activation == Activation::ReLU && acc < 0.0 ? 0.0 : acc;
    }
  return out;
}

TEST(Forward, IdentityLayerPassesInputThrough) {
  const auto t = forward(single_layer(Activation::Identity), Matrix{{2}, {-3}});
  EXPECT_EQ(t.activations.size(), 2u);
  EXPECT_EQ(t.activations[0], (Matrix{{2}, {-3}}));
  EXPECT_EQ(t.output(), (Matrix{{2}, {-3}}));
}

TEST(Forward, ReluClampsNegatives) {
  const auto t = forward(single_layer(Activation::ReLU), Matrix{{2}, {-3}});
  EXPECT_EQ(t.output(), (Matrix{{2}, {0}}));
  EXPECT_EQ(t.pre_activations[0], (Matrix{{2}, {-3}}));
}

TEST(Forward, TwoLayerMatchesFrozenStraightLineTrace) {
  const Network net = fixed_two_layer();
  const Matrix x{{1, -1}, {2, 0.5}, {-1, 3}};
  const auto t = forward(net, x);
  // Frozen from a scalar-loop evaluation of the same network.
  const Matrix z1{{-1.65, -0.15}, {3.05, -3.7}};
  const Matrix a1{{0, 0}, {3.05, 0}};
  const Matrix z2{{-6.05, 0.05}, {0.7625, 0}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(t.pre_activations[0].data()[i], z1.data()[i], 1e-12);
    EXPECT_NEAR(t.activations[1].data()[i], a1.data()[i], 1e-12);
    EXPECT_NEAR(t.output().data()[i], z2.data()[i], 1e-12);
  }
}

TEST(Forward, RandomNetworkMatchesStraightLineEvaluation) {
  std::mt19937_64 rng(11);
  const std::vector<std::size_t> widths{7, 5, 3};
  const Network net = make_network(4, widths, 99);
  const Matrix x = random_matrix(4, 6, rng);
  const auto t = forward(net, x);
  Matrix expected = x;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    expected = straight_line_layer(net.layer(i), expected);
    EXPECT_LT(max_rel_err(t.activations[i + 1], expected), 1e-12);
  }
}

TEST(Forward, IsPure) {
  std::mt19937_64 rng(12);
  const std::vector<std::size_t> widths{6, 3};
  const Network net = make_network(5, widths, 1);
  const Matrix x = random_matrix(5, 4, rng);
  const auto a = forward(net, x);
  const auto b = forward(net, x);
  ASSERT_EQ(a.output().size(), b.output().size());
  EXPECT_EQ(std::memcmp(a.output().data().data(), b.output().data().data(),
                        a.output().size() * sizeof(double)),
            0);
}

TEST(Forward, RejectsWrongInputWidth) {
  EXPECT_THROW(forward(single_layer(Activation::ReLU), Matrix(3, 1)), ShapeError);
}

TEST(Network, RejectsBrokenChain) {
  Layer a{Matrix(3, 2), Matrix(3, 1), Activation::ReLU};
  Layer b{Matrix(2, 4), Matrix(2, 1), Activation::Identity};
  EXPECT_THROW(Network(2, {a, b}), ShapeError);
  EXPECT_THROW(Network(2, {}), ShapeError);
}

TEST(MakeNetwork, GlorotUniformRangeAndZeroBias) {
  const std::vector<std::size_t> widths{10, 4};
  const Network net = make_network(6, widths, 5);
  EXPECT_EQ(net.layer(0).activation, Activation::ReLU);
  EXPECT_EQ(net.layer(1).activation, Activation::Identity);
  const double s0 = std::sqrt(6.0 / 16.0);
  for (double w : net.layer(0).weight.data()) EXPECT_LE(std::abs(w), s0);
  for (double b : net.layer(0).bias.data()) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(make_network(6, widths, 5), net);
  EXPECT_NE(make_network(6, widths, 6), net);
}

TEST(SoftmaxXent, UniformLogitsGiveLogM) {
  const Matrix logits(4, 3, 0.7);
  const std::vector<int> labels{0, 2, 3};
  const auto r = softmax_xent(logits, labels);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-15);
}

TEST(SoftmaxXent, SaturatedCorrectLogitGivesZeroLossAndGradient) {
  const Matrix logits{{1e6}, {0}, {-3}};
  const std::vector<int> labels{0};
  const auto r = softmax_xent(logits, labels);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  for (double g : r.grad.data()) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(SoftmaxXent, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix logits = random_matrix(3, 2, rng, -3, 3);
    const std::vector<int> labels{trial % 3, (trial + 1) % 3};
    const auto r = softmax_xent(logits, labels);
    const Matrix fd =
        finite_difference(logits, [&] { return softmax_xent(logits, labels).loss; });
    EXPECT_LT(max_rel_err(r.grad, fd), 1e-6);
    EXPECT_GE(r.loss, 0.0);
  }
}

TEST(SoftmaxXent, FrozenTwoSampleValue) {
  const Matrix logits{{-6.05, 0.05}, {0.7625, 0}};
  const std::vector<int> labels{1, 0};
  const auto r = softmax_xent(logits, labels);
  EXPECT_NEAR(r.loss, 0.334779491566847, 1e-12);
  EXPECT_NEAR(r.grad(0, 1), -0.2437513, 1e-7);
}

TEST(SoftmaxXent, RejectsLabelOutOfRange) {
  const std::vector<int> labels{3};
  EXPECT_THROW(softmax_xent(Matrix(3, 1), labels), ArgumentError);
  const std::vector<int> negative{-1};
  EXPECT_THROW(softmax_xent(Matrix(3, 1), negative), ArgumentError);
}

TEST(Backward, ZeroOutputGradientGivesZeroGradients) {
  std::mt19937_64 rng(14);
  const std::vector<std::size_t> widths{5, 3};
  const Network net = make_network(4, widths, 2);
  const auto t = forward(net, random_matrix(4, 3, rng));
  const auto g = backward(net, t, Matrix(3, 3));
  for (const auto& m : g.weight)
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
  for (const auto& m : g.bias)
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
  for (const auto& m : g.activation)
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearLayerWeightGradientIsOuterProduct) {
  std::mt19937_64 rng(15);
  Layer l{random_matrix(3, 4, rng), Matrix(3, 1), Activation::Identity};
  const Network net(4, {l});
  const Matrix x = random_matrix(4, 1, rng);
  const Matrix g = random_matrix(3, 1, rng);
  const auto grads = backward(net, forward(net, x), g);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      EXPECT_DOUBLE_EQ(grads.weight[0](i, k), g(i, 0) * x(k, 0));
}

TEST(Backward, ThreeLayerReluMatchesFiniteDifferences) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const std::vector<std::size_t> widths{6, 5, 4};
    Network net = make_network(3, widths, 100 + trial);
    for (Layer& layer : net.layers())
      for (double& b : layer.bias.data()) b = 0.1 * (trial + 1);
    const Matrix x = random_matrix(3, 4, rng, -2, 2);
    const std::vector<int> labels{0, 1, 2, 3};
    auto loss = [&] { return softmax_xent(forward(net, x).output(), labels).loss; };

    const auto t = forward(net, x);
    bool near_kink = false;
    for (std::size_t i = 0; i + 1 < t.pre_activations.size(); ++i)
      for (double z : t.pre_activations[i].data()) near_kink |= std::abs(z) < 1e-4;
    if (near_kink) continue;

    const auto g = backward(net, t, softmax_xent(t.output(), labels).grad);
    for (std::size_t i = 0; i < net.depth(); ++i) {
      EXPECT_LT(max_rel_err(g.weight[i], finite_difference(net.layers()[i].weight, loss)), 1e-5);
      EXPECT_LT(max_rel_err(g.bias[i], finite_difference(net.layers()[i].bias, loss)), 1e-5);
    }
  }
}

TEST(Backward, InjectedGradientReachesLowerLayers) {
  std::mt19937_64 rng(17);
  const std::vector<std::size_t> widths{5, 4, 3};
  const Network net = make_network(4, widths, 3);
  const auto t = forward(net, random_matrix(4, 2, rng));
  const Matrix extra = random_matrix(4, 2, rng);
  const auto plain = backward(net, t, Matrix(3, 2));
  const auto injected = backward(net, t, Matrix(3, 2), HiddenGrad{2, extra});
  EXPECT_EQ(injected.activation[2], extra);
  for (double v : plain.weight[0].data()) EXPECT_EQ(v, 0.0);
  for (double v : injected.weight[2].data()) EXPECT_EQ(v, 0.0);  // above the injection
}

TEST(Backward, RejectsMismatchedShapes) {
  const Network net = single_layer(Activation::ReLU);
  const auto t = forward(net, Matrix(2, 3));
  EXPECT_THROW(backward(net, t, Matrix(2, 2)), ShapeError);
  EXPECT_THROW(backward(net, t, Matrix(2, 3), HiddenGrad{0, Matrix(2, 3)}), ArgumentError);
  ForwardTrace shallow = t;
  shallow.activations.pop_back();
  EXPECT_THROW(backward(net, shallow, Matrix(2, 3)), ShapeError);
}

}  // namespace
}  // namespace lcnn
