#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dpse/adgraph.hpp"
#include "dpse/errors.hpp"
#include "fd_check.hpp"
#include "op_cases.hpp"

using namespace dpse;
using dpse::testing::max_fd_error;
using dpse::testing::random_tensor;
using dpse::testing::op_cases;
using ad::Tensor;
using ad::Var;

TEST(AdGraph, EveryOpMatchesFiniteDifferences) {
  for (const auto& c : op_cases()) {
    Rng rng(1000, std::hash<std::string>{}(c.name) & 0xffff);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) worst = std::max(worst, max_fd_error(c.graph, c.inputs(rng), draw));
    EXPECT_LT(worst, 1e-4) << c.name;
  }
}

TEST(AdGraph, TwoLayerNetworkMatchesFiniteDifferences) {
  Rng rng(77);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    std::vector<Tensor> in{random_tensor(rng, 4, 3), random_tensor(rng, 3, 8), random_tensor(rng, 1, 8),
                           random_tensor(rng, 8, 1), random_tensor(rng, 1, 1)};
    worst = std::max(worst, max_fd_error(
                                [](ad::Tape&, const std::vector<Var>& v) {
                                  Var h = ad::tanh(ad::affine(v[0], v[1], v[2]));
                                  return ad::mean(ad::softplus(ad::affine(h, v[3], v[4])));
                                },
                                in, draw));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(AdGraph, ClosedFormValues) {
  ad::Tape tape;
  EXPECT_DOUBLE_EQ(ad::sigmoid(tape.constant(Tensor::Zero(1, 1))).scalar(), 0.5);
  Tensor a(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(ad::matmul(tape.constant(Tensor::Identity(3, 3)), tape.constant(a)).value(), a);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const double x = rng.uniform(-10, 10);
    Tensor t(1, 1);
    t(0, 0) = x;
    EXPECT_LT(std::abs(ad::softplus(tape.constant(t)).scalar() - std::log(1.0 + std::exp(x))), 1e-12);
  }
  Tensor r(1, 4);
  r << 3, 1, 2, 5;
  EXPECT_EQ(ad::min_reduce(tape.constant(r)).scalar(), 1.0);
  const double sm = ad::smooth_min(tape.constant(r), 0.1).scalar();
  EXPECT_LE(sm, 1.0);
  EXPECT_GE(sm, 1.0 - 0.1 * std::log(4.0));
}

TEST(AdGraph, BackwardBasics) {
  ad::Tape tape;
  Var x = tape.leaf(Tensor::Constant(2, 3, 0.7));
  tape.backward(ad::sum(x));
  EXPECT_EQ(tape.grad(x), Tensor::Ones(2, 3));

  ad::Tape t2;
  Var a = t2.leaf(Tensor::Constant(1, 1, 3.0));
  Var b = t2.leaf(Tensor::Constant(1, 1, 2.0));
  Var unused = t2.leaf(Tensor::Constant(2, 2, 1.0));
  t2.backward(a * b);
  EXPECT_DOUBLE_EQ(t2.grad(a)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(t2.grad(b)(0, 0), 3.0);
  EXPECT_EQ(t2.grad(unused), Tensor::Zero(2, 2));
}

TEST(AdGraph, GradientAccumulation) {
  ad::Tape tape;
  Var x = tape.leaf(Tensor::Constant(2, 2, 1.3));
  tape.backward(ad::sum(ad::square(x + x)));
  const Tensor g1 = tape.grad(x);
  ad::Tape t2;
  Var y = t2.leaf(Tensor::Constant(2, 2, 1.3));
  t2.backward(ad::sum(ad::square(2.0 * y)));
  EXPECT_EQ(g1, t2.grad(y));
}

TEST(AdGraph, ReplayIsBitIdentical) {
  Rng rng(6);
  const Tensor w = random_tensor(rng, 5, 4), x = random_tensor(rng, 3, 5);
  auto run = [&] {
    ad::Tape tape;
    Var lw = tape.leaf(w);
    Var out = ad::sum(ad::tanh(ad::matmul(tape.leaf(x), lw)));
    tape.backward(out);
    return std::pair{out.scalar(), tape.grad(lw)};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(AdGraph, ErrorsAreReported) {
  ad::Tape tape;
  Var a = tape.leaf(Tensor::Ones(2, 3));
  Var b = tape.leaf(Tensor::Ones(3, 2));
  EXPECT_THROW(a + b, ContractError);
  EXPECT_THROW(ad::matmul(a, a), ContractError);
  EXPECT_THROW(tape.backward(a), ContractError);
  EXPECT_THROW(ad::log(tape.constant(Tensor::Zero(1, 1))), NumericError);
  EXPECT_THROW(ad::exp(tape.constant(Tensor::Constant(1, 1, 1000.0))), NumericError);
  EXPECT_THROW(tape.leaf(Tensor::Constant(1, 1, std::nan(""))), NumericError);
  EXPECT_THROW(ad::reshape(a, 4, 2), ContractError);
  ad::Tape other;
  EXPECT_THROW(a + other.leaf(Tensor::Ones(2, 3)), ContractError);
}

TEST(AdGraph, NodeIdsIncrease) {
  ad::Tape tape;
  Var a = tape.leaf(Tensor::Ones(1, 1));
  Var b = ad::exp(a);
  Var c = b * a;
  EXPECT_LT(a.id(), b.id());
  EXPECT_LT(b.id(), c.id());
  EXPECT_EQ(tape.node(c.id()).op, ad::Op::Mul);
}

TEST(Adam, ZeroGradientKeepsParams) {
  std::vector<Tensor> p{Tensor::Constant(2, 2, 1.5)};
  std::vector<Tensor> g{Tensor::Zero(2, 2)};
  ad::AdamState s;
  ad::adam_step(p, g, s, {});
  EXPECT_EQ(p[0], Tensor::Constant(2, 2, 1.5));
}

TEST(Adam, DescendsSquare) {
  std::vector<Tensor> p{Tensor::Constant(1, 1, 1.0)};
  ad::AdamState s;
  std::vector<Tensor> g{2.0 * p[0]};
  ad::adam_step(p, g, s, {0.1});
  EXPECT_LT(p[0](0, 0), 1.0);
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  // f(w) = 0.5 (w - c)^T A (w - c) with A = diag(1, 3)
  const Eigen::Vector2d c(0.4, -0.3);
  const Eigen::Vector2d a(1.0, 3.0);
  std::vector<Tensor> p{Tensor::Zero(1, 2)};
  ad::AdamState s;
  Tensor grad(1, 2);
  for (int step = 0; step < 200; ++step) {
    for (int i = 0; i < 2; ++i) grad(0, i) = a(i) * (p[0](0, i) - c(i));
    std::vector<Tensor> g{grad};
    ad::adam_step(p, g, s, {0.05, 0.5, 0.999});
  }
  for (int i = 0; i < 2; ++i) grad(0, i) = a(i) * (p[0](0, i) - c(i));
  EXPECT_LT(grad.norm(), 1e-6);
}

TEST(Adam, NonFiniteGradientRejected) {
  std::vector<Tensor> p{Tensor::Zero(1, 1)};
  std::vector<Tensor> g{Tensor::Constant(1, 1, std::numeric_limits<double>::infinity())};
  ad::AdamState s;
  EXPECT_THROW(ad::adam_step(p, g, s, {}), NumericError);
}
