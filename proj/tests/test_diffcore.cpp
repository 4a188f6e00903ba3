// Copyright 2026 The DBLN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "dbln/diffcore.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace dbln {
namespace {

using testing::numeric_gradient;
using testing::uniform;

TEST(Tensor, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor::from({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor t = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  const Tensor a = Tensor::vector({1, 2, 3});
  const Tensor b = Tensor::vector({1, 2});
  try {
    (void)add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
  EXPECT_THROW((void)matmul(Tensor::matrix(2, 3, std::vector<double>(6)), Tensor::matrix(2, 2, std::vector<double>(4))),
               ShapeError);
}

TEST(Forward, AnalyticValues) {
  EXPECT_NEAR(softplus(Tensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
  EXPECT_EQ(tanh(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(maximum(Tensor::vector({-1, 2}), 0.5).values()[0], 0.5);
}

TEST(Forward, IdentityMatmul) {
  std::mt19937_64 rng(3);
  const Tensor eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor a = Tensor::matrix(3, 3, uniform(rng, 9, -2, 2));
  const Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out.values()[i], a.values()[i]);
}

TEST(Forward, SoftplusStaysFiniteForLargeInputs) {
  const Tensor out = softplus(Tensor::vector({-800, 800}));
  EXPECT_TRUE(std::isfinite(out.values()[0]));
  EXPECT_EQ(out.values()[1], 800.0);
}

TEST(Backward, SumOfSquares) {
  const Tensor p = Tensor::vector({1, 2}, true);
  backward(sum(square(p)));
  EXPECT_EQ(p.grad()[0], 2.0);
  EXPECT_EQ(p.grad()[1], 4.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  const Tensor p = Tensor::vector({1, 2}, true);
  const Tensor loss = sum(square(p));
  backward(loss);
  backward(loss);
  EXPECT_EQ(p.grad()[0], 4.0);
  EXPECT_EQ(p.grad()[1], 8.0);
}

TEST(Backward, ConstantLossLeavesZeroGradients) {
  Tensor p = Tensor::vector({1, 2}, true);
  p.mutable_grad();
  backward(Tensor::scalar(3.0));
  EXPECT_EQ(p.grad()[0], 0.0);
  EXPECT_EQ(p.grad()[1], 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  const Tensor p = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(square(p)), ShapeError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  const Tensor p = Tensor::vector({1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(sum(square(p)).requires_grad());
}

TEST(Backward, SharedSubexpressionCountsEveryUse) {
  const Tensor p = Tensor::scalar(3.0, true);
  const Tensor q = p * p;
  backward(q + q * p);  // d/dp (p^2 + p^3) = 2p + 3p^2
  EXPECT_DOUBLE_EQ(p.grad()[0], 2 * 3.0 + 3 * 9.0);
}

// ---------------------------------------------------------------------------
// Finite-difference check of every primitive at 20 random points.
// ---------------------------------------------------------------------------

struct Primitive {
  std::string name;
  std::vector<Shape> inputs;
  double lo = -2.0;
  double hi = 2.0;
  std::function<Tensor(const std::vector<Tensor>&)> op;
};

std::vector<Primitive> primitives() {
  return {
      {"add", {{3, 2}, {3, 2}}, -2, 2, [](auto& x) { return add(x[0], x[1]); }},
      {"add_broadcast", {{4}, {}}, -2, 2, [](auto& x) { return add(x[0], x[1]); }},
      {"sub", {{3, 2}, {3, 2}}, -2, 2, [](auto& x) { return sub(x[0], x[1]); }},
      {"mul", {{5}, {5}}, -2, 2, [](auto& x) { return mul(x[0], x[1]); }},
      {"mul_broadcast", {{5}, {}}, -2, 2, [](auto& x) { return mul(x[0], x[1]); }},
      {"div", {{5}, {5}}, 0.5, 2, [](auto& x) { return div(x[0], x[1]); }},
      {"add_scalar", {{4}}, -2, 2, [](auto& x) { return add_scalar(x[0], 0.7); }},
      {"mul_scalar", {{4}}, -2, 2, [](auto& x) { return mul_scalar(x[0], -1.3); }},
      {"neg", {{4}}, -2, 2, [](auto& x) { return neg(x[0]); }},
      {"square", {{4}}, -2, 2, [](auto& x) { return square(x[0]); }},
      {"sqrt", {{4}}, 0.2, 3, [](auto& x) { return sqrt(x[0]); }},
      {"exp", {{4}}, -2, 2, [](auto& x) { return exp(x[0]); }},
      {"log", {{4}}, 0.2, 3, [](auto& x) { return log(x[0]); }},
      {"sigmoid", {{4}}, -3, 3, [](auto& x) { return sigmoid(x[0]); }},
      {"tanh", {{4}}, -3, 3, [](auto& x) { return tanh(x[0]); }},
      {"softplus", {{4}}, -3, 3, [](auto& x) { return softplus(x[0]); }},
      {"maximum", {{6}}, 0.6, 2, [](auto& x) { return maximum(add_scalar(x[0], -1.0), -0.9); }},
      {"sum", {{2, 3}}, -2, 2, [](auto& x) { return sum(x[0]); }},
      {"mean", {{2, 3}}, -2, 2, [](auto& x) { return mean(x[0]); }},
      {"dot", {{5}, {5}}, -2, 2, [](auto& x) { return dot(x[0], x[1]); }},
      {"matmul", {{3, 4}, {4, 2}}, -2, 2, [](auto& x) { return matmul(x[0], x[1]); }},
      {"matvec", {{3, 4}, {4}}, -2, 2, [](auto& x) { return matmul(x[0], x[1]); }},
      {"vecmat", {{4}, {4, 2}}, -2, 2, [](auto& x) { return matmul(x[0], x[1]); }},
      {"add_rows", {{3, 2}, {2}}, -2, 2, [](auto& x) { return add_rows(x[0], x[1]); }},
      {"slice", {{5, 2}}, -2, 2, [](auto& x) { return slice(x[0], 1, 4); }},
      {"column", {{4, 3}}, -2, 2, [](auto& x) { return column(x[0], 1); }},
      {"concat", {{2, 2}, {3, 2}}, -2, 2, [](auto& x) { return concat({x[0], x[1]}); }},
  };
}

class PrimitiveGradient : public ::testing::TestWithParam<Primitive> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const Primitive& prim = GetParam();
  std::mt19937_64 rng(std::hash<std::string>{}(prim.name));
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> values;
    std::size_t total = 0;
    for (const auto& s : prim.inputs) {
      values.push_back(uniform(rng, shape_size(s), prim.lo, prim.hi));
      total += values.back().size();
    }
    // Random projection of the output so every element carries a distinct weight.
    const Tensor probe = prim.op([&] {
      std::vector<Tensor> in;
      for (std::size_t i = 0; i < values.size(); ++i) in.push_back(Tensor::from(prim.inputs[i], values[i]));
      return in;
    }());
    const std::vector<double> weights = uniform(rng, probe.size(), -1, 1);

    auto scalar = [&](const std::vector<Tensor>& in) {
      const Tensor out = prim.op(in);
      return sum(mul(out, Tensor::from(out.shape(), weights)));
    };

    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < values.size(); ++i) leaves.push_back(Tensor::from(prim.inputs[i], values[i], true));
    backward(scalar(leaves));
    std::vector<double> analytic;
    for (const auto& l : leaves) analytic.insert(analytic.end(), l.grad().begin(), l.grad().end());

    std::vector<double> flat;
    for (const auto& v : values) flat.insert(flat.end(), v.begin(), v.end());
    auto f = [&](const std::vector<double>& x) {
      std::vector<Tensor> in;
      std::size_t offset = 0;
      for (const auto& s : prim.inputs) {
        const std::size_t n = shape_size(s);
        in.push_back(Tensor::from(s, std::vector<double>(x.begin() + offset, x.begin() + offset + n)));
        offset += n;
      }
      return scalar(in).item();
    };
    const auto numeric = numeric_gradient(f, flat, 1e-5);
    ASSERT_EQ(analytic.size(), total);
    EXPECT_LE(testing::max_relative_error(numeric, analytic), 1e-4) << prim.name << " trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient, ::testing::ValuesIn(primitives()),
                         [](const auto& info) { return info.param.name; });

TEST(Backward, IsLinearInTheLoss) {
  std::mt19937_64 rng(11);
  const auto x0 = uniform(rng, 6, -1, 1);
  auto l1 = [](const Tensor& p) { return sum(tanh(p) * p); };
  auto l2 = [](const Tensor& p) { return mean(exp(p)); };
  const double a = 0.7;
  const double b = -2.5;

  auto grad_of_loss = [&](auto fn) {
    const Tensor p = Tensor::vector(x0, true);
    backward(fn(p));
    return std::vector<double>(p.grad().begin(), p.grad().end());
  };
  const auto g1 = grad_of_loss(l1);
  const auto g2 = grad_of_loss(l2);
  const auto gc = grad_of_loss([&](const Tensor& p) { return l1(p) * a + l2(p) * b; });
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(gc[i], a * g1[i] + b * g2[i], 1e-12);
}

TEST(Backward, IsDeterministic) {
  std::mt19937_64 rng(5);
  const auto a = uniform(rng, 12, -1, 1);
  const auto b = uniform(rng, 8, -1, 1);
  auto run = [&] {
    const Tensor A = Tensor::matrix(3, 4, a, true);
    const Tensor B = Tensor::matrix(4, 2, b, true);
    backward(sum(softplus(matmul(A, B))));
    return std::vector<double>(A.grad().begin(), A.grad().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace dbln
