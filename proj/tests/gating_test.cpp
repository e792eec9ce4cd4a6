#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "matsteer/gating.hpp"
#include "oracles.hpp"

using namespace matsteer;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST(Gate, ZeroParametersGiveOneHalf) {
  const auto p = GateParams::zeros(3);
  EXPECT_EQ(gate(vec({1.0, -2.0, 3.5}), p), 0.5);
  EXPECT_EQ(gate(Vector::Zero(3), p), 0.5);
}

TEST(Gate, LogThreeGivesThreeQuarters) {
  const GateParams p{vec({1.0, 0.0}), 0.0};
  EXPECT_NEAR(gate(vec({std::log(3.0), 0.0}), p), 0.75, 1e-15);
}

TEST(Gate, SaturatesWithoutOverflow) {
  const GateParams low{vec({1.0}), -1000.0};
  const double g = gate(vec({0.0}), low);
  EXPECT_LT(g, 1e-12);
  EXPECT_GT(g, 0.0);
  const GateParams high{vec({1.0}), 1000.0};
  EXPECT_LT(gate(vec({0.0}), high), 1.0);
  EXPECT_GT(gate(vec({0.0}), high), 1.0 - 1e-12);
}

TEST(Gate, DimensionMismatch) {
  EXPECT_THROW(gate(vec({1.0, 2.0}), GateParams::zeros(3)), InputError);
}

TEST(Gate, MatchesClosedFormSigmoid) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 200; ++i) {
    const Vector a = oracle::random_vector(gen, 6, 2.0);
    const GateParams p{oracle::random_vector(gen, 6), oracle::random_vector(gen, 1)[0]};
    const double z = oracle::dot(oracle::to_std(p.weight), oracle::to_std(a)) + p.bias;
    EXPECT_NEAR(gate(a, p), oracle::sigmoid(z), 1e-14);
  }
}

TEST(Gate, StaysInsideOpenInterval) {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 1000; ++i) {
    const Vector a = oracle::random_vector(gen, 4, 100.0);
    const GateParams p{oracle::random_vector(gen, 4, 100.0), oracle::random_vector(gen, 1, 1000.0)[0]};
    const double g = gate(a, p);
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
}

TEST(Gate, BiasShiftTranslatesPreactivation) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 100; ++i) {
    const Vector a = oracle::random_vector(gen, 5);
    GateParams p{oracle::random_vector(gen, 5), 0.3};
    const double c = oracle::random_vector(gen, 1, 3.0)[0];
    const double z = gate_preactivation(a, p);
    p.bias += c;
    EXPECT_NEAR(gate(a, p), oracle::sigmoid(z + c), 1e-14);
  }
}

TEST(Gate, SignSymmetry) {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 100; ++i) {
    const Vector a = oracle::random_vector(gen, 5);
    const GateParams p{oracle::random_vector(gen, 5), -0.7};
    const GateParams flipped{-p.weight, p.bias};
    EXPECT_NEAR(gate(-a, flipped), gate(a, p), 1e-15);
  }
}

TEST(Gate, StrictlyMonotoneInPreactivation) {
  const Vector a = vec({1.0});
  double prev = 0.0;
  for (double b = -30.0; b <= 30.0; b += 0.5) {
    const double g = gate(a, GateParams{vec({0.0}), b});
    EXPECT_GT(g, prev);
    prev = g;
  }
}

TEST(GateBatch, EmptyInput) {
  const std::vector<Vector> none;
  const std::vector<GateParams> params{GateParams::zeros(2)};
  const Matrix m = gate_batch(none, params);
  EXPECT_EQ(m.rows(), 0);
  EXPECT_EQ(m.cols(), 1);
}

TEST(GateBatch, SingleAttributeIsElementwise) {
  std::mt19937_64 gen(5);
  std::vector<Vector> acts;
  for (int i = 0; i < 4; ++i) acts.push_back(oracle::random_vector(gen, 3));
  const std::vector<GateParams> params{GateParams{oracle::random_vector(gen, 3), 0.1}};
  const Matrix m = gate_batch(acts, params);
  ASSERT_EQ(m.cols(), 1);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(m(i, 0), gate(acts[static_cast<std::size_t>(i)], params[0]));
}

TEST(GateBatch, MatchesScalarCalls) {
  std::mt19937_64 gen(6);
  std::vector<Vector> acts;
  for (int i = 0; i < 3; ++i) acts.push_back(oracle::random_vector(gen, 4));
  const std::vector<GateParams> params{GateParams{oracle::random_vector(gen, 4), 0.5},
                                       GateParams{oracle::random_vector(gen, 4), -1.0}};
  const Matrix m = gate_batch(acts, params);
  ASSERT_EQ(m.rows(), 3);
  ASSERT_EQ(m.cols(), 2);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 2; ++t) {
      const auto& a = acts[static_cast<std::size_t>(i)];
      const auto& p = params[static_cast<std::size_t>(t)];
      EXPECT_NEAR(m(i, t), oracle::sigmoid(oracle::dot(oracle::to_std(p.weight), oracle::to_std(a)) + p.bias), 1e-14);
    }
  EXPECT_THROW(gate_batch(std::vector<Vector>{Vector::Zero(2)}, params), InputError);
}
