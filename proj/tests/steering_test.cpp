#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "matsteer/steering.hpp"
#include "oracles.hpp"

using namespace matsteer;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

AttributeParams params_with(Vector theta, Vector w, double b, int id = 0) {
  AttributeParams p;
  p.theta = std::move(theta);
  p.gate = GateParams{std::move(w), b};
  p.attribute_id = id;
  return p;
}

}  // namespace

TEST(Steer, ZeroVectorsAreIdentity) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < 50; ++i) {
    const Vector a = oracle::random_vector(gen, 7);
    ParamList params = zero_params(3, 7);
    params[1].gate.weight = oracle::random_vector(gen, 7);
    EXPECT_EQ(steer(a, params), a);
    EXPECT_EQ(steer_raw(a, params), a);
  }
}

TEST(Steer, SaturatedGateHandExample) {
  const ParamList params{params_with(vec({1.0, 0.0}), vec({0.0, 0.0}), 1e6)};
  const Vector a = vec({0.0, 1.0});
  const Vector raw = steer_raw(a, params);
  EXPECT_NEAR(raw[0], 1.0, 1e-12);
  EXPECT_NEAR(raw[1], 1.0, 1e-12);
  const Vector out = steer(a, params);
  EXPECT_NEAR(out[0], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(out[1], 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Steer, TwoHalfGatesHandExample) {
  const ParamList params{params_with(vec({2.0, 0.0}), vec({0.0, 0.0}), 0.0, 0),
                         params_with(vec({0.0, 2.0}), vec({0.0, 0.0}), 0.0, 1)};
  const Vector a = vec({1.0, 1.0});
  EXPECT_EQ(steer_raw(a, params), vec({2.0, 2.0}));
  const Vector out = steer(a, params);
  EXPECT_NEAR(out[0], 1.0, 1e-15);
  EXPECT_NEAR(out[1], 1.0, 1e-15);
}

TEST(Steer, MatchesOracle) {
  std::mt19937_64 gen(2);
  for (int i = 0; i < 100; ++i) {
    const int d = 2 + i % 6;
    const auto params = oracle::random_params(gen, 1 + i % 3, d);
    const Vector a = oracle::random_vector(gen, d);
    const auto o = oracle::from(params);
    for (bool renorm : {false, true}) {
      const auto expected = oracle::steer(oracle::to_std(a), o, renorm);
      const Vector got = steer(a, params, renorm);
      for (int k = 0; k < d; ++k) EXPECT_NEAR(got[k], expected[static_cast<std::size_t>(k)], 1e-12);
    }
  }
}

TEST(Steer, Errors) {
  const Vector a = vec({1.0, 2.0});
  EXPECT_THROW(steer(a, ParamList{}), InputError);
  EXPECT_THROW(steer(a, zero_params(1, 3)), InputError);
  // Edit that cancels the activation exactly.
  const ParamList cancel{params_with(vec({-2.0, -4.0}), vec({0.0, 0.0}), 0.0)};
  EXPECT_THROW(steer(a, cancel), NumericError);
  EXPECT_NO_THROW(steer_raw(a, cancel));
}

TEST(SteerRaw, SuppressedGatesLeaveActivation) {
  std::mt19937_64 gen(3);
  const Vector a = oracle::random_vector(gen, 5);
  ParamList params = oracle::random_params(gen, 3, 5, 10.0);
  for (auto& p : params) {
    p.gate.weight.setZero();
    p.gate.bias = -1e6;
  }
  EXPECT_LT((steer_raw(a, params) - a).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SteerRaw, SingleAttributeFormula) {
  std::mt19937_64 gen(4);
  const Vector a = oracle::random_vector(gen, 4);
  const auto params = oracle::random_params(gen, 1, 4);
  const double g = gate(a, params[0].gate);
  EXPECT_TRUE(steer_raw(a, params).isApprox(a + g * params[0].theta, 1e-14));
}

TEST(SteerRaw, AdditiveInTheta) {
  std::mt19937_64 gen(5);
  const Vector a = oracle::random_vector(gen, 4);
  const auto params = oracle::random_params(gen, 2, 4);
  const std::vector<double> gates{gate(a, params[0].gate), gate(a, params[1].gate)};
  const Vector only0 = steer_with_gates(a, params, std::vector<double>{gates[0], 0.0}, false) - a;
  const Vector only1 = steer_with_gates(a, params, std::vector<double>{0.0, gates[1]}, false) - a;
  EXPECT_TRUE((steer_raw(a, params) - a).isApprox(only0 + only1, 1e-13));
}

TEST(SteerRaw, EditMagnitudeGrowsWithGate) {
  const Vector a = vec({0.3, -1.0, 2.0});
  const Vector theta = vec({1.0, 1.0, 0.0});
  double prev = -1.0;
  for (double b = -10.0; b <= 10.0; b += 0.25) {
    const ParamList params{params_with(theta, Vector::Zero(3), b)};
    const double mag = (steer_raw(a, params) - a).norm();
    EXPECT_GE(mag, prev);
    prev = mag;
  }
}

TEST(Steer, PreservesNorm) {
  std::mt19937_64 gen(6);
  for (int i = 0; i < 2000; ++i) {
    const int d = 2 + i % 10;
    const Vector a = oracle::random_vector(gen, d, 3.0);
    const auto params = oracle::random_params(gen, 1 + i % 4, d, 5.0, 1.0);
    const double ratio = steer(a, params).norm() / a.norm();
    EXPECT_NEAR(ratio, 1.0, 1e-6);
  }
}

TEST(Steer, GatesReadOriginalActivation) {
  // Attribute 1's gate would change if it saw attribute 0's edit.
  const ParamList params{params_with(vec({5.0, 0.0}), vec({0.0, 0.0}), 0.0, 0),
                         params_with(vec({0.0, 1.0}), vec({1.0, 0.0}), 0.0, 1)};
  const Vector a = vec({0.0, 1.0});
  const Vector expected = a + 0.5 * params[0].theta + 0.5 * params[1].theta;
  EXPECT_TRUE(steer_raw(a, params).isApprox(expected, 1e-15));
  EXPECT_EQ(steer(a, params), steer(a, params));
}

TEST(Normalize, Examples) {
  const Vector a = vec({3.0, 4.0});
  EXPECT_EQ(normalize(a, a), a);
  EXPECT_EQ(normalize(a, vec({0.0, 10.0})), vec({0.0, 5.0}));
  EXPECT_THROW(normalize(a, vec({0.0, 0.0})), NumericError);
  EXPECT_THROW(normalize(a, vec({1e-13, 0.0})), NumericError);
  EXPECT_THROW(normalize(a, vec({1.0})), InputError);
}

TEST(Normalize, OutputNormMatchesOriginal) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 500; ++i) {
    const Vector a = oracle::random_vector(gen, 6, 4.0);
    const Vector e = oracle::random_vector(gen, 6, 0.01);
    EXPECT_NEAR(normalize(a, e).norm() / a.norm(), 1.0, 1e-12);
  }
}

TEST(BaselineEdit, Examples) {
  BaselineConfig cfg;
  cfg.alpha = 0.0;
  const Vector a = vec({2.0, 2.0});
  EXPECT_EQ(baseline_edit(a, vec({5.0, -1.0}), cfg), a);
  cfg.alpha = 1.0;
  EXPECT_EQ(baseline_edit(vec({0.0, 0.0, 0.0}), vec({1.0, 0.0, 0.0}), cfg), vec({1.0, 0.0, 0.0}));
  cfg.alpha = -2.0;
  EXPECT_EQ(baseline_edit(a, vec({1.0, 1.0}), cfg), vec({0.0, 0.0}));
  EXPECT_THROW(baseline_edit(a, vec({1.0}), cfg), InputError);
}

TEST(SummedVector, Examples) {
  const Vector t = vec({1.0, -2.0, 0.5});
  const ParamList opposite{params_with(t, Vector::Zero(3), 0.0, 0), params_with(-t, Vector::Zero(3), 0.0, 1)};
  EXPECT_EQ(summed_vector(opposite), Vector::Zero(3));
  const ParamList single{params_with(t, Vector::Zero(3), 0.0)};
  EXPECT_EQ(summed_vector(single), t);
  const ParamList ortho{params_with(vec({1.0, 0.0}), Vector::Zero(2), 0.0, 0),
                        params_with(vec({0.0, 1.0}), Vector::Zero(2), 0.0, 1)};
  EXPECT_NEAR(summed_vector(ortho).norm(), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(summed_vector(ParamList{}), InputError);
}

TEST(SelectTokens, Modes) {
  EXPECT_EQ(select_tokens(4, BaselineMode::kLastToken, 0), (std::set<std::size_t>{3}));
  EXPECT_EQ(select_tokens(4, BaselineMode::kUniformAll, 0), (std::set<std::size_t>{0, 1, 2, 3}));
  EXPECT_THROW(select_tokens(0, BaselineMode::kUniformAll, 0), InputError);
}

TEST(SelectTokens, RandomHalfRoundedUp) {
  const auto a = select_tokens(5, BaselineMode::kRandomTokens, 99);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(select_tokens(5, BaselineMode::kRandomTokens, 99), a);
  for (std::size_t i : a) EXPECT_LT(i, 5u);
  EXPECT_EQ(select_tokens(1, BaselineMode::kRandomTokens, 1).size(), 1u);
  EXPECT_EQ(select_tokens(8, BaselineMode::kRandomTokens, 1).size(), 4u);
  // Different seeds eventually pick different subsets.
  bool differs = false;
  for (std::uint64_t s = 0; s < 20 && !differs; ++s) differs = select_tokens(5, BaselineMode::kRandomTokens, s) != a;
  EXPECT_TRUE(differs);
}

TEST(SelectTokens, RandomIsRoughlyUniform) {
  std::vector<int> hits(6, 0);
  for (std::uint64_t s = 0; s < 3000; ++s)
    for (std::size_t i : select_tokens(6, BaselineMode::kRandomTokens, s)) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h / 3000.0, 0.5, 0.05);
}
