#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "deltaquant/metrics.hpp"

namespace dq {
namespace {

Eigen::ArrayXd arr(std::initializer_list<double> v) {
  Eigen::ArrayXd a(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), a.data());
  return a;
}

DeltaPair deltas(std::initializer_list<double> post, std::initializer_list<double> quant) {
  return DeltaPair{{static_cast<std::int64_t>(post.size())}, arr(post), arr(quant)};
}

// Dyadic values keep every sum and difference exact in double.
Eigen::ArrayXd dyadic(std::mt19937_64& rng, Eigen::Index n) {
  std::uniform_int_distribution<int> dist(-64, 64);
  Eigen::ArrayXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = dist(rng) / 16.0;
  return a;
}

TEST(ToyExample, DeltasAndMse) {
  const auto base = arr({5.0}), post = arr({5.3});
  const auto nearest = compute_delta(base, post, arr({5.0}));
  const auto up = compute_delta(base, post, arr({6.0}));
  EXPECT_NEAR(nearest.post[0], 0.3, 1e-12);
  EXPECT_EQ(nearest.quant[0], 0.0);
  EXPECT_NEAR(up.quant[0], 1.0, 1e-12);
  EXPECT_NEAR(mse(nearest), 0.09, 1e-12);
  EXPECT_NEAR(mse(up), 0.49, 1e-12);
  EXPECT_EQ(sign_rate(nearest), 0.0);
  EXPECT_EQ(sign_rate(up), 1.0);
  EXPECT_EQ(evaluate(MetricKind::CosSim, up), 1.0);
  EXPECT_NEAR(delta_l2(nearest), 0.3, 1e-12);
}

TEST(ToyExample, Float32Tensors) {
  const auto one = [](float v) { return Tensor("w", {1}, Eigen::ArrayXf::Constant(1, v)); };
  const LayerPair pair{"w", one(5.0f), one(5.3f)};
  EXPECT_NEAR(mse(compute_delta(pair, one(5.0f))), 0.09, 1e-6);
  EXPECT_NEAR(mse(compute_delta(pair, one(6.0f))), 0.49, 1e-6);
  EXPECT_EQ(sign_rate(compute_delta(pair, one(5.0f))), 0.0);
  EXPECT_EQ(sign_rate(compute_delta(pair, one(6.0f))), 1.0);
}

TEST(ComputeDelta, FromTensors) {
  Tensor base("w", {2}, (Eigen::ArrayXf(2) << 1, 2).finished());
  Tensor post("w", {2}, (Eigen::ArrayXf(2) << 1.5f, 2).finished());
  const LayerPair pair{"w", base, post};
  const auto same = compute_delta(pair, post);
  EXPECT_TRUE((same.post == same.quant).all());
  const auto d = compute_delta(pair, base);
  EXPECT_EQ(d.post[0], 0.5);
  EXPECT_TRUE((d.quant == 0.0).all());
  Tensor wrong("w", {3});
  EXPECT_THROW(compute_delta(pair, wrong), ShapeError);
  EXPECT_THROW(compute_delta(LayerPair{"w", base, wrong}, post), ShapeError);
}

TEST(SignRate, Examples) {
  EXPECT_EQ(sign_rate(deltas({1, -1, 1, 0}, {2, 1, -1, 0})), 0.5);
  EXPECT_EQ(sign_rate(deltas({0.3, -2, 0}, {0.3, -2, 0})), 1.0);
  EXPECT_EQ(sign_rate(deltas({0.0}, {0.0})), 1.0);
  EXPECT_EQ(sign_rate(deltas({0.0}, {1e-9})), 0.0);
  EXPECT_EQ(sign_rate(deltas({1e-9}, {0.0})), 0.0);
}

TEST(CosSim, Examples) {
  EXPECT_DOUBLE_EQ(cos_sim(deltas({1, 2, 3}, {1, 2, 3})), 1.0);
  EXPECT_DOUBLE_EQ(cos_sim(deltas({1, 2, 3}, {-1, -2, -3})), -1.0);
  EXPECT_EQ(cos_sim(deltas({1, 0}, {0, 1})), 0.0);
  EXPECT_EQ(cos_sim(deltas({0, 0}, {0, 0})), 1.0);
  EXPECT_EQ(cos_sim(deltas({0, 0}, {0, 1})), 0.0);
  EXPECT_EQ(cos_sim(deltas({1, 0}, {0, 0})), 0.0);
}

TEST(CosSim, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::ArrayXd p(8), q(8);
    for (int i = 0; i < 8; ++i) {
      p[i] = dist(rng);
      q[i] = dist(rng);
    }
    long double dot = 0, pp = 0, qq = 0;
    for (int i = 0; i < 8; ++i) {
      dot += static_cast<long double>(p[i]) * q[i];
      pp += static_cast<long double>(p[i]) * p[i];
      qq += static_cast<long double>(q[i]) * q[i];
    }
    const long double expected = dot / (std::sqrt(pp) * std::sqrt(qq));
    EXPECT_NEAR(cos_sim(p, q), static_cast<double>(expected), 1e-12);
  }
}

TEST(DeltaL2, Examples) {
  EXPECT_EQ(delta_l2(deltas({1, 2}, {1, 2})), 0.0);
  EXPECT_EQ(delta_l2(deltas({0, 0}, {3, 4})), 5.0);
}

TEST(Mse, ZeroWhenIdentical) { EXPECT_EQ(mse(deltas({1, -2, 3}, {1, -2, 3})), 0.0); }

TEST(Evaluate, Dispatch) {
  const auto same = deltas({0.5, -1}, {0.5, -1});
  EXPECT_EQ(evaluate(MetricKind::NegMse, same), 0.0);
  EXPECT_EQ(evaluate(MetricKind::SignRate, same), 1.0);
  EXPECT_DOUBLE_EQ(evaluate(MetricKind::CosSim, same), 1.0);
  const auto d = deltas({1, 1}, {2, 1});
  EXPECT_EQ(evaluate(MetricKind::NegMse, d), -0.5);
}

TEST(Metric, ParseNames) {
  EXPECT_EQ(parse_metric("mse"), MetricKind::NegMse);
  EXPECT_EQ(parse_metric("sign"), MetricKind::SignRate);
  EXPECT_EQ(parse_metric("cosine"), MetricKind::CosSim);
  EXPECT_EQ(parse_metric(to_string(MetricKind::CosSim)), MetricKind::CosSim);
  EXPECT_THROW(parse_metric("l1"), InvalidConfig);
}

TEST(MetricProperties, MseIdentityCancelsBase) {
  std::mt19937_64 rng(23);
  std::normal_distribution<float> dist;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 4096);
    Eigen::ArrayXf base(n), post(n), quant(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      base[i] = dist(rng);
      post[i] = base[i] + 0.01f * dist(rng);
      quant[i] = post[i] + 0.05f * dist(rng);
    }
    const double on_deltas = mse(compute_delta(base, post, quant));
    const double on_weights = mse(post, quant);
    EXPECT_LE(std::fabs(on_deltas - on_weights), 1e-6 * (1 + on_weights));
  }
}

TEST(MetricProperties, RangesHoldOnRandomAndDegenerateInputs) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 20);
    Eigen::ArrayXd p = dyadic(rng, n), q = dyadic(rng, n);
    if (trial % 7 == 0) p.setZero();
    if (trial % 11 == 0) q.setZero();
    const double sr = sign_rate(p, q), cs = cos_sim(p, q);
    EXPECT_GE(sr, 0.0);
    EXPECT_LE(sr, 1.0);
    EXPECT_GE(cs, -1.0);
    EXPECT_LE(cs, 1.0);
    EXPECT_GE(mse(p, q), 0.0);
    EXPECT_GE(delta_l2(p, q), 0.0);
  }
}

TEST(MetricProperties, BaseShiftInvariance) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 32;
    const Eigen::ArrayXd base = dyadic(rng, n), post = base + dyadic(rng, n) / 8.0,
                         quant = base + dyadic(rng, n) / 8.0;
    const Eigen::ArrayXd shift = dyadic(rng, n) * 4.0;
    const auto d0 = compute_delta(base, post, quant);
    const auto d1 = compute_delta(base + shift, post + shift, quant + shift);
    EXPECT_EQ(sign_rate(d0), sign_rate(d1));
    EXPECT_EQ(cos_sim(d0), cos_sim(d1));
  }
}

TEST(MetricProperties, ScaleCovariance) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> factor(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::ArrayXd p = dyadic(rng, 40), q = dyadic(rng, 40);
    const double c = factor(rng);
    EXPECT_EQ(sign_rate(p, q), sign_rate(p * c, q * c));
    EXPECT_NEAR(cos_sim(p, q), cos_sim(p * c, q * c), 1e-12);
  }
}

TEST(MetricProperties, PermutationInvariance) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 100;
    Eigen::ArrayXd p(n), q(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = dist(rng);
      q[i] = i % 5 == 0 ? 0.0 : dist(rng);
    }
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::ArrayXd pp(n), qq(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pp[i] = p[perm[static_cast<std::size_t>(i)]];
      qq[i] = q[perm[static_cast<std::size_t>(i)]];
    }
    EXPECT_EQ(sign_rate(p, q), sign_rate(pp, qq));
    EXPECT_NEAR(cos_sim(p, q), cos_sim(pp, qq), 1e-12);
    EXPECT_NEAR(mse(p, q), mse(pp, qq), 1e-12);
    EXPECT_NEAR(delta_l2(p, q), delta_l2(pp, qq), 1e-12);
  }
}

}  // namespace
}  // namespace dq
