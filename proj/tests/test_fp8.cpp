#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "deltaquant/error.hpp"
#include "deltaquant/fp8.hpp"

namespace dq {
namespace {

// Independent value of a code straight from the bit layout.
double reference_value(int bits) {
  const int sign = bits >> 7;
  const int exponent = (bits >> 3) & 0xF;
  const int mantissa = bits & 0x7;
  const double magnitude = exponent == 0 ? std::pow(2.0, -6) * (mantissa / 8.0)
                                         : std::pow(2.0, exponent - 7) * (1.0 + mantissa / 8.0);
  return sign ? -magnitude : magnitude;
}

bool reference_nan(int bits) { return (bits & 0x7F) == 0x7F; }

// Brute-force nearest finite code with ties to the even mantissa and
// saturation at +-448; the sign of zero follows the input.
std::uint8_t reference_encode(double x) {
  if (std::fabs(x) >= 448.0) return x < 0 ? 0xFE : 0x7E;
  long double best_dist = std::numeric_limits<long double>::infinity();
  int best = -1;
  for (int bits = 0; bits < 256; ++bits) {
    if (reference_nan(bits)) continue;
    const double v = reference_value(bits);
    if (v == 0.0 && (std::signbit(v) != std::signbit(x))) continue;
    const long double dist = std::fabs(static_cast<long double>(x) - v);
    if (dist < best_dist || (dist == best_dist && (bits & 1) == 0 && (best & 1) == 1)) {
      best_dist = dist;
      best = bits;
    }
  }
  return static_cast<std::uint8_t>(best);
}

TEST(Fp8, TableMatchesBitLayout) {
  for (int bits = 0; bits < 256; ++bits) {
    const float v = fp8::decode(fp8::Code{static_cast<std::uint8_t>(bits)});
    if (reference_nan(bits)) {
      EXPECT_TRUE(std::isnan(v)) << bits;
    } else {
      EXPECT_EQ(static_cast<double>(v), reference_value(bits)) << bits;
    }
  }
}

TEST(Fp8, NamedValues) {
  EXPECT_EQ(fp8::encode(0.0).bits, 0x00);
  EXPECT_EQ(fp8::decode(fp8::Code{0x00}), 0.0f);
  EXPECT_TRUE(std::signbit(fp8::decode(fp8::Code{0x80})));
  EXPECT_EQ(fp8::decode(fp8::Code{0x80}), 0.0f);
  EXPECT_EQ(fp8::decode(fp8::encode(448.0)), 448.0f);
  EXPECT_EQ(fp8::decode(fp8::encode(1000.0)), 448.0f);
  EXPECT_EQ(fp8::decode(fp8::encode(-1e30)), -448.0f);
  EXPECT_EQ(fp8::decode(fp8::Code{0x01}), std::ldexp(1.0f, -9));
  EXPECT_EQ(fp8::kMaxFinite, 448.0f);
}

TEST(Fp8, MaxFiniteIsLargestNonNan) {
  double max_finite = 0.0;
  for (int bits = 0; bits < 256; ++bits) {
    if (!reference_nan(bits)) max_finite = std::max(max_finite, std::fabs(reference_value(bits)));
  }
  EXPECT_EQ(max_finite, 448.0);
  EXPECT_EQ(max_finite, std::ldexp(1.75, 8));
}

TEST(Fp8, NonFiniteInputsRejected) {
  EXPECT_THROW(fp8::encode(std::numeric_limits<double>::quiet_NaN()), InvalidValue);
  EXPECT_THROW(fp8::encode(std::numeric_limits<double>::infinity()), InvalidValue);
  EXPECT_THROW(fp8::encode(-std::numeric_limits<double>::infinity()), InvalidValue);
}

TEST(Fp8, ExhaustiveRoundTrip) {
  for (int bits = 0; bits < 256; ++bits) {
    const fp8::Code c{static_cast<std::uint8_t>(bits)};
    if (fp8::is_nan(c)) continue;
    EXPECT_EQ(fp8::encode(fp8::decode(c)).bits, bits);
    EXPECT_EQ(fp8::decode(fp8::encode(fp8::decode(c))), fp8::decode(c));
  }
}

TEST(Fp8, MidpointsTieToEven) {
  int ties = 0;
  for (int bits = 0; bits < 0x7E; ++bits) {
    const double lo = reference_value(bits);
    const double hi = reference_value(bits + 1);
    const double mid = 0.5 * (lo + hi);
    const int even = (bits & 1) == 0 ? bits : bits + 1;
    EXPECT_EQ(fp8::encode(mid).bits, even) << "between codes " << bits << " and " << bits + 1;
    EXPECT_EQ(fp8::encode(-mid).bits, even | 0x80);
    ++ties;
  }
  EXPECT_EQ(ties, 126);
}

TEST(Fp8, MatchesBruteForceOnRandomInputs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> log_mag(-14.0, 10.0);
  std::bernoulli_distribution negative(0.5);
  for (int i = 0; i < 20000; ++i) {
    double x = std::exp2(log_mag(rng));
    if (negative(rng)) x = -x;
    ASSERT_EQ(fp8::encode(x).bits, reference_encode(x)) << x;
  }
}

TEST(Fp8, MonotoneAndSaturating) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-600.0, 600.0);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = dist(rng);
  std::sort(xs.begin(), xs.end());
  float prev = -std::numeric_limits<float>::infinity();
  for (double x : xs) {
    const float q = fp8::decode(fp8::encode(x));
    EXPECT_LE(prev, q);
    EXPECT_LE(std::fabs(q), 448.0f);
    prev = q;
  }
}

}  // namespace
}  // namespace dq
