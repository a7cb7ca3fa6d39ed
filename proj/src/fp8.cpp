#include "deltaquant/fp8.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deltaquant/error.hpp"

namespace dq::fp8 {
namespace {

std::array<float, 256> build_table() {
  std::array<float, 256> table{};
  for (int bits = 0; bits < 256; ++bits) {
    const Code c{static_cast<std::uint8_t>(bits)};
    if (is_nan(c)) {
      table[bits] = std::numeric_limits<float>::quiet_NaN();
      continue;
    }
    const int exponent = exponent_bits(c);
    const int mantissa = mantissa_bits(c);
    // Subnormals: 2^-6 * m/8. Normals: 2^(e-7) * (1 + m/8).
    const float magnitude =
        exponent == 0 ? std::ldexp(static_cast<float>(mantissa), -9)
                      : std::ldexp(static_cast<float>(8 + mantissa), exponent - 10);
    table[bits] = sign_bit(c) ? -magnitude : magnitude;
  }
  return table;
}

}  // namespace

const std::array<float, 256>& value_table() {
  static const std::array<float, 256> table = build_table();
  return table;
}

float decode(Code c) { return value_table()[c.bits]; }

Code encode_finite(double value) noexcept {
  const auto& table = value_table();
  const std::uint8_t sign = std::signbit(value) ? 0x80 : 0x00;
  const double magnitude = std::fabs(value);
  if (magnitude >= kMaxFinite) {
    return Code{static_cast<std::uint8_t>(sign | kMaxFiniteBits)};
  }
  // Positive codes 0x00..0x7E are strictly increasing in value.
  const auto first = table.begin();
  const auto last = first + kMaxFiniteBits + 1;
  const auto upper = std::upper_bound(first, last, magnitude,
                                      [](double a, float b) { return a < b; });
  const auto hi = static_cast<std::uint8_t>(upper - first);
  const auto lo = static_cast<std::uint8_t>(hi - 1);
  // Adjacent values are within a factor of two, so both differences are exact.
  const double below = magnitude - table[lo];
  const double above = static_cast<double>(table[hi]) - magnitude;
  std::uint8_t pick;
  if (below < above) {
    pick = lo;
  } else if (above < below) {
    pick = hi;
  } else {
    pick = (lo & 1) == 0 ? lo : hi;
  }
  return Code{static_cast<std::uint8_t>(sign | pick)};
}

Code encode(double value) {
  if (!std::isfinite(value)) {
    throw InvalidValue("cannot encode non-finite value " + std::to_string(value) +
                       " as E4M3");
  }
  return encode_finite(value);
}

}  // namespace dq::fp8
