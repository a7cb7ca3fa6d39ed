#pragma once

// Software FP8 E4M3 codec (OCP "fn" variant): 1 sign, 4 exponent, 3 mantissa
// bits, bias 7, no infinities, NaN only at S.1111.111, max finite 448.

#include <array>
#include <cstdint>

namespace dq::fp8 {

struct Code {
  std::uint8_t bits = 0;

  friend constexpr bool operator==(Code, Code) = default;
};

inline constexpr float kMaxFinite = 448.0f;
inline constexpr std::uint8_t kMaxFiniteBits = 0x7E;

constexpr bool is_nan(Code c) { return (c.bits & 0x7F) == 0x7F; }

constexpr std::uint8_t mantissa_bits(Code c) { return c.bits & 0x07; }
constexpr std::uint8_t exponent_bits(Code c) { return (c.bits >> 3) & 0x0F; }
constexpr bool sign_bit(Code c) { return (c.bits & 0x80) != 0; }

/// The 256-entry value table. NaN codes hold a quiet NaN.
const std::array<float, 256>& value_table();

float decode(Code c);

/// Round-to-nearest, ties-to-even; magnitudes past 448 saturate to +-448.
/// The sign of zero is kept. Throws InvalidValue on NaN or infinity.
Code encode(double value);

/// encode without the finiteness check, for hot loops over data that is
/// already known to be finite.
Code encode_finite(double value) noexcept;

}  // namespace dq::fp8
