#pragma once

// Granularity-aware scales and the scale-parameterized FP8 quantize/dequantize
// operator. A group's effective scale is alpha * s0[g]; what is stored and
// used on both sides of the round trip is its float inverse.

#include <cstdint>
#include <string>
#include <vector>

#include "deltaquant/fp8.hpp"
#include "deltaquant/tensor.hpp"

namespace dq {

struct Granularity {
  enum class Kind { PerTensor, PerChannel, Block };

  Kind kind = Kind::Block;
  std::int64_t block_rows = 128;
  std::int64_t block_cols = 128;

  static Granularity per_tensor() { return {Kind::PerTensor, 0, 0}; }
  static Granularity per_channel() { return {Kind::PerChannel, 0, 0}; }
  static Granularity block(std::int64_t rows = 128, std::int64_t cols = 128) {
    return {Kind::Block, rows, cols};
  }

  friend bool operator==(const Granularity&, const Granularity&) = default;
};

/// "tensor", "channel", "block" (128x128) or "block:RxC".
std::string to_string(const Granularity& g);
Granularity parse_granularity(const std::string& text);

/// Partition of a tensor's elements into quantization groups.
///  PerTensor: one group. PerChannel: one group per index of the leading
///  axis. Block: row-major tiling of a 2-D tensor, partial tiles at the edges.
class GroupLayout {
 public:
  GroupLayout(Shape shape, Granularity granularity);

  const Shape& shape() const { return shape_; }
  const Granularity& granularity() const { return granularity_; }
  std::int64_t group_count() const { return group_count_; }
  /// Shape of the per-group scale tensor: [1], [channels] or [row_tiles, col_tiles].
  const Shape& grid_shape() const { return grid_shape_; }

  std::int64_t group_of(std::int64_t flat_index) const;
  std::vector<std::int64_t> index_map() const;
  std::vector<std::int64_t> group_sizes() const;

 private:
  Shape shape_;
  Granularity granularity_;
  std::int64_t group_count_ = 1;
  Shape grid_shape_;
  std::int64_t cols_ = 1;
  std::int64_t inner_ = 1;
  std::int64_t tile_cols_ = 1;
};

/// Throws ShapeError when the shape's rank does not suit the granularity.
GroupLayout partition_groups(const Shape& shape, const Granularity& granularity);

struct ScaleGrid {
  GroupLayout layout;
  std::vector<double> scales;    // s0 per group
  std::vector<bool> all_zero;    // group absmax was zero; scale held at 1

  std::int64_t group_count() const { return layout.group_count(); }
};

/// s0[g] = absmax(group g) / q_max, or 1 with the all-zero flag set.
ScaleGrid default_scales(const Tensor& w, const Granularity& granularity,
                         double q_max = fp8::kMaxFinite);

/// Stored inverse scale of group g at multiplier alpha: float(1 / (alpha*s0[g])),
/// or 1 for all-zero groups.
float inverse_scale(const ScaleGrid& scales, std::int64_t group, double alpha);

/// Q_s(w): out[i] = decode(encode(w[i] * inv[g])) / inv[g]; all-zero groups
/// produce exact zeros. Throws InvalidConfig for alpha <= 0.
Tensor quant_dequant(const Tensor& w, const ScaleGrid& scales, double alpha);

struct QuantizedLayer {
  std::string name;
  Shape shape;
  std::vector<fp8::Code> codes;
  std::vector<float> scale_inv;
  Granularity granularity;
  double chosen_alpha = 1.0;

  Shape scale_shape() const { return partition_groups(shape, granularity).grid_shape(); }
};

QuantizedLayer quantize_store(const Tensor& w, const ScaleGrid& scales, double alpha);

/// decode(codes[i]) / scale_inv[g]. Bit-identical to quant_dequant on the
/// same inputs.
Tensor dequantize(const QuantizedLayer& layer);

}  // namespace dq
