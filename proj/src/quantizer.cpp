#include "deltaquant/quantizer.hpp"

#include <cmath>
#include <limits>
#include <regex>
#include <span>

namespace dq {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

void require_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidConfig("scale multiplier alpha must be positive and finite, got " +
                        std::to_string(alpha));
  }
}

void require_matching(const Tensor& w, const ScaleGrid& scales) {
  if (scales.layout.shape() != w.shape) {
    throw ShapeError("tensor '" + w.name + "' has shape " + to_string(w.shape) +
                     " but its scales were computed for " + to_string(scales.layout.shape()));
  }
}

std::vector<float> inverse_scales(const ScaleGrid& scales, double alpha) {
  std::vector<float> inv(static_cast<std::size_t>(scales.group_count()));
  for (std::int64_t g = 0; g < scales.group_count(); ++g) inv[g] = inverse_scale(scales, g, alpha);
  return inv;
}

// Element loop shared by the fake-quant and storing paths so they cannot drift.
template <typename Sink>
void for_each_code(const Tensor& w, const ScaleGrid& scales, std::span<const float> inv,
                   Sink&& sink) {
  const auto& layout = scales.layout;
  for (std::int64_t i = 0; i < w.size(); ++i) {
    const auto g = layout.group_of(i);
    if (scales.all_zero[g]) {
      sink(i, fp8::Code{0x00}, 0.0f);
      continue;
    }
    const auto code = fp8::encode_finite(static_cast<double>(w.data[i]) * inv[g]);
    sink(i, code, static_cast<float>(fp8::decode(code) / static_cast<double>(inv[g])));
  }
}

}  // namespace

std::string to_string(const Granularity& g) {
  switch (g.kind) {
    case Granularity::Kind::PerTensor:
      return "tensor";
    case Granularity::Kind::PerChannel:
      return "channel";
    case Granularity::Kind::Block:
      return "block:" + std::to_string(g.block_rows) + "x" + std::to_string(g.block_cols);
  }
  return "?";
}

Granularity parse_granularity(const std::string& text) {
  if (text == "tensor" || text == "per-tensor") return Granularity::per_tensor();
  if (text == "channel" || text == "per-channel") return Granularity::per_channel();
  if (text == "block") return Granularity::block();
  static const std::regex block_re(R"(block:(\d+)x(\d+))");
  std::smatch m;
  if (std::regex_match(text, m, block_re)) {
    const auto rows = std::stoll(m[1]);
    const auto cols = std::stoll(m[2]);
    if (rows > 0 && cols > 0) return Granularity::block(rows, cols);
  }
  throw InvalidConfig("unknown granularity '" + text +
                      "' (expected tensor, channel, block or block:RxC)");
}

GroupLayout::GroupLayout(Shape shape, Granularity granularity)
    : shape_(std::move(shape)), granularity_(granularity) {
  const auto n = numel(shape_);
  switch (granularity_.kind) {
    case Granularity::Kind::PerTensor:
      group_count_ = 1;
      grid_shape_ = {1};
      break;
    case Granularity::Kind::PerChannel:
      if (shape_.empty()) throw ShapeError("per-channel scaling needs a tensor of rank >= 1");
      group_count_ = shape_[0];
      inner_ = shape_[0] == 0 ? 1 : n / shape_[0];
      grid_shape_ = {shape_[0]};
      break;
    case Granularity::Kind::Block: {
      if (shape_.size() != 2) {
        throw ShapeError("block scaling needs a 2-D tensor, got shape " + to_string(shape_));
      }
      if (granularity_.block_rows <= 0 || granularity_.block_cols <= 0) {
        throw InvalidConfig("block dimensions must be positive");
      }
      cols_ = shape_[1];
      const auto tile_rows = ceil_div(shape_[0], granularity_.block_rows);
      tile_cols_ = ceil_div(shape_[1], granularity_.block_cols);
      group_count_ = tile_rows * tile_cols_;
      grid_shape_ = {tile_rows, tile_cols_};
      break;
    }
  }
}

std::int64_t GroupLayout::group_of(std::int64_t i) const {
  switch (granularity_.kind) {
    case Granularity::Kind::PerTensor:
      return 0;
    case Granularity::Kind::PerChannel:
      return i / inner_;
    case Granularity::Kind::Block: {
      const auto row = i / cols_;
      const auto col = i % cols_;
      return (row / granularity_.block_rows) * tile_cols_ + col / granularity_.block_cols;
    }
  }
  return 0;
}

std::vector<std::int64_t> GroupLayout::index_map() const {
  std::vector<std::int64_t> map(static_cast<std::size_t>(numel(shape_)));
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = group_of(static_cast<std::int64_t>(i));
  return map;
}

std::vector<std::int64_t> GroupLayout::group_sizes() const {
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(group_count_), 0);
  const auto n = numel(shape_);
  for (std::int64_t i = 0; i < n; ++i) ++sizes[group_of(i)];
  return sizes;
}

GroupLayout partition_groups(const Shape& shape, const Granularity& granularity) {
  return GroupLayout(shape, granularity);
}

ScaleGrid default_scales(const Tensor& w, const Granularity& granularity, double q_max) {
  require_finite(w);
  GroupLayout layout(w.shape, granularity);
  const auto groups = static_cast<std::size_t>(layout.group_count());
  std::vector<double> absmax(groups, 0.0);
  for (std::int64_t i = 0; i < w.size(); ++i) {
    auto& m = absmax[layout.group_of(i)];
    m = std::max(m, static_cast<double>(std::fabs(w.data[i])));
  }
  ScaleGrid grid{std::move(layout), std::vector<double>(groups, 1.0),
                 std::vector<bool>(groups, true)};
  for (std::size_t g = 0; g < groups; ++g) {
    if (absmax[g] > 0.0) {
      grid.scales[g] = absmax[g] / q_max;
      grid.all_zero[g] = false;
    }
  }
  return grid;
}

float inverse_scale(const ScaleGrid& scales, std::int64_t group, double alpha) {
  require_alpha(alpha);
  if (scales.all_zero[group]) return 1.0f;
  const double inv = 1.0 / (alpha * scales.scales[group]);
  // Groups of near-denormal weights can push the inverse past float range.
  return static_cast<float>(std::min(inv, static_cast<double>(std::numeric_limits<float>::max())));
}

Tensor quant_dequant(const Tensor& w, const ScaleGrid& scales, double alpha) {
  require_alpha(alpha);
  require_matching(w, scales);
  const auto inv = inverse_scales(scales, alpha);
  Tensor out(w.name, w.shape);
  for_each_code(w, scales, inv, [&](std::int64_t i, fp8::Code, float value) { out.data[i] = value; });
  return out;
}

QuantizedLayer quantize_store(const Tensor& w, const ScaleGrid& scales, double alpha) {
  require_alpha(alpha);
  require_matching(w, scales);
  QuantizedLayer layer;
  layer.name = w.name;
  layer.shape = w.shape;
  layer.granularity = scales.layout.granularity();
  layer.chosen_alpha = alpha;
  layer.scale_inv = inverse_scales(scales, alpha);
  layer.codes.resize(static_cast<std::size_t>(w.size()));
  for_each_code(w, scales, layer.scale_inv,
                [&](std::int64_t i, fp8::Code code, float) { layer.codes[i] = code; });
  return layer;
}

Tensor dequantize(const QuantizedLayer& layer) {
  const GroupLayout layout(layer.shape, layer.granularity);
  if (static_cast<std::int64_t>(layer.codes.size()) != numel(layer.shape)) {
    throw ShapeError("quantized layer '" + layer.name + "' has " +
                     std::to_string(layer.codes.size()) + " codes for shape " +
                     to_string(layer.shape));
  }
  if (static_cast<std::int64_t>(layer.scale_inv.size()) != layout.group_count()) {
    throw ShapeError("quantized layer '" + layer.name + "' has " +
                     std::to_string(layer.scale_inv.size()) + " inverse scales, expected " +
                     std::to_string(layout.group_count()));
  }
  Tensor out(layer.name, layer.shape);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const auto inv = static_cast<double>(layer.scale_inv[layout.group_of(i)]);
    out.data[i] = static_cast<float>(fp8::decode(layer.codes[i]) / inv);
  }
  return out;
}

}  // namespace dq
