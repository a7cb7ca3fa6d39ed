#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deltaquant/metrics.hpp"

namespace dq {

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int layers = 8;
  std::int64_t rows = 256;
  std::int64_t cols = 256;
  double delta_sigma = 0.01;
};

/// base ~ N(0, 1), post = base + N(0, delta_sigma^2), named
/// "layers.<i>.weight". Layer i draws from its own stream seeded by
/// (seed, i), so the result is fixed for a given spec.
std::vector<LayerPair> make_synthetic_layers(const SyntheticSpec& spec);

/// Writes the synthetic pair as two F32 containers, adding a small 1-D
/// "norm" tensor per layer that the default policy passes through.
void write_synthetic_checkpoints(const SyntheticSpec& spec, const std::filesystem::path& base_path,
                                 const std::filesystem::path& post_path);

}  // namespace dq
