#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deltaquant/metrics.hpp"
#include "deltaquant/quantizer.hpp"
#include "deltaquant/safetensors.hpp"

namespace dq {

/// Which checkpoint tensors get quantized. A tensor is selected when it is
/// F32/BF16, matches an include glob, matches no exclude glob, and meets the
/// rank and size thresholds. Everything else is copied through unchanged.
struct QuantPolicy {
  std::vector<std::string> include{"*"};
  std::vector<std::string> exclude{"*embed*"};
  int min_rank = 2;
  std::int64_t min_elements = 4096;

  void validate() const;
  bool selects(const st::Entry& entry) const;
};

struct PairingPlan {
  std::vector<std::string> layers;       // quantize, in post-checkpoint order
  std::vector<std::string> passthrough;  // copy unmodified
};

/// Pairs post tensors with base tensors. A shared name with different shapes
/// is a PairingError, as is a selected post tensor missing from the base.
/// Base-only tensors are ignored.
PairingPlan pair_layers(const st::Checkpoint& base, const st::Checkpoint& post,
                        const QuantPolicy& policy);

LayerPair load_pair(const st::Checkpoint& base, const st::Checkpoint& post, const std::string& name);

inline const std::string kScaleSuffix = ".scale_inv";

/// Writes codes as `<name>` (F8_E4M3) and inverse scales as
/// `<name>.scale_inv` (F32, shaped like the group grid), plus passthrough
/// tensors at their original dtype. `order` lists tensor names (layer names
/// and passthrough names) in output order; when empty, layers come first.
void write_quantized_checkpoint(const std::vector<QuantizedLayer>& layers,
                                const std::vector<st::RawTensor>& passthrough,
                                const std::filesystem::path& path,
                                const std::vector<std::string>& order = {},
                                std::optional<std::uint64_t> max_shard_bytes = std::nullopt);

/// True when the checkpoint stores `name` as E4M3 codes.
bool is_quantized(const st::Checkpoint& ckpt, const std::string& name);

/// Rebuilds a QuantizedLayer from its codes and `<name>.scale_inv`. The
/// granularity comes from the header metadata, or is inferred from the scale
/// shape. Throws FormatError when the scale tensor is missing or inconsistent.
QuantizedLayer read_quantized_layer(const st::Checkpoint& ckpt, const std::string& name);

/// Dequantized weights for a quantized entry, the plain tensor otherwise.
Tensor read_effective_weights(const st::Checkpoint& ckpt, const std::string& name);

}  // namespace dq
