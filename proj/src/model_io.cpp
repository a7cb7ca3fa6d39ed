#include "deltaquant/model_io.hpp"

#include <fnmatch.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

namespace dq {
namespace {

bool glob_match(const std::string& pattern, const std::string& name) {
  return ::fnmatch(pattern.c_str(), name.c_str(), 0) == 0;
}

bool any_match(const std::vector<std::string>& patterns, const std::string& name) {
  for (const auto& p : patterns) {
    if (glob_match(p, name)) return true;
  }
  return false;
}

std::string granularity_key(const std::string& name) { return name + ".granularity"; }
std::string alpha_key(const std::string& name) { return name + ".alpha"; }

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

Granularity infer_granularity(const Shape& shape, const Shape& scale_shape) {
  if (scale_shape.size() == 2 && shape.size() == 2) {
    // Prefer the conventional 128 when it reproduces the tile count.
    auto block_dim = [](std::int64_t n, std::int64_t tiles) {
      if (tiles <= 0 || (n + 127) / 128 == tiles) return std::int64_t{128};
      return (n + tiles - 1) / tiles;
    };
    return Granularity::block(block_dim(shape[0], scale_shape[0]), block_dim(shape[1], scale_shape[1]));
  }
  if (scale_shape.size() == 1 && scale_shape[0] == 1) return Granularity::per_tensor();
  if (scale_shape.size() == 1 && !shape.empty() && scale_shape[0] == shape[0]) return Granularity::per_channel();
  throw FormatError("cannot infer granularity from scale shape " + to_string(scale_shape) +
                    " for tensor shape " + to_string(shape));
}

}  // namespace

void QuantPolicy::validate() const {
  if (min_rank < 1) throw InvalidConfig("policy min_rank must be at least 1");
  if (min_elements < 0) throw InvalidConfig("policy min_elements must be non-negative");
  for (const auto* list : {&include, &exclude}) {
    for (const auto& p : *list) {
      if (p.empty()) throw InvalidConfig("empty glob pattern in policy");
      // fnmatch treats an unterminated bracket literally; reject it instead.
      const auto open = p.find('[');
      if (open != std::string::npos && p.find(']', open + 1) == std::string::npos) {
        throw InvalidConfig("malformed glob pattern '" + p + "'");
      }
    }
  }
}

bool QuantPolicy::selects(const st::Entry& entry) const {
  return st::is_widenable(entry.dtype) && static_cast<int>(entry.shape.size()) >= min_rank &&
         numel(entry.shape) >= min_elements && any_match(include, entry.name) &&
         !any_match(exclude, entry.name);
}

PairingPlan pair_layers(const st::Checkpoint& base, const st::Checkpoint& post, const QuantPolicy& policy) {
  policy.validate();
  PairingPlan plan;
  for (const auto& e : post.manifest().entries) {
    const auto* b = base.manifest().find(e.name);
    if (b && b->shape != e.shape) {
      throw PairingError("tensor '" + e.name + "' has shape " + to_string(b->shape) + " in base but " +
                         to_string(e.shape) + " in post");
    }
    if (!policy.selects(e)) {
      plan.passthrough.push_back(e.name);
      continue;
    }
    if (!b) throw PairingError("tensor '" + e.name + "' selected for quantization is missing from base");
    if (!st::is_widenable(b->dtype)) {
      throw PairingError("tensor '" + e.name + "' has non-float dtype " + st::to_string(b->dtype) + " in base");
    }
    plan.layers.push_back(e.name);
  }
  return plan;
}

LayerPair load_pair(const st::Checkpoint& base, const st::Checkpoint& post, const std::string& name) {
  LayerPair pair{name, base.read_tensor(name), post.read_tensor(name)};
  pair.validate();
  return pair;
}

void write_quantized_checkpoint(const std::vector<QuantizedLayer>& layers,
                                const std::vector<st::RawTensor>& passthrough,
                                const std::filesystem::path& path, const std::vector<std::string>& order,
                                std::optional<std::uint64_t> max_shard_bytes) {
  std::map<std::string, std::vector<st::RawTensor>> by_name;
  st::WriteOptions options;
  options.max_shard_bytes = max_shard_bytes;
  options.metadata["format"] = "fp8-e4m3-scale-inv";

  for (const auto& layer : layers) {
    if (by_name.contains(layer.name)) throw ManifestError("duplicate layer name '" + layer.name + "'");
    st::RawTensor codes{layer.name, st::DType::F8_E4M3, layer.shape, {}};
    codes.bytes.resize(layer.codes.size());
    for (std::size_t i = 0; i < layer.codes.size(); ++i) codes.bytes[i] = layer.codes[i].bits;
    st::RawTensor scales{layer.name + kScaleSuffix, st::DType::F32, layer.scale_shape(), {}};
    scales.bytes.resize(layer.scale_inv.size() * sizeof(float));
    std::memcpy(scales.bytes.data(), layer.scale_inv.data(), scales.bytes.size());
    options.metadata[granularity_key(layer.name)] = to_string(layer.granularity);
    options.metadata[alpha_key(layer.name)] = format_double(layer.chosen_alpha);
    by_name[layer.name] = {std::move(codes), std::move(scales)};
  }
  for (const auto& t : passthrough) {
    if (by_name.contains(t.name)) throw ManifestError("tensor name '" + t.name + "' is used twice");
    by_name[t.name] = {t};
  }

  std::vector<std::string> names = order;
  if (names.empty()) {
    for (const auto& l : layers) names.push_back(l.name);
    for (const auto& t : passthrough) names.push_back(t.name);
  }
  std::vector<st::RawTensor> tensors;
  std::set<std::string> emitted;
  for (const auto& n : names) {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw ManifestError("output order names unknown tensor '" + n + "'");
    if (!emitted.insert(n).second) throw ManifestError("output order lists '" + n + "' twice");
    for (auto& t : it->second) tensors.push_back(std::move(t));
  }
  if (emitted.size() != by_name.size()) throw ManifestError("output order omits some tensors");
  // st::write rejects collisions such as a passthrough named "<layer>.scale_inv".
  st::write(path, tensors, options);
}

bool is_quantized(const st::Checkpoint& ckpt, const std::string& name) {
  const auto* e = ckpt.manifest().find(name);
  return e && e->dtype == st::DType::F8_E4M3;
}

QuantizedLayer read_quantized_layer(const st::Checkpoint& ckpt, const std::string& name) {
  const auto codes = ckpt.read_raw(name);
  if (codes.dtype != st::DType::F8_E4M3) throw FormatError("tensor '" + name + "' is not F8_E4M3");
  const auto scale_name = name + kScaleSuffix;
  if (!ckpt.contains(scale_name)) throw FormatError("8-bit tensor '" + name + "' has no " + scale_name);
  const auto scales = ckpt.read_raw(scale_name);
  if (scales.dtype != st::DType::F32) throw FormatError("tensor '" + scale_name + "' must be F32");

  QuantizedLayer layer;
  layer.name = name;
  layer.shape = codes.shape;
  const auto& meta = ckpt.manifest().metadata;
  try {
    if (auto it = meta.find(granularity_key(name)); it != meta.end()) {
      layer.granularity = parse_granularity(it->second);
    } else {
      layer.granularity = infer_granularity(codes.shape, scales.shape);
    }
    if (auto it = meta.find(alpha_key(name)); it != meta.end()) layer.chosen_alpha = std::stod(it->second);
    if (partition_groups(layer.shape, layer.granularity).grid_shape() != scales.shape) {
      throw FormatError("scale shape " + to_string(scales.shape) + " does not match granularity " +
                        to_string(layer.granularity));
    }
  } catch (const Error& err) {
    throw FormatError("tensor '" + name + "': " + err.what());
  } catch (const std::logic_error& err) {
    throw FormatError("tensor '" + name + "': bad metadata: " + err.what());
  }
  layer.codes.resize(codes.bytes.size());
  for (std::size_t i = 0; i < codes.bytes.size(); ++i) layer.codes[i] = fp8::Code{codes.bytes[i]};
  layer.scale_inv.resize(scales.bytes.size() / sizeof(float));
  std::memcpy(layer.scale_inv.data(), scales.bytes.data(), scales.bytes.size());
  for (float s : layer.scale_inv) {
    if (!(s > 0.0f) || !std::isfinite(s)) throw FormatError("tensor '" + scale_name + "' holds a non-positive scale");
  }
  return layer;
}

Tensor read_effective_weights(const st::Checkpoint& ckpt, const std::string& name) {
  if (is_quantized(ckpt, name)) return dequantize(read_quantized_layer(ckpt, name));
  return ckpt.read_tensor(name);
}

}  // namespace dq
