#pragma once

// Single-file tensor container: an 8-byte little-endian header length, a JSON
// header mapping tensor names to {dtype, shape, data_offsets}, then the packed
// payload. Sharded checkpoints add a JSON index whose "weight_map" maps each
// tensor name to a shard file next to the index.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deltaquant/tensor.hpp"

namespace dq::st {

enum class DType { BOOL, U8, I8, I16, U16, F16, BF16, I32, U32, F32, F64, I64, U64, F8_E4M3, F8_E5M2 };

std::string to_string(DType dtype);
DType parse_dtype(const std::string& tag);
std::size_t element_size(DType dtype);
bool is_widenable(DType dtype);  // F32 or BF16

struct Entry {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::uint64_t begin = 0;  // offsets relative to the payload region
  std::uint64_t end = 0;
  std::filesystem::path file;
};

struct Manifest {
  std::filesystem::path source;
  std::vector<Entry> entries;  // file order
  std::map<std::string, std::string> metadata;

  const Entry* find(const std::string& name) const;
  const Entry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }
};

struct RawTensor {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<std::uint8_t> bytes;

  friend bool operator==(const RawTensor&, const RawTensor&) = default;
};

/// A parsed checkpoint with on-demand payload access. Reads open their own
/// stream, so distinct tensors may be read concurrently.
class Checkpoint {
 public:
  /// Opens a container file, or a sharded checkpoint when `path` is a
  /// ".json" index. Throws FormatError / IoError.
  static Checkpoint open(const std::filesystem::path& path);

  const Manifest& manifest() const { return manifest_; }
  std::vector<std::string> names() const;
  bool contains(const std::string& name) const { return manifest_.contains(name); }

  RawTensor read_raw(const std::string& name) const;
  /// Reads an F32 or BF16 tensor as float. Throws FormatError for other dtypes.
  Tensor read_tensor(const std::string& name) const;

 private:
  Manifest manifest_;
  std::map<std::filesystem::path, std::uint64_t> payload_start_;
  std::map<std::string, std::size_t> index_;
};

/// Header-only parse of one container file.
Manifest read_manifest(const std::filesystem::path& file, std::uint64_t* payload_start = nullptr);

struct WriteOptions {
  std::map<std::string, std::string> metadata;
  /// When set, tensors are spread over shards of at most this many payload
  /// bytes (a tensor larger than the cap gets its own shard), and `path`
  /// names the JSON index written alongside them.
  std::optional<std::uint64_t> max_shard_bytes;
};

/// Writes tensors in the given order. Each file is written to a temporary
/// name and renamed into place. Throws ManifestError on duplicate names and
/// IoError on write failure.
void write(const std::filesystem::path& path, const std::vector<RawTensor>& tensors,
           const WriteOptions& options = {});

RawTensor from_tensor(const Tensor& t, DType dtype = DType::F32);
Tensor to_tensor(const RawTensor& raw);

}  // namespace dq::st
