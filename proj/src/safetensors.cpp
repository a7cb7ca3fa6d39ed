#include "deltaquant/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace dq::st {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts need byte swapping");

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 100u << 20;

struct DTypeInfo {
  DType dtype;
  const char* tag;
  std::size_t size;
};

constexpr DTypeInfo kDTypes[] = {
    {DType::BOOL, "BOOL", 1}, {DType::U8, "U8", 1},        {DType::I8, "I8", 1},
    {DType::I16, "I16", 2},   {DType::U16, "U16", 2},      {DType::F16, "F16", 2},
    {DType::BF16, "BF16", 2}, {DType::I32, "I32", 4},      {DType::U32, "U32", 4},
    {DType::F32, "F32", 4},   {DType::F64, "F64", 8},      {DType::I64, "I64", 8},
    {DType::U64, "U64", 8},   {DType::F8_E4M3, "F8_E4M3", 1}, {DType::F8_E5M2, "F8_E5M2", 1},
};

const DTypeInfo& info(DType dtype) {
  for (const auto& i : kDTypes) {
    if (i.dtype == dtype) return i;
  }
  throw FormatError("unknown dtype enumerator");
}

float bf16_to_float(std::uint16_t bits) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

std::uint16_t float_to_bf16(float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  if ((bits & 0x7FFFFFFFu) > 0x7F800000u) return static_cast<std::uint16_t>((bits >> 16) | 0x40);
  bits += 0x7FFFu + ((bits >> 16) & 1u);
  return static_cast<std::uint16_t>(bits >> 16);
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

Entry parse_entry(const std::string& name, const json& value, const fs::path& file) {
  try {
    Entry e;
    e.name = name;
    e.file = file;
    e.dtype = parse_dtype(value.at("dtype").get<std::string>());
    for (const auto& d : value.at("shape")) {
      const auto dim = d.get<std::int64_t>();
      if (dim < 0) throw FormatError("negative dimension");
      e.shape.push_back(dim);
    }
    const auto& offsets = value.at("data_offsets");
    if (!offsets.is_array() || offsets.size() != 2) throw FormatError("data_offsets must be [begin, end]");
    e.begin = offsets[0].get<std::uint64_t>();
    e.end = offsets[1].get<std::uint64_t>();
    if (e.end < e.begin) throw FormatError("data_offsets end before begin");
    const auto expected = static_cast<std::uint64_t>(numel(e.shape)) * element_size(e.dtype);
    if (e.end - e.begin != expected) {
      throw FormatError("byte range of " + std::to_string(e.end - e.begin) + " does not match shape " +
                        dq::to_string(e.shape) + " of " + to_string(e.dtype) + " (" +
                        std::to_string(expected) + " bytes)");
    }
    return e;
  } catch (const Error& err) {
    throw FormatError(file.string() + ": tensor '" + name + "': " + err.what());
  } catch (const json::exception& err) {
    throw FormatError(file.string() + ": tensor '" + name + "': " + err.what());
  }
}

std::vector<std::uint8_t> read_bytes(const fs::path& file, std::uint64_t offset, std::uint64_t count,
                                     const std::string& name) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  std::vector<std::uint8_t> bytes(count);
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::uint64_t>(in.gcount()) != count) {
    throw FormatError(file.string() + ": payload of tensor '" + name + "' is truncated");
  }
  return bytes;
}

void commit_file(const fs::path& path, const std::string& header, const std::vector<RawTensor>& tensors,
                 const std::vector<std::size_t>& members) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (auto i : members) {
      const auto& b = tensors[i].bytes;
      out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    }
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string build_header(const std::vector<RawTensor>& tensors, const std::vector<std::size_t>& members,
                         const std::map<std::string, std::string>& metadata) {
  json header = json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (auto i : members) {
    const auto& t = tensors[i];
    const auto expected = static_cast<std::uint64_t>(numel(t.shape)) * element_size(t.dtype);
    if (t.bytes.size() != expected) {
      throw ShapeError("tensor '" + t.name + "' has " + std::to_string(t.bytes.size()) +
                       " bytes, shape " + dq::to_string(t.shape) + " needs " + std::to_string(expected));
    }
    header[t.name] = {{"dtype", to_string(t.dtype)},
                      {"shape", t.shape},
                      {"data_offsets", {offset, offset + t.bytes.size()}}};
    offset += t.bytes.size();
  }
  std::string text = header.dump();
  // Pad so the payload starts 8-byte aligned.
  text.append((8 - (text.size() % 8)) % 8, ' ');
  return text;
}

}  // namespace

std::string to_string(DType dtype) { return info(dtype).tag; }

DType parse_dtype(const std::string& tag) {
  for (const auto& i : kDTypes) {
    if (tag == i.tag) return i.dtype;
  }
  throw FormatError("unsupported dtype '" + tag + "'");
}

std::size_t element_size(DType dtype) { return info(dtype).size; }

bool is_widenable(DType dtype) { return dtype == DType::F32 || dtype == DType::BF16; }

const Entry* Manifest::find(const std::string& name) const {
  auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries.end() ? nullptr : &*it;
}

const Entry& Manifest::at(const std::string& name) const {
  if (const auto* e = find(name)) return *e;
  throw ManifestError("no tensor named '" + name + "' in " + source.string());
}

Manifest read_manifest(const fs::path& file, std::uint64_t* payload_start) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "'");
  std::error_code ec;
  const auto file_size = fs::file_size(file, ec);
  if (ec) throw IoError("cannot stat '" + file.string() + "': " + ec.message());

  unsigned char prefix[8];
  in.read(reinterpret_cast<char*>(prefix), sizeof prefix);
  if (in.gcount() != sizeof prefix) throw FormatError(file.string() + ": file shorter than header prefix");
  const auto header_size = read_u64_le(prefix);
  if (header_size > kMaxHeaderBytes || header_size > file_size - 8) {
    throw FormatError(file.string() + ": header length " + std::to_string(header_size) +
                      " exceeds file size");
  }
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (static_cast<std::uint64_t>(in.gcount()) != header_size) throw FormatError(file.string() + ": truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& err) {
    throw FormatError(file.string() + ": malformed header: " + err.what());
  }
  if (!header.is_object()) throw FormatError(file.string() + ": header is not a JSON object");

  Manifest m;
  m.source = file;
  for (const auto& [key, value] : header.items()) {
    if (key == "__metadata__") {
      if (!value.is_object()) throw FormatError(file.string() + ": __metadata__ must be an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) throw FormatError(file.string() + ": metadata value for '" + mk + "' is not a string");
        m.metadata[mk] = mv.get<std::string>();
      }
      continue;
    }
    m.entries.push_back(parse_entry(key, value, file));
  }

  const std::uint64_t payload_size = file_size - 8 - header_size;
  std::vector<const Entry*> by_offset;
  for (const auto& e : m.entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](const Entry* a, const Entry* b) { return std::tie(a->begin, a->end) < std::tie(b->begin, b->end); });
  std::uint64_t cursor = 0;
  for (const auto* e : by_offset) {
    if (e->end > payload_size) {
      throw FormatError(file.string() + ": payload of tensor '" + e->name + "' is truncated");
    }
    if (e->begin < cursor) {
      throw FormatError(file.string() + ": tensor '" + e->name + "' overlaps another tensor");
    }
    cursor = std::max(cursor, e->end);
  }
  if (payload_start) *payload_start = 8 + header_size;
  return m;
}

Checkpoint Checkpoint::open(const fs::path& path) {
  Checkpoint ckpt;
  ckpt.manifest_.source = path;
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    json index;
    try {
      index = json::parse(in);
    } catch (const json::exception& err) {
      throw FormatError(path.string() + ": malformed index: " + err.what());
    }
    if (!index.contains("weight_map") || !index["weight_map"].is_object()) {
      throw FormatError(path.string() + ": index has no weight_map object");
    }
    std::map<std::string, Manifest> shards;
    for (const auto& [name, shard] : index["weight_map"].items()) {
      if (!shard.is_string()) throw FormatError(path.string() + ": shard for '" + name + "' is not a string");
      const auto file = shard.get<std::string>();
      if (!shards.contains(file)) {
        std::uint64_t start = 0;
        const auto shard_path = path.parent_path() / file;
        shards.emplace(file, read_manifest(shard_path, &start));
        ckpt.payload_start_[shard_path] = start;
      }
      const auto& shard_manifest = shards.at(file);
      const auto* e = shard_manifest.find(name);
      if (!e) throw FormatError(path.string() + ": tensor '" + name + "' is missing from shard " + file);
      ckpt.manifest_.entries.push_back(*e);
    }
    if (index.contains("metadata") && index["metadata"].is_object()) {
      for (const auto& [k, v] : index["metadata"].items()) {
        if (v.is_string()) ckpt.manifest_.metadata[k] = v.get<std::string>();
      }
    }
    for (const auto& [file, m] : shards) {
      for (const auto& [k, v] : m.metadata) ckpt.manifest_.metadata.emplace(k, v);
    }
  } else {
    std::uint64_t start = 0;
    ckpt.manifest_ = read_manifest(path, &start);
    ckpt.payload_start_[path] = start;
  }
  for (std::size_t i = 0; i < ckpt.manifest_.entries.size(); ++i) {
    if (!ckpt.index_.emplace(ckpt.manifest_.entries[i].name, i).second) {
      throw FormatError(path.string() + ": duplicate tensor '" + ckpt.manifest_.entries[i].name + "'");
    }
  }
  return ckpt;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(manifest_.entries.size());
  for (const auto& e : manifest_.entries) out.push_back(e.name);
  return out;
}

RawTensor Checkpoint::read_raw(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ManifestError("no tensor named '" + name + "' in " + manifest_.source.string());
  const auto& e = manifest_.entries[it->second];
  const auto start = payload_start_.at(e.file);
  return {e.name, e.dtype, e.shape, read_bytes(e.file, start + e.begin, e.end - e.begin, e.name)};
}

Tensor Checkpoint::read_tensor(const std::string& name) const { return to_tensor(read_raw(name)); }

Tensor to_tensor(const RawTensor& raw) {
  Tensor t(raw.name, raw.shape);
  const auto n = static_cast<std::size_t>(t.size());
  switch (raw.dtype) {
    case DType::F32:
      std::memcpy(t.data.data(), raw.bytes.data(), n * sizeof(float));
      break;
    case DType::BF16:
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t bits;
        std::memcpy(&bits, raw.bytes.data() + 2 * i, 2);
        t.data[static_cast<Eigen::Index>(i)] = bf16_to_float(bits);
      }
      break;
    default:
      throw FormatError("tensor '" + raw.name + "' has dtype " + to_string(raw.dtype) +
                        ", expected F32 or BF16");
  }
  return t;
}

RawTensor from_tensor(const Tensor& t, DType dtype) {
  RawTensor raw{t.name, dtype, t.shape, {}};
  const auto n = static_cast<std::size_t>(t.size());
  switch (dtype) {
    case DType::F32:
      raw.bytes.resize(n * sizeof(float));
      std::memcpy(raw.bytes.data(), t.data.data(), raw.bytes.size());
      break;
    case DType::BF16:
      raw.bytes.resize(n * 2);
      for (std::size_t i = 0; i < n; ++i) {
        const auto bits = float_to_bf16(t.data[static_cast<Eigen::Index>(i)]);
        std::memcpy(raw.bytes.data() + 2 * i, &bits, 2);
      }
      break;
    default:
      throw FormatError("cannot store tensor '" + t.name + "' as " + to_string(dtype));
  }
  return raw;
}

void write(const fs::path& path, const std::vector<RawTensor>& tensors, const WriteOptions& options) {
  std::set<std::string> names;
  for (const auto& t : tensors) {
    if (t.name == "__metadata__" || !names.insert(t.name).second) {
      throw ManifestError("duplicate or reserved tensor name '" + t.name + "'");
    }
  }
  if (!options.max_shard_bytes) {
    std::vector<std::size_t> all(tensors.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    commit_file(path, build_header(tensors, all, options.metadata), tensors, all);
    return;
  }

  const auto cap = *options.max_shard_bytes;
  std::vector<std::vector<std::size_t>> shards(1);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto size = tensors[i].bytes.size();
    if (!shards.back().empty() && used + size > cap) {
      shards.emplace_back();
      used = 0;
    }
    shards.back().push_back(i);
    used += size;
  }
  // model.safetensors.index.json -> model-0000k-of-0000n.safetensors
  auto stem = path.filename().string();
  for (const char* suffix : {".json", ".index", ".safetensors"}) {
    const std::string sfx = suffix;
    if (stem.size() > sfx.size() && stem.ends_with(sfx)) stem.resize(stem.size() - sfx.size());
  }
  const auto count = shards.size();
  json weight_map = json::object();
  for (std::size_t s = 0; s < count; ++s) {
    char suffix[64];
    std::snprintf(suffix, sizeof suffix, "-%05zu-of-%05zu.safetensors", s + 1, count);
    const auto file = stem + suffix;
    commit_file(path.parent_path() / file, build_header(tensors, shards[s], options.metadata), tensors,
                shards[s]);
    for (auto i : shards[s]) weight_map[tensors[i].name] = file;
  }
  json index = {{"metadata", options.metadata}, {"weight_map", weight_map}};
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << index.dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

}  // namespace dq::st
