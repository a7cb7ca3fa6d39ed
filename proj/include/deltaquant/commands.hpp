#pragma once

// End-to-end drivers behind the command-line tool. Each returns the report it
// wrote so callers (and tests) can inspect it without re-parsing files.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deltaquant/model_io.hpp"
#include "deltaquant/report.hpp"
#include "deltaquant/search.hpp"
#include "deltaquant/synthetic.hpp"

namespace dq {

struct QuantizeOptions {
  std::filesystem::path base_path;
  std::filesystem::path post_path;
  std::filesystem::path out_path;
  std::filesystem::path report_path;
  std::optional<std::filesystem::path> csv_path;
  SearchConfig search;
  QuantPolicy policy;
  int workers = 0;
  std::optional<std::uint64_t> max_shard_bytes;
};

RunReport run_quantize(const QuantizeOptions& options);

struct EvaluateOptions {
  std::filesystem::path base_path;
  std::filesystem::path post_path;
  std::filesystem::path quant_path;
  std::filesystem::path report_path;
  std::optional<std::filesystem::path> csv_path;
  QuantPolicy policy;
  int workers = 0;
};

/// Reports every layer of the post checkpoint that the policy selects or
/// that the quantized checkpoint stores as E4M3 codes.
RunReport run_evaluate(const EvaluateOptions& options);

/// Named configurations: "absmax" (alpha fixed at 1) and the three searched
/// metrics "mse", "sign", "cos".
struct BenchOptions {
  SyntheticSpec data;
  std::vector<std::string> configs{"absmax", "mse", "sign", "cos"};
  SearchConfig search;  // metric is overridden per configuration
  int workers = 0;
  std::optional<std::filesystem::path> report_path;
};

struct BenchRow {
  std::string config;
  Aggregate aggregate;
  std::vector<double> alphas;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchReport {
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<BenchRow> rows;
};

/// Quantizes one layer set under a fixed alpha of 1 (no search).
std::vector<LayerResult> absmax_model(const std::vector<LayerPair>& pairs, const Granularity& granularity,
                                      int workers = 0);

BenchReport run_bench_synthetic(const BenchOptions& options);

nlohmann::ordered_json to_json(const BenchReport& r);
void write_table(std::ostream& os, const BenchReport& r);

nlohmann::ordered_json to_json(const SearchConfig& c);
nlohmann::ordered_json to_json(const QuantPolicy& p);

}  // namespace dq
