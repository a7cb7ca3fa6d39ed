#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deltaquant/metrics.hpp"

namespace dq {

struct LayerReport {
  std::string name;
  std::int64_t elements = 0;
  std::string granularity;
  std::optional<double> chosen_alpha;
  std::optional<double> baseline_metric;
  std::optional<double> best_metric;
  bool zero_delta = false;
  double sign_rate = 1.0;
  double cos_sim = 1.0;
  double mse = 0.0;
  double delta_l2 = 0.0;
  // Raw sums kept so model-level numbers can be recomputed exactly.
  double sign_matches = 0.0;
  double dot = 0.0;
  double d_post_sq = 0.0;
  double d_quant_sq = 0.0;

  friend bool operator==(const LayerReport&, const LayerReport&) = default;
};

/// All per-layer metrics of w_quant against the pair.
LayerReport measure_layer(const LayerPair& pair, const Tensor& w_quant);

/// Model-level view. "weighted" and "concat" values treat the model as one
/// long delta vector; "layer_mean" values average the per-layer numbers.
struct Aggregate {
  std::int64_t layers = 0;
  std::int64_t elements = 0;
  double sign_rate = 1.0;             // matches / elements over all layers
  double sign_rate_layer_mean = 1.0;
  double cos_sim = 1.0;               // over the concatenated deltas
  double cos_sim_layer_mean = 1.0;
  double mse = 0.0;                   // element-weighted
  double delta_l2 = 0.0;              // root of summed squares

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

Aggregate aggregate(const std::vector<LayerReport>& layers);

struct RunReport {
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<LayerReport> per_layer;
  Aggregate aggregate;
  std::optional<double> wall_clock_seconds;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

nlohmann::ordered_json to_json(const LayerReport& r);
nlohmann::ordered_json to_json(const Aggregate& a);
nlohmann::ordered_json to_json(const RunReport& r);
LayerReport layer_report_from_json(const nlohmann::ordered_json& j);
Aggregate aggregate_from_json(const nlohmann::ordered_json& j);
RunReport run_report_from_json(const nlohmann::ordered_json& j);

/// Aligned-column table; SignRate as a percentage with two decimals.
void write_table(std::ostream& os, const RunReport& r);
void write_csv(std::ostream& os, const std::vector<LayerReport>& layers);

/// Writes text through a temporary file and a rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dq
