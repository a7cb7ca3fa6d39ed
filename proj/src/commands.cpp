#include "deltaquant/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "deltaquant/parallel.hpp"

namespace dq {
namespace {

using json = nlohmann::ordered_json;

void write_outputs(const RunReport& report, const std::filesystem::path& report_path,
                   const std::optional<std::filesystem::path>& csv_path) {
  if (csv_path) {
    std::ostringstream csv;
    write_csv(csv, report.per_layer);
    write_text_file(*csv_path, csv.str());
  }
  write_text_file(report_path, to_json(report).dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

LayerReport report_for(const LayerPair& pair, const LayerResult& result) {
  LayerReport r = measure_layer(pair, dequantize(result.layer));
  r.granularity = to_string(result.layer.granularity);
  r.chosen_alpha = result.outcome.chosen_alpha;
  r.baseline_metric = result.outcome.baseline_metric;
  r.best_metric = result.outcome.best_metric;
  r.zero_delta = result.outcome.zero_delta;
  return r;
}

}  // namespace

json to_json(const SearchConfig& c) {
  return json{{"metric", to_string(c.metric)},
              {"granularity", to_string(c.granularity)},
              {"alpha_min", c.alpha_min},
              {"alpha_max", c.alpha_max},
              {"n_coarse", c.n_coarse},
              {"n_fine", c.n_fine},
              {"delta", c.fine_half_width()}};
}

json to_json(const QuantPolicy& p) {
  return json{{"include", p.include},
              {"exclude", p.exclude},
              {"min_rank", p.min_rank},
              {"min_elements", p.min_elements}};
}

RunReport run_quantize(const QuantizeOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  options.search.validate();
  const auto base = st::Checkpoint::open(options.base_path);
  const auto post = st::Checkpoint::open(options.post_path);
  const auto plan = pair_layers(base, post, options.policy);

  std::vector<QuantizedLayer> layers(plan.layers.size());
  RunReport report;
  report.per_layer.resize(plan.layers.size());
  parallel_for(plan.layers.size(), options.workers, [&](std::size_t i) {
    const auto pair = load_pair(base, post, plan.layers[i]);
    auto result = search_layer(pair, options.search);
    report.per_layer[i] = report_for(pair, result);
    layers[i] = std::move(result.layer);
  });

  std::vector<st::RawTensor> passthrough;
  for (const auto& name : plan.passthrough) passthrough.push_back(post.read_raw(name));
  write_quantized_checkpoint(layers, passthrough, options.out_path, post.names(), options.max_shard_bytes);

  report.config = {{"command", "quantize"},
                   {"base", options.base_path.string()},
                   {"post", options.post_path.string()},
                   {"out", options.out_path.string()},
                   {"search", to_json(options.search)},
                   {"policy", to_json(options.policy)},
                   {"passthrough", plan.passthrough.size()}};
  report.aggregate = aggregate(report.per_layer);
  report.wall_clock_seconds = seconds_since(start);
  write_outputs(report, options.report_path, options.csv_path);
  return report;
}

RunReport run_evaluate(const EvaluateOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto base = st::Checkpoint::open(options.base_path);
  const auto post = st::Checkpoint::open(options.post_path);
  const auto quant = st::Checkpoint::open(options.quant_path);
  const auto plan = pair_layers(base, post, options.policy);
  const std::set<std::string> selected(plan.layers.begin(), plan.layers.end());

  std::vector<std::string> names;
  for (const auto& name : post.names()) {
    if (selected.contains(name) || is_quantized(quant, name)) names.push_back(name);
  }

  RunReport report;
  report.per_layer.resize(names.size());
  parallel_for(names.size(), options.workers, [&](std::size_t i) {
    const auto& name = names[i];
    if (!quant.contains(name)) throw ManifestError("tensor '" + name + "' is missing from the quantized checkpoint");
    const auto pair = load_pair(base, post, name);
    LayerReport r;
    if (is_quantized(quant, name)) {
      const auto layer = read_quantized_layer(quant, name);
      r = measure_layer(pair, dequantize(layer));
      r.granularity = to_string(layer.granularity);
      r.chosen_alpha = layer.chosen_alpha;
    } else {
      r = measure_layer(pair, quant.read_tensor(name));
      r.granularity = "none";
    }
    report.per_layer[i] = std::move(r);
  });

  report.config = {{"command", "evaluate"},
                   {"base", options.base_path.string()},
                   {"post", options.post_path.string()},
                   {"quant", options.quant_path.string()},
                   {"policy", to_json(options.policy)}};
  report.aggregate = aggregate(report.per_layer);
  report.wall_clock_seconds = seconds_since(start);
  write_outputs(report, options.report_path, options.csv_path);
  return report;
}

std::vector<LayerResult> absmax_model(const std::vector<LayerPair>& pairs, const Granularity& granularity,
                                      int workers) {
  std::vector<LayerResult> results(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& pair = pairs[i];
    pair.validate();
    const auto scales = default_scales(pair.post, granularity);
    LayerResult r;
    r.outcome.name = pair.name;
    r.layer = quantize_store(pair.post, scales, 1.0);
    results[i] = std::move(r);
  });
  return results;
}

BenchReport run_bench_synthetic(const BenchOptions& options) {
  options.search.validate();
  const auto pairs = make_synthetic_layers(options.data);
  BenchReport report;
  json search = to_json(options.search);
  search.erase("metric");
  report.config = {{"command", "bench-synthetic"},
                   {"seed", options.data.seed},
                   {"layers", options.data.layers},
                   {"rows", options.data.rows},
                   {"cols", options.data.cols},
                   {"delta_sigma", options.data.delta_sigma},
                   {"configs", options.configs},
                   {"search", search}};

  for (const auto& name : options.configs) {
    std::vector<LayerResult> results;
    if (name == "absmax") {
      results = absmax_model(pairs, options.search.granularity, options.workers);
    } else {
      SearchConfig config = options.search;
      config.metric = parse_metric(name);
      results = search_model(pairs, config, options.workers);
    }
    std::vector<LayerReport> layers;
    BenchRow row{name, {}, {}};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      layers.push_back(report_for(pairs[i], results[i]));
      row.alphas.push_back(results[i].layer.chosen_alpha);
    }
    row.aggregate = aggregate(layers);
    report.rows.push_back(std::move(row));
  }
  if (options.report_path) write_text_file(*options.report_path, to_json(report).dump(2) + "\n");
  return report;
}

json to_json(const BenchReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"config", row.config}, {"aggregate", to_json(row.aggregate)}, {"alphas", row.alphas}});
  }
  return json{{"config", r.config}, {"rows", std::move(rows)}};
}

void write_table(std::ostream& os, const BenchReport& r) {
  auto fmt = [](const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return std::string(buf);
  };
  os << std::left << std::setw(8) << "config" << std::right << std::setw(14) << "dW L2" << std::setw(11)
     << "SignRate" << std::setw(11) << "CosSim" << std::setw(14) << "MSE" << std::setw(11) << "mean alpha"
     << '\n';
  for (const auto& row : r.rows) {
    double mean_alpha = 0.0;
    for (double a : row.alphas) mean_alpha += a;
    if (!row.alphas.empty()) mean_alpha /= static_cast<double>(row.alphas.size());
    os << std::left << std::setw(8) << row.config << std::right << std::setw(14)
       << fmt("%.6e", row.aggregate.delta_l2) << std::setw(11) << fmt("%.2f%%", 100.0 * row.aggregate.sign_rate)
       << std::setw(11) << fmt("%.6f", row.aggregate.cos_sim) << std::setw(14) << fmt("%.6e", row.aggregate.mse)
       << std::setw(11) << fmt("%.4f", mean_alpha) << '\n';
  }
}

}  // namespace dq
