#include "deltaquant/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "deltaquant/parallel.hpp"

namespace dq {
namespace {

// Holds the fixed parts of one layer's objective so each candidate only pays
// for a quantize-dequantize pass and a metric reduction.
class LayerObjective {
 public:
  LayerObjective(const LayerPair& pair, const ScaleGrid& scales, MetricKind metric)
      : pair_(pair), scales_(scales), metric_(metric), base_(pair.base.data.cast<double>()) {
    delta_.shape = pair.post.shape;
    delta_.post = pair.post.data.cast<double>() - base_;
  }

  bool zero_delta() const { return (delta_.post == 0.0).all(); }

  double operator()(double alpha) {
    const Tensor w_quant = quant_dequant(pair_.post, scales_, alpha);
    delta_.quant = w_quant.data.cast<double>() - base_;
    return evaluate(metric_, delta_);
  }

 private:
  const LayerPair& pair_;
  const ScaleGrid& scales_;
  MetricKind metric_;
  Eigen::ArrayXd base_;
  DeltaPair delta_;
};

}  // namespace

double SearchConfig::fine_half_width() const {
  return delta ? *delta : (alpha_max - alpha_min) / (n_coarse - 1);
}

void SearchConfig::validate() const {
  if (!(alpha_min > 0.0 && alpha_min <= 1.0 && 1.0 <= alpha_max) || !std::isfinite(alpha_max)) {
    throw InvalidConfig("search range [" + std::to_string(alpha_min) + ", " +
                        std::to_string(alpha_max) + "] must satisfy 0 < min <= 1 <= max");
  }
  if (n_coarse < 2 || n_fine < 2) {
    throw InvalidConfig("n_coarse and n_fine must both be at least 2");
  }
  if (delta && !(*delta > 0.0 && std::isfinite(*delta))) {
    throw InvalidConfig("fine half-width delta must be positive");
  }
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (lo > hi) {
    throw InvalidConfig("linspace bounds out of order: " + std::to_string(lo) + " > " +
                        std::to_string(hi));
  }
  if (n < 1) throw InvalidConfig("linspace needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> values(static_cast<std::size_t>(n));
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n - 1; ++i) values[i] = std::min(hi, lo + i * step);
  values[n - 1] = hi;
  return values;
}

double metric_at(const LayerPair& pair, const ScaleGrid& scales, MetricKind metric, double alpha) {
  return evaluate(metric, compute_delta(pair, quant_dequant(pair.post, scales, alpha)));
}

LayerResult search_layer(const LayerPair& pair, const SearchConfig& config) {
  config.validate();
  pair.validate();
  const ScaleGrid scales = default_scales(pair.post, config.granularity);
  LayerObjective objective(pair, scales, config.metric);

  SearchOutcome out;
  out.name = pair.name;
  out.baseline_metric = objective(1.0);
  out.best_metric = out.baseline_metric;
  out.chosen_alpha = 1.0;
  out.trace.push_back({1.0, out.baseline_metric, SearchStage::Initial});

  if (objective.zero_delta()) {
    out.zero_delta = true;
  } else {
    auto sweep = [&](const std::vector<double>& grid, SearchStage stage) {
      for (double alpha : grid) {
        const double m = objective(alpha);
        out.trace.push_back({alpha, m, stage});
        if (m > out.best_metric) {
          out.best_metric = m;
          out.chosen_alpha = alpha;
        }
      }
    };
    sweep(linspace(config.alpha_min, config.alpha_max, config.n_coarse), SearchStage::Coarse);
    const double half = config.fine_half_width();
    sweep(linspace(std::max(config.alpha_min, out.chosen_alpha - half),
                   std::min(config.alpha_max, out.chosen_alpha + half), config.n_fine),
          SearchStage::Fine);
  }

  QuantizedLayer layer = quantize_store(pair.post, scales, out.chosen_alpha);
  return {std::move(out), std::move(layer)};
}

std::vector<LayerResult> search_model(const std::vector<LayerPair>& pairs,
                                      const SearchConfig& config, int workers) {
  config.validate();
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (!seen.insert(p.name).second) throw ManifestError("duplicate layer name '" + p.name + "'");
  }
  std::vector<LayerResult> results(pairs.size());
  parallel_for(pairs.size(), workers,
               [&](std::size_t i) { results[i] = search_layer(pairs[i], config); });
  return results;
}

}  // namespace dq
