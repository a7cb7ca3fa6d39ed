#pragma once

// Per-layer coarse-to-fine search over a single multiplier alpha applied to
// every group's absmax scale. The default scale (alpha = 1) is evaluated
// first; later candidates replace the incumbent only on strict improvement,
// so ties resolve to the earliest evaluated candidate.

#include <optional>
#include <string>
#include <vector>

#include "deltaquant/metrics.hpp"
#include "deltaquant/quantizer.hpp"

namespace dq {

struct SearchConfig {
  double alpha_min = 0.8;
  double alpha_max = 1.25;
  int n_coarse = 5;
  int n_fine = 10;
  /// Fine-stage half-width. Defaults to one coarse step.
  std::optional<double> delta;
  MetricKind metric = MetricKind::SignRate;
  Granularity granularity = Granularity::block();

  double fine_half_width() const;
  /// Throws InvalidConfig unless 0 < alpha_min <= 1 <= alpha_max,
  /// n_coarse >= 2, n_fine >= 2 and delta > 0.
  void validate() const;
};

enum class SearchStage { Initial, Coarse, Fine };

struct Candidate {
  double alpha = 1.0;
  double metric = 0.0;
  SearchStage stage = SearchStage::Initial;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct SearchOutcome {
  std::string name;
  double chosen_alpha = 1.0;
  double best_metric = 0.0;
  double baseline_metric = 0.0;
  /// Set when w_post == w_base everywhere; the search is skipped.
  bool zero_delta = false;
  std::vector<Candidate> trace;
};

struct LayerResult {
  SearchOutcome outcome;
  QuantizedLayer layer;
};

/// n evenly spaced values from lo to hi inclusive; {lo} when n == 1.
std::vector<double> linspace(double lo, double hi, int n);

/// Objective value of one candidate multiplier.
double metric_at(const LayerPair& pair, const ScaleGrid& scales, MetricKind metric, double alpha);

LayerResult search_layer(const LayerPair& pair, const SearchConfig& config);

/// Independent per-layer searches, results in input order. `workers` = 0
/// uses every core; the output does not depend on it.
std::vector<LayerResult> search_model(const std::vector<LayerPair>& pairs,
                                      const SearchConfig& config, int workers = 0);

}  // namespace dq
