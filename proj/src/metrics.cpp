#include "deltaquant/metrics.hpp"

namespace dq {

void LayerPair::validate() const {
  require_same_shape(base.shape, post.shape, "layer '" + name + "' base vs post");
  require_finite(base);
  require_finite(post);
}

DeltaPair compute_delta(const LayerPair& pair, const Tensor& w_quant) {
  require_same_shape(pair.base.shape, pair.post.shape, "layer '" + pair.name + "' base vs post");
  require_same_shape(pair.post.shape, w_quant.shape, "layer '" + pair.name + "' post vs quantized");
  const Eigen::ArrayXd base = pair.base.data.cast<double>();
  return DeltaPair{pair.post.shape, pair.post.data.cast<double>() - base,
                   w_quant.data.cast<double>() - base};
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::NegMse:
      return "mse";
    case MetricKind::SignRate:
      return "sign";
    case MetricKind::CosSim:
      return "cos";
  }
  return "?";
}

MetricKind parse_metric(const std::string& text) {
  if (text == "mse" || text == "neg-mse") return MetricKind::NegMse;
  if (text == "sign" || text == "sign-rate") return MetricKind::SignRate;
  if (text == "cos" || text == "cosine" || text == "cos-sim") return MetricKind::CosSim;
  throw InvalidConfig("unknown metric '" + text + "' (expected mse, sign or cos)");
}

double evaluate(MetricKind metric, const DeltaPair& d) {
  switch (metric) {
    case MetricKind::NegMse:
      return -mse(d);
    case MetricKind::SignRate:
      return sign_rate(d);
    case MetricKind::CosSim:
      return cos_sim(d);
  }
  return 0.0;
}

}  // namespace dq
