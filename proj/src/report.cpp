#include "deltaquant/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dq {
namespace {

using json = nlohmann::ordered_json;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt_optional(const char* spec, const std::optional<double>& v) {
  return v ? fmt(spec, *v) : std::string("-");
}

double cosine_from_sums(double dot, double pp, double qq) {
  if (pp == 0.0 && qq == 0.0) return 1.0;
  if (pp == 0.0 || qq == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(pp) * std::sqrt(qq)), -1.0, 1.0);
}

}  // namespace

LayerReport measure_layer(const LayerPair& pair, const Tensor& w_quant) {
  const DeltaPair d = compute_delta(pair, w_quant);
  LayerReport r;
  r.name = pair.name;
  r.elements = d.size();
  r.sign_rate = sign_rate(d);
  r.cos_sim = cos_sim(d);
  r.mse = mse(d);
  r.delta_l2 = delta_l2(d);
  r.sign_matches = static_cast<double>((d.post.sign() == d.quant.sign()).count());
  r.dot = (d.post * d.quant).sum();
  r.d_post_sq = d.post.square().sum();
  r.d_quant_sq = d.quant.square().sum();
  r.zero_delta = (d.post == 0.0).all();
  return r;
}

Aggregate aggregate(const std::vector<LayerReport>& layers) {
  Aggregate a;
  a.layers = static_cast<std::int64_t>(layers.size());
  if (layers.empty()) return a;
  double matches = 0.0, dot = 0.0, pp = 0.0, qq = 0.0, sq_err = 0.0, l2_sq = 0.0;
  double sr_sum = 0.0, cos_sum = 0.0;
  for (const auto& l : layers) {
    a.elements += l.elements;
    matches += l.sign_matches;
    dot += l.dot;
    pp += l.d_post_sq;
    qq += l.d_quant_sq;
    sq_err += l.mse * static_cast<double>(l.elements);
    l2_sq += l.delta_l2 * l.delta_l2;
    sr_sum += l.sign_rate;
    cos_sum += l.cos_sim;
  }
  const auto n = static_cast<double>(layers.size());
  a.sign_rate = a.elements ? matches / static_cast<double>(a.elements) : 1.0;
  a.sign_rate_layer_mean = sr_sum / n;
  a.cos_sim = cosine_from_sums(dot, pp, qq);
  a.cos_sim_layer_mean = cos_sum / n;
  a.mse = a.elements ? sq_err / static_cast<double>(a.elements) : 0.0;
  a.delta_l2 = std::sqrt(l2_sq);
  return a;
}

json to_json(const LayerReport& r) {
  return json{{"name", r.name},
              {"elements", r.elements},
              {"granularity", r.granularity},
              {"chosen_alpha", optional_json(r.chosen_alpha)},
              {"baseline_metric", optional_json(r.baseline_metric)},
              {"best_metric", optional_json(r.best_metric)},
              {"zero_delta", r.zero_delta},
              {"sign_rate", r.sign_rate},
              {"cos_sim", r.cos_sim},
              {"mse", r.mse},
              {"delta_l2", r.delta_l2},
              {"sign_matches", r.sign_matches},
              {"dot", r.dot},
              {"d_post_sq", r.d_post_sq},
              {"d_quant_sq", r.d_quant_sq}};
}

json to_json(const Aggregate& a) {
  return json{{"layers", a.layers},
              {"elements", a.elements},
              {"sign_rate", a.sign_rate},
              {"sign_rate_layer_mean", a.sign_rate_layer_mean},
              {"cos_sim", a.cos_sim},
              {"cos_sim_layer_mean", a.cos_sim_layer_mean},
              {"mse", a.mse},
              {"delta_l2", a.delta_l2}};
}

json to_json(const RunReport& r) {
  json layers = json::array();
  for (const auto& l : r.per_layer) layers.push_back(to_json(l));
  json j{{"config", r.config}, {"per_layer", std::move(layers)}, {"aggregate", to_json(r.aggregate)}};
  if (r.wall_clock_seconds) j["wall_clock_seconds"] = *r.wall_clock_seconds;
  return j;
}

LayerReport layer_report_from_json(const json& j) {
  LayerReport r;
  r.name = j.at("name").get<std::string>();
  r.elements = j.at("elements").get<std::int64_t>();
  r.granularity = j.at("granularity").get<std::string>();
  r.chosen_alpha = optional_from(j, "chosen_alpha");
  r.baseline_metric = optional_from(j, "baseline_metric");
  r.best_metric = optional_from(j, "best_metric");
  r.zero_delta = j.at("zero_delta").get<bool>();
  r.sign_rate = j.at("sign_rate").get<double>();
  r.cos_sim = j.at("cos_sim").get<double>();
  r.mse = j.at("mse").get<double>();
  r.delta_l2 = j.at("delta_l2").get<double>();
  r.sign_matches = j.at("sign_matches").get<double>();
  r.dot = j.at("dot").get<double>();
  r.d_post_sq = j.at("d_post_sq").get<double>();
  r.d_quant_sq = j.at("d_quant_sq").get<double>();
  return r;
}

Aggregate aggregate_from_json(const json& j) {
  Aggregate a;
  a.layers = j.at("layers").get<std::int64_t>();
  a.elements = j.at("elements").get<std::int64_t>();
  a.sign_rate = j.at("sign_rate").get<double>();
  a.sign_rate_layer_mean = j.at("sign_rate_layer_mean").get<double>();
  a.cos_sim = j.at("cos_sim").get<double>();
  a.cos_sim_layer_mean = j.at("cos_sim_layer_mean").get<double>();
  a.mse = j.at("mse").get<double>();
  a.delta_l2 = j.at("delta_l2").get<double>();
  return a;
}

RunReport run_report_from_json(const json& j) {
  RunReport r;
  r.config = j.at("config");
  for (const auto& l : j.at("per_layer")) r.per_layer.push_back(layer_report_from_json(l));
  r.aggregate = aggregate_from_json(j.at("aggregate"));
  r.wall_clock_seconds = optional_from(j, "wall_clock_seconds");
  return r;
}

void write_table(std::ostream& os, const RunReport& r) {
  std::size_t name_width = 5;
  for (const auto& l : r.per_layer) name_width = std::max(name_width, l.name.size());
  auto row = [&](const std::string& name, const std::string& elements, const std::string& gran,
                 const std::string& alpha, const std::string& sr, const std::string& cs,
                 const std::string& mse, const std::string& l2) {
    os << std::left << std::setw(static_cast<int>(name_width)) << name << "  " << std::right
       << std::setw(10) << elements << "  " << std::setw(13) << gran << "  " << std::setw(9) << alpha
       << "  " << std::setw(9) << sr << "  " << std::setw(9) << cs << "  " << std::setw(13) << mse
       << "  " << std::setw(13) << l2 << '\n';
  };
  row("layer", "elements", "granularity", "alpha", "SignRate", "CosSim", "MSE", "dW L2");
  for (const auto& l : r.per_layer) {
    row(l.name, std::to_string(l.elements), l.granularity, fmt_optional("%.6f", l.chosen_alpha),
        fmt("%.2f%%", 100.0 * l.sign_rate), fmt("%.6f", l.cos_sim), fmt("%.6e", l.mse),
        fmt("%.6e", l.delta_l2));
  }
  const auto& a = r.aggregate;
  row("[model]", std::to_string(a.elements), "", "", fmt("%.2f%%", 100.0 * a.sign_rate),
      fmt("%.6f", a.cos_sim), fmt("%.6e", a.mse), fmt("%.6e", a.delta_l2));
  row("[layer mean]", "", "", "", fmt("%.2f%%", 100.0 * a.sign_rate_layer_mean),
      fmt("%.6f", a.cos_sim_layer_mean), "", "");
}

void write_csv(std::ostream& os, const std::vector<LayerReport>& layers) {
  os << "name,elements,granularity,chosen_alpha,baseline_metric,best_metric,zero_delta,sign_rate,cos_sim,mse,delta_l2\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt("%.17g", *v) : std::string(); };
  for (const auto& l : layers) {
    os << l.name << ',' << l.elements << ',' << l.granularity << ',' << opt(l.chosen_alpha) << ','
       << opt(l.baseline_metric) << ',' << opt(l.best_metric) << ',' << (l.zero_delta ? 1 : 0) << ','
       << fmt("%.17g", l.sign_rate) << ',' << fmt("%.17g", l.cos_sim) << ',' << fmt("%.17g", l.mse)
       << ',' << fmt("%.17g", l.delta_l2) << '\n';
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
}

}  // namespace dq
