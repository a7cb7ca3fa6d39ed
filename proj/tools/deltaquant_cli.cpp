// deltaquant: FP8 E4M3 checkpoint quantization with delta-aware scale search.

#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "deltaquant/commands.hpp"

namespace {

struct SearchFlags {
  std::string metric = "sign";
  std::string granularity = "block";
  std::string range = "0.8,1.25";
  int n_coarse = 5;
  int n_fine = 10;
  double delta = 0.0;

  void add_to(CLI::App* app) {
    app->add_option("--metric", metric, "Search objective: sign, cos or mse")->capture_default_str();
    app->add_option("--granularity", granularity, "tensor, channel, block or block:RxC")->capture_default_str();
    app->add_option("--range", range, "Search range for alpha as \"lo,hi\" with lo <= 1 <= hi")->capture_default_str();
    app->add_option("--n-coarse", n_coarse, "Coarse candidates")->capture_default_str();
    app->add_option("--n-fine", n_fine, "Fine candidates")->capture_default_str();
    app->add_option("--delta", delta, "Fine-stage half-width (default: one coarse step)");
  }

  dq::SearchConfig build() const {
    dq::SearchConfig c;
    c.metric = dq::parse_metric(metric);
    c.granularity = dq::parse_granularity(granularity);
    const auto comma = range.find(',');
    if (comma == std::string::npos) throw dq::InvalidConfig("range must be \"lo,hi\", got '" + range + "'");
    try {
      std::size_t used = 0;
      const auto lo_text = range.substr(0, comma);
      const auto hi_text = range.substr(comma + 1);
      c.alpha_min = std::stod(lo_text, &used);
      if (used != lo_text.size()) throw std::invalid_argument(lo_text);
      c.alpha_max = std::stod(hi_text, &used);
      if (used != hi_text.size()) throw std::invalid_argument(hi_text);
    } catch (const std::logic_error&) {
      throw dq::InvalidConfig("range must be \"lo,hi\", got '" + range + "'");
    }
    c.n_coarse = n_coarse;
    c.n_fine = n_fine;
    if (delta > 0.0) c.delta = delta;
    c.validate();
    return c;
  }
};

struct PolicyFlags {
  std::vector<std::string> include{"*"};
  std::vector<std::string> exclude{"*embed*"};
  int min_rank = 2;
  std::int64_t min_elements = 4096;
  bool no_exclude = false;

  void add_to(CLI::App* app) {
    app->add_option("--include", include, "Glob of tensor names to quantize (repeatable)")->capture_default_str();
    app->add_option("--exclude", exclude, "Glob of tensor names to keep (repeatable)")->capture_default_str();
    app->add_flag("--no-exclude", no_exclude, "Clear the exclude list");
    app->add_option("--min-rank", min_rank, "Smallest rank to quantize")->capture_default_str();
    app->add_option("--min-elements", min_elements, "Smallest element count to quantize")->capture_default_str();
  }

  dq::QuantPolicy build() const {
    dq::QuantPolicy p{include, no_exclude ? std::vector<std::string>{} : exclude, min_rank, min_elements};
    p.validate();
    return p;
  }
};

void print_table(const dq::RunReport& report) {
  std::ostringstream os;
  dq::write_table(os, report);
  std::cout << os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantize post-trained checkpoints to FP8 E4M3 while preserving the post-training delta"};
  app.require_subcommand(1);
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--workers", workers, "Worker threads; output does not depend on it")->capture_default_str();

  dq::QuantizeOptions quantize;
  SearchFlags quantize_search;
  PolicyFlags quantize_policy;
  std::string quantize_csv;
  std::uint64_t shard_bytes = 0;
  auto* q = app.add_subcommand("quantize", "Search per-layer scales and write an FP8 checkpoint");
  q->add_option("--base", quantize.base_path, "Base checkpoint (.safetensors or index .json)")->required();
  q->add_option("--post", quantize.post_path, "Post-trained checkpoint")->required();
  q->add_option("--out", quantize.out_path, "Output checkpoint")->required();
  q->add_option("--report", quantize.report_path, "JSON report path")->required();
  q->add_option("--csv", quantize_csv, "Optional per-layer CSV export");
  q->add_option("--max-shard-bytes", shard_bytes, "Shard the output; --out then names the index");
  quantize_search.add_to(q);
  quantize_policy.add_to(q);

  dq::EvaluateOptions evaluate;
  PolicyFlags evaluate_policy;
  std::string evaluate_csv;
  auto* e = app.add_subcommand("evaluate", "Measure delta preservation of an existing checkpoint");
  e->add_option("--base", evaluate.base_path, "Base checkpoint")->required();
  e->add_option("--post", evaluate.post_path, "Post-trained checkpoint")->required();
  e->add_option("--quant", evaluate.quant_path, "Quantized (or any candidate) checkpoint")->required();
  e->add_option("--report", evaluate.report_path, "JSON report path")->required();
  e->add_option("--csv", evaluate_csv, "Optional per-layer CSV export");
  evaluate_policy.add_to(e);

  dq::BenchOptions bench;
  SearchFlags bench_search;
  bench_search.range = "0.9,1.11";
  std::string bench_report;
  auto* b = app.add_subcommand("bench-synthetic", "Compare absmax and searched scales on synthetic layers");
  b->add_option("--seed", bench.data.seed, "Random seed")->capture_default_str();
  b->add_option("--layers", bench.data.layers, "Number of layers")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--rows", bench.data.rows, "Rows per layer")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--cols", bench.data.cols, "Columns per layer")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--delta-sigma", bench.data.delta_sigma, "Std-dev of the synthetic delta")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  b->add_option("--configs", bench.configs, "Subset of absmax, mse, sign, cos")->capture_default_str();
  b->add_option("--report", bench_report, "JSON report path")->required();
  bench_search.add_to(b);

  std::string synth_base, synth_post;
  dq::SyntheticSpec synth;
  auto* s = app.add_subcommand("make-synthetic", "Write a synthetic base/post checkpoint pair");
  s->add_option("--base", synth_base, "Output base checkpoint")->required();
  s->add_option("--post", synth_post, "Output post checkpoint")->required();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--layers", synth.layers, "Number of layers")->capture_default_str();
  s->add_option("--rows", synth.rows, "Rows per layer")->capture_default_str();
  s->add_option("--cols", synth.cols, "Columns per layer")->capture_default_str();
  s->add_option("--delta-sigma", synth.delta_sigma, "Std-dev of the synthetic delta")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*q) {
      quantize.search = quantize_search.build();
      quantize.policy = quantize_policy.build();
      quantize.workers = workers;
      if (!quantize_csv.empty()) quantize.csv_path = quantize_csv;
      if (shard_bytes > 0) quantize.max_shard_bytes = shard_bytes;
      print_table(dq::run_quantize(quantize));
    } else if (*e) {
      evaluate.policy = evaluate_policy.build();
      evaluate.workers = workers;
      if (!evaluate_csv.empty()) evaluate.csv_path = evaluate_csv;
      print_table(dq::run_evaluate(evaluate));
    } else if (*b) {
      bench.search = bench_search.build();
      for (const auto& c : bench.configs) {
        if (c != "absmax") dq::parse_metric(c);
      }
      bench.workers = workers;
      bench.report_path = bench_report;
      const auto report = dq::run_bench_synthetic(bench);
      dq::write_table(std::cout, report);
    } else if (*s) {
      dq::write_synthetic_checkpoints(synth, synth_base, synth_post);
    }
  } catch (const dq::Error& err) {
    std::cerr << "error: " << err.kind() << ": " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
