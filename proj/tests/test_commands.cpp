#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "deltaquant/commands.hpp"

namespace dq {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dq_commands_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    SyntheticSpec spec;
    spec.seed = 42;
    spec.layers = 3;
    spec.rows = 64;
    spec.cols = 128;
    write_synthetic_checkpoints(spec, path("base.safetensors"), path("post.safetensors"));
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  QuantizeOptions quantize_options(const std::string& tag) const {
    QuantizeOptions o;
    o.base_path = path("base.safetensors");
    o.post_path = path("post.safetensors");
    o.out_path = path(tag + ".safetensors");
    o.report_path = path(tag + ".json");
    o.workers = 1;
    return o;
  }

  EvaluateOptions evaluate_options(const fs::path& quant, const std::string& tag) const {
    EvaluateOptions o;
    o.base_path = path("base.safetensors");
    o.post_path = path("post.safetensors");
    o.quant_path = quant;
    o.report_path = path(tag + ".json");
    o.workers = 1;
    return o;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DQ_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(Commands, QuantizeThenEvaluateReproducesMetrics) {
  auto q = quantize_options("q");
  q.csv_path = path("q.csv");
  const auto report = run_quantize(q);
  ASSERT_EQ(report.per_layer.size(), 3u);
  EXPECT_TRUE(fs::exists(path("q.csv")));

  const auto out = st::Checkpoint::open(q.out_path);
  const auto post = st::Checkpoint::open(q.post_path);
  // Every post tensor appears exactly once, quantized or copied.
  for (const auto& name : post.names()) {
    EXPECT_TRUE(out.contains(name)) << name;
    if (name.ends_with(".norm")) EXPECT_EQ(out.read_raw(name), post.read_raw(name));
  }
  EXPECT_EQ(out.names().size(), post.names().size() + 3);

  const auto eval = run_evaluate(evaluate_options(q.out_path, "e"));
  ASSERT_EQ(eval.per_layer.size(), report.per_layer.size());
  for (std::size_t i = 0; i < eval.per_layer.size(); ++i) {
    const auto& a = report.per_layer[i];
    const auto& b = eval.per_layer[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.sign_rate, b.sign_rate);
    EXPECT_EQ(a.cos_sim, b.cos_sim);
    EXPECT_EQ(a.mse, b.mse);
    EXPECT_EQ(a.delta_l2, b.delta_l2);
    EXPECT_EQ(a.chosen_alpha, b.chosen_alpha);
    EXPECT_EQ(a.granularity, b.granularity);
  }
  EXPECT_EQ(report.aggregate, eval.aggregate);
}

TEST_F(Commands, ReportJsonRoundTripsAndMatchesTable) {
  const auto report = run_quantize(quantize_options("q"));
  const auto parsed = run_report_from_json(json::parse(slurp(path("q.json"))));
  EXPECT_EQ(parsed, report);
  EXPECT_EQ(aggregate(parsed.per_layer), parsed.aggregate);

  std::ostringstream table;
  write_table(table, report);
  std::istringstream lines(table.str());
  std::string line;
  std::getline(lines, line);
  for (const auto& l : report.per_layer) {
    ASSERT_TRUE(std::getline(lines, line));
    std::istringstream fields(line);
    std::string name, elements, gran, alpha, sr, cs, mse, l2;
    fields >> name >> elements >> gran >> alpha >> sr >> cs >> mse >> l2;
    EXPECT_EQ(name, l.name);
    EXPECT_EQ(std::stoll(elements), l.elements);
    EXPECT_NEAR(std::stod(alpha), *l.chosen_alpha, 5e-7);
    EXPECT_NEAR(std::stod(sr.substr(0, sr.size() - 1)), 100 * l.sign_rate, 5e-3);
    EXPECT_NEAR(std::stod(cs), l.cos_sim, 5e-7);
    EXPECT_NEAR(std::stod(mse), l.mse, l.mse * 1e-6);
    EXPECT_NEAR(std::stod(l2), l.delta_l2, l.delta_l2 * 1e-6);
  }
}

TEST_F(Commands, IdenticalCheckpointsAreZeroDelta) {
  auto q = quantize_options("z");
  q.post_path = q.base_path;
  const auto report = run_quantize(q);
  for (const auto& l : report.per_layer) {
    EXPECT_TRUE(l.zero_delta);
    EXPECT_EQ(*l.chosen_alpha, 1.0);
  }
}

TEST_F(Commands, EvaluateIdentityAndBase) {
  const auto same = run_evaluate(evaluate_options(path("post.safetensors"), "same"));
  ASSERT_EQ(same.per_layer.size(), 3u);
  for (const auto& l : same.per_layer) {
    EXPECT_EQ(l.sign_rate, 1.0);
    EXPECT_DOUBLE_EQ(l.cos_sim, 1.0);
    EXPECT_EQ(l.mse, 0.0);
    EXPECT_EQ(l.delta_l2, 0.0);
    EXPECT_FALSE(l.chosen_alpha.has_value());
  }
  const auto base = run_evaluate(evaluate_options(path("base.safetensors"), "base"));
  const auto b = st::Checkpoint::open(path("base.safetensors"));
  const auto p = st::Checkpoint::open(path("post.safetensors"));
  for (const auto& l : base.per_layer) {
    EXPECT_EQ(l.cos_sim, 0.0);
    const Eigen::ArrayXd d = p.read_tensor(l.name).data.cast<double>() - b.read_tensor(l.name).data.cast<double>();
    EXPECT_NEAR(l.mse, d.square().mean(), 1e-15);
  }
}

TEST_F(Commands, SignSearchBeatsMseSearchOnSignRate) {
  auto sign = quantize_options("sign");
  sign.search.metric = MetricKind::SignRate;
  sign.search.granularity = Granularity::per_channel();
  auto mse = quantize_options("mse");
  mse.search = sign.search;
  mse.search.metric = MetricKind::NegMse;
  EXPECT_GT(run_quantize(sign).aggregate.sign_rate, run_quantize(mse).aggregate.sign_rate);
}

TEST_F(Commands, ResultsIndependentOfWorkers) {
  auto one = quantize_options("w1");
  auto four = quantize_options("w4");
  four.workers = 4;
  const auto a = run_quantize(one);
  const auto b = run_quantize(four);
  EXPECT_EQ(a.per_layer, b.per_layer);
  EXPECT_EQ(slurp(one.out_path), slurp(four.out_path));
}

TEST_F(Commands, ShardedOutputEvaluates) {
  auto q = quantize_options("sharded");
  q.out_path = path("sharded.safetensors.index.json");
  q.max_shard_bytes = 10000;
  const auto report = run_quantize(q);
  const auto eval = run_evaluate(evaluate_options(q.out_path, "se"));
  EXPECT_EQ(report.aggregate, eval.aggregate);
}

TEST_F(Commands, BenchIsDeterministicAndOrdered) {
  BenchOptions o;
  o.data = {7, 2, 128, 128, 0.01};
  o.search.granularity = Granularity::block();
  o.search.alpha_min = 0.9;
  o.search.alpha_max = 1.11;
  o.workers = 2;
  o.report_path = path("b1.json");
  const auto r1 = run_bench_synthetic(o);
  o.report_path = path("b2.json");
  o.workers = 1;
  run_bench_synthetic(o);
  EXPECT_EQ(slurp(path("b1.json")), slurp(path("b2.json")));

  ASSERT_EQ(r1.rows.size(), 4u);
  const auto& absmax = r1.rows[0].aggregate;
  EXPECT_EQ(r1.rows[0].config, "absmax");
  EXPECT_LE(r1.rows[1].aggregate.mse, absmax.mse);
  EXPECT_GE(r1.rows[2].aggregate.sign_rate, absmax.sign_rate);
  EXPECT_GE(r1.rows[3].aggregate.cos_sim, absmax.cos_sim);
  for (double a : r1.rows[0].alphas) EXPECT_EQ(a, 1.0);
}

TEST_F(Commands, CliQuantizeAndUsageErrors) {
  const auto log = path("log.txt");
  const std::string io = " --base " + path("base.safetensors").string() + " --post " +
                         path("post.safetensors").string() + " --out " + path("cli.safetensors").string() +
                         " --report " + path("cli.json").string();
  EXPECT_EQ(run_cli("--workers 2 quantize" + io + " --metric cos --granularity channel --range 0.5,2", log), 0);
  EXPECT_TRUE(fs::exists(path("cli.json")));
  EXPECT_NE(slurp(log).find("SignRate"), std::string::npos);

  fs::remove(path("cli.json"));
  EXPECT_NE(run_cli("quantize" + io + " --range 2,0.5", log), 0);
  EXPECT_NE(slurp(log).find("InvalidConfig"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("cli.json")));
  EXPECT_NE(run_cli("quantize" + io + " --range 1.2,2", log), 0);
  EXPECT_NE(run_cli("quantize" + io + " --metric l1", log), 0);
  EXPECT_NE(run_cli("quantize --base x", log), 0);
  EXPECT_FALSE(fs::exists(path("cli.json")));
}

TEST_F(Commands, CliEvaluateMissingScaleFails) {
  st::write(path("bad.safetensors"),
            {st::RawTensor{"layers.0.weight", st::DType::F8_E4M3, {64, 128}, std::vector<std::uint8_t>(64 * 128, 0)}});
  const auto log = path("log.txt");
  EXPECT_NE(run_cli("evaluate --base " + path("base.safetensors").string() + " --post " +
                        path("post.safetensors").string() + " --quant " + path("bad.safetensors").string() +
                        " --report " + path("bad.json").string(),
                    log),
            0);
  EXPECT_NE(slurp(log).find("FormatError"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("bad.json")));
}

TEST_F(Commands, CliBenchSynthetic) {
  const auto log = path("log.txt");
  EXPECT_EQ(run_cli("bench-synthetic --layers 1 --rows 32 --cols 32 --configs absmax sign --report " +
                        path("bench.json").string(),
                    log),
            0);
  const auto j = json::parse(slurp(path("bench.json")));
  EXPECT_EQ(j["rows"].size(), 2u);
  EXPECT_NE(run_cli("bench-synthetic --delta-sigma 0 --report " + path("x.json").string(), log), 0);
}

}  // namespace
}  // namespace dq
