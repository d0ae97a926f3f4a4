#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "detectgnn/cli.hpp"
#include "detectgnn/error.hpp"
#include "detectgnn/pipeline.hpp"

using namespace detectgnn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "detectgnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

nlohmann::json without_timing(nlohmann::json doc) {
  doc.erase("timing");
  return doc;
}

// Stream output minus the per-event latency.
std::string scores_only(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("latency_us");
    out += j.dump() + "\n";
  }
  return out;
}

class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("detectgnn_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run_cli({"synth", "--events", "1500", "--seed", "5", "--out", (root_ / "data").string()}).code, 0);
    ASSERT_EQ(run_cli({"train", "--in", data(), "--epochs", "2", "--hidden-dim", "4", "--out", (root_ / "m").string()}).code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string data() { return (root_ / "data" / "events.csv").string(); }
  static std::string model() { return (root_ / "m" / "model.json").string(); }
  static std::string schema() { return (root_ / "m" / "schema.json").string(); }

  static fs::path root_;
};

fs::path CliRun::root_;

}  // namespace

TEST(Split, StableAndNearFraction) {
  std::size_t held = 0;
  for (int i = 0; i < 20000; ++i) held += pipeline::in_test_split("txn" + std::to_string(i), 0.3);
  EXPECT_NEAR(held / 20000.0, 0.3, 0.02);
  EXPECT_EQ(pipeline::in_test_split("abc", 0.3), pipeline::in_test_split("abc", 0.3));
}

TEST(Pipeline, ConfigValidation) {
  pipeline::PipelineConfig c;
  c.test_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.window_length = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pipeline, TrainThenEvaluateSmall) {
  SyntheticConfig sc;
  sc.n_events = 2000;
  const auto ds = generate_synthetic(sc);
  pipeline::PipelineConfig pc;
  pc.train.epochs = 2;
  pc.train.hidden_dim = 4;
  std::size_t callbacks = 0;
  const auto model = pipeline::train_model(ds.events, pc, [&](std::size_t, double) { ++callbacks; });
  EXPECT_EQ(callbacks, 2u);
  EXPECT_GT(model.train_samples, model.train_positives);
  const auto ev = pipeline::evaluate_model(ds.events, model.specs, model.report.params, pc);
  EXPECT_EQ(ev.gnn_scores.size(), ev.test_count);
  EXPECT_EQ(ev.train_count + ev.test_count, ds.events.size());
  const auto report = pipeline::evaluation_report_json(ev, pc, pipeline::dataset_hash(ds.events));
  EXPECT_TRUE(report.contains("metadata"));
  EXPECT_EQ(report["metadata"]["test_count"], ev.test_count);
}

TEST_F(CliRun, SynthIsByteIdentical) {
  const auto again = root_ / "data2";
  ASSERT_EQ(run_cli({"synth", "--events", "1500", "--seed", "5", "--out", again.string()}).code, 0);
  EXPECT_EQ(slurp(again / "events.csv"), slurp(root_ / "data" / "events.csv"));
  EXPECT_EQ(slurp(again / "rings.json"), slurp(root_ / "data" / "rings.json"));
}

TEST_F(CliRun, TrainIsReproducible) {
  const auto again = root_ / "m2";
  const auto r = run_cli({"train", "--in", data(), "--epochs", "2", "--hidden-dim", "4", "--out", again.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 2/2 loss"), std::string::npos);
  EXPECT_EQ(slurp(again / "model.json"), slurp(model()));
  EXPECT_EQ(slurp(again / "schema.json"), slurp(schema()));
  EXPECT_EQ(without_timing(nlohmann::json::parse(slurp(again / "train_report.json"))),
            without_timing(nlohmann::json::parse(slurp(root_ / "m" / "train_report.json"))));
}

TEST_F(CliRun, EvalIsByteIdentical) {
  const auto a = (root_ / "eval_a.json").string(), b = (root_ / "eval_b.json").string();
  const auto r = run_cli({"eval", "--in", data(), "--model", model(), "--schema", schema(), "--out", a});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("GNN-based"), std::string::npos);
  ASSERT_EQ(run_cli({"eval", "--in", data(), "--model", model(), "--schema", schema(), "--out", b}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(CliRun, StreamScoresAreReproducible) {
  const auto a = root_ / "s_a.jsonl", b = root_ / "s_b.jsonl";
  const auto r = run_cli({"stream", "--in", data(), "--model", model(), "--schema", schema(), "--out", a.string(), "--events",
                      "500", "--batch", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run_cli({"stream", "--in", data(), "--model", model(), "--schema", schema(), "--out", b.string(), "--events",
                 "500"})
                .code,
            0);
  EXPECT_EQ(scores_only(a), scores_only(b));
  const auto stats = nlohmann::json::parse(slurp(a.string() + ".stats.json"));
  EXPECT_EQ(stats["events"], 500);
}

TEST_F(CliRun, BenchReportsEveryConfiguration) {
  const auto out = root_ / "bench.csv";
  const auto r = run_cli({"bench", "--in", data(), "--model", model(), "--schema", schema(), "--out", out.string(),
                      "--events", "300"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(out));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("batch_size,cache,events", 0), 0u);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find(",off,") != std::string::npos) EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
  }
  EXPECT_EQ(rows, 8u);
}

TEST_F(CliRun, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--out", (root_ / "x").string()}).code, cli::kExitUsage);  // no --in
  EXPECT_EQ(run_cli({"synth", "--fraud-rate", "2", "--out", (root_ / "x").string()}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"stream", "--in", data(), "--model", model(), "--schema", schema(), "--out",
                 (root_ / "x.jsonl").string(), "--cache", "sometimes"})
                .code,
            cli::kExitUsage);

  const auto bad_csv = root_ / "bad.csv";
  std::ofstream(bad_csv) << "txn_id,timestamp\n1,2\n";
  const auto r = run_cli({"train", "--in", bad_csv.string(), "--out", (root_ / "x").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("line 1"), std::string::npos);

  const auto wrong_schema = root_ / "wrong_schema.json";
  auto doc = nlohmann::json::parse(slurp(schema()));
  doc["schema_version"] = "detectgnn-features/0";
  std::ofstream(wrong_schema) << doc.dump();
  EXPECT_EQ(run_cli({"eval", "--in", data(), "--model", model(), "--schema", wrong_schema.string(), "--out",
                 (root_ / "x.json").string()})
                .code,
            cli::kExitUsage);

  // An output path inside a missing directory is a runtime failure.
  EXPECT_EQ(run_cli({"stream", "--in", data(), "--model", model(), "--schema", schema(), "--out",
                 (root_ / "missing" / "dir" / "s.jsonl").string(), "--events", "10"})
                .code,
            cli::kExitRuntime);
}
