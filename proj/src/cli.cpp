#include "detectgnn/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "detectgnn/data_io.hpp"
#include "detectgnn/error.hpp"
#include "detectgnn/pipeline.hpp"
#include "detectgnn/realtime_engine.hpp"

namespace detectgnn::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  // synth
  std::size_t events = 20000;
  std::uint64_t seed = 42;
  double fraud_rate = 0.01;
  std::size_t rings = 5;
  // model / pipeline
  Timestamp window = 86400;
  std::size_t k = 2;
  std::size_t layers = 2;
  std::size_t hidden_dim = 16;
  std::size_t epochs = 20;
  double lr = 0.05;
  double threshold = 0.5;
  double test_fraction = 0.3;
  // streaming
  std::size_t batch = 1;
  std::string cache = "off";
  double max_age = 3600.0;
  // paths
  std::string in;
  std::string out;
  std::string model;
  std::string schema;
};

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(flag) + ": no such file '" + path + "'");
}

void require_out(const std::string& path) {
  if (path.empty()) throw ConfigError("--out is required");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  f.close();
  if (!f) throw IoError("cannot write '" + path.string() + "'");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError("'" + path + "' is not valid JSON: " + ex.what());
  }
}

std::vector<TransactionEvent> read_input(const Options& o, const CLI::App& cmd) {
  auto events = read_events_file(o.in);
  if (cmd.count("--events") > 0 && o.events < events.size()) events.resize(o.events);
  return events;
}

pipeline::PipelineConfig pipeline_config(const Options& o) {
  pipeline::PipelineConfig pc;
  pc.window_length = o.window;
  pc.test_fraction = o.test_fraction;
  pc.threshold = o.threshold;
  pc.train.seed = o.seed;
  pc.train.k_hops = o.k;
  pc.train.layers = o.layers;
  pc.train.hidden_dim = o.hidden_dim;
  pc.train.epochs = o.epochs;
  pc.train.learning_rate = o.lr;
  pc.baseline.seed = o.seed;
  return pc;
}

struct LoadedModel {
  features::FeatureSpecs specs;
  gnn::ModelParams params;
  gnn::TrainConfig config;
};

LoadedModel load_model(const Options& o) {
  LoadedModel m;
  m.specs = features::from_manifest(read_json(o.schema));
  auto [params, config] = gnn::from_checkpoint(read_json(o.model));
  if (!(params.schema == m.specs.schema())) throw SchemaError("--model does not match --schema");
  m.params = std::move(params);
  m.config = config;
  return m;
}

engine::EngineConfig engine_config(const Options& o, const CLI::App& cmd, const LoadedModel& m, bool stale) {
  engine::EngineConfig ec;
  ec.k_hops = cmd.count("--k") > 0 ? o.k : m.config.k_hops;
  ec.alert_threshold = o.threshold;
  ec.cache = stale ? engine::CachePolicy::stale_ok(o.max_age) : engine::CachePolicy::off();
  return ec;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o, std::ostream& out) {
  require_out(o.out);
  SyntheticConfig sc;
  sc.n_events = o.events;
  sc.seed = o.seed;
  sc.fraud_rate = o.fraud_rate;
  sc.ring_count = o.rings;
  validate(sc);
  const SyntheticDataset ds = generate_synthetic(sc);
  fs::create_directories(o.out);
  std::ostringstream csv;
  write_rich_csv(csv, ds.events);
  write_text(fs::path(o.out) / "events.csv", csv.str());
  std::ostringstream rings;
  write_ground_truth(rings, ds.rings);
  write_text(fs::path(o.out) / "rings.json", rings.str());
  std::size_t fraud = 0;
  for (const auto& e : ds.events) fraud += e.label.value_or(0);
  out << "wrote " << ds.events.size() << " events (" << fraud << " fraud) and " << ds.rings.size()
      << " rings to " << o.out << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, const CLI::App& cmd, std::ostream& out) {
  require_file(o.in, "--in");
  require_out(o.out);
  const pipeline::PipelineConfig pc = pipeline_config(o);
  pc.validate();
  const auto events = read_input(o, cmd);
  const auto model = pipeline::train_model(events, pc, [&](std::size_t epoch, double loss) {
    out << "epoch " << epoch + 1 << "/" << pc.train.epochs << " loss " << loss << "\n";
  });
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "model.json", gnn::to_checkpoint(model.report.params, pc.train).dump(1) + "\n");
  write_text(fs::path(o.out) / "schema.json", features::to_manifest(model.specs).dump(1) + "\n");
  write_text(fs::path(o.out) / "train_report.json",
             pipeline::train_report_json(model, pc, pipeline::dataset_hash(events)).dump(1) + "\n");
  out << "trained on " << model.train_samples << " samples (" << model.train_positives << " fraud) in "
      << model.report.seconds << " s\n";
  return kExitOk;
}

int cmd_eval(const Options& o, const CLI::App& cmd, std::ostream& out) {
  require_file(o.in, "--in");
  require_file(o.model, "--model");
  require_file(o.schema, "--schema");
  require_out(o.out);
  const LoadedModel m = load_model(o);
  pipeline::PipelineConfig pc = pipeline_config(o);
  pc.window_length = m.specs.window_length;
  pc.train = m.config;
  if (cmd.count("--k") > 0) pc.train.k_hops = o.k;
  pc.validate();
  const auto events = read_input(o, cmd);
  const auto evaluation = pipeline::evaluate_model(events, m.specs, m.params, pc);
  write_text(o.out, pipeline::evaluation_report_json(evaluation, pc, pipeline::dataset_hash(events)).dump(1) + "\n");
  out << evaluation.comparison.table();
  return kExitOk;
}

int cmd_stream(const Options& o, const CLI::App& cmd, std::ostream& out) {
  require_file(o.in, "--in");
  require_file(o.model, "--model");
  require_file(o.schema, "--schema");
  require_out(o.out);
  LoadedModel m = load_model(o);
  const auto ec = engine_config(o, cmd, m, o.cache == "stale");
  ec.validate();
  const auto events = read_input(o, cmd);
  engine::Engine eng(m.specs, std::move(m.params), ec);
  std::ofstream sink(o.out, std::ios::binary);
  if (!sink) throw IoError("cannot open '" + o.out + "' for writing");
  engine::StreamOptions so;
  so.batch_size = o.batch;
  const engine::RunStats stats = engine::run_stream(eng, events, so, &sink);
  sink.close();
  if (!sink) throw IoError("failed closing '" + o.out + "'");
  const std::string text = stats.to_json().dump(1) + "\n";
  write_text(o.out + ".stats.json", text);
  out << text;
  return kExitOk;
}

int cmd_bench(const Options& o, const CLI::App& cmd, std::ostream& out) {
  require_file(o.in, "--in");
  require_file(o.model, "--model");
  require_file(o.schema, "--schema");
  require_out(o.out);
  const LoadedModel m = load_model(o);
  const auto events = read_input(o, cmd);

  struct Row {
    std::size_t batch;
    bool stale;
    engine::RunStats stats;
    double max_diff;
  };
  std::vector<Row> rows;
  std::vector<double> reference;
  for (const bool stale : {false, true}) {
    for (const std::size_t batch : {1, 8, 32, 128}) {
      const auto ec = engine_config(o, cmd, m, stale);
      ec.validate();
      engine::Engine eng(m.specs, m.params, ec);
      std::vector<engine::ScoredTransaction> scored;
      const auto stats = engine::run_stream(eng, events, {batch}, nullptr, &scored);
      double diff = 0.0;
      if (reference.empty()) {
        for (const auto& s : scored) reference.push_back(s.score);
      } else {
        for (std::size_t i = 0; i < scored.size(); ++i) diff = std::max(diff, std::abs(scored[i].score - reference[i]));
      }
      rows.push_back({batch, stale, stats, diff});
    }
  }
  const auto& base = rows.front().stats;
  auto reduction = [](double base_v, double v) { return base_v > 0.0 ? 1.0 - v / base_v : 0.0; };
  std::ostringstream csv;
  csv << "batch_size,cache,events,wall_seconds,throughput_eps,latency_mean_us,latency_p50_us,latency_p95_us,"
         "latency_p99_us,mean_latency_reduction,p99_latency_reduction,max_score_diff\n";
  for (const auto& r : rows) {
    csv << r.batch << ',' << (r.stale ? "stale" : "off") << ',' << r.stats.events << ',' << r.stats.wall_seconds << ','
        << r.stats.throughput << ',' << r.stats.latency_mean_us << ',' << r.stats.latency_p50_us << ','
        << r.stats.latency_p95_us << ',' << r.stats.latency_p99_us << ','
        << reduction(base.latency_mean_us, r.stats.latency_mean_us) << ','
        << reduction(base.latency_p99_us, r.stats.latency_p99_us) << ',' << r.max_diff << '\n';
  }
  write_text(o.out, csv.str());
  out << csv.str();
  return kExitOk;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal graph fraud detection: data generation, training, evaluation and streaming"};
  app.name("detectgnn");
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic event stream with planted fraud rings");
  auto* train = app.add_subcommand("train", "fit features and train the graph model");
  auto* evalc = app.add_subcommand("eval", "compare the graph model with a logistic baseline on the held-out split");
  auto* stream = app.add_subcommand("stream", "score an event stream in arrival order");
  auto* bench = app.add_subcommand("bench", "measure throughput and latency over batch sizes and cache modes");

  const auto positive_size = CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max());
  for (auto* c : {synth, train, evalc, stream, bench}) {
    c->add_option("--events", o.events, "number of events (synth) or leading events to read")->check(positive_size);
    c->add_option("--seed", o.seed, "random seed");
    c->add_option("--out", o.out, "output path");
  }
  synth->add_option("--fraud-rate", o.fraud_rate, "fraud fraction in [0, 1]")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--rings", o.rings, "number of fraud rings");
  for (auto* c : {train, evalc, stream, bench}) {
    c->add_option("--in", o.in, "events file (rich CSV or JSON lines)");
    c->add_option("--k", o.k, "subgraph hop count");
    c->add_option("--threshold", o.threshold, "alert threshold")->check(CLI::Range(0.0, 1.0));
  }
  for (auto* c : {train, evalc}) {
    c->add_option("--test-fraction", o.test_fraction, "held-out fraction")->check(CLI::Range(0.0, 1.0));
  }
  train->add_option("--window", o.window, "sliding window length in seconds")
      ->check(CLI::Range(Timestamp{1}, std::numeric_limits<Timestamp>::max()));
  train->add_option("--layers", o.layers, "message passing layers")->check(positive_size);
  train->add_option("--hidden-dim", o.hidden_dim, "hidden width")->check(positive_size);
  train->add_option("--epochs", o.epochs, "training epochs")->check(positive_size);
  train->add_option("--lr", o.lr, "learning rate")->check(CLI::PositiveNumber);
  for (auto* c : {evalc, stream, bench}) {
    c->add_option("--model", o.model, "model checkpoint (model.json)");
    c->add_option("--schema", o.schema, "feature manifest (schema.json)");
  }
  for (auto* c : {stream, bench}) {
    c->add_option("--max-age", o.max_age, "cache staleness budget in seconds")->check(CLI::NonNegativeNumber);
  }
  stream->add_option("--batch", o.batch, "micro-batch size")->check(positive_size);
  stream->add_option("--cache", o.cache, "historical cache policy")->check(CLI::IsMember({"off", "stale"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (synth->parsed()) return cmd_synth(o, out);
  if (train->parsed()) return cmd_train(o, *train, out);
  if (evalc->parsed()) return cmd_eval(o, *evalc, out);
  if (stream->parsed()) return cmd_stream(o, *stream, out);
  return cmd_bench(o, *bench, out);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(argc, argv, out, err);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& ex) {
    err << "input error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const DuplicateIdError& ex) {
    err << "input error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& ex) {
    err << "schema error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& ex) {
    err << "schema error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "unexpected error: " << ex.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace detectgnn::cli
