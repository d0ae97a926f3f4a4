#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "detectgnn/error.hpp"
#include "detectgnn/pipeline.hpp"
#include "detectgnn/realtime_engine.hpp"
#include "test_support.hpp"

using namespace detectgnn;
using namespace detectgnn::engine;

namespace {

struct Setup {
  std::vector<TransactionEvent> events;
  features::FeatureSpecs specs;
  gnn::ModelParams params;
};

Setup make_setup(std::uint64_t seed, std::size_t n, Timestamp window = 7200) {
  std::mt19937_64 rng(seed);
  Setup s;
  s.events = testsupport::random_events(rng, n, 30, 12, 25, 120);
  s.specs = testsupport::fitted_specs(s.events, window);
  s.params = testsupport::random_params(s.specs.schema(), testsupport::small_config(6, 2, seed), seed, 0.3);
  return s;
}

EngineConfig config_with(CachePolicy cache = CachePolicy::off()) {
  EngineConfig c;
  c.cache = cache;
  return c;
}

}  // namespace

TEST(Engine, BatchSizesAgreeWithSequential) {
  const auto s = make_setup(1, 600);
  std::vector<double> reference;
  for (const std::size_t batch : {1, 8, 32, 128}) {
    Engine e(s.specs, s.params, config_with());
    std::vector<ScoredTransaction> scored;
    run_stream(e, s.events, {batch}, nullptr, &scored);
    ASSERT_EQ(scored.size(), s.events.size());
    if (reference.empty()) {
      for (const auto& x : scored) reference.push_back(x.score);
      continue;
    }
    for (std::size_t i = 0; i < scored.size(); ++i) {
      ASSERT_NEAR(scored[i].score, reference[i], 1e-9) << "batch " << batch << " event " << i;
      EXPECT_EQ(scored[i].txn_id, s.events[i].txn_id);
    }
  }
}

TEST(Engine, MatchesArrivalViewsOfUnevictedGraph) {
  // Training and evaluation score events against views of one unevicted
  // graph; the streaming engine must agree with them.
  SyntheticConfig sc;
  sc.n_events = 1500;
  sc.duration = 3 * 86400;
  const auto ds = generate_synthetic(sc);
  const auto specs = testsupport::fitted_specs(ds.events, 7200);
  const auto params = testsupport::random_params(specs.schema(), testsupport::small_config(6), 12, 0.3);
  const pipeline::StreamGraph stream(ds.events, specs);
  Engine e(specs, params, config_with());
  for (std::size_t i = 0; i < ds.events.size(); ++i) {
    const double live = e.process_event(ds.events[i]).score;
    const double offline = gnn::forward(stream.subgraph(i, 2), stream.ref(i), params).score;
    ASSERT_NEAR(live, offline, 1e-9) << i;
  }
}

TEST(Engine, WindowSoundness) {
  std::mt19937_64 rng(3);
  auto events = testsupport::random_events(rng, 1500, 40, 15, 30, 115);  // about 24 h
  const auto specs = testsupport::fitted_specs(events, 3600);
  const auto params = testsupport::random_params(specs.schema(), testsupport::small_config(4), 3, 0.3);
  for (const std::size_t batch : {1, 16}) {
    Engine e(specs, params, config_with());
    std::size_t violations = 0, checked = 0;
    e.set_observer([&](const graph::Subgraph& sub, Timestamp now) {
      ++checked;
      for (const auto& n : sub.nodes) {
        if (n.timestamp && (*n.timestamp < now - 3600 || *n.timestamp > now)) ++violations;
      }
    });
    run_stream(e, events, {batch}, nullptr);
    EXPECT_EQ(checked, events.size());
    EXPECT_EQ(violations, 0u);
    EXPECT_GT(e.evictions(), 0u);
    EXPECT_TRUE(graph::validate(e.graph()).empty());
  }
}

TEST(Engine, FirstEventWithZeroParamsScoresHalf) {
  const auto s = make_setup(4, 10);
  const auto zero = gnn::zero_params(s.specs.schema(), testsupport::small_config(6));
  Engine e(s.specs, zero, config_with());
  const auto r = e.process_event(s.events[0]);
  EXPECT_EQ(r.score, 0.5);
  EXPECT_TRUE(r.alert);  // score >= threshold
  EXPECT_EQ(r.txn_id, s.events[0].txn_id);
  EXPECT_GE(r.latency_us, 0.0);
}

TEST(Engine, OrderingErrorLeavesGraphUntouched) {
  const auto s = make_setup(5, 10);
  Engine e(s.specs, s.params, config_with());
  e.process_event(s.events[5]);
  const auto before = graph::snapshot(e.graph());
  EXPECT_THROW(e.process_event(s.events[0]), OrderingError);
  std::vector<TransactionEvent> backwards{s.events[6], s.events[1]};
  EXPECT_THROW(e.process_batch(backwards), OrderingError);
  EXPECT_EQ(graph::snapshot(e.graph()), before);
}

TEST(Engine, SchemaMismatchRejected) {
  const auto s = make_setup(6, 50);
  const auto other = gnn::zero_params(testsupport::small_schema(), testsupport::small_config());
  EXPECT_THROW(Engine(s.specs, other, config_with()), SchemaError);
  EngineConfig bad;
  bad.alert_threshold = 1.0;
  EXPECT_THROW(Engine(s.specs, s.params, bad), ConfigError);
}

TEST(Engine, RefreshedStaleCacheIsExact) {
  const auto s = make_setup(7, 300);
  Engine off(s.specs, s.params, config_with());
  Engine stale(s.specs, s.params, config_with(CachePolicy::stale_ok(INFINITY)));
  run_stream(off, s.events, {}, nullptr);
  run_stream(stale, s.events, {}, nullptr);
  EXPECT_GT(stale.cache_size(), 0u);
  EXPECT_EQ(off.cache_size(), 0u);
  stale.refresh_historical_cache(stale.graph().latest_timestamp());
  std::size_t n = 0;
  for (const auto ref : off.graph().transactions()) {
    EXPECT_NEAR(stale.score_existing(ref), off.score_existing(ref), 1e-9);
    ++n;
  }
  EXPECT_GT(n, 10u);
}

TEST(Engine, ZeroMaxAgeCacheMatchesOff) {
  // A cached entry computed at an earlier second is never reused at max_age 0.
  auto s = make_setup(8, 300);
  for (std::size_t i = 0; i < s.events.size(); ++i) s.events[i].timestamp += static_cast<Timestamp>(i);
  Engine off(s.specs, s.params, config_with());
  Engine stale(s.specs, s.params, config_with(CachePolicy::stale_ok(0.0)));
  std::vector<ScoredTransaction> a, b;
  run_stream(off, s.events, {}, nullptr, &a);
  run_stream(stale, s.events, {}, nullptr, &b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].score, b[i].score, 1e-12);
}

TEST(Engine, CacheEntriesDieWithTheirNodes) {
  const auto s = make_setup(9, 400, 600);
  Engine e(s.specs, s.params, config_with(CachePolicy::stale_ok(INFINITY)));
  run_stream(e, s.events, {}, nullptr);
  for (const auto& [idx, entry] : e.cache()) {
    EXPECT_TRUE(e.graph().is_live(graph::NodeRef{idx}));
    EXPECT_EQ(entry.layers.size(), 1u);
  }
}

TEST(RunStream, WritesOneJsonLinePerEvent) {
  const auto s = make_setup(10, 120);
  Engine e(s.specs, s.params, config_with());
  std::ostringstream sink;
  const auto stats = run_stream(e, s.events, {8}, &sink);
  EXPECT_EQ(stats.events, 120u);
  EXPECT_GT(stats.throughput, 0.0);
  EXPECT_LE(stats.latency_p50_us, stats.latency_p99_us);
  std::istringstream lines(sink.str());
  std::string line;
  std::size_t count = 0, alerts = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("txn_id"), s.events[count].txn_id);
    alerts += j.at("alert").get<bool>();
    ++count;
  }
  EXPECT_EQ(count, 120u);
  EXPECT_EQ(alerts, stats.alerts);
}

TEST(RunStream, SinkFailureCarriesPartialStats) {
  const auto s = make_setup(11, 50);
  Engine e(s.specs, s.params, config_with());
  std::ostringstream sink;
  sink.setstate(std::ios::badbit);
  try {
    run_stream(e, s.events, {}, &sink);
    FAIL();
  } catch (const SinkError& err) {
    EXPECT_LE(err.partial().events, 1u);
  }
}
