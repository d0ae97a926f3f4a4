#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "detectgnn/error.hpp"
#include "detectgnn/features.hpp"
#include "detectgnn/gnn_model.hpp"
#include "detectgnn/graph_store.hpp"
#include "json.hpp"

namespace detectgnn::engine {

struct CachePolicy {
  enum class Mode { Off, StaleOk };
  Mode mode = Mode::Off;
  double max_age = std::numeric_limits<double>::infinity();  // seconds

  static CachePolicy off() { return {}; }
  static CachePolicy stale_ok(double max_age) { return {Mode::StaleOk, max_age}; }
  bool enabled() const noexcept { return mode == Mode::StaleOk; }
};

struct EngineConfig {
  std::size_t k_hops = 2;
  double alert_threshold = 0.5;
  CachePolicy cache;

  /// Throws ConfigError.
  void validate() const;
};

struct ScoredTransaction {
  std::string txn_id;
  double score = 0.0;
  bool alert = false;
  double latency_us = 0.0;
};

struct RunStats {
  std::size_t events = 0;
  double wall_seconds = 0.0;
  double throughput = 0.0;  // events per second
  double latency_p50_us = 0.0;
  double latency_p95_us = 0.0;
  double latency_p99_us = 0.0;
  double latency_mean_us = 0.0;
  std::size_t alerts = 0;
  std::size_t evictions = 0;

  nlohmann::json to_json() const;
};

/// Historical representation of an entity node, h^1 .. h^{L-1}.
struct CacheEntry {
  std::vector<gnn::Vector> layers;
  Timestamp computed_at = 0;
};

/// Streaming scorer over a sliding-window graph.
///
/// One mutator at a time: process_event, process_batch and
/// refresh_historical_cache must be serialized by the caller.
class Engine {
 public:
  /// Throws SchemaError when the model and the feature manifest disagree.
  Engine(features::FeatureSpecs specs, gnn::ModelParams params, EngineConfig config);

  /// evict -> features + insert -> k-hop extract -> forward -> alert.
  /// Throws OrderingError when the event is older than the graph clock.
  ScoredTransaction process_event(const TransactionEvent& event);

  /// Evicts once at the first timestamp, inserts every event, then scores
  /// each one against the graph as it stood when that event arrived. Latency
  /// is the batch wall time divided evenly.
  std::vector<ScoredTransaction> process_batch(std::span<const TransactionEvent> events);

  /// Score of an existing transaction against the current graph.
  double score_existing(graph::NodeRef txn);

  /// Recomputes every live entity's representation; drops dead entries.
  std::size_t refresh_historical_cache(Timestamp now);

  const graph::TemporalGraph& graph() const noexcept { return graph_; }
  const EngineConfig& config() const noexcept { return config_; }
  const gnn::ModelParams& params() const noexcept { return params_; }
  std::size_t cache_size() const noexcept { return cache_.size(); }
  const std::unordered_map<std::uint32_t, CacheEntry>& cache() const noexcept { return cache_; }
  std::size_t evictions() const noexcept { return evictions_; }

  /// Called with every scored subgraph and the scoring time; tests use it to
  /// check window soundness.
  using SubgraphObserver = std::function<void(const graph::Subgraph&, Timestamp)>;
  void set_observer(SubgraphObserver observer) { observer_ = std::move(observer); }

 private:
  void evict(Timestamp now);
  gnn::ForwardResult score(const graph::Subgraph& sub, graph::NodeRef target, Timestamp now,
                           gnn::ProjectionMemo* memo);

  features::FeatureSpecs specs_;
  gnn::ModelParams params_;
  EngineConfig config_;
  graph::TemporalGraph graph_;
  std::unordered_map<std::uint32_t, CacheEntry> cache_;
  std::size_t evictions_ = 0;
  SubgraphObserver observer_;
};

struct StreamOptions {
  std::size_t batch_size = 1;
};

/// Sink failure. Carries the statistics up to the failing write.
class SinkError : public IoError {
 public:
  SinkError(const std::string& what, RunStats partial) : IoError(what), partial_(std::move(partial)) {}
  const RunStats& partial() const noexcept { return partial_; }

 private:
  RunStats partial_;
};

nlohmann::json to_json(const ScoredTransaction& scored);

/// Runs every event through the engine, writing one JSON line per scored
/// transaction to `sink` (when given). Percentiles are nearest-rank.
RunStats run_stream(Engine& engine, std::span<const TransactionEvent> events, const StreamOptions& options,
                    std::ostream* sink, std::vector<ScoredTransaction>* scored = nullptr);

}  // namespace detectgnn::engine
