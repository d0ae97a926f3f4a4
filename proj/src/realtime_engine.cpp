#include "detectgnn/realtime_engine.hpp"

#include <chrono>
#include <cmath>

#include "detectgnn/error.hpp"
#include "detectgnn/eval_metrics.hpp"

namespace detectgnn::engine {
namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

}  // namespace

void EngineConfig::validate() const {
  if (!(alert_threshold > 0.0 && alert_threshold < 1.0)) throw ConfigError("alert threshold must be in (0, 1)");
  if (cache.enabled() && !(cache.max_age >= 0.0)) throw ConfigError("cache max_age must be >= 0");
}

nlohmann::json RunStats::to_json() const {
  return {{"events", events},
          {"wall_seconds", wall_seconds},
          {"throughput_eps", throughput},
          {"latency_p50_us", latency_p50_us},
          {"latency_p95_us", latency_p95_us},
          {"latency_p99_us", latency_p99_us},
          {"latency_mean_us", latency_mean_us},
          {"alerts", alerts},
          {"evictions", evictions}};
}

Engine::Engine(features::FeatureSpecs specs, gnn::ModelParams params, EngineConfig config)
    : specs_(std::move(specs)),
      params_(std::move(params)),
      config_(config),
      graph_(specs_.window_length, specs_.schema()) {
  config_.validate();
  params_.check_shapes();
  if (!(params_.schema == specs_.schema())) {
    throw SchemaError("model checkpoint dimensions do not match the feature manifest");
  }
}

void Engine::evict(Timestamp now) {
  std::vector<graph::NodeRef> removed;
  evictions_ += graph_.evict_expired(now, &removed);
  for (const auto ref : removed) cache_.erase(ref.index);
}

gnn::ForwardResult Engine::score(const graph::Subgraph& sub, graph::NodeRef target, Timestamp now,
                                 gnn::ProjectionMemo* memo) {
  if (observer_) observer_(sub, now);
  gnn::ForwardOptions options;
  options.memo = memo;
  if (config_.cache.enabled()) {
    options.collect_entity_reps = true;
    options.reuse = [&](graph::NodeRef parent, std::size_t layer) -> const gnn::Vector* {
      const auto it = cache_.find(parent.index);
      if (it == cache_.end() || layer == 0 || layer > it->second.layers.size()) return nullptr;
      if (static_cast<double>(now - it->second.computed_at) > config_.cache.max_age) return nullptr;
      return &it->second.layers[layer - 1];
    };
  }
  gnn::ForwardResult result = gnn::forward(sub, target, params_, options);
  if (config_.cache.enabled()) {
    const std::size_t depth = params_.layer_count() - 1;
    std::vector<std::uint32_t> touched;
    for (auto& rep : result.entity_reps) {
      if (!graph_.is_live(rep.parent)) continue;
      CacheEntry& entry = cache_[rep.parent.index];
      if (entry.layers.size() != depth || entry.computed_at != now) {
        // never mix layers computed at different times
        entry.layers.assign(depth, gnn::Vector());
        entry.computed_at = now;
      }
      entry.layers[rep.layer - 1] = std::move(rep.h);
      touched.push_back(rep.parent.index);
    }
    for (const auto idx : touched) {
      const auto it = cache_.find(idx);
      if (it == cache_.end()) continue;
      for (const auto& v : it->second.layers) {
        if (v.size() == 0) {
          cache_.erase(it);
          break;
        }
      }
    }
  }
  return result;
}

ScoredTransaction Engine::process_event(const TransactionEvent& event) {
  if (event.timestamp < graph_.latest_timestamp()) {
    throw OrderingError("event " + event.txn_id + " is older than the graph clock");
  }
  const auto start = Clock::now();
  evict(event.timestamp);
  const graph::NodeRef ref = features::ingest_event(graph_, specs_, event);
  const graph::Subgraph sub = graph::k_hop_subgraph(graph_, ref, config_.k_hops);
  const gnn::ForwardResult r = score(sub, ref, event.timestamp, nullptr);
  return {event.txn_id, r.score, r.score >= config_.alert_threshold, micros_since(start)};
}

std::vector<ScoredTransaction> Engine::process_batch(std::span<const TransactionEvent> events) {
  if (events.empty()) return {};
  Timestamp clock = graph_.latest_timestamp();
  for (const auto& e : events) {
    if (e.timestamp < clock) throw OrderingError("batch is not time-ordered at event " + e.txn_id);
    clock = e.timestamp;
  }
  const auto start = Clock::now();
  evict(events.front().timestamp);
  std::vector<graph::NodeRef> refs;
  std::vector<std::uint32_t> last_index;  // entities are created after their transaction
  refs.reserve(events.size());
  for (const auto& e : events) {
    refs.push_back(features::ingest_event(graph_, specs_, e));
    last_index.push_back(graph_.index_bound() - 1);
  }

  gnn::ProjectionMemo memo;
  std::vector<ScoredTransaction> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Timestamp t = events[i].timestamp;
    const graph::SubgraphView view{last_index[i], t - graph_.window_length(), t};
    const graph::Subgraph sub = graph::k_hop_subgraph(graph_, refs[i], config_.k_hops, view);
    const gnn::ForwardResult r = score(sub, refs[i], t, &memo);
    out.push_back({events[i].txn_id, r.score, r.score >= config_.alert_threshold, 0.0});
  }
  evict(events.back().timestamp);
  const double each = micros_since(start) / static_cast<double>(events.size());
  for (auto& s : out) s.latency_us = each;
  return out;
}

double Engine::score_existing(graph::NodeRef txn) {
  const auto& rec = graph_.node(txn);
  if (rec.kind != graph::NodeKind::Transaction) throw ReferenceError("score_existing needs a transaction node");
  const graph::Subgraph sub = graph::k_hop_subgraph(graph_, txn, config_.k_hops);
  return score(sub, txn, graph_.latest_timestamp(), nullptr).score;
}

std::size_t Engine::refresh_historical_cache(Timestamp now) {
  cache_.clear();
  const std::size_t depth = params_.layer_count() - 1;
  if (depth == 0) return 0;
  for (const auto ref : graph_.live_nodes()) {
    if (graph_.node(ref).kind == graph::NodeKind::Transaction) continue;
    const graph::Subgraph sub = graph::k_hop_subgraph(graph_, ref, depth);
    cache_[ref.index] = {gnn::node_representations(sub, ref, params_, depth), now};
  }
  return cache_.size();
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const ScoredTransaction& s) {
  return {{"txn_id", s.txn_id}, {"score", s.score}, {"alert", s.alert}, {"latency_us", s.latency_us}};
}

namespace {

RunStats finish(std::vector<double>& latencies, std::size_t alerts, std::size_t evictions, double seconds) {
  RunStats stats;
  stats.events = latencies.size();
  stats.wall_seconds = seconds;
  stats.alerts = alerts;
  stats.evictions = evictions;
  if (!latencies.empty()) {
    const auto p = eval::latency_percentiles(latencies);
    stats.latency_p50_us = p.p50;
    stats.latency_p95_us = p.p95;
    stats.latency_p99_us = p.p99;
    double sum = 0.0;
    for (const double v : latencies) sum += v;
    stats.latency_mean_us = sum / static_cast<double>(latencies.size());
    stats.throughput = seconds > 0.0 ? static_cast<double>(latencies.size()) / seconds : 0.0;
  }
  return stats;
}

}  // namespace

RunStats run_stream(Engine& engine, std::span<const TransactionEvent> events, const StreamOptions& options,
                    std::ostream* sink, std::vector<ScoredTransaction>* scored) {
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t evictions_before = engine.evictions();
  std::vector<double> latencies;
  latencies.reserve(events.size());
  std::size_t alerts = 0;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  for (std::size_t begin = 0; begin < events.size(); begin += options.batch_size) {
    const std::size_t end = std::min(events.size(), begin + options.batch_size);
    std::vector<ScoredTransaction> chunk;
    if (options.batch_size == 1) {
      chunk.push_back(engine.process_event(events[begin]));
    } else {
      chunk = engine.process_batch(events.subspan(begin, end - begin));
    }
    for (auto& s : chunk) {
      latencies.push_back(s.latency_us);
      alerts += s.alert ? 1 : 0;
      if (sink) {
        *sink << to_json(s).dump() << '\n';
        if (!sink->good()) {
          throw SinkError("failed writing score for " + s.txn_id,
                          finish(latencies, alerts, engine.evictions() - evictions_before, elapsed()));
        }
      }
      if (scored) scored->push_back(std::move(s));
    }
  }
  if (sink) sink->flush();
  return finish(latencies, alerts, engine.evictions() - evictions_before, elapsed());
}

}  // namespace detectgnn::engine
