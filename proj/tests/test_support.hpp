#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "detectgnn/data_io.hpp"
#include "detectgnn/features.hpp"
#include "detectgnn/gnn_model.hpp"
#include "detectgnn/graph_store.hpp"

namespace testsupport {

using namespace detectgnn;

inline TransactionEvent make_event(std::string id, Timestamp ts, double amount, std::string card,
                                   std::string merchant, std::optional<std::string> device = std::nullopt,
                                   std::optional<int> label = 0) {
  TransactionEvent e;
  e.txn_id = std::move(id);
  e.timestamp = ts;
  e.amount = amount;
  e.card_id = std::move(card);
  e.merchant_id = std::move(merchant);
  e.device_id = std::move(device);
  e.category = "grocery";
  e.region = "north";
  e.label = label;
  return e;
}

// Random ordered stream over small entity pools, so entities get shared a lot.
inline std::vector<TransactionEvent> random_events(std::mt19937_64& rng, std::size_t n, std::size_t cards,
                                                   std::size_t merchants, std::size_t devices, Timestamp max_gap) {
  std::uniform_int_distribution<std::size_t> card(0, cards - 1), merchant(0, merchants - 1), device(0, devices);
  std::uniform_int_distribution<Timestamp> gap(0, max_gap);
  std::uniform_real_distribution<double> amount(1.0, 500.0);
  std::bernoulli_distribution fraud(0.2);
  std::vector<TransactionEvent> out;
  Timestamp t = 1000;
  for (std::size_t i = 0; i < n; ++i) {
    t += gap(rng);
    const std::size_t d = device(rng);
    out.push_back(make_event("t" + std::to_string(i), t, amount(rng), "c" + std::to_string(card(rng)),
                             "m" + std::to_string(merchant(rng)),
                             d == devices ? std::nullopt : std::optional<std::string>("d" + std::to_string(d)),
                             fraud(rng) ? 1 : 0));
    out.back().category = (i % 3 == 0) ? "travel" : "grocery";
    out.back().region = (i % 4 == 0) ? "south" : "north";
  }
  return out;
}

inline graph::FeatureSchema small_schema(std::size_t txn = 3, std::size_t entity = 2, std::size_t edge = 2) {
  graph::FeatureSchema s;
  s.node_dims = {txn, entity, entity + 1, entity};
  s.edge_dim = edge;
  return s;
}

// Deterministic pseudo-random features through the insertion hooks.
inline graph::InsertHooks random_hooks(const graph::FeatureSchema& schema, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  graph::InsertHooks hooks;
  hooks.entity_features = [schema, rng](graph::NodeKind kind, const TransactionEvent&) {
    std::normal_distribution<double> nd(0.0, 1.0);
    graph::FeatureVector v(schema.node_dim(kind));
    for (auto& x : v) x = nd(*rng);
    return v;
  };
  hooks.edge_features = [schema, rng](const graph::EdgeContext&) {
    std::normal_distribution<double> nd(0.0, 1.0);
    graph::FeatureVector v(schema.edge_dim);
    for (auto& x : v) x = nd(*rng);
    return v;
  };
  return hooks;
}

inline graph::FeatureVector random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  graph::FeatureVector v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// Graph with random features on every node and edge.
struct RandomGraph {
  graph::TemporalGraph graph;
  std::vector<graph::NodeRef> txns;
};

inline RandomGraph build_random_graph(std::uint64_t seed, std::size_t n_events, const graph::FeatureSchema& schema,
                                      Timestamp window = 1000000) {
  std::mt19937_64 rng(seed);
  RandomGraph g{graph::TemporalGraph(window, schema), {}};
  const auto hooks = random_hooks(schema, seed + 1);
  const std::size_t pool = std::max<std::size_t>(2, n_events / 3);
  for (const auto& e : random_events(rng, n_events, pool, pool, pool, 50)) {
    g.txns.push_back(g.graph.insert_transaction(e, random_vector(rng, schema.node_dim(graph::NodeKind::Transaction)),
                                                hooks));
  }
  return g;
}

// Plain BFS over the whole live graph, independent of k_hop_subgraph.
inline std::set<std::uint32_t> bfs_nodes(const graph::TemporalGraph& g, graph::NodeRef seed, std::size_t k) {
  std::set<std::uint32_t> seen{seed.index};
  std::vector<graph::NodeRef> frontier{seed};
  for (std::size_t d = 0; d < k; ++d) {
    std::vector<graph::NodeRef> next;
    for (const auto u : frontier) {
      for (const auto r : graph::kAllRelations) {
        for (const auto& nb : g.incident(u, r)) {
          if (seen.insert(nb.node.index).second) next.push_back(nb.node);
        }
      }
    }
    frontier = std::move(next);
  }
  return seen;
}

inline features::FeatureSpecs fitted_specs(std::span<const TransactionEvent> events, Timestamp window = 86400) {
  features::FitOptions fit;
  fit.window_length = window;
  return features::fit_feature_specs(events, std::vector<bool>(events.size(), true), fit);
}

inline gnn::TrainConfig small_config(std::size_t hidden = 4, std::size_t layers = 2, std::uint64_t seed = 7) {
  gnn::TrainConfig c;
  c.hidden_dim = hidden;
  c.layers = layers;
  c.seed = seed;
  return c;
}

// Parameters with larger magnitude than init_params, so gradients are not tiny.
inline gnn::ModelParams random_params(const graph::FeatureSchema& schema, const gnn::TrainConfig& config,
                                      std::uint64_t seed, double scale = 0.5) {
  gnn::ModelParams p = gnn::zero_params(schema, config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  p.for_each_tensor([&](const std::string&, std::span<double> data, std::size_t, std::size_t, bool) {
    for (auto& x : data) x = nd(rng);
  });
  return p;
}

}  // namespace testsupport
