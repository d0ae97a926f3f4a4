#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "detectgnn/data_io.hpp"
#include "detectgnn/eval_metrics.hpp"
#include "detectgnn/features.hpp"
#include "detectgnn/gnn_model.hpp"
#include "detectgnn/graph_store.hpp"
#include "json.hpp"

// Train and evaluate orchestration shared by the command line and the
// acceptance suite.
namespace detectgnn::pipeline {

/// Stable held-out assignment: fnv1a64(txn_id) % 10000 < fraction * 10000.
bool in_test_split(std::string_view txn_id, double test_fraction);

/// FNV-1a over the rich CSV serialization.
std::uint64_t dataset_hash(std::span<const TransactionEvent> events);

struct PipelineConfig {
  Timestamp window_length = 86400;
  std::size_t max_leaves = 8;
  double test_fraction = 0.3;
  double threshold = 0.5;
  gnn::TrainConfig train;
  eval::BaselineConfig baseline;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Every event of a stream inserted into one graph without eviction. Each
/// event keeps the view it had on arrival (earlier nodes, transactions inside
/// the window), so its subgraph matches what a streaming engine would see.
class StreamGraph {
 public:
  StreamGraph(std::span<const TransactionEvent> events, const features::FeatureSpecs& specs);

  std::size_t size() const noexcept { return refs_.size(); }
  graph::NodeRef ref(std::size_t i) const { return refs_.at(i); }
  graph::SubgraphView view(std::size_t i) const;
  graph::Subgraph subgraph(std::size_t i, std::size_t k) const;
  const graph::FeatureVector& node_features(std::size_t i) const;
  const graph::TemporalGraph& graph() const noexcept { return graph_; }

 private:
  graph::TemporalGraph graph_;
  std::vector<graph::NodeRef> refs_;
  std::vector<std::uint32_t> last_index_;
  std::vector<Timestamp> timestamps_;
};

/// Training samples drawn from a StreamGraph, extracted on demand.
class StreamSamples : public gnn::SampleProvider {
 public:
  StreamSamples(const StreamGraph& stream, std::vector<std::size_t> events, std::vector<int> labels, std::size_t k);
  std::size_t size() const override { return events_.size(); }
  int label(std::size_t i) const override { return labels_.at(i); }
  const gnn::Sample& fetch(std::size_t i, gnn::Sample& scratch) const override;

 private:
  const StreamGraph& stream_;
  std::vector<std::size_t> events_;
  std::vector<int> labels_;
  std::size_t k_;
};

struct TrainedModel {
  features::FeatureSpecs specs;
  gnn::TrainReport report;
  std::size_t train_samples = 0;
  std::size_t train_positives = 0;
};

/// Fits features on the training split, builds the stream graph and trains
/// the graph model on (subgraph, label) pairs of labeled training events.
TrainedModel train_model(std::span<const TransactionEvent> events, const PipelineConfig& config,
                         const gnn::EpochCallback& on_epoch = {});

/// Deterministic part of a training run; wall-clock time sits under "timing".
nlohmann::json train_report_json(const TrainedModel& model, const PipelineConfig& config, std::uint64_t data_hash);

struct Evaluation {
  eval::Comparison comparison;
  std::vector<double> gnn_scores;
  std::vector<double> baseline_scores;
  std::vector<int> labels;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

/// Scores the labeled test split with the graph model (each event against
/// its arrival-time view) and with a logistic baseline trained on the
/// training split's transaction features.
Evaluation evaluate_model(std::span<const TransactionEvent> events, const features::FeatureSpecs& specs,
                          const gnn::ModelParams& params, const PipelineConfig& config);

nlohmann::json evaluation_report_json(const Evaluation& evaluation, const PipelineConfig& config,
                                      std::uint64_t data_hash);

}  // namespace detectgnn::pipeline
