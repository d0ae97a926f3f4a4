#include "detectgnn/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "detectgnn/error.hpp"

namespace detectgnn::pipeline {

bool in_test_split(std::string_view txn_id, double test_fraction) {
  const auto cut = static_cast<std::uint64_t>(std::llround(test_fraction * 10000.0));
  return fnv1a64(txn_id) % 10000 < cut;
}

std::uint64_t dataset_hash(std::span<const TransactionEvent> events) {
  std::ostringstream csv;
  write_rich_csv(csv, events);
  return fnv1a64(csv.str());
}

void PipelineConfig::validate() const {
  if (window_length <= 0) throw ConfigError("--window must be positive");
  if (max_leaves == 0) throw ConfigError("max_leaves must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("--test-fraction must be in (0, 1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("--threshold must be in (0, 1)");
  train.validate();
  baseline.validate();
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"window_length", window_length}, {"max_leaves", max_leaves}, {"test_fraction", test_fraction},
          {"threshold", threshold},         {"train", train.to_json()}, {"baseline", baseline.to_json()}};
}

// ---------------------------------------------------------------------------

StreamGraph::StreamGraph(std::span<const TransactionEvent> events, const features::FeatureSpecs& specs)
    : graph_(specs.window_length, specs.schema()) {
  refs_.reserve(events.size());
  for (const auto& e : events) {
    refs_.push_back(features::ingest_event(graph_, specs, e));
    last_index_.push_back(graph_.index_bound() - 1);
    timestamps_.push_back(e.timestamp);
  }
}

graph::SubgraphView StreamGraph::view(std::size_t i) const {
  const Timestamp t = timestamps_.at(i);
  return {last_index_[i], t - graph_.window_length(), t};
}

graph::Subgraph StreamGraph::subgraph(std::size_t i, std::size_t k) const {
  return graph::k_hop_subgraph(graph_, refs_.at(i), k, view(i));
}

const graph::FeatureVector& StreamGraph::node_features(std::size_t i) const {
  return *graph_.node(refs_.at(i)).features;
}

StreamSamples::StreamSamples(const StreamGraph& stream, std::vector<std::size_t> events, std::vector<int> labels,
                             std::size_t k)
    : stream_(stream), events_(std::move(events)), labels_(std::move(labels)), k_(k) {
  if (events_.size() != labels_.size()) throw ShapeError("one label per training event");
}

const gnn::Sample& StreamSamples::fetch(std::size_t i, gnn::Sample& scratch) const {
  const std::size_t e = events_.at(i);
  scratch.subgraph = stream_.subgraph(e, k_);
  scratch.target = stream_.ref(e);
  scratch.label = labels_[i];
  return scratch;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<bool> train_mask(std::span<const TransactionEvent> events, double test_fraction) {
  std::vector<bool> mask(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) mask[i] = !in_test_split(events[i].txn_id, test_fraction);
  return mask;
}

}  // namespace

TrainedModel train_model(std::span<const TransactionEvent> events, const PipelineConfig& config,
                         const gnn::EpochCallback& on_epoch) {
  config.validate();
  if (events.empty()) throw EmptyInputError("no events to train on");
  const std::vector<bool> mask = train_mask(events, config.test_fraction);

  TrainedModel model;
  features::FitOptions fit;
  fit.window_length = config.window_length;
  fit.max_leaves = config.max_leaves;
  model.specs = features::fit_feature_specs(events, mask, fit);

  const StreamGraph stream(events, model.specs);
  std::vector<std::size_t> picked;
  std::vector<int> labels;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!mask[i] || !events[i].label) continue;
    picked.push_back(i);
    labels.push_back(*events[i].label);
  }
  if (picked.empty()) throw EmptyInputError("no labeled events in the training split");
  model.train_samples = picked.size();
  for (const int y : labels) model.train_positives += y != 0 ? 1 : 0;

  const StreamSamples samples(stream, std::move(picked), std::move(labels), config.train.k_hops);
  model.report = gnn::train(samples, model.specs.schema(), config.train, nullptr, on_epoch);
  return model;
}

nlohmann::json train_report_json(const TrainedModel& model, const PipelineConfig& config, std::uint64_t data_hash) {
  return {{"dataset_fnv1a64", data_hash},
          {"config", config.to_json()},
          {"train_samples", model.train_samples},
          {"train_positives", model.train_positives},
          {"class_weights", {{"negative", model.report.weights.negative}, {"positive", model.report.weights.positive}}},
          {"epoch_loss", model.report.epoch_loss},
          {"parameter_count", model.report.params.parameter_count()},
          {"timing", {{"train_seconds", model.report.seconds}}}};
}

Evaluation evaluate_model(std::span<const TransactionEvent> events, const features::FeatureSpecs& specs,
                          const gnn::ModelParams& params, const PipelineConfig& config) {
  config.validate();
  if (!(params.schema == specs.schema())) throw SchemaError("model does not match the feature manifest");
  const StreamGraph stream(events, specs);
  const std::size_t k = config.train.k_hops;

  std::vector<graph::FeatureVector> train_rows;
  std::vector<int> train_labels;
  std::vector<std::size_t> test_events;
  Evaluation out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!events[i].label) continue;
    if (in_test_split(events[i].txn_id, config.test_fraction)) {
      test_events.push_back(i);
      out.labels.push_back(*events[i].label);
    } else {
      train_rows.push_back(stream.node_features(i));
      train_labels.push_back(*events[i].label);
    }
  }
  if (train_rows.empty() || test_events.empty()) throw EmptyInputError("a split has no labeled events");
  out.train_count = train_rows.size();
  out.test_count = test_events.size();

  const eval::BaselineParams baseline = eval::train_baseline(train_rows, train_labels, config.baseline);
  for (const std::size_t i : test_events) {
    const graph::Subgraph sub = stream.subgraph(i, k);
    out.gnn_scores.push_back(gnn::forward(sub, stream.ref(i), params).score);
    out.baseline_scores.push_back(eval::baseline_score(baseline, stream.node_features(i)));
  }
  out.comparison = eval::compare(out.gnn_scores, out.baseline_scores, out.labels, config.threshold);
  return out;
}

nlohmann::json evaluation_report_json(const Evaluation& evaluation, const PipelineConfig& config,
                                      std::uint64_t data_hash) {
  nlohmann::json doc = evaluation.comparison.to_json();
  doc["table"] = evaluation.comparison.table();
  doc["metadata"] = {{"seed", config.train.seed},
                     {"dataset_fnv1a64", data_hash},
                     {"config", config.to_json()},
                     {"train_count", evaluation.train_count},
                     {"test_count", evaluation.test_count}};
  return doc;
}

}  // namespace detectgnn::pipeline
