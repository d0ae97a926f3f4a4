#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "detectgnn/features.hpp"
#include "detectgnn/gnn_model.hpp"
#include "json.hpp"

namespace detectgnn::eval {

struct ConfusionCounts {
  std::uint64_t true_positive = 0;
  std::uint64_t false_positive = 0;
  std::uint64_t true_negative = 0;
  std::uint64_t false_negative = 0;

  std::uint64_t total() const noexcept { return true_positive + false_positive + true_negative + false_negative; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Predicted positive when score >= threshold. Labels must be 0 or 1.
ConfusionCounts confusion_at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold);

struct Rates {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the denominator was zero and the rate was reported as 0.
  bool precision_degenerate = false;
  bool recall_degenerate = false;
};

/// Harmonic mean; 0 when both inputs are 0.
double f1_score(double precision, double recall);

/// Throws EmptyInputError for an all-zero confusion.
Rates summarize(const ConfusionCounts& confusion);

/// AUC as the exact fraction numerator / denominator, both doubled so ties
/// (half credit) stay integral: denominator = 2 * P * N.
struct AucFraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  double value() const noexcept { return static_cast<double>(numerator) / static_cast<double>(denominator); }
};

/// Mann-Whitney pair counting with ties worth one half. Throws
/// DegenerateInputError when only one class is present.
AucFraction roc_auc_fraction(std::span<const double> scores, std::span<const int> labels);
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct Percentiles {
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
};

/// Nearest-rank: the ceil(p/100 * n)-th smallest value.
double nearest_rank(std::span<const double> sorted, double p);
Percentiles latency_percentiles(std::span<const double> latencies);

struct MetricsReport {
  Rates rates;
  double auc = 0.0;
  ConfusionCounts confusion;
  double threshold = 0.5;

  nlohmann::json to_json() const;
};

MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

// ---------------------------------------------------------------------------
// Logistic baseline

struct BaselineConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
  gnn::ClassWeighting class_weighting = gnn::ClassWeighting::InverseFrequency;
  double l2_penalty = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct BaselineParams {
  std::vector<double> weights;
  double bias = 0.0;
  features::NormalizerSpec normalizer;
};

/// Logistic regression by shuffled mini-batch gradient descent with the
/// weighted loss of the graph model. Throws TrainingError on divergence.
BaselineParams train_baseline(std::span<const graph::FeatureVector> rows, std::span<const int> labels,
                              const BaselineConfig& config);
double baseline_score(const BaselineParams& params, std::span<const double> row);

// ---------------------------------------------------------------------------

struct Deltas {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
};

struct Comparison {
  MetricsReport gnn;
  MetricsReport baseline;
  Deltas deltas;  // gnn - baseline

  /// Plain-text table with one row per model.
  std::string table() const;
  nlohmann::json to_json() const;
};

/// Throws ShapeError when the three inputs are not aligned.
Comparison compare(std::span<const double> gnn_scores, std::span<const double> baseline_scores,
                   std::span<const int> labels, double threshold = 0.5);

}  // namespace detectgnn::eval
