#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detectgnn/data_io.hpp"
#include "detectgnn/graph_store.hpp"
#include "json.hpp"

namespace detectgnn::features {

using graph::FeatureVector;

// ---------------------------------------------------------------------------
// Decision-tree binning

struct BinSpec {
  std::vector<double> thresholds;  // strictly ascending
  std::size_t bin_count() const noexcept { return thresholds.size() + 1; }
  bool operator==(const BinSpec&) const = default;
};

/// Greedy best-first information-gain splitting on one feature. Candidate
/// thresholds are midpoints between distinct sorted values; ties prefer the
/// smaller threshold. When every label is equal the result is quantile
/// binning with max_leaves equal-frequency cuts.
BinSpec fit_bins(std::span<const double> values, std::span<const int> labels, std::size_t max_leaves = 8);

/// Number of thresholds strictly below `value`. Throws ValueError for NaN/inf.
std::size_t apply_bins(const BinSpec& spec, double value);

// ---------------------------------------------------------------------------
// Temporal encoding

/// Sine/cosine pairs over a geometric ladder of periods, from base_period
/// down to min_period.
struct TemporalEncodingSpec {
  std::size_t dims = 8;
  double base_period = 30.0 * 86400.0;
  double min_period = 3600.0;

  void validate() const;
  double period(std::size_t pair) const;
  bool operator==(const TemporalEncodingSpec&) const = default;
};

FeatureVector temporal_encoding(const TemporalEncodingSpec& spec, double delta);

// ---------------------------------------------------------------------------
// Normalization

/// Standardization with sample (n-1) standard deviation. Zero-variance
/// dimensions keep scale 1 and map to exactly 0.
struct NormalizerSpec {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<bool> zero_variance;

  std::size_t dims() const noexcept { return mean.size(); }
  bool operator==(const NormalizerSpec&) const = default;
};

NormalizerSpec fit_normalizer(std::span<const FeatureVector> rows);
FeatureVector normalize(const NormalizerSpec& spec, std::span<const double> row);
/// Inverse of normalize on non-degenerate dimensions; degenerate ones return the mean.
FeatureVector denormalize(const NormalizerSpec& spec, std::span<const double> row);

// ---------------------------------------------------------------------------
// Categorical encoding

class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "<UNK>";

  Vocabulary();
  /// Throws ValueError on duplicates (or an explicit UNK entry).
  explicit Vocabulary(std::vector<std::string> categories);
  /// Sorted distinct values.
  static Vocabulary from_values(std::span<const std::string> values);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t index_of(std::string_view value) const noexcept;
  /// Index 0 is the UNKNOWN slot.
  const std::vector<std::string>& entries() const noexcept { return entries_; }
  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> entries_;
};

FeatureVector encode_categorical(const Vocabulary& vocab, std::string_view value);

// ---------------------------------------------------------------------------
// Behavior profile

struct BehaviorProfile {
  static constexpr std::size_t kStatCount = 6;

  double count = 0.0;
  double mean_amount = 0.0;
  double std_amount = 0.0;  // population
  double distinct_merchants = 0.0;
  double distinct_categories = 0.0;
  double mean_inter_arrival = 0.0;

  std::array<double, kStatCount> stats() const noexcept {
    return {count, mean_amount, std_amount, distinct_merchants, distinct_categories, mean_inter_arrival};
  }
};

/// Statistics over a time-ordered, nonempty history. Throws EmptyInputError.
BehaviorProfile behavior_profile(std::span<const TransactionEvent* const> history);
BehaviorProfile behavior_profile(std::span<const TransactionEvent> history);

// ---------------------------------------------------------------------------
// Fitted bundle and feature construction

inline constexpr std::string_view kFeatureSchemaVersion = "detectgnn-features/1";

struct Component {
  std::string name;
  std::size_t offset = 0;
  std::size_t dim = 0;
};

/// Everything fitted at train time and required at inference time.
struct FeatureSpecs {
  Timestamp window_length = 86400;
  TemporalEncodingSpec temporal;
  BinSpec amount_bins;
  Vocabulary categories;
  Vocabulary regions;
  /// Over [amount, count, mean_amount, std_amount, distinct_merchants,
  /// distinct_categories, mean_inter_arrival].
  NormalizerSpec normalizer;

  static constexpr std::size_t kNormalizedDims = 1 + BehaviorProfile::kStatCount;
  static constexpr std::size_t kBehaviorDiffDims = 3;

  /// Transaction vector layout, in order: amount, amount_bin, time,
  /// category, region, profile.
  std::vector<Component> transaction_layout() const;
  /// Edge vector layout: temporal, spatial, behavioral, network.
  std::vector<Component> edge_layout() const;
  graph::FeatureSchema schema() const;

  /// Throws ShapeError when the parts disagree with each other.
  void check_consistent() const;
};

/// Layout order is frozen; see FeatureSpecs::transaction_layout.
FeatureVector build_node_features(const TransactionEvent& event, const FeatureSpecs& specs,
                                  const BehaviorProfile& profile, Timestamp reference_time);

/// Static entity features: a constant 1 for cards and devices, category and
/// region one-hots for merchants.
FeatureVector build_entity_features(graph::NodeKind kind, const TransactionEvent& event, const FeatureSpecs& specs);

/// Fixed-order concatenation: temporal encoding of time_gap, same-region
/// indicator, |diff| of log1p(count, mean_amount, mean_inter_arrival), and
/// log(1 + shared_count). Throws ValueError for a negative time_gap.
FeatureVector build_edge_features(graph::Relation relation, double time_gap, bool same_region,
                                  const BehaviorProfile& profile_src, const BehaviorProfile& profile_dst,
                                  std::size_t shared_count, const FeatureSpecs& specs);

/// Raw (pre-normalization) row [amount, profile stats...].
FeatureVector raw_numeric_row(const TransactionEvent& event, const BehaviorProfile& profile);

/// Card history inside the window ending at `event` (inclusive), read from
/// the graph, followed by `event` itself.
std::vector<const TransactionEvent*> card_history(const graph::TemporalGraph& graph, const TransactionEvent& event);

/// Inserts `event` into `graph`, computing transaction, entity and edge
/// features from `specs` and the in-window history.
graph::NodeRef ingest_event(graph::TemporalGraph& graph, const FeatureSpecs& specs, const TransactionEvent& event);

struct FitOptions {
  Timestamp window_length = 86400;
  std::size_t max_leaves = 8;
  TemporalEncodingSpec temporal;
};

/// Fits vocabularies, amount bins and the normalizer on `events[i]` where
/// `fit_mask[i]` is set. Card profiles are taken over the whole stream,
/// matching what the graph sees at insertion time.
FeatureSpecs fit_feature_specs(std::span<const TransactionEvent> events, const std::vector<bool>& fit_mask,
                               const FitOptions& options);

/// Feature-schema manifest. from_manifest enforces an exact schema-version match.
nlohmann::json to_manifest(const FeatureSpecs& specs);
FeatureSpecs from_manifest(const nlohmann::json& doc);

}  // namespace detectgnn::features
