#include "detectgnn/features.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "detectgnn/error.hpp"

namespace detectgnn::features {
namespace {

constexpr double kGainEpsilon = 1e-12;

double binary_entropy(double positives, double total) {
  if (total <= 0.0 || positives <= 0.0 || positives >= total) return 0.0;
  const double p = positives / total;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

struct Leaf {
  std::size_t begin = 0;  // range in the sorted arrays
  std::size_t end = 0;
  double best_gain = 0.0;
  double threshold = 0.0;
  std::size_t split = 0;  // first index of the right child
};

void evaluate_leaf(Leaf& leaf, const std::vector<double>& v, const std::vector<double>& prefix_pos) {
  leaf.best_gain = 0.0;
  leaf.split = 0;
  const double n = static_cast<double>(leaf.end - leaf.begin);
  const double pos = prefix_pos[leaf.end] - prefix_pos[leaf.begin];
  const double parent = n * binary_entropy(pos, n);
  for (std::size_t i = leaf.begin + 1; i < leaf.end; ++i) {
    if (!(v[i - 1] < v[i])) continue;
    const double nl = static_cast<double>(i - leaf.begin);
    const double pl = prefix_pos[i] - prefix_pos[leaf.begin];
    const double gain = parent - nl * binary_entropy(pl, nl) - (n - nl) * binary_entropy(pos - pl, n - nl);
    if (gain > leaf.best_gain + kGainEpsilon) {
      leaf.best_gain = gain;
      leaf.threshold = midpoint(v[i - 1], v[i]);
      leaf.split = i;
    }
  }
}

}  // namespace

BinSpec fit_bins(std::span<const double> values, std::span<const int> labels, std::size_t max_leaves) {
  if (values.size() != labels.size()) throw ShapeError("fit_bins: values and labels differ in length");
  if (values.empty()) throw EmptyInputError("fit_bins: no values");
  if (max_leaves == 0) throw ValueError("fit_bins: max_leaves must be positive");
  for (const double x : values) {
    if (!std::isfinite(x)) throw ValueError("fit_bins: non-finite value");
  }
  BinSpec spec;
  if (max_leaves == 1) return spec;

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> v(order.size());
  std::vector<double> prefix_pos(order.size() + 1, 0.0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    v[i] = values[order[i]];
    prefix_pos[i + 1] = prefix_pos[i] + (labels[order[i]] != 0 ? 1.0 : 0.0);
  }

  const bool single_class = prefix_pos.back() == 0.0 || prefix_pos.back() == static_cast<double>(v.size());
  if (single_class) {
    const std::size_t n = v.size();
    for (std::size_t i = 1; i < max_leaves; ++i) {
      const std::size_t pos = i * n / max_leaves;
      if (pos == 0 || pos >= n || !(v[pos - 1] < v[pos])) continue;
      const double t = midpoint(v[pos - 1], v[pos]);
      if (spec.thresholds.empty() || t > spec.thresholds.back()) spec.thresholds.push_back(t);
    }
    return spec;
  }

  std::vector<Leaf> leaves{Leaf{0, v.size()}};
  evaluate_leaf(leaves.front(), v, prefix_pos);
  while (leaves.size() < max_leaves) {
    std::size_t best = leaves.size();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      if (leaves[i].best_gain <= kGainEpsilon) continue;
      if (best == leaves.size() || leaves[i].best_gain > leaves[best].best_gain + kGainEpsilon ||
          (std::abs(leaves[i].best_gain - leaves[best].best_gain) <= kGainEpsilon &&
           leaves[i].threshold < leaves[best].threshold)) {
        best = i;
      }
    }
    if (best == leaves.size()) break;
    const Leaf parent = leaves[best];
    spec.thresholds.push_back(parent.threshold);
    Leaf left{parent.begin, parent.split};
    Leaf right{parent.split, parent.end};
    evaluate_leaf(left, v, prefix_pos);
    evaluate_leaf(right, v, prefix_pos);
    leaves[best] = left;
    leaves.push_back(right);
  }
  std::sort(spec.thresholds.begin(), spec.thresholds.end());
  return spec;
}

std::size_t apply_bins(const BinSpec& spec, double value) {
  if (!std::isfinite(value)) throw ValueError("apply_bins: non-finite value");
  return static_cast<std::size_t>(std::lower_bound(spec.thresholds.begin(), spec.thresholds.end(), value) -
                                  spec.thresholds.begin());
}

// ---------------------------------------------------------------------------

void TemporalEncodingSpec::validate() const {
  if (dims == 0 || dims % 2 != 0) throw ValueError("temporal encoding dims must be even and positive");
  if (!(min_period > 0.0 && min_period < base_period)) {
    throw ValueError("temporal encoding requires 0 < min_period < base_period");
  }
}

double TemporalEncodingSpec::period(std::size_t pair) const {
  const std::size_t pairs = dims / 2;
  if (pairs <= 1) return base_period;
  const double fraction = static_cast<double>(pair) / static_cast<double>(pairs - 1);
  return base_period * std::pow(min_period / base_period, fraction);
}

FeatureVector temporal_encoding(const TemporalEncodingSpec& spec, double delta) {
  spec.validate();
  if (!std::isfinite(delta) || delta < 0.0) throw ValueError("temporal encoding needs a finite delta >= 0");
  FeatureVector out(spec.dims);
  for (std::size_t j = 0; j < spec.dims / 2; ++j) {
    const double angle = 2.0 * std::numbers::pi * delta / spec.period(j);
    out[2 * j] = std::sin(angle);
    out[2 * j + 1] = std::cos(angle);
  }
  return out;
}

// ---------------------------------------------------------------------------

NormalizerSpec fit_normalizer(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw EmptyInputError("fit_normalizer: no rows");
  const std::size_t dims = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != dims) throw ShapeError("fit_normalizer: ragged rows");
  }
  NormalizerSpec spec;
  spec.mean.assign(dims, 0.0);
  spec.scale.assign(dims, 1.0);
  spec.zero_variance.assign(dims, false);
  const double n = static_cast<double>(rows.size());
  for (std::size_t d = 0; d < dims; ++d) {
    double sum = 0.0;
    bool constant = true;
    for (const auto& row : rows) {
      sum += row[d];
      constant = constant && row[d] == rows.front()[d];
    }
    const double mean = sum / n;
    spec.mean[d] = mean;
    if (constant || rows.size() < 2) {
      spec.zero_variance[d] = true;
      continue;
    }
    double ss = 0.0;
    for (const auto& row : rows) ss += (row[d] - mean) * (row[d] - mean);
    const double stddev = std::sqrt(ss / (n - 1.0));
    if (stddev > 0.0) {
      spec.scale[d] = stddev;
    } else {
      spec.zero_variance[d] = true;
    }
  }
  return spec;
}

FeatureVector normalize(const NormalizerSpec& spec, std::span<const double> row) {
  if (row.size() != spec.dims()) throw ShapeError("normalize: row length differs from spec");
  FeatureVector out(row.size());
  for (std::size_t d = 0; d < row.size(); ++d) {
    out[d] = spec.zero_variance[d] ? 0.0 : (row[d] - spec.mean[d]) / spec.scale[d];
  }
  return out;
}

FeatureVector denormalize(const NormalizerSpec& spec, std::span<const double> row) {
  if (row.size() != spec.dims()) throw ShapeError("denormalize: row length differs from spec");
  FeatureVector out(row.size());
  for (std::size_t d = 0; d < row.size(); ++d) {
    out[d] = spec.zero_variance[d] ? spec.mean[d] : row[d] * spec.scale[d] + spec.mean[d];
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : entries_{std::string(kUnknown)} {}

Vocabulary::Vocabulary(std::vector<std::string> categories) : Vocabulary() {
  for (auto& c : categories) {
    if (c == kUnknown || std::find(entries_.begin(), entries_.end(), c) != entries_.end()) {
      throw ValueError("vocabulary entry '" + c + "' is duplicated or reserved");
    }
    entries_.push_back(std::move(c));
  }
}

Vocabulary Vocabulary::from_values(std::span<const std::string> values) {
  std::vector<std::string> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::erase(distinct, std::string(kUnknown));
  return Vocabulary(std::move(distinct));
}

std::size_t Vocabulary::index_of(std::string_view value) const noexcept {
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i] == value) return i;
  }
  return 0;
}

FeatureVector encode_categorical(const Vocabulary& vocab, std::string_view value) {
  FeatureVector out(vocab.size(), 0.0);
  out[vocab.index_of(value)] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------

BehaviorProfile behavior_profile(std::span<const TransactionEvent* const> history) {
  if (history.empty()) throw EmptyInputError("behavior_profile: empty history");
  BehaviorProfile p;
  const double n = static_cast<double>(history.size());
  p.count = n;
  double sum = 0.0;
  for (const auto* e : history) sum += e->amount;
  p.mean_amount = sum / n;
  double ss = 0.0;
  for (const auto* e : history) ss += (e->amount - p.mean_amount) * (e->amount - p.mean_amount);
  p.std_amount = history.size() > 1 ? std::sqrt(ss / n) : 0.0;

  std::vector<std::string_view> merchants;
  std::vector<std::string_view> categories;
  for (const auto* e : history) {
    merchants.push_back(e->merchant_id);
    categories.push_back(e->category);
  }
  std::sort(merchants.begin(), merchants.end());
  std::sort(categories.begin(), categories.end());
  p.distinct_merchants = static_cast<double>(std::unique(merchants.begin(), merchants.end()) - merchants.begin());
  p.distinct_categories =
      static_cast<double>(std::unique(categories.begin(), categories.end()) - categories.begin());
  if (history.size() > 1) {
    p.mean_inter_arrival = static_cast<double>(history.back()->timestamp - history.front()->timestamp) / (n - 1.0);
  }
  return p;
}

BehaviorProfile behavior_profile(std::span<const TransactionEvent> history) {
  std::vector<const TransactionEvent*> ptrs;
  ptrs.reserve(history.size());
  for (const auto& e : history) ptrs.push_back(&e);
  return behavior_profile(ptrs);
}

// ---------------------------------------------------------------------------

std::vector<Component> FeatureSpecs::transaction_layout() const {
  std::vector<Component> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t dim) {
    out.push_back({std::move(name), offset, dim});
    offset += dim;
  };
  add("amount", 1);
  add("amount_bin", amount_bins.bin_count());
  add("time", temporal.dims);
  add("category", categories.size());
  add("region", regions.size());
  add("profile", BehaviorProfile::kStatCount);
  return out;
}

std::vector<Component> FeatureSpecs::edge_layout() const {
  std::vector<Component> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t dim) {
    out.push_back({std::move(name), offset, dim});
    offset += dim;
  };
  add("temporal", temporal.dims);
  add("spatial", 1);
  add("behavioral", kBehaviorDiffDims);
  add("network", 1);
  return out;
}

graph::FeatureSchema FeatureSpecs::schema() const {
  graph::FeatureSchema s;
  const auto layout = transaction_layout();
  s.node_dims[graph::index_of(graph::NodeKind::Transaction)] = layout.back().offset + layout.back().dim;
  s.node_dims[graph::index_of(graph::NodeKind::Card)] = 1;
  s.node_dims[graph::index_of(graph::NodeKind::Merchant)] = categories.size() + regions.size();
  s.node_dims[graph::index_of(graph::NodeKind::Device)] = 1;
  const auto edges = edge_layout();
  s.edge_dim = edges.back().offset + edges.back().dim;
  return s;
}

void FeatureSpecs::check_consistent() const {
  temporal.validate();
  if (window_length <= 0) throw ShapeError("feature specs: window_length must be positive");
  if (normalizer.dims() != kNormalizedDims || normalizer.scale.size() != kNormalizedDims ||
      normalizer.zero_variance.size() != kNormalizedDims) {
    throw ShapeError("feature specs: normalizer must cover " + std::to_string(kNormalizedDims) + " dimensions");
  }
  for (std::size_t i = 1; i < amount_bins.thresholds.size(); ++i) {
    if (!(amount_bins.thresholds[i - 1] < amount_bins.thresholds[i])) {
      throw ShapeError("feature specs: bin thresholds not strictly ascending");
    }
  }
}

FeatureVector raw_numeric_row(const TransactionEvent& event, const BehaviorProfile& profile) {
  FeatureVector row{event.amount};
  for (const double s : profile.stats()) row.push_back(s);
  return row;
}

FeatureVector build_node_features(const TransactionEvent& event, const FeatureSpecs& specs,
                                  const BehaviorProfile& profile, Timestamp reference_time) {
  specs.check_consistent();
  const FeatureVector numeric = normalize(specs.normalizer, raw_numeric_row(event, profile));
  const Timestamp anchor = reference_time - ((reference_time % specs.window_length) + specs.window_length) %
                                                specs.window_length;

  FeatureVector out;
  out.reserve(specs.schema().node_dim(graph::NodeKind::Transaction));
  out.push_back(numeric[0]);
  FeatureVector bin(specs.amount_bins.bin_count(), 0.0);
  bin[apply_bins(specs.amount_bins, event.amount)] = 1.0;
  out.insert(out.end(), bin.begin(), bin.end());
  const auto time = temporal_encoding(specs.temporal, static_cast<double>(reference_time - anchor));
  out.insert(out.end(), time.begin(), time.end());
  const auto cat = encode_categorical(specs.categories, event.category);
  out.insert(out.end(), cat.begin(), cat.end());
  const auto reg = encode_categorical(specs.regions, event.region);
  out.insert(out.end(), reg.begin(), reg.end());
  out.insert(out.end(), numeric.begin() + 1, numeric.end());

  if (out.size() != specs.schema().node_dim(graph::NodeKind::Transaction)) {
    throw ShapeError("transaction features do not match the declared layout");
  }
  return out;
}

FeatureVector build_entity_features(graph::NodeKind kind, const TransactionEvent& event, const FeatureSpecs& specs) {
  switch (kind) {
    case graph::NodeKind::Merchant: {
      FeatureVector out = encode_categorical(specs.categories, event.category);
      const auto reg = encode_categorical(specs.regions, event.region);
      out.insert(out.end(), reg.begin(), reg.end());
      return out;
    }
    case graph::NodeKind::Card:
    case graph::NodeKind::Device:
      return FeatureVector{1.0};
    case graph::NodeKind::Transaction:
      break;
  }
  throw ValueError("build_entity_features: transactions are not entities");
}

FeatureVector build_edge_features(graph::Relation /*relation*/, double time_gap, bool same_region,
                                  const BehaviorProfile& profile_src, const BehaviorProfile& profile_dst,
                                  std::size_t shared_count, const FeatureSpecs& specs) {
  if (!(time_gap >= 0.0)) throw ValueError("build_edge_features: negative time_gap");
  FeatureVector out = temporal_encoding(specs.temporal, time_gap);
  out.push_back(same_region ? 1.0 : 0.0);
  auto diff = [](double a, double b) { return std::abs(std::log1p(a) - std::log1p(b)); };
  out.push_back(diff(profile_src.count, profile_dst.count));
  out.push_back(diff(profile_src.mean_amount, profile_dst.mean_amount));
  out.push_back(diff(profile_src.mean_inter_arrival, profile_dst.mean_inter_arrival));
  out.push_back(std::log1p(static_cast<double>(shared_count)));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// In-window transactions attached to `anchor` through `relation`, oldest
/// first, skipping `exclude`.
std::vector<const TransactionEvent*> window_history(const graph::TemporalGraph& g, graph::NodeRef anchor,
                                                    graph::Relation relation, Timestamp cutoff,
                                                    std::optional<graph::NodeRef> exclude = std::nullopt) {
  std::vector<const TransactionEvent*> out;
  const auto list = g.incident(anchor, relation);
  for (auto it = list.rbegin(); it != list.rend(); ++it) {
    const auto& rec = g.node(it->node);
    if (*rec.timestamp < cutoff) break;
    if (exclude && it->node == *exclude) continue;
    out.push_back(rec.event.get());
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<const TransactionEvent*> card_history(const graph::TemporalGraph& g, const TransactionEvent& event) {
  std::vector<const TransactionEvent*> history;
  if (const auto card = g.find(graph::NodeKind::Card, event.card_id)) {
    history = window_history(g, *card, graph::Relation::TxnCard, event.timestamp - g.window_length());
  }
  history.push_back(&event);
  return history;
}

graph::NodeRef ingest_event(graph::TemporalGraph& g, const FeatureSpecs& specs, const TransactionEvent& event) {
  if (g.window_length() != specs.window_length) {
    throw SchemaError("graph window differs from the feature manifest window");
  }
  const BehaviorProfile profile = behavior_profile(card_history(g, event));
  FeatureVector txn_features = build_node_features(event, specs, profile, event.timestamp);
  const Timestamp cutoff = event.timestamp - g.window_length();

  graph::InsertHooks hooks;
  hooks.entity_features = [&](graph::NodeKind kind, const TransactionEvent& e) {
    return build_entity_features(kind, e, specs);
  };
  hooks.edge_features = [&](const graph::EdgeContext& ctx) {
    graph::NodeRef anchor = ctx.other;
    graph::Relation via = ctx.relation;
    if (ctx.relation == graph::Relation::TxnSequence) {
      anchor = *ctx.graph.find(graph::NodeKind::Card, event.card_id);
      via = graph::Relation::TxnCard;
    }
    const auto prior = window_history(ctx.graph, anchor, via, cutoff, ctx.txn);
    const double gap = prior.empty() ? 0.0 : static_cast<double>(event.timestamp - prior.back()->timestamp);
    const bool same_region = prior.empty() || prior.back()->region == event.region;
    const BehaviorProfile other = prior.empty() ? profile : behavior_profile(prior);
    return build_edge_features(ctx.relation, gap, same_region, profile, other, prior.size(), specs);
  };
  return g.insert_transaction(event, std::move(txn_features), hooks);
}

FeatureSpecs fit_feature_specs(std::span<const TransactionEvent> events, const std::vector<bool>& fit_mask,
                               const FitOptions& options) {
  if (fit_mask.size() != events.size()) throw ShapeError("fit_feature_specs: mask length differs from events");
  if (options.window_length <= 0) throw ConfigError("window_length must be positive");
  options.temporal.validate();

  FeatureSpecs specs;
  specs.window_length = options.window_length;
  specs.temporal = options.temporal;

  std::vector<std::string> categories;
  std::vector<std::string> regions;
  std::vector<FeatureVector> rows;
  std::vector<double> amounts;
  std::vector<int> labels;
  std::unordered_map<std::string_view, std::deque<const TransactionEvent*>> per_card;
  Timestamp last = std::numeric_limits<Timestamp>::min();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const TransactionEvent& e = events[i];
    if (e.timestamp < last) throw OrderingError("fit_feature_specs: events are not time-ordered");
    last = e.timestamp;
    auto& history = per_card[e.card_id];
    while (!history.empty() && history.front()->timestamp < e.timestamp - options.window_length) history.pop_front();
    history.push_back(&e);
    if (!fit_mask[i]) continue;
    const std::vector<const TransactionEvent*> window(history.begin(), history.end());
    rows.push_back(raw_numeric_row(e, behavior_profile(window)));
    categories.push_back(e.category);
    regions.push_back(e.region);
    if (e.label) {
      amounts.push_back(e.amount);
      labels.push_back(*e.label);
    }
  }
  if (rows.empty()) throw EmptyInputError("fit_feature_specs: no rows selected for fitting");

  specs.categories = Vocabulary::from_values(categories);
  specs.regions = Vocabulary::from_values(regions);
  specs.normalizer = fit_normalizer(rows);
  if (amounts.empty()) {
    for (const auto& row : rows) amounts.push_back(row[0]);
    labels.assign(amounts.size(), 0);
  }
  specs.amount_bins = fit_bins(amounts, labels, options.max_leaves);
  return specs;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json layout_json(const std::vector<Component>& layout) {
  auto arr = nlohmann::json::array();
  for (const auto& c : layout) arr.push_back({{"name", c.name}, {"offset", c.offset}, {"dim", c.dim}});
  return arr;
}

Vocabulary vocabulary_from_json(const nlohmann::json& entries) {
  auto values = entries.get<std::vector<std::string>>();
  if (values.empty() || values.front() != Vocabulary::kUnknown) {
    throw SchemaError("vocabulary must start with the UNKNOWN slot");
  }
  values.erase(values.begin());
  return Vocabulary(std::move(values));
}

}  // namespace

nlohmann::json to_manifest(const FeatureSpecs& specs) {
  specs.check_consistent();
  nlohmann::json doc;
  doc["schema_version"] = kFeatureSchemaVersion;
  doc["window_length"] = specs.window_length;
  doc["temporal"] = {{"dims", specs.temporal.dims},
                     {"base_period", specs.temporal.base_period},
                     {"min_period", specs.temporal.min_period}};
  doc["amount_bins"] = specs.amount_bins.thresholds;
  doc["vocabularies"] = {{"category", specs.categories.entries()}, {"region", specs.regions.entries()}};
  std::vector<int> zero_var;
  for (const bool z : specs.normalizer.zero_variance) zero_var.push_back(z ? 1 : 0);
  doc["normalizer"] = {{"fields", {"amount", "count", "mean_amount", "std_amount", "distinct_merchants",
                                   "distinct_categories", "mean_inter_arrival"}},
                       {"mean", specs.normalizer.mean},
                       {"scale", specs.normalizer.scale},
                       {"zero_variance", zero_var}};
  doc["components"] = {{"transaction", layout_json(specs.transaction_layout())},
                       {"edge", layout_json(specs.edge_layout())}};
  const auto schema = specs.schema();
  nlohmann::json dims;
  for (const auto k : graph::kAllNodeKinds) dims[std::string(graph::to_string(k))] = schema.node_dim(k);
  doc["node_dims"] = dims;
  doc["edge_dim"] = schema.edge_dim;
  return doc;
}

FeatureSpecs from_manifest(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<std::string>() != kFeatureSchemaVersion) {
      throw SchemaError("feature manifest version '" + doc.at("schema_version").get<std::string>() +
                        "' does not match '" + std::string(kFeatureSchemaVersion) + "'");
    }
    FeatureSpecs specs;
    specs.window_length = doc.at("window_length").get<Timestamp>();
    const auto& t = doc.at("temporal");
    specs.temporal = {t.at("dims").get<std::size_t>(), t.at("base_period").get<double>(),
                      t.at("min_period").get<double>()};
    specs.amount_bins.thresholds = doc.at("amount_bins").get<std::vector<double>>();
    specs.categories = vocabulary_from_json(doc.at("vocabularies").at("category"));
    specs.regions = vocabulary_from_json(doc.at("vocabularies").at("region"));
    const auto& n = doc.at("normalizer");
    specs.normalizer.mean = n.at("mean").get<std::vector<double>>();
    specs.normalizer.scale = n.at("scale").get<std::vector<double>>();
    for (const int z : n.at("zero_variance").get<std::vector<int>>()) specs.normalizer.zero_variance.push_back(z != 0);
    specs.check_consistent();

    if (doc.at("components").at("transaction") != layout_json(specs.transaction_layout()) ||
        doc.at("components").at("edge") != layout_json(specs.edge_layout())) {
      throw SchemaError("feature manifest component layout is inconsistent with its contents");
    }
    const auto schema = specs.schema();
    for (const auto k : graph::kAllNodeKinds) {
      if (doc.at("node_dims").at(std::string(graph::to_string(k))).get<std::size_t>() != schema.node_dim(k)) {
        throw SchemaError("feature manifest node dimension mismatch for " + std::string(graph::to_string(k)));
      }
    }
    if (doc.at("edge_dim").get<std::size_t>() != schema.edge_dim) throw SchemaError("feature manifest edge_dim mismatch");
    return specs;
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed feature manifest: ") + ex.what());
  } catch (const ShapeError& ex) {
    throw SchemaError(ex.what());
  } catch (const ValueError& ex) {
    throw SchemaError(ex.what());
  }
}

}  // namespace detectgnn::features
