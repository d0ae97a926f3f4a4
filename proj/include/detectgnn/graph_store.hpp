#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "detectgnn/data_io.hpp"
#include "json.hpp"

namespace detectgnn::graph {

enum class NodeKind : std::uint8_t { Transaction = 0, Card = 1, Merchant = 2, Device = 3 };
inline constexpr std::size_t kNodeKindCount = 4;

/// Edge relations. Entity relations run transaction -> entity; TxnSequence
/// runs from a card's earlier transaction to its next one.
enum class Relation : std::uint8_t { TxnCard = 0, TxnMerchant = 1, TxnDevice = 2, TxnSequence = 3 };
inline constexpr std::size_t kRelationCount = 4;

inline constexpr std::array<NodeKind, kNodeKindCount> kAllNodeKinds = {
    NodeKind::Transaction, NodeKind::Card, NodeKind::Merchant, NodeKind::Device};
inline constexpr std::array<Relation, kRelationCount> kAllRelations = {
    Relation::TxnCard, Relation::TxnMerchant, Relation::TxnDevice, Relation::TxnSequence};

std::string_view to_string(NodeKind kind) noexcept;
std::string_view to_string(Relation relation) noexcept;
NodeKind parse_node_kind(std::string_view text);
Relation parse_relation(std::string_view text);

/// Entity kind at the far end of an entity relation (Transaction for TxnSequence).
NodeKind entity_kind(Relation relation) noexcept;

constexpr std::size_t index_of(NodeKind k) noexcept { return static_cast<std::size_t>(k); }
constexpr std::size_t index_of(Relation r) noexcept { return static_cast<std::size_t>(r); }

/// Dense handle to a node. Indices grow monotonically and are never reused
/// within one graph instance.
struct NodeRef {
  std::uint32_t index = 0;
  auto operator<=>(const NodeRef&) const = default;
};

using EdgeId = std::uint32_t;
using FeatureVector = std::vector<double>;
/// Feature vectors are immutable once attached, so subgraphs share them.
using SharedFeatures = std::shared_ptr<const FeatureVector>;

inline SharedFeatures share(FeatureVector v) { return std::make_shared<const FeatureVector>(std::move(v)); }

struct FeatureSchema {
  std::array<std::size_t, kNodeKindCount> node_dims{};
  std::size_t edge_dim = 0;

  std::size_t node_dim(NodeKind k) const noexcept { return node_dims[index_of(k)]; }
  bool operator==(const FeatureSchema&) const = default;
};

struct NodeRecord {
  NodeKind kind = NodeKind::Transaction;
  std::string entity_key;  // txn_id or entity id
  SharedFeatures features;
  std::optional<Timestamp> timestamp;  // transactions only
  /// Source event for transaction nodes; feature hooks read it.
  std::shared_ptr<const TransactionEvent> event;
};

struct EdgeRecord {
  NodeRef src;
  NodeRef dst;
  Relation relation = Relation::TxnCard;
  Timestamp timestamp = 0;
  SharedFeatures features;
};

struct Neighbor {
  NodeRef node;
  EdgeId edge = 0;
};

class TemporalGraph;

/// What an edge-feature hook sees. The edge is not yet attached, so the
/// adjacency of `other` still reflects the state before this transaction.
struct EdgeContext {
  const TemporalGraph& graph;
  const TransactionEvent& event;
  Relation relation;
  NodeRef txn;
  NodeRef other;  // entity node, or the earlier transaction for TxnSequence
};

/// Feature producers invoked during insertion. Empty hooks yield zero vectors.
struct InsertHooks {
  std::function<FeatureVector(NodeKind, const TransactionEvent&)> entity_features;
  std::function<FeatureVector(const EdgeContext&)> edge_features;
};

/// Windowed heterogeneous transaction graph.
///
/// Single writer: insert_transaction and evict_expired must be serialized by
/// the caller. Const member functions may run concurrently with each other.
class TemporalGraph {
 public:
  /// Throws ConfigError when window_length <= 0.
  TemporalGraph(Timestamp window_length, FeatureSchema schema);

  Timestamp window_length() const noexcept { return window_length_; }
  Timestamp latest_timestamp() const noexcept { return latest_timestamp_; }
  const FeatureSchema& schema() const noexcept { return schema_; }

  std::size_t node_count() const noexcept { return live_nodes_; }
  std::size_t edge_count() const noexcept { return live_edges_; }
  /// One past the largest index ever handed out.
  std::uint32_t index_bound() const noexcept { return static_cast<std::uint32_t>(nodes_.size()); }

  bool is_live(NodeRef ref) const noexcept;
  /// Throws ReferenceError for dead refs.
  const NodeRecord& node(NodeRef ref) const;
  const EdgeRecord& edge(EdgeId id) const;
  std::optional<NodeRef> find(NodeKind kind, std::string_view key) const;

  /// Incident edges of one relation, ordered by edge timestamp then neighbor ref.
  std::span<const Neighbor> incident(NodeRef ref, Relation relation) const;
  std::size_t degree(NodeRef ref) const;

  /// Live refs in ascending index order.
  std::vector<NodeRef> live_nodes() const;
  /// Live transactions, oldest first.
  const std::deque<NodeRef>& transactions() const noexcept { return transactions_; }

  /// Adds the transaction node, creates missing entity nodes, links
  /// TxnCard/TxnMerchant/TxnDevice edges and a TxnSequence edge from the
  /// card's previous transaction when that one is still inside the window
  /// relative to `event.timestamp`.
  NodeRef insert_transaction(const TransactionEvent& event, FeatureVector txn_features,
                             const InsertHooks& hooks = {});

  /// Removes transactions with timestamp < now - window_length (the boundary
  /// is kept), their edges, and entities left without edges. Returns the
  /// number of removed nodes; appends their refs to `removed` when given.
  std::size_t evict_expired(Timestamp now, std::vector<NodeRef>* removed = nullptr);

 private:
  struct Slot {
    NodeRecord record;
    std::array<std::vector<Neighbor>, kRelationCount> adjacency;
  };

  static std::string index_key(NodeKind kind, std::string_view key);
  Slot& slot(NodeRef ref);
  const Slot& slot(NodeRef ref) const;
  NodeRef add_node(NodeRecord record);
  NodeRef find_or_create_entity(NodeKind kind, const std::string& key, const TransactionEvent& event,
                                const InsertHooks& hooks);
  void add_edge(NodeRef src, NodeRef dst, Relation relation, Timestamp ts, const TransactionEvent& event,
                NodeRef txn, NodeRef other, const InsertHooks& hooks);
  void remove_node(NodeRef ref);

  Timestamp window_length_;
  FeatureSchema schema_;
  Timestamp latest_timestamp_ = 0;
  std::vector<std::unique_ptr<Slot>> nodes_;
  std::vector<std::unique_ptr<EdgeRecord>> edges_;
  std::unordered_map<std::string, NodeRef> index_;
  std::deque<NodeRef> transactions_;
  std::size_t live_nodes_ = 0;
  std::size_t live_edges_ = 0;
};

/// Restricts traversal to the graph as it stood right after a given event
/// was inserted: nodes with a larger index, or transactions outside
/// [min_txn_timestamp, max_txn_timestamp], are invisible.
struct SubgraphView {
  std::uint32_t max_index = std::numeric_limits<std::uint32_t>::max();
  Timestamp min_txn_timestamp = std::numeric_limits<Timestamp>::min();
  Timestamp max_txn_timestamp = std::numeric_limits<Timestamp>::max();

  bool admits(NodeRef ref, const NodeRecord& record) const noexcept {
    if (ref.index > max_index) return false;
    return !record.timestamp || (*record.timestamp >= min_txn_timestamp && *record.timestamp <= max_txn_timestamp);
  }
};

struct SubgraphNode {
  NodeRef parent;
  NodeKind kind = NodeKind::Transaction;
  SharedFeatures features;
  std::optional<Timestamp> timestamp;
};

struct SubgraphEdge {
  std::uint32_t src = 0;  // local indices
  std::uint32_t dst = 0;
  Relation relation = Relation::TxnCard;
  Timestamp timestamp = 0;
  SharedFeatures features;
};

/// Self-contained induced subgraph. Nodes are ordered by ascending parent
/// index; edges by (src, dst, relation).
struct Subgraph {
  std::vector<SubgraphNode> nodes;
  std::vector<SubgraphEdge> edges;

  std::optional<std::uint32_t> local_index(NodeRef parent) const;
};

/// All nodes within undirected hop distance k of `seed` plus every edge with
/// both endpoints inside. Throws ReferenceError for a dead seed.
Subgraph k_hop_subgraph(const TemporalGraph& graph, NodeRef seed, std::size_t k, const SubgraphView& view = {});

using RelationGroups = std::map<Relation, std::vector<std::pair<NodeRef, EdgeRecord>>>;

/// Incident edges grouped by relation; empty groups are omitted.
RelationGroups neighbors_by_relation(const TemporalGraph& graph, NodeRef node);

/// Debug/golden snapshot: {"nodes":[...], "edges":[...]}.
nlohmann::json snapshot(const TemporalGraph& graph);

bool structurally_equal(const TemporalGraph& a, const TemporalGraph& b);

/// Exhaustive invariant check. Returns one message per violation.
std::vector<std::string> validate(const TemporalGraph& graph);

}  // namespace detectgnn::graph
