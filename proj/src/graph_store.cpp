#include "detectgnn/graph_store.hpp"

#include <algorithm>
#include <unordered_set>

#include "detectgnn/error.hpp"

namespace detectgnn::graph {

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::Transaction: return "transaction";
    case NodeKind::Card: return "card";
    case NodeKind::Merchant: return "merchant";
    case NodeKind::Device: return "device";
  }
  return "unknown";
}

std::string_view to_string(Relation relation) noexcept {
  switch (relation) {
    case Relation::TxnCard: return "txn_card";
    case Relation::TxnMerchant: return "txn_merchant";
    case Relation::TxnDevice: return "txn_device";
    case Relation::TxnSequence: return "txn_sequence";
  }
  return "unknown";
}

NodeKind parse_node_kind(std::string_view text) {
  for (auto k : kAllNodeKinds) {
    if (to_string(k) == text) return k;
  }
  throw SchemaError("unknown node kind '" + std::string(text) + "'");
}

Relation parse_relation(std::string_view text) {
  for (auto r : kAllRelations) {
    if (to_string(r) == text) return r;
  }
  throw SchemaError("unknown relation '" + std::string(text) + "'");
}

NodeKind entity_kind(Relation relation) noexcept {
  switch (relation) {
    case Relation::TxnCard: return NodeKind::Card;
    case Relation::TxnMerchant: return NodeKind::Merchant;
    case Relation::TxnDevice: return NodeKind::Device;
    case Relation::TxnSequence: return NodeKind::Transaction;
  }
  return NodeKind::Transaction;
}

TemporalGraph::TemporalGraph(Timestamp window_length, FeatureSchema schema)
    : window_length_(window_length), schema_(schema) {
  if (window_length <= 0) throw ConfigError("window_length must be positive");
}

std::string TemporalGraph::index_key(NodeKind kind, std::string_view key) {
  std::string out;
  out.reserve(key.size() + 2);
  out.push_back(static_cast<char>('0' + index_of(kind)));
  out.push_back(':');
  out.append(key);
  return out;
}

bool TemporalGraph::is_live(NodeRef ref) const noexcept {
  return ref.index < nodes_.size() && nodes_[ref.index] != nullptr;
}

TemporalGraph::Slot& TemporalGraph::slot(NodeRef ref) {
  if (!is_live(ref)) throw ReferenceError("node " + std::to_string(ref.index) + " is not live");
  return *nodes_[ref.index];
}

const TemporalGraph::Slot& TemporalGraph::slot(NodeRef ref) const {
  if (!is_live(ref)) throw ReferenceError("node " + std::to_string(ref.index) + " is not live");
  return *nodes_[ref.index];
}

const NodeRecord& TemporalGraph::node(NodeRef ref) const { return slot(ref).record; }

const EdgeRecord& TemporalGraph::edge(EdgeId id) const {
  if (id >= edges_.size() || !edges_[id]) throw ReferenceError("edge " + std::to_string(id) + " is not live");
  return *edges_[id];
}

std::optional<NodeRef> TemporalGraph::find(NodeKind kind, std::string_view key) const {
  const auto it = index_.find(index_key(kind, key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Neighbor> TemporalGraph::incident(NodeRef ref, Relation relation) const {
  return slot(ref).adjacency[index_of(relation)];
}

std::size_t TemporalGraph::degree(NodeRef ref) const {
  std::size_t total = 0;
  for (const auto& list : slot(ref).adjacency) total += list.size();
  return total;
}

std::vector<NodeRef> TemporalGraph::live_nodes() const {
  std::vector<NodeRef> out;
  out.reserve(live_nodes_);
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i]) out.push_back(NodeRef{i});
  }
  return out;
}

NodeRef TemporalGraph::add_node(NodeRecord record) {
  const NodeRef ref{static_cast<std::uint32_t>(nodes_.size())};
  index_.emplace(index_key(record.kind, record.entity_key), ref);
  auto s = std::make_unique<Slot>();
  s->record = std::move(record);
  nodes_.push_back(std::move(s));
  ++live_nodes_;
  return ref;
}

NodeRef TemporalGraph::find_or_create_entity(NodeKind kind, const std::string& key,
                                             const TransactionEvent& event, const InsertHooks& hooks) {
  if (const auto existing = find(kind, key)) return *existing;
  FeatureVector features = hooks.entity_features ? hooks.entity_features(kind, event)
                                                 : FeatureVector(schema_.node_dim(kind), 0.0);
  if (features.size() != schema_.node_dim(kind)) {
    throw ShapeError(std::string(to_string(kind)) + " features have length " + std::to_string(features.size()) +
                     ", schema expects " + std::to_string(schema_.node_dim(kind)));
  }
  NodeRecord record;
  record.kind = kind;
  record.entity_key = key;
  record.features = share(std::move(features));
  return add_node(std::move(record));
}

void TemporalGraph::add_edge(NodeRef src, NodeRef dst, Relation relation, Timestamp ts,
                             const TransactionEvent& event, NodeRef txn, NodeRef other,
                             const InsertHooks& hooks) {
  FeatureVector features;
  if (hooks.edge_features) {
    features = hooks.edge_features(EdgeContext{*this, event, relation, txn, other});
  } else {
    features.assign(schema_.edge_dim, 0.0);
  }
  if (features.size() != schema_.edge_dim) {
    throw ShapeError("edge features have length " + std::to_string(features.size()) + ", schema expects " +
                     std::to_string(schema_.edge_dim));
  }
  const EdgeId id = static_cast<EdgeId>(edges_.size());
  edges_.push_back(std::make_unique<EdgeRecord>(EdgeRecord{src, dst, relation, ts, share(std::move(features))}));
  ++live_edges_;
  slot(src).adjacency[index_of(relation)].push_back({dst, id});
  slot(dst).adjacency[index_of(relation)].push_back({src, id});
}

NodeRef TemporalGraph::insert_transaction(const TransactionEvent& event, FeatureVector txn_features,
                                          const InsertHooks& hooks) {
  if (event.timestamp < latest_timestamp_) {
    throw OrderingError("transaction '" + event.txn_id + "' at " + std::to_string(event.timestamp) +
                        " precedes latest timestamp " + std::to_string(latest_timestamp_));
  }
  if (find(NodeKind::Transaction, event.txn_id)) throw DuplicateIdError(event.txn_id);
  if (txn_features.size() != schema_.node_dim(NodeKind::Transaction)) {
    throw ShapeError("transaction features have length " + std::to_string(txn_features.size()) +
                     ", schema expects " + std::to_string(schema_.node_dim(NodeKind::Transaction)));
  }

  // The card's latest transaction, if still inside the window for this event.
  std::optional<NodeRef> previous;
  if (const auto card = find(NodeKind::Card, event.card_id)) {
    const auto history = incident(*card, Relation::TxnCard);
    if (!history.empty()) {
      const NodeRef last = history.back().node;
      if (*node(last).timestamp >= event.timestamp - window_length_) previous = last;
    }
  }

  NodeRecord record;
  record.kind = NodeKind::Transaction;
  record.entity_key = event.txn_id;
  record.features = share(std::move(txn_features));
  record.timestamp = event.timestamp;
  record.event = std::make_shared<const TransactionEvent>(event);
  const NodeRef txn = add_node(std::move(record));
  transactions_.push_back(txn);
  latest_timestamp_ = event.timestamp;

  const NodeRef card = find_or_create_entity(NodeKind::Card, event.card_id, event, hooks);
  add_edge(txn, card, Relation::TxnCard, event.timestamp, event, txn, card, hooks);
  const NodeRef merchant = find_or_create_entity(NodeKind::Merchant, event.merchant_id, event, hooks);
  add_edge(txn, merchant, Relation::TxnMerchant, event.timestamp, event, txn, merchant, hooks);
  if (event.device_id) {
    const NodeRef device = find_or_create_entity(NodeKind::Device, *event.device_id, event, hooks);
    add_edge(txn, device, Relation::TxnDevice, event.timestamp, event, txn, device, hooks);
  }
  if (previous) add_edge(*previous, txn, Relation::TxnSequence, event.timestamp, event, txn, *previous, hooks);
  return txn;
}

void TemporalGraph::remove_node(NodeRef ref) {
  const Slot& s = *nodes_[ref.index];
  index_.erase(index_key(s.record.kind, s.record.entity_key));
  nodes_[ref.index].reset();
  --live_nodes_;
}

std::size_t TemporalGraph::evict_expired(Timestamp now, std::vector<NodeRef>* removed) {
  const Timestamp cutoff = now - window_length_;
  std::size_t count = 0;
  std::vector<NodeRef> orphan_candidates;
  while (!transactions_.empty() && *node(transactions_.front()).timestamp < cutoff) {
    const NodeRef txn = transactions_.front();
    transactions_.pop_front();
    Slot& s = slot(txn);
    for (auto& list : s.adjacency) {
      for (const Neighbor& n : list) {
        auto& other = slot(n.node).adjacency[index_of(edges_[n.edge]->relation)];
        const auto it = std::find_if(other.begin(), other.end(), [&](const Neighbor& x) { return x.edge == n.edge; });
        if (it != other.end()) other.erase(it);
        edges_[n.edge].reset();
        --live_edges_;
        if (slot(n.node).record.kind != NodeKind::Transaction) orphan_candidates.push_back(n.node);
      }
      list.clear();
    }
    // Transactions leave oldest-first, so a removed transaction's sequence
    // predecessor is already gone and the card path is only ever truncated.
    remove_node(txn);
    if (removed) removed->push_back(txn);
    ++count;
  }
  std::sort(orphan_candidates.begin(), orphan_candidates.end());
  orphan_candidates.erase(std::unique(orphan_candidates.begin(), orphan_candidates.end()), orphan_candidates.end());
  for (const NodeRef entity : orphan_candidates) {
    if (is_live(entity) && degree(entity) == 0) {
      remove_node(entity);
      if (removed) removed->push_back(entity);
      ++count;
    }
  }
  return count;
}

// ---------------------------------------------------------------------------

std::optional<std::uint32_t> Subgraph::local_index(NodeRef parent) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), parent,
                                   [](const SubgraphNode& n, NodeRef p) { return n.parent < p; });
  if (it == nodes.end() || it->parent != parent) return std::nullopt;
  return static_cast<std::uint32_t>(it - nodes.begin());
}

namespace {

// Incident edges whose timestamp lies inside the view's transaction range.
// An edge is never newer than its newer endpoint, nor older than its older
// one, so everything outside the range leads to an invisible node.
std::span<const Neighbor> visible_incident(const TemporalGraph& graph, NodeRef u, Relation r,
                                           const SubgraphView& view) {
  auto list = graph.incident(u, r);
  const auto lo = std::partition_point(list.begin(), list.end(), [&](const Neighbor& n) {
    return graph.edge(n.edge).timestamp < view.min_txn_timestamp;
  });
  const auto hi = std::partition_point(lo, list.end(), [&](const Neighbor& n) {
    return graph.edge(n.edge).timestamp <= view.max_txn_timestamp;
  });
  return {lo, hi};
}

}  // namespace

Subgraph k_hop_subgraph(const TemporalGraph& graph, NodeRef seed, std::size_t k, const SubgraphView& view) {
  if (!graph.is_live(seed)) throw ReferenceError("seed node " + std::to_string(seed.index) + " is not live");
  if (!view.admits(seed, graph.node(seed))) throw ReferenceError("seed node is outside the requested view");

  std::unordered_set<std::uint32_t> visited{seed.index};
  std::vector<NodeRef> members{seed};
  std::vector<NodeRef> frontier{seed};
  for (std::size_t hop = 0; hop < k && !frontier.empty(); ++hop) {
    std::vector<NodeRef> next;
    for (const NodeRef u : frontier) {
      for (const Relation r : kAllRelations) {
        for (const Neighbor& n : visible_incident(graph, u, r, view)) {
          if (visited.contains(n.node.index)) continue;
          if (!view.admits(n.node, graph.node(n.node))) continue;
          visited.insert(n.node.index);
          members.push_back(n.node);
          next.push_back(n.node);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(members.begin(), members.end());

  Subgraph sub;
  sub.nodes.reserve(members.size());
  for (const NodeRef ref : members) {
    const NodeRecord& rec = graph.node(ref);
    sub.nodes.push_back({ref, rec.kind, rec.features, rec.timestamp});
  }
  for (std::uint32_t local = 0; local < members.size(); ++local) {
    const NodeRef u = members[local];
    for (const Relation r : kAllRelations) {
      for (const Neighbor& n : visible_incident(graph, u, r, view)) {
        const EdgeRecord& e = graph.edge(n.edge);
        if (e.src != u || !visited.contains(n.node.index)) continue;
        const auto dst = sub.local_index(e.dst);
        if (!dst) continue;
        sub.edges.push_back({local, *dst, e.relation, e.timestamp, e.features});
      }
    }
  }
  std::sort(sub.edges.begin(), sub.edges.end(), [](const SubgraphEdge& a, const SubgraphEdge& b) {
    return std::tie(a.src, a.dst, a.relation) < std::tie(b.src, b.dst, b.relation);
  });
  return sub;
}

RelationGroups neighbors_by_relation(const TemporalGraph& graph, NodeRef node) {
  RelationGroups groups;
  for (const Relation r : kAllRelations) {
    const auto list = graph.incident(node, r);
    if (list.empty()) continue;
    auto& group = groups[r];
    for (const Neighbor& n : list) group.emplace_back(n.node, graph.edge(n.edge));
    std::stable_sort(group.begin(), group.end(), [](const auto& a, const auto& b) {
      return a.second.timestamp != b.second.timestamp ? a.second.timestamp < b.second.timestamp
                                                      : a.first < b.first;
    });
  }
  return groups;
}

nlohmann::json snapshot(const TemporalGraph& graph) {
  nlohmann::json doc;
  doc["window_length"] = graph.window_length();
  doc["latest_timestamp"] = graph.latest_timestamp();
  auto& nodes = doc["nodes"] = nlohmann::json::array();
  auto& edges = doc["edges"] = nlohmann::json::array();
  std::vector<EdgeId> edge_ids;
  for (const NodeRef ref : graph.live_nodes()) {
    const NodeRecord& rec = graph.node(ref);
    nlohmann::json n;
    n["index"] = ref.index;
    n["kind"] = to_string(rec.kind);
    n["entity_key"] = rec.entity_key;
    n["timestamp"] = rec.timestamp ? nlohmann::json(*rec.timestamp) : nlohmann::json(nullptr);
    n["features"] = *rec.features;
    nodes.push_back(std::move(n));
    for (const Relation r : kAllRelations) {
      for (const Neighbor& nb : graph.incident(ref, r)) {
        if (graph.edge(nb.edge).src == ref) edge_ids.push_back(nb.edge);
      }
    }
  }
  std::sort(edge_ids.begin(), edge_ids.end());
  for (const EdgeId id : edge_ids) {
    const EdgeRecord& e = graph.edge(id);
    edges.push_back({{"src_index", e.src.index},
                     {"dst_index", e.dst.index},
                     {"relation", to_string(e.relation)},
                     {"timestamp", e.timestamp},
                     {"features", *e.features}});
  }
  return doc;
}

bool structurally_equal(const TemporalGraph& a, const TemporalGraph& b) {
  return a.schema() == b.schema() && snapshot(a) == snapshot(b);
}

std::vector<std::string> validate(const TemporalGraph& graph) {
  std::vector<std::string> issues;
  auto report = [&](const std::string& msg) { issues.push_back(msg); };
  const auto live = graph.live_nodes();
  if (live.size() != graph.node_count()) report("node_count disagrees with live slots");

  std::size_t edge_endpoints = 0;
  std::unordered_set<EdgeId> seen_edges;
  for (const NodeRef ref : live) {
    const NodeRecord& rec = graph.node(ref);
    const std::string name = "node " + std::to_string(ref.index);
    if ((rec.kind == NodeKind::Transaction) != rec.timestamp.has_value()) {
      report(name + ": timestamp presence does not match kind");
    }
    if (!rec.features || rec.features->size() != graph.schema().node_dim(rec.kind)) {
      report(name + ": feature length differs from schema");
    }
    const auto found = graph.find(rec.kind, rec.entity_key);
    if (!found || *found != ref) report(name + ": entity index disagrees");
    if (rec.kind == NodeKind::Transaction) {
      if (graph.latest_timestamp() - *rec.timestamp > graph.window_length()) report(name + ": outside window");
    } else if (graph.degree(ref) == 0) {
      report(name + ": entity without edges");
    }

    std::size_t seq_in = 0;
    std::size_t seq_out = 0;
    for (const Relation r : kAllRelations) {
      for (const Neighbor& n : graph.incident(ref, r)) {
        ++edge_endpoints;
        if (!graph.is_live(n.node)) {
          report(name + ": adjacency points at dead node");
          continue;
        }
        const EdgeRecord* e = nullptr;
        try {
          e = &graph.edge(n.edge);
        } catch (const ReferenceError&) {
          report(name + ": adjacency points at dead edge");
          continue;
        }
        seen_edges.insert(n.edge);
        if (e->relation != r) report(name + ": edge filed under wrong relation");
        if (!((e->src == ref && e->dst == n.node) || (e->dst == ref && e->src == n.node))) {
          report(name + ": edge endpoints disagree with adjacency");
        }
        if (!e->features || e->features->size() != graph.schema().edge_dim) {
          report(name + ": edge feature length differs from schema");
        }
        const NodeRecord& src = graph.node(e->src);
        const NodeRecord& dst = graph.node(e->dst);
        if (src.kind != NodeKind::Transaction || dst.kind != entity_kind(r)) {
          report(name + ": relation endpoints violate kind schema");
        }
        const Timestamp later = r == Relation::TxnSequence ? *dst.timestamp : *src.timestamp;
        if (e->timestamp != later) report(name + ": edge timestamp differs from transaction timestamp");
        if (r == Relation::TxnSequence) {
          if (e->src == ref) ++seq_out; else ++seq_in;
          if (*src.timestamp > *dst.timestamp) report(name + ": sequence edge runs backwards in time");
          if (src.event && dst.event && src.event->card_id != dst.event->card_id) {
            report(name + ": sequence edge joins different cards");
          }
        }
      }
    }
    if (seq_in > 1 || seq_out > 1) report(name + ": sequence path branches");
  }
  if (edge_endpoints != 2 * graph.edge_count()) report("edge endpoints do not equal twice the edge count");
  if (seen_edges.size() != graph.edge_count()) report("edge_count disagrees with reachable edges");
  return issues;
}

}  // namespace detectgnn::graph
