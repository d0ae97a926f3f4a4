#include <gtest/gtest.h>

#include <random>
#include <set>

#include "detectgnn/error.hpp"
#include "detectgnn/graph_store.hpp"
#include "test_support.hpp"

using namespace detectgnn;
using namespace detectgnn::graph;
using testsupport::make_event;

namespace {

FeatureSchema tiny() { return testsupport::small_schema(); }

FeatureVector txn_vec() { return FeatureVector(3, 0.0); }

std::set<std::uint32_t> parents(const Subgraph& sub) {
  std::set<std::uint32_t> out;
  for (const auto& n : sub.nodes) out.insert(n.parent.index);
  return out;
}

}  // namespace

TEST(TemporalGraph, InsertCreatesEntitiesAndEdges) {
  TemporalGraph g(100, tiny());
  const NodeRef t1 = g.insert_transaction(make_event("t1", 10, 5, "c1", "m1", "d1"), txn_vec());
  EXPECT_EQ(g.node_count(), 4u);
  EXPECT_EQ(g.edge_count(), 3u);
  const NodeRef t2 = g.insert_transaction(make_event("t2", 20, 5, "c1", "m2"), txn_vec());
  // new merchant, no device, plus the card sequence edge
  EXPECT_EQ(g.node_count(), 6u);
  EXPECT_EQ(g.edge_count(), 6u);
  const auto seq = g.incident(t2, Relation::TxnSequence);
  ASSERT_EQ(seq.size(), 1u);
  EXPECT_EQ(seq[0].node, t1);
  EXPECT_EQ(g.node(*g.find(NodeKind::Card, "c1")).features->size(), 2u);
  EXPECT_TRUE(validate(g).empty());
}

TEST(TemporalGraph, NoSequenceEdgeAcrossWindow) {
  TemporalGraph g(100, tiny());
  g.insert_transaction(make_event("t1", 10, 5, "c1", "m1"), txn_vec());
  const NodeRef t2 = g.insert_transaction(make_event("t2", 111, 5, "c1", "m1"), txn_vec());
  EXPECT_TRUE(g.incident(t2, Relation::TxnSequence).empty());
}

TEST(TemporalGraph, RejectsOutOfOrderDuplicateAndBadShape) {
  TemporalGraph g(100, tiny());
  g.insert_transaction(make_event("t1", 10, 5, "c1", "m1"), txn_vec());
  EXPECT_THROW(g.insert_transaction(make_event("t2", 9, 5, "c1", "m1"), txn_vec()), OrderingError);
  EXPECT_THROW(g.insert_transaction(make_event("t1", 11, 5, "c1", "m1"), txn_vec()), DuplicateIdError);
  EXPECT_THROW(g.insert_transaction(make_event("t3", 11, 5, "c1", "m1"), FeatureVector(2)), ShapeError);
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_THROW(TemporalGraph(0, tiny()), ConfigError);
}

TEST(TemporalGraph, EvictionKeepsBoundaryAndDropsOrphans) {
  TemporalGraph g(100, tiny());
  g.insert_transaction(make_event("t1", 10, 5, "c1", "m1", "d1"), txn_vec());
  g.insert_transaction(make_event("t2", 50, 5, "c2", "m1"), txn_vec());
  std::vector<NodeRef> removed;
  EXPECT_EQ(g.evict_expired(110, &removed), 0u);  // t1 sits exactly on the boundary
  EXPECT_EQ(g.evict_expired(111, &removed), 3u);  // t1, c1, d1; m1 still used by t2
  EXPECT_FALSE(g.find(NodeKind::Card, "c1"));
  EXPECT_TRUE(g.find(NodeKind::Merchant, "m1"));
  EXPECT_FALSE(g.is_live(NodeRef{0}));
  EXPECT_THROW(g.node(NodeRef{0}), ReferenceError);
  EXPECT_TRUE(validate(g).empty());
}

TEST(TemporalGraph, IndicesNeverReused) {
  TemporalGraph g(10, tiny());
  g.insert_transaction(make_event("t1", 0, 5, "c1", "m1"), txn_vec());
  g.evict_expired(100);
  EXPECT_EQ(g.node_count(), 0u);
  const NodeRef t2 = g.insert_transaction(make_event("t2", 100, 5, "c1", "m1"), txn_vec());
  EXPECT_EQ(t2.index, 3u);
}

// Brute-force comparison: after each eviction the graph equals one built
// from only the surviving events.
TEST(TemporalGraph, EvictionMatchesRebuild) {
  std::mt19937_64 rng(11);
  const auto events = testsupport::random_events(rng, 300, 15, 10, 12, 40);
  const Timestamp window = 500;
  TemporalGraph live(window, tiny());
  for (std::size_t i = 0; i < events.size(); ++i) {
    live.evict_expired(events[i].timestamp);
    live.insert_transaction(events[i], txn_vec());
    if (i % 37 != 0) continue;
    ASSERT_TRUE(validate(live).empty());
    const Timestamp cutoff = events[i].timestamp - window;
    std::set<std::string> expect_txn, expect_card;
    for (std::size_t j = 0; j <= i; ++j) {
      if (events[j].timestamp < cutoff) continue;
      expect_txn.insert(events[j].txn_id);
      expect_card.insert(events[j].card_id);
    }
    std::set<std::string> got_txn, got_card;
    for (const NodeRef r : live.live_nodes()) {
      const auto& rec = live.node(r);
      if (rec.kind == NodeKind::Transaction) got_txn.insert(rec.entity_key);
      if (rec.kind == NodeKind::Card) got_card.insert(rec.entity_key);
    }
    EXPECT_EQ(got_txn, expect_txn);
    EXPECT_EQ(got_card, expect_card);
  }
}

TEST(TemporalGraph, HandshakeCount) {
  auto rg = testsupport::build_random_graph(5, 200, tiny());
  std::size_t degree_sum = 0;
  for (const NodeRef r : rg.graph.live_nodes()) degree_sum += rg.graph.degree(r);
  EXPECT_EQ(degree_sum, 2 * rg.graph.edge_count());
}

TEST(TemporalGraph, SnapshotEqualityAfterSameInserts) {
  auto a = testsupport::build_random_graph(9, 60, tiny());
  auto b = testsupport::build_random_graph(9, 60, tiny());
  EXPECT_TRUE(structurally_equal(a.graph, b.graph));
  EXPECT_EQ(snapshot(a.graph), snapshot(b.graph));
}

TEST(KHop, MatchesBfsOracleAndNests) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rg = testsupport::build_random_graph(seed, 120, tiny());
    for (std::size_t t = 0; t < rg.txns.size(); t += 13) {
      std::set<std::uint32_t> previous;
      for (std::size_t k = 0; k <= 3; ++k) {
        const Subgraph sub = k_hop_subgraph(rg.graph, rg.txns[t], k);
        const auto got = parents(sub);
        EXPECT_EQ(got, testsupport::bfs_nodes(rg.graph, rg.txns[t], k));
        EXPECT_TRUE(std::includes(got.begin(), got.end(), previous.begin(), previous.end()));
        previous = got;
      }
    }
  }
}

TEST(KHop, InducedEdgesAndOrdering) {
  auto rg = testsupport::build_random_graph(21, 80, tiny());
  const Subgraph sub = k_hop_subgraph(rg.graph, rg.txns[40], 2);
  for (std::size_t i = 1; i < sub.nodes.size(); ++i) EXPECT_LT(sub.nodes[i - 1].parent, sub.nodes[i].parent);
  std::size_t expected_edges = 0;
  const auto inside = parents(sub);
  for (const auto p : inside) {
    for (const auto r : kAllRelations) {
      for (const auto& nb : rg.graph.incident(NodeRef{p}, r)) expected_edges += inside.count(nb.node.index);
    }
  }
  EXPECT_EQ(sub.edges.size() * 2, expected_edges);
  for (const auto& e : sub.edges) {
    EXPECT_LT(e.src, sub.nodes.size());
    EXPECT_LT(e.dst, sub.nodes.size());
  }
}

TEST(KHop, ZeroHopsIsSeedOnly) {
  auto rg = testsupport::build_random_graph(2, 30, tiny());
  const Subgraph sub = k_hop_subgraph(rg.graph, rg.txns[3], 0);
  ASSERT_EQ(sub.nodes.size(), 1u);
  EXPECT_TRUE(sub.edges.empty());
}

TEST(KHop, DeadSeedThrows) {
  TemporalGraph g(10, tiny());
  g.insert_transaction(make_event("t1", 0, 5, "c1", "m1"), txn_vec());
  g.evict_expired(100);
  EXPECT_THROW(k_hop_subgraph(g, NodeRef{0}, 1), ReferenceError);
}

TEST(KHop, ViewHidesLaterNodesAndOldTransactions) {
  TemporalGraph g(1000, tiny());
  const NodeRef t1 = g.insert_transaction(make_event("t1", 0, 5, "c1", "m1"), txn_vec());
  const NodeRef t2 = g.insert_transaction(make_event("t2", 10, 5, "c1", "m1"), txn_vec());
  const std::uint32_t after_t2 = g.index_bound() - 1;
  g.insert_transaction(make_event("t3", 20, 5, "c1", "m2"), txn_vec());
  // As of t2: t3 and m2 are invisible.
  const Subgraph as_of_t2 = k_hop_subgraph(g, t2, 3, SubgraphView{after_t2, -1000, 10});
  EXPECT_EQ(as_of_t2.nodes.size(), 4u);
  // Only transactions in [5, 10] visible: t1 drops out.
  const Subgraph narrow = k_hop_subgraph(g, t2, 3, SubgraphView{after_t2, 5, 10});
  EXPECT_FALSE(narrow.local_index(t1));
  EXPECT_EQ(narrow.nodes.size(), 3u);
}

TEST(Relations, GroupsOmitEmpty) {
  TemporalGraph g(100, tiny());
  const NodeRef t1 = g.insert_transaction(make_event("t1", 0, 5, "c1", "m1"), txn_vec());
  const auto groups = neighbors_by_relation(g, t1);
  EXPECT_EQ(groups.size(), 2u);
  EXPECT_FALSE(groups.count(Relation::TxnDevice));
  EXPECT_EQ(parse_relation(to_string(Relation::TxnSequence)), Relation::TxnSequence);
  EXPECT_EQ(parse_node_kind(to_string(NodeKind::Device)), NodeKind::Device);
}
