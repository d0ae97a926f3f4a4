#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "detectgnn/data_io.hpp"
#include "detectgnn/error.hpp"
#include "detectgnn/gnn_model.hpp"
#include "test_support.hpp"

using namespace detectgnn;

TEST(RichCsv, ParsesRowsInFileOrder) {
  std::istringstream in(std::string(kRichCsvHeader) +
                        "\nt1,100,12.5,c1,m1,d1,grocery,north,0\nt2,90,3,c2,m2,,travel,south,\n");
  const auto events = parse_rich_csv(in);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].txn_id, "t1");
  EXPECT_EQ(events[0].device_id, "d1");
  EXPECT_EQ(events[0].label, 0);
  EXPECT_EQ(events[1].timestamp, 90);
  EXPECT_FALSE(events[1].device_id.has_value());
  EXPECT_FALSE(events[1].label.has_value());
}

TEST(RichCsv, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  auto events = testsupport::random_events(rng, 200, 10, 10, 10, 100);
  events[5].amount = 0.1 + 0.2;  // not representable in short decimal
  events[6].amount = 1e-300;
  std::ostringstream out;
  write_rich_csv(out, events);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_rich_csv(in), events);
}

TEST(RichCsv, ReportsLineOfBadCell) {
  std::istringstream in(std::string(kRichCsvHeader) + "\nt1,100,1,c,m,,x,y,0\nt2,abc,1,c,m,,x,y,0\n");
  try {
    parse_rich_csv(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(RichCsv, RejectsWrongHeaderAndBadLabel) {
  std::istringstream bad_header("id,ts\n");
  EXPECT_THROW(parse_rich_csv(bad_header), ParseError);
  std::istringstream bad_label(std::string(kRichCsvHeader) + "\nt1,1,1,c,m,,x,y,2\n");
  EXPECT_THROW(parse_rich_csv(bad_label), Error);
}

TEST(RichCsv, DuplicateIdNamesTheId) {
  std::istringstream in(std::string(kRichCsvHeader) + "\nt1,1,1,c,m,,x,y,0\nt1,2,1,c,m,,x,y,0\n");
  try {
    parse_rich_csv(in);
    FAIL() << "expected DuplicateIdError";
  } catch (const DuplicateIdError& e) {
    EXPECT_EQ(e.id(), "t1");
  }
}

TEST(JsonLines, MatchesCsvContent) {
  std::istringstream in(
      R"({"txn_id":"a","timestamp":5,"amount":2.5,"card_id":"c","merchant_id":"m","category":"x","region":"y","label":1})"
      "\n"
      R"({"txn_id":"b","timestamp":6,"amount":1,"card_id":"c","merchant_id":"m","device_id":"d","category":"x","region":"y"})"
      "\n");
  const auto events = parse_jsonl_events(in);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].label, 1);
  EXPECT_FALSE(events[0].device_id);
  EXPECT_EQ(events[1].device_id, "d");
  EXPECT_FALSE(events[1].label);
}

namespace {

std::string ulb_file(std::size_t rows, std::size_t positives) {
  std::ostringstream out;
  out << "\"Time\"";
  for (int i = 1; i <= 28; ++i) out << ",\"V" << i << "\"";
  out << ",\"Amount\",\"Class\"\n";
  // Spread positives evenly through the file.
  for (std::size_t i = 0; i < rows; ++i) {
    out << i;
    for (int v = 0; v < 28; ++v) out << ",0.5";
    const bool fraud = (i * positives) / rows != ((i + 1) * positives) / rows;
    out << "," << (i % 100) << "," << (fraud ? "\"1\"" : "\"0\"") << "\n";
  }
  return out.str();
}

}  // namespace

TEST(Ulb, ParsesQuotedLayout) {
  std::istringstream in(ulb_file(10, 3));
  const auto records = parse_ulb_csv(in);
  ASSERT_EQ(records.size(), 10u);
  int positives = 0;
  for (const auto& r : records) positives += r.class_label;
  EXPECT_EQ(positives, 3);
  EXPECT_DOUBLE_EQ(records[4].time_offset, 4.0);
  EXPECT_DOUBLE_EQ(records[4].components[27], 0.5);
}

TEST(Ulb, FullSizeClassBalanceWeights) {
  std::istringstream in(ulb_file(284807, 492));
  const auto records = parse_ulb_csv(in);
  ASSERT_EQ(records.size(), 284807u);
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.class_label);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 1), 492);
  const auto w = gnn::class_weights(labels, gnn::ClassWeighting::InverseFrequency);
  EXPECT_NEAR(w.positive, 289.44, 0.01);
  EXPECT_NEAR(w.negative, 0.5009, 1e-4);
}

TEST(Ulb, RejectsShortRows) {
  std::istringstream in("Time,V1\n1,2\n");
  EXPECT_THROW(parse_ulb_csv(in), ParseError);
}

TEST(Synthetic, DeterministicInSeed) {
  SyntheticConfig c;
  c.n_events = 3000;
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  EXPECT_EQ(a.events, b.events);
  EXPECT_EQ(a.rings, b.rings);
  c.seed = 43;
  EXPECT_NE(generate_synthetic(c).events, a.events);
}

TEST(Synthetic, SortedUniqueAndFraudFromRings) {
  SyntheticConfig c;
  c.n_events = 5000;
  const auto ds = generate_synthetic(c);
  ASSERT_EQ(ds.events.size(), 5000u);
  ASSERT_EQ(ds.rings.size(), c.ring_count);
  std::set<std::string> ids, ring_cards;
  for (const auto& r : ds.rings) ring_cards.insert(r.card_ids.begin(), r.card_ids.end());
  std::size_t fraud = 0;
  for (std::size_t i = 0; i < ds.events.size(); ++i) {
    const auto& e = ds.events[i];
    EXPECT_TRUE(ids.insert(e.txn_id).second);
    if (i > 0) EXPECT_LE(ds.events[i - 1].timestamp, e.timestamp);
    if (e.label == 1) {
      ++fraud;
      EXPECT_TRUE(ring_cards.count(e.card_id)) << e.txn_id;
    }
  }
  EXPECT_NEAR(static_cast<double>(fraud) / 5000.0, c.fraud_rate, 0.005);
}

TEST(Synthetic, ValidateNamesField) {
  SyntheticConfig c;
  c.fraud_rate = 1.5;
  try {
    validate(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fraud_rate"), std::string::npos);
  }
}

TEST(GroundTruth, RoundTrip) {
  SyntheticConfig c;
  c.n_events = 2000;
  const auto ds = generate_synthetic(c);
  std::stringstream s;
  write_ground_truth(s, ds.rings);
  EXPECT_EQ(read_ground_truth(s), ds.rings);
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
