#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace detectgnn {

/// Seconds since epoch. Integer so window arithmetic is exact.
using Timestamp = std::int64_t;

/// One card payment.
struct TransactionEvent {
  std::string txn_id;
  Timestamp timestamp = 0;
  double amount = 0.0;
  std::string card_id;
  std::string merchant_id;
  std::optional<std::string> device_id;
  std::string category;
  std::string region;
  std::optional<int> label;  // 1 = fraud

  bool operator==(const TransactionEvent&) const = default;
};

/// One row of the anonymized European-cardholder dataset layout
/// (Time, V1..V28, Amount, Class).
struct UlbRecord {
  static constexpr std::size_t kComponentCount = 28;

  double time_offset = 0.0;
  std::array<double, kComponentCount> components{};
  double amount = 0.0;
  int class_label = 0;
};

inline constexpr std::string_view kRichCsvHeader =
    "txn_id,timestamp,amount,card_id,merchant_id,device_id,category,region,label";

/// Parses the rich CSV format. Rows keep file order; empty device_id / label
/// cells become absent. Throws ParseError (1-based line) or DuplicateIdError.
std::vector<TransactionEvent> parse_rich_csv(std::istream& source);

/// Writes the rich CSV format. Amounts use the shortest round-trip decimal
/// representation, so parse_rich_csv(write_rich_csv(x)) == x.
void write_rich_csv(std::ostream& sink, std::span<const TransactionEvent> events);

/// Parses the Time,V1..V28,Amount,Class layout. Quoted cells are accepted.
std::vector<UlbRecord> parse_ulb_csv(std::istream& source);

/// JSON-lines event stream: one object per line with the rich CSV field names.
std::vector<TransactionEvent> parse_jsonl_events(std::istream& source);

/// Reads a file as rich CSV or JSON-lines, chosen by extension (.jsonl/.json).
std::vector<TransactionEvent> read_events_file(const std::string& path);

struct SyntheticConfig {
  std::size_t n_cards = 1000;
  std::size_t n_merchants = 300;
  std::size_t n_devices = 1200;
  std::size_t n_events = 20000;
  double fraud_rate = 0.01;
  std::size_t ring_count = 5;
  std::size_t ring_card_count = 8;
  std::size_t ring_merchant_count = 3;
  Timestamp ring_burst_window = 3600;
  Timestamp duration = 30 * 86400;
  std::uint64_t seed = 42;
};

/// Planted ground truth for one collusive ring. Never fed to a model.
struct RingTruth {
  std::size_t ring_id = 0;
  std::vector<std::string> card_ids;
  std::vector<std::string> merchant_ids;
  std::vector<std::string> device_ids;

  bool operator==(const RingTruth&) const = default;
};

struct SyntheticDataset {
  std::vector<TransactionEvent> events;  // sorted by timestamp
  std::vector<RingTruth> rings;
};

/// Throws ConfigError naming the offending field.
void validate(const SyntheticConfig& config);

/// Deterministic in `config` (seed included). Legitimate traffic follows
/// per-card habits; every fraud event comes from a planted ring burst.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// Ground-truth sidecar: {"rings":[{ring_id, card_ids[], merchant_ids[], device_ids[]}]}.
void write_ground_truth(std::ostream& sink, std::span<const RingTruth> rings);
std::vector<RingTruth> read_ground_truth(std::istream& source);

/// 64-bit FNV-1a. Used for the held-out split and for dataset fingerprints.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace detectgnn
