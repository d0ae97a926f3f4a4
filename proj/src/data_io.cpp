#include "detectgnn/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "detectgnn/error.hpp"
#include "detectgnn/rng.hpp"
#include "json.hpp"

namespace detectgnn {
namespace {

constexpr std::size_t kRichColumns = 9;
constexpr std::size_t kUlbColumns = 31;

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view unquote(std::string_view cell) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
  if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') {
    cell = cell.substr(1, cell.size() - 2);
  }
  return cell;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::optional<double> to_double(std::string_view text) {
  double value = 0.0;
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::optional<std::int64_t> to_int64(std::string_view text) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

TransactionEvent parse_rich_row(std::string_view line, std::size_t line_no) {
  const auto cells = split_commas(line);
  if (cells.size() != kRichColumns) {
    throw ParseError(line_no, "expected " + std::to_string(kRichColumns) + " columns, found " +
                                  std::to_string(cells.size()));
  }
  TransactionEvent event;
  event.txn_id = std::string(cells[0]);
  if (event.txn_id.empty()) throw ParseError(line_no, "empty txn_id");

  const auto ts = to_int64(cells[1]);
  if (!ts) throw ParseError(line_no, "timestamp is not an integer: '" + std::string(cells[1]) + "'");
  if (*ts < 0) throw ParseError(line_no, "negative timestamp");
  event.timestamp = *ts;

  const auto amount = to_double(cells[2]);
  if (!amount || !std::isfinite(*amount)) {
    throw ParseError(line_no, "amount is not numeric: '" + std::string(cells[2]) + "'");
  }
  if (*amount < 0.0) throw ParseError(line_no, "negative amount");
  event.amount = *amount;

  event.card_id = std::string(cells[3]);
  event.merchant_id = std::string(cells[4]);
  if (event.card_id.empty() || event.merchant_id.empty()) {
    throw ParseError(line_no, "card_id and merchant_id are required");
  }
  if (!cells[5].empty()) event.device_id = std::string(cells[5]);
  event.category = std::string(cells[6]);
  event.region = std::string(cells[7]);
  if (!cells[8].empty()) {
    if (cells[8] == "0") {
      event.label = 0;
    } else if (cells[8] == "1") {
      event.label = 1;
    } else {
      throw ParseError(line_no, "label must be 0, 1 or empty");
    }
  }
  return event;
}

std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line_no) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(line_no, std::string("missing string field '") + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<TransactionEvent> parse_rich_csv(std::istream& source) {
  std::string line;
  if (!read_line(source, line)) throw ParseError(1, "missing header");
  if (line != kRichCsvHeader) {
    throw ParseError(1, "unexpected header, expected '" + std::string(kRichCsvHeader) + "'");
  }
  std::vector<TransactionEvent> events;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 1;
  while (read_line(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    TransactionEvent event = parse_rich_row(line, line_no);
    if (!seen.emplace(event.txn_id, line_no).second) throw DuplicateIdError(event.txn_id, line_no);
    events.push_back(std::move(event));
  }
  return events;
}

void write_rich_csv(std::ostream& sink, std::span<const TransactionEvent> events) {
  sink << kRichCsvHeader << '\n';
  for (const auto& e : events) {
    sink << e.txn_id << ',' << e.timestamp << ',' << format_double(e.amount) << ',' << e.card_id
         << ',' << e.merchant_id << ',' << e.device_id.value_or("") << ',' << e.category << ','
         << e.region << ',';
    if (e.label) sink << *e.label;
    sink << '\n';
  }
}

std::vector<UlbRecord> parse_ulb_csv(std::istream& source) {
  std::string line;
  if (!read_line(source, line)) throw ParseError(1, "missing header");
  const auto header = split_commas(line);
  if (header.size() != kUlbColumns || unquote(header.front()) != "Time" ||
      unquote(header[29]) != "Amount" || unquote(header[30]) != "Class") {
    throw ParseError(1, "expected header Time,V1..V28,Amount,Class");
  }
  std::vector<UlbRecord> records;
  std::size_t line_no = 1;
  while (read_line(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != kUlbColumns) {
      throw ParseError(line_no, "expected 31 columns, found " + std::to_string(cells.size()));
    }
    std::array<double, kUlbColumns> values{};
    for (std::size_t i = 0; i < kUlbColumns; ++i) {
      const auto v = to_double(unquote(cells[i]));
      if (!v) throw ParseError(line_no, "non-numeric cell in column " + std::to_string(i + 1));
      values[i] = *v;
    }
    if (values[30] != 0.0 && values[30] != 1.0) {
      throw ValueError("line " + std::to_string(line_no) + ": Class must be 0 or 1");
    }
    UlbRecord record;
    record.time_offset = values[0];
    std::copy(values.begin() + 1, values.begin() + 29, record.components.begin());
    record.amount = values[29];
    record.class_label = static_cast<int>(values[30]);
    records.push_back(record);
  }
  return records;
}

std::vector<TransactionEvent> parse_jsonl_events(std::istream& source) {
  std::vector<TransactionEvent> events;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (read_line(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(line_no, ex.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    TransactionEvent event;
    event.txn_id = require_string(obj, "txn_id", line_no);
    const auto ts = obj.find("timestamp");
    if (ts == obj.end() || !ts->is_number_integer()) throw ParseError(line_no, "timestamp must be an integer");
    event.timestamp = ts->get<std::int64_t>();
    if (event.timestamp < 0) throw ParseError(line_no, "negative timestamp");
    const auto amount = obj.find("amount");
    if (amount == obj.end() || !amount->is_number()) throw ParseError(line_no, "amount must be numeric");
    event.amount = amount->get<double>();
    if (!std::isfinite(event.amount) || event.amount < 0.0) throw ParseError(line_no, "invalid amount");
    event.card_id = require_string(obj, "card_id", line_no);
    event.merchant_id = require_string(obj, "merchant_id", line_no);
    if (const auto d = obj.find("device_id"); d != obj.end() && d->is_string() && !d->get<std::string>().empty()) {
      event.device_id = d->get<std::string>();
    }
    event.category = require_string(obj, "category", line_no);
    event.region = require_string(obj, "region", line_no);
    if (const auto l = obj.find("label"); l != obj.end() && !l->is_null()) {
      if (!l->is_number_integer() || (l->get<int>() != 0 && l->get<int>() != 1)) {
        throw ParseError(line_no, "label must be 0, 1 or null");
      }
      event.label = l->get<int>();
    }
    if (!seen.emplace(event.txn_id, line_no).second) throw DuplicateIdError(event.txn_id, line_no);
    events.push_back(std::move(event));
  }
  return events;
}

std::vector<TransactionEvent> read_events_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const bool json_lines = path.ends_with(".jsonl") || path.ends_with(".json");
  return json_lines ? parse_jsonl_events(in) : parse_rich_csv(in);
}

// ---------------------------------------------------------------------------
// Synthetic generator

void validate(const SyntheticConfig& c) {
  if (c.n_cards == 0) throw ConfigError("n_cards must be positive");
  if (c.n_merchants == 0) throw ConfigError("n_merchants must be positive");
  if (c.n_devices == 0) throw ConfigError("n_devices must be positive");
  if (c.n_events == 0) throw ConfigError("n_events must be positive");
  if (!(c.fraud_rate > 0.0 && c.fraud_rate < 1.0)) throw ConfigError("fraud_rate must lie in (0,1)");
  if (c.ring_card_count == 0 || c.ring_card_count > c.n_cards) {
    throw ConfigError("ring_card_count must lie in [1, n_cards]");
  }
  if (c.ring_merchant_count == 0 || c.ring_merchant_count > c.n_merchants) {
    throw ConfigError("ring_merchant_count must lie in [1, n_merchants]");
  }
  if (c.ring_burst_window <= 0) throw ConfigError("ring_burst_window must be positive");
  if (c.duration <= 0) throw ConfigError("duration must be positive");
  if (c.ring_burst_window > c.duration) throw ConfigError("ring_burst_window exceeds duration");
  const std::size_t ring_devices = c.ring_count * std::max<std::size_t>(1, c.ring_card_count / 3);
  if (ring_devices >= c.n_devices) throw ConfigError("n_devices too small for the requested rings");
}

namespace {

const std::vector<std::string> kCategories = {"grocery", "fuel",   "restaurant", "retail",  "travel",
                                              "electronics", "pharmacy", "entertainment", "online",
                                              "jewelry"};
const std::vector<std::string> kRegions = {"US-KS", "US-MO", "US-NY", "US-CA", "US-TX", "US-FL"};

std::string padded_id(char prefix, std::size_t value, int width) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%c%0*zu", prefix, width, value);
  return buffer;
}

/// Cumulative-weight sampler.
class WeightedPicker {
 public:
  explicit WeightedPicker(const std::vector<double>& weights) : cumulative_(weights.size()) {
    std::partial_sum(weights.begin(), weights.end(), cumulative_.begin());
  }
  std::size_t pick(Rng& rng) const {
    const double target = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t lo, std::size_t hi, std::size_t count) {
  std::vector<std::size_t> pool(hi - lo);
  std::iota(pool.begin(), pool.end(), lo);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

double round_cents(double amount) { return std::max(0.5, std::round(amount * 100.0) / 100.0); }

struct Merchant {
  std::string id;
  std::size_t category;
  std::size_t region;
};

struct Card {
  std::string id;
  std::size_t home_region;
  double amount_mu;
  std::vector<std::size_t> preferred;
  std::size_t device;
};

struct Draft {
  Timestamp timestamp;
  std::size_t sequence;
  TransactionEvent event;
};

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  validate(config);
  Rng rng(config.seed);

  std::vector<Merchant> merchants(config.n_merchants);
  std::vector<double> popularity(config.n_merchants);
  for (std::size_t m = 0; m < config.n_merchants; ++m) {
    merchants[m] = {padded_id('m', m, 4), rng.index(kCategories.size()), rng.index(kRegions.size())};
    popularity[m] = 1.0 / std::pow(static_cast<double>(m + 1), 0.8);
  }
  const WeightedPicker merchant_picker(popularity);

  const std::size_t devices_per_ring = std::max<std::size_t>(1, config.ring_card_count / 3);
  const std::size_t personal_devices = config.n_devices - config.ring_count * devices_per_ring;

  std::vector<Card> cards(config.n_cards);
  std::vector<double> activity(config.n_cards);
  for (std::size_t c = 0; c < config.n_cards; ++c) {
    Card& card = cards[c];
    card.id = padded_id('c', c, 5);
    card.home_region = rng.index(kRegions.size());
    card.amount_mu = rng.normal(3.4, 0.4);
    card.device = c % personal_devices;
    for (int k = 0; k < 4; ++k) {
      std::size_t m = merchant_picker.pick(rng);
      for (int attempt = 0; attempt < 20 && merchants[m].region != card.home_region; ++attempt) {
        m = merchant_picker.pick(rng);
      }
      card.preferred.push_back(m);
    }
    activity[c] = std::exp(rng.normal(0.0, 0.5));
  }
  const WeightedPicker card_picker(activity);

  SyntheticDataset out;
  std::vector<Draft> drafts;
  drafts.reserve(config.n_events);

  auto make_event = [&](std::size_t card, std::size_t merchant, std::optional<std::size_t> device,
                        Timestamp ts, double amount, int label) {
    TransactionEvent e;
    e.timestamp = ts;
    e.amount = round_cents(amount);
    e.card_id = cards[card].id;
    e.merchant_id = merchants[merchant].id;
    if (device) e.device_id = padded_id('d', *device, 5);
    e.category = kCategories[merchants[merchant].category];
    e.region = kRegions[merchants[merchant].region];
    e.label = label;
    drafts.push_back({ts, drafts.size(), std::move(e)});
  };

  // Rings: shared cards, low-traffic merchants and reserved devices, active in bursts.
  const std::size_t fraud_total =
      config.ring_count == 0
          ? 0
          : std::min<std::size_t>(config.n_events,
                                  static_cast<std::size_t>(std::llround(config.fraud_rate * config.n_events)));
  const std::size_t tail_start =
      config.n_merchants - config.ring_merchant_count >= config.n_merchants / 2 ? config.n_merchants / 2 : 0;
  for (std::size_t r = 0; r < config.ring_count; ++r) {
    RingTruth truth;
    truth.ring_id = r;
    const auto ring_cards = sample_without_replacement(rng, 0, config.n_cards, config.ring_card_count);
    const auto ring_merchants =
        sample_without_replacement(rng, tail_start, config.n_merchants, config.ring_merchant_count);
    std::vector<std::size_t> ring_devices;
    for (std::size_t d = 0; d < devices_per_ring; ++d) {
      ring_devices.push_back(personal_devices + r * devices_per_ring + d);
    }
    for (auto c : ring_cards) truth.card_ids.push_back(cards[c].id);
    for (auto m : ring_merchants) truth.merchant_ids.push_back(merchants[m].id);
    for (auto d : ring_devices) truth.device_ids.push_back(padded_id('d', d, 5));
    out.rings.push_back(std::move(truth));

    const std::size_t quota = fraud_total / config.ring_count + (r < fraud_total % config.ring_count ? 1 : 0);
    if (quota == 0) continue;
    const std::size_t bursts = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(quota) / (2.0 * config.ring_card_count))));
    for (std::size_t b = 0; b < bursts; ++b) {
      const std::size_t in_burst = quota / bursts + (b < quota % bursts ? 1 : 0);
      const Timestamp start = static_cast<Timestamp>(
          rng.index(static_cast<std::size_t>(config.duration - config.ring_burst_window)));
      for (std::size_t i = 0; i < in_burst; ++i) {
        const std::size_t card = ring_cards[rng.index(ring_cards.size())];
        const std::size_t merchant = ring_merchants[rng.index(ring_merchants.size())];
        const std::size_t device = ring_devices[rng.index(ring_devices.size())];
        const Timestamp ts =
            start + static_cast<Timestamp>(rng.index(static_cast<std::size_t>(config.ring_burst_window) + 1));
        make_event(card, merchant, device, ts, std::exp(rng.normal(3.8, 0.8)), 1);
      }
    }
  }

  // Legitimate traffic, with occasional shopping sprees so that short
  // inter-arrival times alone do not identify fraud.
  const std::size_t legit_total = config.n_events - fraud_total;
  std::size_t legit = 0;
  while (legit < legit_total) {
    const std::size_t c = card_picker.pick(rng);
    const Card& card = cards[c];
    const Timestamp start = static_cast<Timestamp>(rng.index(static_cast<std::size_t>(config.duration)));
    const std::size_t spree = rng.bernoulli(0.12) ? 2 + rng.index(3) : 1;
    for (std::size_t i = 0; i < spree && legit < legit_total; ++i, ++legit) {
      Timestamp ts = start;
      if (i > 0) ts = std::min<Timestamp>(config.duration - 1, start + static_cast<Timestamp>(rng.index(3600)));
      const std::size_t merchant =
          rng.bernoulli(0.75) ? card.preferred[rng.index(card.preferred.size())] : merchant_picker.pick(rng);
      std::optional<std::size_t> device;
      if (rng.bernoulli(0.9)) device = card.device;
      make_event(c, merchant, device, ts, std::exp(rng.normal(card.amount_mu, 0.8)), 0);
    }
  }

  std::sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.sequence < b.sequence;
  });
  out.events.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    drafts[i].event.txn_id = padded_id('t', i, 6);
    out.events.push_back(std::move(drafts[i].event));
  }
  return out;
}

void write_ground_truth(std::ostream& sink, std::span<const RingTruth> rings) {
  nlohmann::json doc;
  doc["rings"] = nlohmann::json::array();
  for (const auto& r : rings) {
    doc["rings"].push_back({{"ring_id", r.ring_id},
                            {"card_ids", r.card_ids},
                            {"merchant_ids", r.merchant_ids},
                            {"device_ids", r.device_ids}});
  }
  sink << doc.dump(2) << '\n';
}

std::vector<RingTruth> read_ground_truth(std::istream& source) {
  const auto doc = nlohmann::json::parse(source);
  std::vector<RingTruth> rings;
  for (const auto& r : doc.at("rings")) {
    RingTruth truth;
    truth.ring_id = r.at("ring_id").get<std::size_t>();
    truth.card_ids = r.at("card_ids").get<std::vector<std::string>>();
    truth.merchant_ids = r.at("merchant_ids").get<std::vector<std::string>>();
    truth.device_ids = r.at("device_ids").get<std::vector<std::string>>();
    rings.push_back(std::move(truth));
  }
  return rings;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : bytes) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace detectgnn
