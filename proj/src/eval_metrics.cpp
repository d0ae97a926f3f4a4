#include "detectgnn/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "detectgnn/error.hpp"
#include "detectgnn/rng.hpp"

namespace detectgnn::eval {
namespace {

void check_aligned(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  for (const int y : labels) {
    if (y != 0 && y != 1) throw ValueError("labels must be 0 or 1");
  }
  for (const double s : scores) {
    if (std::isnan(s)) throw ValueError("score is NaN");
  }
}

double ratio(std::uint64_t num, std::uint64_t den, bool& degenerate) {
  degenerate = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion_at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_aligned(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      ++(predicted ? c.true_positive : c.false_negative);
    } else {
      ++(predicted ? c.false_positive : c.true_negative);
    }
  }
  return c;
}

double f1_score(double precision, double recall) {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

Rates summarize(const ConfusionCounts& c) {
  if (c.total() == 0) throw EmptyInputError("summarize: no samples");
  Rates r;
  r.accuracy = static_cast<double>(c.true_positive + c.true_negative) / static_cast<double>(c.total());
  r.precision = ratio(c.true_positive, c.true_positive + c.false_positive, r.precision_degenerate);
  r.recall = ratio(c.true_positive, c.true_positive + c.false_negative, r.recall_degenerate);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

AucFraction roc_auc_fraction(std::span<const double> scores, std::span<const int> labels) {
  check_aligned(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::uint64_t negatives_below = 0;
  std::uint64_t numerator = 0;
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      ++(labels[order[j]] == 1 ? pos : neg);
      ++j;
    }
    numerator += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    i = j;
  }
  if (positives == 0 || negatives_below == 0) {
    throw DegenerateInputError("AUC needs at least one positive and one negative label");
  }
  return {numerator, 2 * positives * negatives_below};
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  return roc_auc_fraction(scores, labels).value();
}

double nearest_rank(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw EmptyInputError("percentile of an empty list");
  if (!(p > 0.0 && p <= 100.0)) throw ValueError("percentile must be in (0, 100]");
  std::size_t rank = 0;
  if (p == std::floor(p)) {
    // integer percentiles avoid rounding in p * n / 100
    const auto pi = static_cast<std::uint64_t>(p);
    rank = static_cast<std::size_t>((pi * sorted.size() + 99) / 100);
  } else {
    rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  }
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

Percentiles latency_percentiles(std::span<const double> latencies) {
  if (latencies.empty()) throw EmptyInputError("latency_percentiles: no samples");
  std::vector<double> sorted(latencies.begin(), latencies.end());
  std::sort(sorted.begin(), sorted.end());
  return {nearest_rank(sorted, 50.0), nearest_rank(sorted, 95.0), nearest_rank(sorted, 99.0)};
}

nlohmann::json MetricsReport::to_json() const {
  return {{"accuracy", rates.accuracy},
          {"precision", rates.precision},
          {"recall", rates.recall},
          {"f1", rates.f1},
          {"auc", auc},
          {"threshold", threshold},
          {"precision_degenerate", rates.precision_degenerate},
          {"recall_degenerate", rates.recall_degenerate},
          {"confusion",
           {{"true_positive", confusion.true_positive},
            {"false_positive", confusion.false_positive},
            {"true_negative", confusion.true_negative},
            {"false_negative", confusion.false_negative}}}};
}

MetricsReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricsReport r;
  r.threshold = threshold;
  r.confusion = confusion_at_threshold(scores, labels, threshold);
  r.rates = summarize(r.confusion);
  r.auc = roc_auc(scores, labels);
  return r;
}

// ---------------------------------------------------------------------------

void BaselineConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("baseline learning_rate must be > 0");
  if (epochs == 0) throw ConfigError("baseline epochs must be positive");
  if (batch_size == 0) throw ConfigError("baseline batch_size must be positive");
  if (!(l2_penalty >= 0.0)) throw ConfigError("baseline l2_penalty must be >= 0");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs}, {"batch_size", batch_size},
          {"seed", seed}, {"class_weighting", gnn::to_string(class_weighting)}, {"l2_penalty", l2_penalty}};
}

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double linear(const std::vector<double>& w, double b, std::span<const double> x) {
  double z = b;
  for (std::size_t d = 0; d < w.size(); ++d) z += w[d] * x[d];
  return z;
}

}  // namespace

BaselineParams train_baseline(std::span<const graph::FeatureVector> rows, std::span<const int> labels,
                              const BaselineConfig& config) {
  config.validate();
  if (rows.empty()) throw EmptyInputError("train_baseline: no rows");
  if (rows.size() != labels.size()) throw ShapeError("train_baseline: rows and labels differ in length");
  BaselineParams p;
  p.normalizer = features::fit_normalizer(rows);
  const std::size_t dims = p.normalizer.dims();
  p.weights.assign(dims, 0.0);

  std::vector<graph::FeatureVector> x;
  x.reserve(rows.size());
  for (const auto& r : rows) x.push_back(features::normalize(p.normalizer, r));
  const gnn::ClassWeights cw = gnn::class_weights(labels, config.class_weighting);

  Rng rng(config.seed);
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(dims);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      double weight_sum = 0.0;
      for (std::size_t k = begin; k < end; ++k) weight_sum += cw.of(labels[order[k]]);
      if (weight_sum == 0.0) continue;
      std::fill(grad.begin(), grad.end(), 0.0);
      double grad_b = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        const double prob = logistic(linear(p.weights, p.bias, x[i]));
        const double w = cw.of(labels[i]);
        const double pc = gnn::clamp_probability(prob);
        epoch_loss += w * (labels[i] ? -std::log(pc) : -std::log(1.0 - pc));
        const double g = w * (prob - labels[i]) / weight_sum;
        for (std::size_t d = 0; d < dims; ++d) grad[d] += g * x[i][d];
        grad_b += g;
      }
      for (std::size_t d = 0; d < dims; ++d) {
        p.weights[d] -= config.learning_rate * (grad[d] + config.l2_penalty * p.weights[d]);
      }
      p.bias -= config.learning_rate * grad_b;
    }
    if (!std::isfinite(epoch_loss) || !std::isfinite(p.bias)) throw TrainingError(epoch, "baseline diverged");
  }
  return p;
}

double baseline_score(const BaselineParams& params, std::span<const double> row) {
  if (row.size() != params.weights.size()) throw ShapeError("baseline_score: row width mismatch");
  return logistic(linear(params.weights, params.bias, features::normalize(params.normalizer, row)));
}

// ---------------------------------------------------------------------------

std::string Comparison::table() const {
  std::string out = "Model                 Accuracy  Precision  Recall   F1-Score  AUC\n";
  auto row = [&](const char* name, const MetricsReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-20s  %7.1f%%  %8.1f%%  %6.1f%%  %7.1f%%  %.3f\n", name, 100 * r.rates.accuracy,
                  100 * r.rates.precision, 100 * r.rates.recall, 100 * r.rates.f1, r.auc);
    out += buf;
  };
  row("GNN-based", gnn);
  row("Traditional ML", baseline);
  return out;
}

nlohmann::json Comparison::to_json() const {
  return {{"gnn", gnn.to_json()},
          {"baseline", baseline.to_json()},
          {"deltas",
           {{"accuracy", deltas.accuracy},
            {"precision", deltas.precision},
            {"recall", deltas.recall},
            {"f1", deltas.f1},
            {"auc", deltas.auc}}}};
}

Comparison compare(std::span<const double> gnn_scores, std::span<const double> baseline_scores,
                   std::span<const int> labels, double threshold) {
  if (gnn_scores.size() != labels.size() || baseline_scores.size() != labels.size()) {
    throw ShapeError("compare: score vectors and labels are not aligned");
  }
  Comparison c;
  c.gnn = evaluate(gnn_scores, labels, threshold);
  c.baseline = evaluate(baseline_scores, labels, threshold);
  c.deltas = {c.gnn.rates.accuracy - c.baseline.rates.accuracy, c.gnn.rates.precision - c.baseline.rates.precision,
              c.gnn.rates.recall - c.baseline.rates.recall, c.gnn.rates.f1 - c.baseline.rates.f1,
              c.gnn.auc - c.baseline.auc};
  return c;
}

}  // namespace detectgnn::eval
