#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "detectgnn/graph_store.hpp"
#include "json.hpp"

namespace detectgnn::gnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using graph::NodeKind;
using graph::NodeRef;
using graph::Relation;

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr std::string_view kModelSchemaVersion = "detectgnn-model/1";

// A projection channel is a (relation, sending node kind) pair. Entity
// relations carry messages both ways, the sequence relation only between
// transactions, so there are seven channels.
inline constexpr std::size_t kChannelCount = 7;

std::size_t channel_of(Relation relation, NodeKind receiver);
NodeKind channel_sender(std::size_t channel);
std::string channel_name(std::size_t channel);

enum class ClassWeighting { InverseFrequency, None };

std::string_view to_string(ClassWeighting mode) noexcept;
ClassWeighting parse_class_weighting(std::string_view text);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 20;
  std::size_t hidden_dim = 16;
  std::size_t layers = 2;
  std::size_t k_hops = 2;
  std::uint64_t seed = 42;
  ClassWeighting class_weighting = ClassWeighting::InverseFrequency;
  double l2_penalty = 1e-4;
  std::size_t batch_size = 64;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct LayerParams {
  std::array<Matrix, kChannelCount> W;               // hidden x in_dim(sender)
  std::array<Matrix, graph::kNodeKindCount> W_self;  // hidden x in_dim(kind)
  std::array<Vector, graph::kRelationCount> a;       // 2*hidden + edge_dim
  Matrix U;                                          // hidden x (hidden * relation_count)
  Vector b;                                          // hidden
};

struct ModelParams {
  graph::FeatureSchema schema;
  std::size_t hidden_dim = 0;
  std::vector<LayerParams> layers;
  Vector w_out;
  double b_out = 0.0;

  std::size_t layer_count() const noexcept { return layers.size(); }
  /// Width of h^{layer} for a node of `kind` (layer 0 is the raw feature vector).
  std::size_t input_dim(std::size_t layer, NodeKind kind) const;
  std::size_t parameter_count() const;

  /// Visits every tensor in a fixed order:
  /// f(name, std::span<double> data, rows, cols, regularized).
  template <typename F>
  void for_each_tensor(F&& f);
  template <typename F>
  void for_each_tensor(F&& f) const;

  /// Throws ShapeError when any tensor deviates from the declared shapes.
  void check_shapes() const;
  /// Throws NumericError naming the first tensor holding NaN or inf.
  void check_finite(std::string_view what = "parameter") const;
  void set_zero();
};

/// Tensors with declared shapes and all entries zero.
ModelParams zero_params(const graph::FeatureSchema& schema, const TrainConfig& config);
/// Uniform in +-1/sqrt(fan_in) per tensor, biases 0. Deterministic in config.seed.
ModelParams init_params(const graph::FeatureSchema& schema, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Building blocks

double leaky_relu(double x) noexcept;

/// Leaky-rectified a . [h_src || h_dst || e].
double edge_attention(const Vector& h_src, const Vector& h_dst, std::span<const double> e, const Vector& a);

/// Max-subtracted softmax. An empty input gives an empty output.
Vector group_softmax(const Vector& scores);

struct GroupMessage {
  Vector message;
  Vector weights;
};

/// Attention-weighted sum of W * h_j over one relation group. `self_rep` is
/// the receiver's projected representation. Empty group -> zero message.
GroupMessage intra_group_aggregate(const Vector& self_rep, std::span<const Vector> neighbor_reps,
                                   std::span<const std::span<const double>> edge_features, const Matrix& W,
                                   const Vector& a);

/// tanh(U * concat(messages) + self_rep + b). One message per relation.
Vector inter_group_combine(std::span<const Vector> messages, const Vector& self_rep, const Matrix& U,
                           const Vector& b);

// ---------------------------------------------------------------------------
// Forward

/// Layer-0 projections keyed by parent node. Valid for one parameter set;
/// lets overlapping subgraphs share work.
class ProjectionMemo {
 public:
  const Vector* find(NodeRef parent, std::size_t slot) const;
  const Vector& insert(NodeRef parent, std::size_t slot, Vector value);
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::unordered_map<std::uint64_t, Vector> entries_;
};

struct ForwardOptions {
  /// Precomputed h^{layer} of an entity node by parent ref, or nullptr.
  /// Never consulted for the target or for transactions.
  std::function<const Vector*(NodeRef, std::size_t layer)> reuse;
  ProjectionMemo* memo = nullptr;
  /// Report freshly computed entity representations (layers 1..L-1).
  bool collect_entity_reps = false;
};

struct EntityRep {
  NodeRef parent;
  std::size_t layer = 0;
  Vector h;
};

struct ForwardResult {
  Vector embedding;
  double logit = 0.0;
  double score = 0.5;
  std::vector<EntityRep> entity_reps;
};

/// L rounds of message passing. Only representations that influence the
/// target are evaluated; the result equals full synchronous updates.
/// Throws ReferenceError when `target` is not in the subgraph.
ForwardResult forward(const graph::Subgraph& subgraph, NodeRef target, const ModelParams& params,
                      const ForwardOptions& options = {});

/// h^1 .. h^{up_to} of `node`. Exact when the subgraph reaches up_to hops
/// around it.
std::vector<Vector> node_representations(const graph::Subgraph& subgraph, NodeRef node, const ModelParams& params,
                                         std::size_t up_to);

// ---------------------------------------------------------------------------
// Loss and gradients

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
  double of(int label) const noexcept { return label != 0 ? positive : negative; }
};

/// inverse_frequency: w_c = N / (2 N_c) (1 when a class is absent).
ClassWeights class_weights(std::span<const int> labels, ClassWeighting mode);

double clamp_probability(double p) noexcept;

/// Weighted binary cross-entropy, sum(w_i l_i) / sum(w_i). Scores are
/// clamped to [1e-12, 1 - 1e-12] before the log. A zero total weight gives 0.
double loss(std::span<const double> scores, std::span<const int> labels, const ClassWeights& weights);

struct Sample {
  graph::Subgraph subgraph;
  NodeRef target;
  int label = 0;
};

struct BatchItem {
  const graph::Subgraph* subgraph = nullptr;
  NodeRef target;
  int label = 0;
};

struct Objective {
  double data_loss = 0.0;
  double total = 0.0;  // data_loss + l2/2 * sum of squared non-bias weights
};

Objective objective(std::span<const BatchItem> batch, const ModelParams& params, const ClassWeights& weights,
                    double l2_penalty);

struct BackwardResult {
  Objective objective;
  ModelParams gradients;
};

/// Exact reverse-mode gradients of objective(). Throws NumericError naming
/// the tensor when a gradient is not finite.
BackwardResult backward(std::span<const BatchItem> batch, const ModelParams& params, const ClassWeights& weights,
                        double l2_penalty);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_tensor;
};

/// Central differences on a random sample of parameter entries, relative
/// error |a - n| / max(1e-6, |a|, |n|).
GradCheckResult grad_check(const ModelParams& params, std::span<const BatchItem> batch, const ClassWeights& weights,
                           double l2_penalty, double epsilon, std::uint64_t seed, double fraction = 0.05);

// ---------------------------------------------------------------------------
// Training

class SampleProvider {
 public:
  virtual ~SampleProvider() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  /// May return `scratch` after filling it, or a reference to stored data.
  virtual const Sample& fetch(std::size_t i, Sample& scratch) const = 0;
};

class InMemorySamples : public SampleProvider {
 public:
  explicit InMemorySamples(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  int label(std::size_t i) const override { return samples_.at(i).label; }
  const Sample& fetch(std::size_t i, Sample&) const override { return samples_.at(i); }

 private:
  std::vector<Sample> samples_;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  ModelParams params;
  double seconds = 0.0;
  ClassWeights weights;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Shuffled mini-batch gradient descent. `initial` overrides init_params.
/// Throws EmptyInputError, TrainingError(epoch) on a non-finite loss.
TrainReport train(const SampleProvider& data, const graph::FeatureSchema& schema, const TrainConfig& config,
                  const ModelParams* initial = nullptr, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json to_checkpoint(const ModelParams& params, const TrainConfig& config);
/// Returns params and the stored config. Throws SchemaError / ShapeError.
std::pair<ModelParams, TrainConfig> from_checkpoint(const nlohmann::json& doc);

// ---------------------------------------------------------------------------

template <typename F>
void ModelParams::for_each_tensor(F&& f) {
  auto visit = [&](const std::string& name, double* data, std::size_t rows, std::size_t cols, bool reg) {
    f(name, std::span<double>(data, rows * cols), rows, cols, reg);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerParams& lp = layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      visit(prefix + "W." + channel_name(c), lp.W[c].data(), lp.W[c].rows(), lp.W[c].cols(), true);
    }
    for (const NodeKind k : graph::kAllNodeKinds) {
      auto& m = lp.W_self[graph::index_of(k)];
      visit(prefix + "W_self." + std::string(graph::to_string(k)), m.data(), m.rows(), m.cols(), true);
    }
    for (const Relation r : graph::kAllRelations) {
      auto& v = lp.a[graph::index_of(r)];
      visit(prefix + "a." + std::string(graph::to_string(r)), v.data(), v.size(), 1, true);
    }
    visit(prefix + "U", lp.U.data(), lp.U.rows(), lp.U.cols(), true);
    visit(prefix + "b", lp.b.data(), lp.b.size(), 1, false);
  }
  visit("head.w_out", w_out.data(), w_out.size(), 1, true);
  visit("head.b_out", &b_out, 1, 1, false);
}

template <typename F>
void ModelParams::for_each_tensor(F&& f) const {
  const_cast<ModelParams*>(this)->for_each_tensor(
      [&](const std::string& name, std::span<double> data, std::size_t rows, std::size_t cols, bool reg) {
        f(name, std::span<const double>(data.data(), data.size()), rows, cols, reg);
      });
}

}  // namespace detectgnn::gnn
