#include "detectgnn/gnn_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

#include "detectgnn/error.hpp"
#include "detectgnn/rng.hpp"

namespace detectgnn::gnn {

using graph::kNodeKindCount;
using graph::kRelationCount;

std::size_t channel_of(Relation relation, NodeKind receiver) {
  if (relation == Relation::TxnSequence) {
    if (receiver != NodeKind::Transaction) throw ShapeError("sequence edges join transactions only");
    return 6;
  }
  const std::size_t base = 2 * graph::index_of(relation);
  if (receiver == NodeKind::Transaction) return base;  // sender is the entity
  if (receiver != graph::entity_kind(relation)) throw ShapeError("relation does not touch this node kind");
  return base + 1;
}

NodeKind channel_sender(std::size_t channel) {
  if (channel >= kChannelCount) throw ShapeError("channel out of range");
  if (channel == 6) return NodeKind::Transaction;
  const auto relation = static_cast<Relation>(channel / 2);
  return channel % 2 == 0 ? graph::entity_kind(relation) : NodeKind::Transaction;
}

std::string channel_name(std::size_t channel) {
  if (channel == 6) return "TxnSequence";
  const auto relation = static_cast<Relation>(channel / 2);
  return std::string(graph::to_string(relation)) + ":" + std::string(graph::to_string(channel_sender(channel)));
}

std::string_view to_string(ClassWeighting mode) noexcept {
  return mode == ClassWeighting::InverseFrequency ? "inverse_frequency" : "none";
}

ClassWeighting parse_class_weighting(std::string_view text) {
  if (text == "inverse_frequency") return ClassWeighting::InverseFrequency;
  if (text == "none") return ClassWeighting::None;
  throw ConfigError("unknown class weighting '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (hidden_dim == 0) throw ConfigError("hidden_dim must be positive");
  if (layers == 0) throw ConfigError("layers must be >= 1");
  if (!(l2_penalty >= 0.0) || !std::isfinite(l2_penalty)) throw ConfigError("l2_penalty must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs},         {"hidden_dim", hidden_dim},
          {"layers", layers},               {"k_hops", k_hops},         {"seed", seed},
          {"class_weighting", to_string(class_weighting)},              {"l2_penalty", l2_penalty},
          {"batch_size", batch_size}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  c.learning_rate = doc.at("learning_rate").get<double>();
  c.epochs = doc.at("epochs").get<std::size_t>();
  c.hidden_dim = doc.at("hidden_dim").get<std::size_t>();
  c.layers = doc.at("layers").get<std::size_t>();
  c.k_hops = doc.at("k_hops").get<std::size_t>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.class_weighting = parse_class_weighting(doc.at("class_weighting").get<std::string>());
  c.l2_penalty = doc.at("l2_penalty").get<double>();
  c.batch_size = doc.value("batch_size", std::size_t{64});
  return c;
}

// ---------------------------------------------------------------------------

std::size_t ModelParams::input_dim(std::size_t layer, NodeKind kind) const {
  return layer == 0 ? schema.node_dim(kind) : hidden_dim;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, std::span<const double> d, std::size_t, std::size_t, bool) { n += d.size(); });
  return n;
}

void ModelParams::check_shapes() const {
  const std::size_t h = hidden_dim;
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw ShapeError("tensor " + what + " has the wrong shape");
  };
  if (h == 0) throw ShapeError("hidden_dim is zero");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lp = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      const auto in = static_cast<Eigen::Index>(input_dim(l, channel_sender(c)));
      expect(lp.W[c].rows() == static_cast<Eigen::Index>(h) && lp.W[c].cols() == in, p + "W." + channel_name(c));
    }
    for (const NodeKind k : graph::kAllNodeKinds) {
      const auto& m = lp.W_self[graph::index_of(k)];
      expect(m.rows() == static_cast<Eigen::Index>(h) && m.cols() == static_cast<Eigen::Index>(input_dim(l, k)),
             p + "W_self." + std::string(graph::to_string(k)));
    }
    for (const Relation r : graph::kAllRelations) {
      expect(lp.a[graph::index_of(r)].size() == static_cast<Eigen::Index>(2 * h + schema.edge_dim),
             p + "a." + std::string(graph::to_string(r)));
    }
    expect(lp.U.rows() == static_cast<Eigen::Index>(h) && lp.U.cols() == static_cast<Eigen::Index>(h * kRelationCount),
           p + "U");
    expect(lp.b.size() == static_cast<Eigen::Index>(h), p + "b");
  }
  expect(w_out.size() == static_cast<Eigen::Index>(h), "head.w_out");
}

void ModelParams::check_finite(std::string_view what) const {
  for_each_tensor([&](const std::string& name, std::span<const double> d, std::size_t, std::size_t, bool) {
    for (const double x : d) {
      if (!std::isfinite(x)) throw NumericError("non-finite " + std::string(what) + " in tensor " + name);
    }
  });
}

void ModelParams::set_zero() {
  for_each_tensor([](const std::string&, std::span<double> d, std::size_t, std::size_t, bool) {
    std::fill(d.begin(), d.end(), 0.0);
  });
}

ModelParams zero_params(const graph::FeatureSchema& schema, const TrainConfig& config) {
  config.validate();
  for (const NodeKind k : graph::kAllNodeKinds) {
    if (schema.node_dim(k) == 0) throw ShapeError("feature schema has a zero node dimension");
  }
  ModelParams p;
  p.schema = schema;
  p.hidden_dim = config.hidden_dim;
  const auto h = static_cast<Eigen::Index>(config.hidden_dim);
  p.layers.resize(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    auto& lp = p.layers[l];
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      lp.W[c] = Matrix::Zero(h, static_cast<Eigen::Index>(p.input_dim(l, channel_sender(c))));
    }
    for (const NodeKind k : graph::kAllNodeKinds) {
      lp.W_self[graph::index_of(k)] = Matrix::Zero(h, static_cast<Eigen::Index>(p.input_dim(l, k)));
    }
    for (auto& a : lp.a) a = Vector::Zero(2 * h + static_cast<Eigen::Index>(schema.edge_dim));
    lp.U = Matrix::Zero(h, h * static_cast<Eigen::Index>(kRelationCount));
    lp.b = Vector::Zero(h);
  }
  p.w_out = Vector::Zero(h);
  return p;
}

ModelParams init_params(const graph::FeatureSchema& schema, const TrainConfig& config) {
  ModelParams p = zero_params(schema, config);
  Rng rng(config.seed);
  p.for_each_tensor([&](const std::string&, std::span<double> d, std::size_t rows, std::size_t cols, bool reg) {
    if (!reg) return;
    // Vectors (attention, head) act on their whole length.
    const std::size_t fan_in = cols == 1 ? rows : cols;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : d) x = rng.uniform(-bound, bound);
  });
  return p;
}

// ---------------------------------------------------------------------------

double leaky_relu(double x) noexcept { return x > 0.0 ? x : kLeakySlope * x; }

namespace {

double attention_raw(const Vector& z, const Vector& s, std::span<const double> e, const Vector& a) {
  const Eigen::Index h = z.size();
  if (s.size() != h || a.size() != 2 * h + static_cast<Eigen::Index>(e.size())) {
    throw ShapeError("attention vector does not match [h_src || h_dst || e]");
  }
  const Eigen::Map<const Vector> ev(e.data(), static_cast<Eigen::Index>(e.size()));
  return a.head(h).dot(z) + a.segment(h, h).dot(s) + a.tail(ev.size()).dot(ev);
}

}  // namespace

double edge_attention(const Vector& h_src, const Vector& h_dst, std::span<const double> e, const Vector& a) {
  return leaky_relu(attention_raw(h_src, h_dst, e, a));
}

Vector group_softmax(const Vector& scores) {
  if (scores.size() == 0) return scores;
  const double m = scores.maxCoeff();
  Vector w = (scores.array() - m).exp().matrix();
  w /= w.sum();
  return w;
}

GroupMessage intra_group_aggregate(const Vector& self_rep, std::span<const Vector> neighbor_reps,
                                   std::span<const std::span<const double>> edge_features, const Matrix& W,
                                   const Vector& a) {
  if (neighbor_reps.size() != edge_features.size()) throw ShapeError("one edge feature vector per neighbor");
  GroupMessage out{Vector::Zero(W.rows()), Vector()};
  if (neighbor_reps.empty()) return out;
  std::vector<Vector> z;
  Vector scores(static_cast<Eigen::Index>(neighbor_reps.size()));
  for (std::size_t j = 0; j < neighbor_reps.size(); ++j) {
    if (neighbor_reps[j].size() != W.cols()) throw ShapeError("neighbor representation width mismatch");
    z.push_back(W * neighbor_reps[j]);
    scores[static_cast<Eigen::Index>(j)] = edge_attention(z.back(), self_rep, edge_features[j], a);
  }
  out.weights = group_softmax(scores);
  for (std::size_t j = 0; j < z.size(); ++j) out.message += out.weights[static_cast<Eigen::Index>(j)] * z[j];
  return out;
}

Vector inter_group_combine(std::span<const Vector> messages, const Vector& self_rep, const Matrix& U,
                           const Vector& b) {
  const Eigen::Index h = U.rows();
  if (messages.size() != kRelationCount || U.cols() != h * static_cast<Eigen::Index>(kRelationCount) ||
      self_rep.size() != h || b.size() != h) {
    throw ShapeError("inter_group_combine: inconsistent shapes");
  }
  Vector concat(U.cols());
  for (std::size_t r = 0; r < messages.size(); ++r) {
    if (messages[r].size() != h) throw ShapeError("inter_group_combine: message width mismatch");
    concat.segment(static_cast<Eigen::Index>(r) * h, h) = messages[r];
  }
  return (U * concat + self_rep + b).array().tanh().matrix();
}

// ---------------------------------------------------------------------------

const Vector* ProjectionMemo::find(NodeRef parent, std::size_t slot) const {
  const auto it = entries_.find((static_cast<std::uint64_t>(parent.index) << 8) | slot);
  return it == entries_.end() ? nullptr : &it->second;
}

const Vector& ProjectionMemo::insert(NodeRef parent, std::size_t slot, Vector value) {
  return entries_.insert_or_assign((static_cast<std::uint64_t>(parent.index) << 8) | slot, std::move(value))
      .first->second;
}

namespace {

constexpr std::size_t kSelfSlot = kChannelCount;  // memo slots 7.. hold W_self projections by kind

struct GroupTape {
  std::size_t channel = 0;
  std::vector<std::uint32_t> neighbors;
  std::vector<std::span<const double>> edges;
  std::vector<Vector> z;
  Vector raw;  // pre-activation scores
  Vector alpha;
};

struct NodeTape {
  Vector s;
  Vector concat;
  std::array<GroupTape, kRelationCount> groups;
};

// Lazy, memoized evaluation of h^l for the nodes the target depends on.
class Evaluator {
 public:
  Evaluator(const graph::Subgraph& sub, std::uint32_t target, const ModelParams& params,
            const ForwardOptions* options, bool record)
      : sub_(sub), target_(target), params_(params), options_(options), record_(record) {
    const std::size_t n = sub.nodes.size();
    for (const auto& node : sub.nodes) {
      if (node.features->size() != params.schema.node_dim(node.kind)) {
        throw SchemaError("node features do not match the model's feature schema");
      }
    }
    adjacency_.assign(n, {});
    for (const auto& e : sub.edges) {
      if (e.features->size() != params.schema.edge_dim) {
        throw SchemaError("edge features do not match the model's feature schema");
      }
      adjacency_[e.src][graph::index_of(e.relation)].push_back({e.dst, e.features.get()});
      adjacency_[e.dst][graph::index_of(e.relation)].push_back({e.src, e.features.get()});
    }
    const std::size_t levels = params.layer_count() + 1;
    reps_.assign(levels, std::vector<std::optional<Vector>>(n));
    if (record_) tapes_.assign(levels, std::vector<std::optional<NodeTape>>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& f = *sub.nodes[i].features;
      reps_[0][i] = Eigen::Map<const Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
    }
  }

  const Vector& rep(std::uint32_t i, std::size_t layer) {
    if (reps_[layer][i]) return *reps_[layer][i];
    const auto& node = sub_.nodes[i];
    if (!record_ && options_ && options_->reuse && i != target_ && node.kind != NodeKind::Transaction) {
      if (const Vector* cached = options_->reuse(node.parent, layer)) {
        reps_[layer][i] = *cached;
        return *reps_[layer][i];
      }
    }
    compute(i, layer);
    return *reps_[layer][i];
  }

  std::optional<NodeTape>& tape(std::uint32_t i, std::size_t layer) { return tapes_[layer][i]; }
  const std::optional<Vector>& stored(std::uint32_t i, std::size_t layer) const { return reps_[layer][i]; }
  const std::vector<std::pair<std::uint32_t, const graph::FeatureVector*>>& neighbors(std::uint32_t i,
                                                                                     std::size_t r) const {
    return adjacency_[i][r];
  }
  std::vector<std::pair<std::uint32_t, std::size_t>> fresh_entities() const { return fresh_; }

 private:
  Vector project(const Matrix& M, std::uint32_t i, std::size_t layer, std::size_t slot) {
    if (layer == 0 && options_ && options_->memo) {
      const NodeRef parent = sub_.nodes[i].parent;
      if (const Vector* hit = options_->memo->find(parent, slot)) return *hit;
      return options_->memo->insert(parent, slot, M * rep(i, 0));
    }
    return M * rep(i, layer);
  }

  void compute(std::uint32_t i, std::size_t layer) {
    const std::size_t prev = layer - 1;
    const LayerParams& lp = params_.layers[prev];
    const NodeKind kind = sub_.nodes[i].kind;
    const auto h = static_cast<Eigen::Index>(params_.hidden_dim);

    NodeTape t;
    t.s = project(lp.W_self[graph::index_of(kind)], i, prev, kSelfSlot + graph::index_of(kind));
    t.concat = Vector::Zero(h * static_cast<Eigen::Index>(kRelationCount));
    for (std::size_t r = 0; r < kRelationCount; ++r) {
      const auto& list = adjacency_[i][r];
      if (list.empty()) continue;
      GroupTape& g = t.groups[r];
      g.channel = channel_of(static_cast<Relation>(r), kind);
      g.raw.resize(static_cast<Eigen::Index>(list.size()));
      for (std::size_t j = 0; j < list.size(); ++j) {
        const auto [nb, edge] = list[j];
        g.neighbors.push_back(nb);
        g.edges.emplace_back(edge->data(), edge->size());
        g.z.push_back(project(lp.W[g.channel], nb, prev, g.channel));
        g.raw[static_cast<Eigen::Index>(j)] = attention_raw(g.z.back(), t.s, g.edges.back(), lp.a[r]);
      }
      g.alpha = group_softmax(g.raw.unaryExpr([](double x) { return leaky_relu(x); }));
      auto m = t.concat.segment(static_cast<Eigen::Index>(r) * h, h);
      for (std::size_t j = 0; j < g.z.size(); ++j) m += g.alpha[static_cast<Eigen::Index>(j)] * g.z[j];
    }
    reps_[layer][i] = (lp.U * t.concat + t.s + lp.b).array().tanh().matrix();
    if (kind != NodeKind::Transaction && i != target_) fresh_.emplace_back(i, layer);
    if (record_) tapes_[layer][i] = std::move(t);
  }

  const graph::Subgraph& sub_;
  std::uint32_t target_;
  const ModelParams& params_;
  const ForwardOptions* options_;
  bool record_;
  std::vector<std::array<std::vector<std::pair<std::uint32_t, const graph::FeatureVector*>>, kRelationCount>>
      adjacency_;
  std::vector<std::vector<std::optional<Vector>>> reps_;
  std::vector<std::vector<std::optional<NodeTape>>> tapes_;
  std::vector<std::pair<std::uint32_t, std::size_t>> fresh_;
};

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::uint32_t local_target(const graph::Subgraph& sub, NodeRef target) {
  const auto local = sub.local_index(target);
  if (!local) throw ReferenceError("target node " + std::to_string(target.index) + " is not in the subgraph");
  return *local;
}

void check_params(const ModelParams& params) {
  if (params.layers.empty()) throw ShapeError("model has no layers");
  if (params.w_out.size() != static_cast<Eigen::Index>(params.hidden_dim)) throw ShapeError("head width mismatch");
}

}  // namespace

ForwardResult forward(const graph::Subgraph& subgraph, NodeRef target, const ModelParams& params,
                      const ForwardOptions& options) {
  check_params(params);
  const std::uint32_t t = local_target(subgraph, target);
  Evaluator ev(subgraph, t, params, &options, false);
  ForwardResult out;
  out.embedding = ev.rep(t, params.layer_count());
  out.logit = params.w_out.dot(out.embedding) + params.b_out;
  out.score = sigmoid(out.logit);
  if (options.collect_entity_reps) {
    for (const auto& [i, layer] : ev.fresh_entities()) {
      if (layer >= params.layer_count()) continue;
      out.entity_reps.push_back({subgraph.nodes[i].parent, layer, *ev.stored(i, layer)});
    }
  }
  return out;
}

std::vector<Vector> node_representations(const graph::Subgraph& subgraph, NodeRef node, const ModelParams& params,
                                         std::size_t up_to) {
  check_params(params);
  if (up_to > params.layer_count()) throw ShapeError("node_representations: layer out of range");
  const std::uint32_t t = local_target(subgraph, node);
  Evaluator ev(subgraph, t, params, nullptr, false);
  std::vector<Vector> out;
  for (std::size_t l = 1; l <= up_to; ++l) out.push_back(ev.rep(t, l));
  return out;
}

// ---------------------------------------------------------------------------

ClassWeights class_weights(std::span<const int> labels, ClassWeighting mode) {
  if (labels.empty()) throw EmptyInputError("class_weights: no labels");
  ClassWeights w;
  if (mode == ClassWeighting::None) return w;
  const auto n = static_cast<double>(labels.size());
  const auto pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int y) { return y != 0; }));
  const double neg = n - pos;
  w.positive = pos > 0 ? n / (2.0 * pos) : 1.0;
  w.negative = neg > 0 ? n / (2.0 * neg) : 1.0;
  return w;
}

double clamp_probability(double p) noexcept { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

double loss(std::span<const double> scores, std::span<const int> labels, const ClassWeights& weights) {
  if (scores.size() != labels.size()) throw ShapeError("loss: scores and labels differ in length");
  double total = 0.0;
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = clamp_probability(scores[i]);
    const double w = weights.of(labels[i]);
    total += w * (labels[i] != 0 ? -std::log(p) : -std::log(1.0 - p));
    weight_sum += w;
  }
  return weight_sum > 0.0 ? total / weight_sum : 0.0;
}

namespace {

double l2_term(const ModelParams& params) {
  double sum = 0.0;
  params.for_each_tensor([&](const std::string&, std::span<const double> d, std::size_t, std::size_t, bool reg) {
    if (!reg) return;
    for (const double x : d) sum += x * x;
  });
  return sum;
}

double batch_weight(std::span<const BatchItem> batch, const ClassWeights& weights) {
  double s = 0.0;
  for (const auto& item : batch) s += weights.of(item.label);
  return s;
}

}  // namespace

Objective objective(std::span<const BatchItem> batch, const ModelParams& params, const ClassWeights& weights,
                    double l2_penalty) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& item : batch) {
    scores.push_back(forward(*item.subgraph, item.target, params).score);
    labels.push_back(item.label);
  }
  Objective o;
  o.data_loss = loss(scores, labels, weights);
  o.total = o.data_loss + 0.5 * l2_penalty * l2_term(params);
  return o;
}

BackwardResult backward(std::span<const BatchItem> batch, const ModelParams& params, const ClassWeights& weights,
                        double l2_penalty) {
  check_params(params);
  BackwardResult out{{}, params};
  ModelParams& grad = out.gradients;
  grad.set_zero();
  const double weight_sum = batch_weight(batch, weights);
  const std::size_t L = params.layer_count();
  const auto h = static_cast<Eigen::Index>(params.hidden_dim);

  double data_loss = 0.0;
  for (const auto& item : batch) {
    const double w = weights.of(item.label);
    const std::uint32_t t = local_target(*item.subgraph, item.target);
    Evaluator ev(*item.subgraph, t, params, nullptr, true);
    const Vector emb = ev.rep(t, L);
    const double logit = params.w_out.dot(emb) + params.b_out;
    const double p = sigmoid(logit);
    const double pc = clamp_probability(p);
    if (weight_sum > 0.0) data_loss += w * (item.label != 0 ? -std::log(pc) : -std::log(1.0 - pc)) / weight_sum;
    if (w == 0.0 || weight_sum == 0.0) continue;

    const double g_logit = w * (p - (item.label != 0 ? 1.0 : 0.0)) / weight_sum;
    grad.w_out += g_logit * emb;
    grad.b_out += g_logit;

    const std::size_t n = item.subgraph->nodes.size();
    std::vector<std::vector<std::optional<Vector>>> g(L + 1, std::vector<std::optional<Vector>>(n));
    g[L][t] = g_logit * params.w_out;
    auto accumulate = [&](std::size_t layer, std::uint32_t i, const Vector& v) {
      if (layer == 0) return;
      if (g[layer][i]) {
        *g[layer][i] += v;
      } else {
        g[layer][i] = v;
      }
    };

    for (std::size_t layer = L; layer >= 1; --layer) {
      const std::size_t prev = layer - 1;
      const LayerParams& lp = params.layers[prev];
      LayerParams& gl = grad.layers[prev];
      for (std::uint32_t i = 0; i < n; ++i) {
        if (!g[layer][i]) continue;
        const auto& tape = ev.tape(i, layer);
        const Vector& hv = *ev.stored(i, layer);
        const Vector g_pre = g[layer][i]->array() * (1.0 - hv.array().square());
        gl.U.noalias() += g_pre * tape->concat.transpose();
        gl.b += g_pre;
        const Vector g_concat = lp.U.transpose() * g_pre;
        Vector g_s = g_pre;
        for (std::size_t r = 0; r < kRelationCount; ++r) {
          const GroupTape& gt = tape->groups[r];
          if (gt.neighbors.empty()) continue;
          const auto g_m = g_concat.segment(static_cast<Eigen::Index>(r) * h, h);
          const auto count = static_cast<Eigen::Index>(gt.neighbors.size());
          Vector g_alpha(count);
          for (Eigen::Index j = 0; j < count; ++j) g_alpha[j] = g_m.dot(gt.z[static_cast<std::size_t>(j)]);
          const double mean = gt.alpha.dot(g_alpha);
          const Vector& a = lp.a[r];
          for (Eigen::Index j = 0; j < count; ++j) {
            const auto js = static_cast<std::size_t>(j);
            const double g_act = gt.alpha[j] * (g_alpha[j] - mean);
            const double g_raw = g_act * (gt.raw[j] > 0.0 ? 1.0 : kLeakySlope);
            const auto& e = gt.edges[js];
            const Eigen::Map<const Vector> ev_e(e.data(), static_cast<Eigen::Index>(e.size()));
            gl.a[r].head(h) += g_raw * gt.z[js];
            gl.a[r].segment(h, h) += g_raw * tape->s;
            gl.a[r].tail(ev_e.size()) += g_raw * ev_e;
            g_s += g_raw * a.segment(h, h);
            const Vector g_z = gt.alpha[j] * g_m + g_raw * a.head(h);
            const std::uint32_t nb = gt.neighbors[js];
            gl.W[gt.channel].noalias() += g_z * ev.rep(nb, prev).transpose();
            if (prev >= 1) accumulate(prev, nb, lp.W[gt.channel].transpose() * g_z);
          }
        }
        const auto kind = graph::index_of(item.subgraph->nodes[i].kind);
        gl.W_self[kind].noalias() += g_s * ev.rep(i, prev).transpose();
        if (prev >= 1) accumulate(prev, i, lp.W_self[kind].transpose() * g_s);
      }
    }
  }

  if (l2_penalty > 0.0) {
    // Walk both parameter sets in lockstep; tensor order is fixed.
    std::vector<std::span<const double>> values;
    params.for_each_tensor([&](const std::string&, std::span<const double> d, std::size_t, std::size_t, bool) {
      values.push_back(d);
    });
    std::size_t idx = 0;
    grad.for_each_tensor([&](const std::string&, std::span<double> d, std::size_t, std::size_t, bool reg) {
      const auto& v = values[idx++];
      if (!reg) return;
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += l2_penalty * v[k];
    });
  }
  grad.check_finite("gradient");
  out.objective.data_loss = data_loss;
  out.objective.total = data_loss + 0.5 * l2_penalty * l2_term(params);
  return out;
}

GradCheckResult grad_check(const ModelParams& params, std::span<const BatchItem> batch, const ClassWeights& weights,
                           double l2_penalty, double epsilon, std::uint64_t seed, double fraction) {
  if (!(epsilon > 0.0)) throw ValueError("grad_check: epsilon must be positive");
  const BackwardResult analytic = backward(batch, params, weights, l2_penalty);

  struct Entry {
    std::string tensor;
    std::size_t tensor_index;
    std::size_t offset;
  };
  std::vector<Entry> all;
  std::size_t ti = 0;
  params.for_each_tensor([&](const std::string& name, std::span<const double> d, std::size_t, std::size_t, bool) {
    for (std::size_t k = 0; k < d.size(); ++k) all.push_back({name, ti, k});
    ++ti;
  });
  Rng rng(seed);
  rng.shuffle(std::span<Entry>(all));
  const auto wanted = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(all.size()))));
  all.resize(std::min(all.size(), wanted));

  auto entry_ptr = [](ModelParams& p, const Entry& e) {
    double* ptr = nullptr;
    std::size_t idx = 0;
    p.for_each_tensor([&](const std::string&, std::span<double> d, std::size_t, std::size_t, bool) {
      if (idx++ == e.tensor_index) ptr = &d[e.offset];
    });
    return ptr;
  };

  GradCheckResult result;
  ModelParams probe = params;
  ModelParams grad = analytic.gradients;
  for (const Entry& e : all) {
    double* x = entry_ptr(probe, e);
    const double orig = *x;
    *x = orig + epsilon;
    const double plus = objective(batch, probe, weights, l2_penalty).total;
    *x = orig - epsilon;
    const double minus = objective(batch, probe, weights, l2_penalty).total;
    *x = orig;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double exact = *entry_ptr(grad, e);
    const double rel = std::abs(exact - numeric) / std::max({1e-6, std::abs(exact), std::abs(numeric)});
    if (result.checked == 0 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_tensor = e.tensor;
    }
    ++result.checked;
  }
  return result;
}

// ---------------------------------------------------------------------------

TrainReport train(const SampleProvider& data, const graph::FeatureSchema& schema, const TrainConfig& config,
                  const ModelParams* initial, const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw EmptyInputError("train: empty dataset");
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.params = initial ? *initial : init_params(schema, config);
  report.params.check_shapes();
  std::vector<int> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) labels[i] = data.label(i);
  report.weights = class_weights(labels, config.class_weighting);

  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> scratch(config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double weighted_loss = 0.0;
    double weight_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<BatchItem> batch;
      for (std::size_t k = begin; k < end; ++k) {
        const Sample& s = data.fetch(order[k], scratch[k - begin]);
        batch.push_back({&s.subgraph, s.target, s.label});
      }
      BackwardResult step;
      try {
        step = backward(batch, report.params, report.weights, config.l2_penalty);
      } catch (const NumericError& ex) {
        throw TrainingError(epoch, ex.what());
      }
      const double bw = batch_weight(batch, report.weights);
      weighted_loss += step.objective.data_loss * bw;
      weight_total += bw;
      if (!std::isfinite(step.objective.total)) throw TrainingError(epoch, "loss is not finite");

      std::vector<std::span<const double>> g;
      step.gradients.for_each_tensor(
          [&](const std::string&, std::span<const double> d, std::size_t, std::size_t, bool) { g.push_back(d); });
      std::size_t idx = 0;
      report.params.for_each_tensor([&](const std::string&, std::span<double> d, std::size_t, std::size_t, bool) {
        const auto& gd = g[idx++];
        for (std::size_t k = 0; k < d.size(); ++k) d[k] -= config.learning_rate * gd[k];
      });
    }
    const double mean = weight_total > 0.0 ? weighted_loss / weight_total : 0.0;
    if (!std::isfinite(mean)) throw TrainingError(epoch, "loss is not finite");
    try {
      report.params.check_finite();
    } catch (const NumericError& ex) {
      throw TrainingError(epoch, ex.what());
    }
    report.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------

nlohmann::json to_checkpoint(const ModelParams& params, const TrainConfig& config) {
  params.check_shapes();
  nlohmann::json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["config"] = config.to_json();
  nlohmann::json dims;
  for (const NodeKind k : graph::kAllNodeKinds) dims[std::string(graph::to_string(k))] = params.schema.node_dim(k);
  doc["feature_schema"] = {{"node_dims", dims}, {"edge_dim", params.schema.edge_dim}};
  doc["hidden_dim"] = params.hidden_dim;
  doc["layers"] = params.layer_count();
  auto& tensors = doc["tensors"] = nlohmann::json::array();
  params.for_each_tensor([&](const std::string& name, std::span<const double> d, std::size_t rows, std::size_t cols,
                             bool) {
    std::vector<double> row_major(d.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) row_major[r * cols + c] = d[c * rows + r];  // Eigen is column-major
    }
    tensors.push_back({{"name", name}, {"shape", {rows, cols}}, {"data", row_major}});
  });
  return doc;
}

std::pair<ModelParams, TrainConfig> from_checkpoint(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<std::string>() != kModelSchemaVersion) {
      throw SchemaError("checkpoint version '" + doc.at("schema_version").get<std::string>() + "' is not supported");
    }
    TrainConfig config = TrainConfig::from_json(doc.at("config"));
    graph::FeatureSchema schema;
    for (const NodeKind k : graph::kAllNodeKinds) {
      schema.node_dims[graph::index_of(k)] =
          doc.at("feature_schema").at("node_dims").at(std::string(graph::to_string(k))).get<std::size_t>();
    }
    schema.edge_dim = doc.at("feature_schema").at("edge_dim").get<std::size_t>();
    config.hidden_dim = doc.at("hidden_dim").get<std::size_t>();
    config.layers = doc.at("layers").get<std::size_t>();
    ModelParams params = zero_params(schema, config);

    const auto& tensors = doc.at("tensors");
    std::size_t idx = 0;
    params.for_each_tensor([&](const std::string& name, std::span<double> d, std::size_t rows, std::size_t cols,
                               bool) {
      if (idx >= tensors.size()) throw ShapeError("checkpoint is missing tensor " + name);
      const auto& t = tensors[idx++];
      if (t.at("name").get<std::string>() != name) {
        throw ShapeError("checkpoint tensor '" + t.at("name").get<std::string>() + "' where '" + name + "' expected");
      }
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto values = t.at("data").get<std::vector<double>>();
      if (shape != std::vector<std::size_t>{rows, cols} || values.size() != rows * cols) {
        throw ShapeError("checkpoint tensor " + name + " has shape mismatch");
      }
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) d[c * rows + r] = values[r * cols + c];
      }
    });
    if (idx != tensors.size()) throw ShapeError("checkpoint holds unexpected extra tensors");
    params.check_finite();
    return {std::move(params), config};
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed checkpoint: ") + ex.what());
  } catch (const ConfigError& ex) {
    throw SchemaError(std::string("checkpoint config invalid: ") + ex.what());
  }
}

}  // namespace detectgnn::gnn
