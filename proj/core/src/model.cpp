#include "sprop/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sprop/error.hpp"

namespace sprop {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

void validate_config(const SPropConfig& c) {
  if (c.hidden == 0) throw ModelError("hidden dimension must be positive");
  if (c.emotion_dims == 0) throw ModelError("emotion dimension must be at least 1");
  if (c.outputs == 0) throw ModelError("at least one output is required");
  if (c.task == TaskKind::Discrete && c.outputs < 2) throw ModelError("discrete task needs at least 2 classes");
  if (c.layers == 0) throw ModelError("at least one SProp layer is required");
  if (c.attn_hidden == 0 || c.cont_head_hidden == 0) throw ModelError("head dimensions must be positive");
  if (std::any_of(c.disc_head_hidden.begin(), c.disc_head_hidden.end(), [](std::size_t d) { return d == 0; })) {
    throw ModelError("discrete head dimensions must be positive");
  }
  if (c.pos_vocab == 0 || c.dep_vocab == 0) throw ModelError("embedding vocabularies must be nonempty");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ModelError("dropout must be in [0,1)");
  if (!c.emotion_names.empty() && c.emotion_names.size() != c.emotion_dims) {
    throw ModelError("emotion_names does not match emotion_dims");
  }
  if (!c.output_names.empty() && c.output_names.size() != c.outputs) {
    throw ModelError("output_names does not match outputs");
  }
}

SPropModel::SPropModel(SPropConfig config) : config_(std::move(config)) {
  validate_config(config_);
  const auto H = config_.hidden;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto prefix = "layer" + std::to_string(l) + ".";
    add(prefix + "W_x", {l == 0 ? config_.emotion_dims + 1 : H, H});
    add(prefix + "b_x", {1, H});
    add(prefix + "W_s", {4 * H, H});
    add(prefix + "b_s", {1, H});
  }
  add("pos_embed", {config_.pos_vocab, H});
  add("dep_embed", {config_.dep_vocab, H});
  add("attn.W1", {2 * H, config_.attn_hidden});
  add("attn.b1", {1, config_.attn_hidden});
  add("attn.W2", {config_.attn_hidden, 1});
  add("attn.b2", {1, 1});
  if (config_.task == TaskKind::Continuous) {
    for (std::size_t m = 0; m < config_.outputs; ++m) {
      const auto prefix = "head" + std::to_string(m) + ".";
      add(prefix + "W1", {2 * H, config_.cont_head_hidden});
      add(prefix + "b1", {1, config_.cont_head_hidden});
      add(prefix + "W2", {config_.cont_head_hidden, 1});
      add(prefix + "b2", {1, 1});
    }
  } else {
    std::size_t fan_in = 2 * H;
    std::size_t k = 1;
    for (const auto width : config_.disc_head_hidden) {
      add("head.W" + std::to_string(k), {fan_in, width});
      add("head.b" + std::to_string(k), {1, width});
      fan_in = width;
      ++k;
    }
    add("head.W" + std::to_string(k), {fan_in, config_.outputs});
    add("head.b" + std::to_string(k), {1, config_.outputs});
  }
}

void SPropModel::add(std::string name, Shape shape) {
  params_.push_back({std::move(name), Tensor::zeros(shape, true)});
}

const Tensor& SPropModel::param(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ModelError("unknown parameter " + std::string(name));
}

Tensor& SPropModel::param(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).param(name));
}

std::size_t SPropModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void SPropModel::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void SPropModel::set_dropout(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ModelError("dropout must be in [0,1)");
  config_.dropout = p;
}

SPropModel SPropModel::clone() const {
  SPropModel copy = *this;
  for (auto& p : copy.params_) p.value = p.value.clone();
  return copy;
}

SPropModel init_model(const SPropConfig& config) {
  SPropModel model(config);
  ad::Rng rng(config.seed);
  for (auto& p : model.params_) {
    auto data = p.value.data();
    const bool bias = p.name.find(".b") != std::string::npos;
    const bool embedding = p.name.ends_with("_embed");
    if (bias) continue;
    if (embedding) {
      // Box-Muller, both outputs used.
      for (std::size_t i = 0; i < data.size(); i += 2) {
        const double u1 = 1.0 - ad::uniform01(rng);
        const double u2 = ad::uniform01(rng);
        const double r = std::sqrt(-2.0 * std::log(u1)) * 0.02;
        data[i] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < data.size()) data[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
      }
    } else {
      const double bound = std::sqrt(1.0 / static_cast<double>(p.value.rows()));
      for (auto& x : data) x = (2.0 * ad::uniform01(rng) - 1.0) * bound;
    }
  }
  return model;
}

// --- batching ---------------------------------------------------------------

GraphBatch make_batch(std::span<const TextGraph* const> graphs, std::size_t emotion_dims) {
  GraphBatch b;
  b.n_graphs = graphs.size();
  std::size_t total_nodes = 0;
  for (const auto* g : graphs) total_nodes += g->nodes.size();
  const auto F = emotion_dims + 1;
  std::vector<double> features;
  features.reserve(total_nodes * F);
  b.node_offset.push_back(0);
  b.edge_offset.push_back(0);
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = *graphs[gi];
    if (g.nodes.empty()) throw ModelError("graph `" + g.source_id + "` has no nodes");
    const auto base = b.pos.size();
    for (const auto& n : g.nodes) {
      if (n.emotion.size() != emotion_dims) {
        throw ModelError("graph `" + g.source_id + "` has " + std::to_string(n.emotion.size()) +
                         " emotion values per node, model expects " + std::to_string(emotion_dims));
      }
      features.insert(features.end(), n.emotion.begin(), n.emotion.end());
      features.push_back(n.position);
      b.pos.push_back(n.pos_category);
      b.graph_of_node.push_back(gi);
    }
    for (const auto& e : g.edges) {
      if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) {
        throw ModelError("graph `" + g.source_id + "` has a dangling edge");
      }
      b.edge_src.push_back(base + e.src);
      b.edge_dst.push_back(base + e.dst);
      b.edge_dep.push_back(static_cast<std::size_t>(e.dep));
    }
    b.node_offset.push_back(b.pos.size());
    b.edge_offset.push_back(b.edge_src.size());
  }
  b.features = Tensor::from({total_nodes, F}, std::move(features));
  return b;
}

GraphBatch make_batch(const TextGraph& graph, std::size_t emotion_dims) {
  const TextGraph* one[] = {&graph};
  return make_batch(std::span<const TextGraph* const>(one), emotion_dims);
}

// --- network ------------------------------------------------------------------

SPropLayerOutput sprop_layer(Tape& tape, const SPropModel& model, const GraphBatch& batch, const Tensor& input,
                             std::size_t layer) {
  const auto& c = model.config();
  const auto H = c.hidden;
  const auto prefix = "layer" + std::to_string(layer) + ".";
  for (const auto p : batch.pos) {
    if (p >= c.pos_vocab) throw ModelError("POS category out of range");
  }
  for (const auto d : batch.edge_dep) {
    if (d >= c.dep_vocab) throw ModelError("dependency category out of range");
  }

  const auto h = tape.add(tape.matmul(input, model.param(prefix + "W_x")), model.param(prefix + "b_x"));

  const auto& W_s = model.param(prefix + "W_s");
  const auto& pos_embed = model.param("pos_embed");
  const auto& dep_embed = model.param("dep_embed");
  const auto node_proj = tape.matmul(h, tape.slice_rows(W_s, 0, H));
  const auto recv_pos_proj = tape.matmul(pos_embed, tape.slice_rows(W_s, H, 2 * H));
  const auto send_pos_proj = tape.matmul(pos_embed, tape.slice_rows(W_s, 2 * H, 3 * H));
  const auto dep_proj = tape.matmul(dep_embed, tape.slice_rows(W_s, 3 * H, 4 * H));

  std::vector<std::size_t> recv_pos(batch.n_edges());
  std::vector<std::size_t> send_pos(batch.n_edges());
  for (std::size_t e = 0; e < batch.n_edges(); ++e) {
    recv_pos[e] = batch.pos[batch.edge_dst[e]];
    send_pos[e] = batch.pos[batch.edge_src[e]];
  }

  auto pre = tape.row_gather(node_proj, batch.edge_src);
  pre = tape.add(pre, tape.row_gather(recv_pos_proj, recv_pos));
  pre = tape.add(pre, tape.row_gather(send_pos_proj, send_pos));
  pre = tape.add(pre, tape.row_gather(dep_proj, batch.edge_dep));
  const auto s = tape.tanh(tape.add(pre, model.param(prefix + "b_s")));

  const auto messages = tape.mul(s, tape.row_gather(h, batch.edge_src));
  const auto aggregated = tape.segment_sum(messages, batch.edge_dst, batch.n_nodes());
  return {tape.relu(tape.add(h, aggregated)), s};
}

PoolOutput attention_pool(Tape& tape, const SPropModel& model, const GraphBatch& batch, const Tensor& hidden) {
  const auto z = tape.concat({hidden, tape.row_gather(model.param("pos_embed"), batch.pos)}, 1);
  const auto gate = tape.relu(tape.add(tape.matmul(z, model.param("attn.W1")), model.param("attn.b1")));
  const auto score = tape.add(tape.matmul(gate, model.param("attn.W2")), model.param("attn.b2"));
  const auto alpha = tape.segment_softmax(score, batch.graph_of_node, batch.n_graphs);
  const auto pooled = tape.segment_sum(tape.mul(z, alpha), batch.graph_of_node, batch.n_graphs);
  return {pooled, alpha};
}

BatchOutput forward_batch(Tape& tape, const SPropModel& model, const GraphBatch& batch, bool train, ad::Rng& rng) {
  const auto& c = model.config();
  if (batch.features.cols() != c.emotion_dims + 1) {
    throw ModelError("batch has " + std::to_string(batch.features.cols() - 1) + " emotion dims, model expects " +
                     std::to_string(c.emotion_dims));
  }
  if (batch.n_graphs == 0) throw ModelError("empty batch");

  Tensor hidden = batch.features;
  Tensor scaling;
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto out = sprop_layer(tape, model, batch, hidden, l);
    hidden = out.hidden;
    scaling = out.scaling;
  }
  const auto pool = attention_pool(tape, model, batch, hidden);

  auto linear = [&](const Tensor& x, const std::string& w, const std::string& b) {
    return tape.add(tape.matmul(x, model.param(w)), model.param(b));
  };

  Tensor output;
  if (c.task == TaskKind::Continuous) {
    std::vector<Tensor> columns;
    for (std::size_t m = 0; m < c.outputs; ++m) {
      const auto prefix = "head" + std::to_string(m) + ".";
      auto x = tape.relu(linear(pool.pooled, prefix + "W1", prefix + "b1"));
      x = tape.dropout(x, c.dropout, train, rng);
      columns.push_back(tape.sigmoid(linear(x, prefix + "W2", prefix + "b2")));
    }
    output = columns.size() == 1 ? columns.front() : tape.concat(columns, 1);
  } else {
    auto x = pool.pooled;
    const auto n_hidden = c.disc_head_hidden.size();
    for (std::size_t k = 1; k <= n_hidden; ++k) {
      x = tape.relu(linear(x, "head.W" + std::to_string(k), "head.b" + std::to_string(k)));
      x = tape.dropout(x, c.dropout, train, rng);
    }
    output = linear(x, "head.W" + std::to_string(n_hidden + 1), "head.b" + std::to_string(n_hidden + 1));
  }
  return {output, pool.attention, scaling};
}

namespace {

std::vector<Prediction> unpack(const SPropModel& model, const GraphBatch& batch, const BatchOutput& out, Tape& tape) {
  const auto& c = model.config();
  const Tensor values = c.task == TaskKind::Discrete ? tape.softmax_rows(out.output) : out.output;
  const auto H = c.hidden;
  std::vector<Prediction> preds(batch.n_graphs);
  for (std::size_t g = 0; g < batch.n_graphs; ++g) {
    auto& p = preds[g];
    for (std::size_t k = 0; k < values.cols(); ++k) p.values.push_back(values.at(g, k));
    for (auto n = batch.node_offset[g]; n < batch.node_offset[g + 1]; ++n) {
      p.trace.attention.push_back(out.attention.at(n, 0));
    }
    for (auto e = batch.edge_offset[g]; e < batch.edge_offset[g + 1]; ++e) {
      EdgeScaling es;
      double sq = 0.0;
      for (std::size_t k = 0; k < H; ++k) {
        const double v = out.scaling.at(e, k);
        es.mean += v;
        es.mean_abs += std::abs(v);
        sq += v * v;
      }
      es.mean /= static_cast<double>(H);
      es.mean_abs /= static_cast<double>(H);
      es.l2 = std::sqrt(sq);
      p.trace.edges.push_back(es);
    }
  }
  return preds;
}

}  // namespace

Prediction forward(const SPropModel& model, const TextGraph& graph, bool train, ad::Rng& rng) {
  const auto batch = make_batch(graph, model.config().emotion_dims);
  Tape tape;
  const auto out = forward_batch(tape, model, batch, train, rng);
  return std::move(unpack(model, batch, out, tape).front());
}

std::vector<Prediction> predict(const SPropModel& model, std::span<const TextGraph> graphs, std::size_t batch_size) {
  std::vector<Prediction> all;
  all.reserve(graphs.size());
  ad::Rng unused(0);
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    std::vector<const TextGraph*> chunk;
    for (auto i = start; i < std::min(graphs.size(), start + batch_size); ++i) chunk.push_back(&graphs[i]);
    const auto batch = make_batch(chunk, model.config().emotion_dims);
    Tape tape;
    const auto out = forward_batch(tape, model, batch, false, unused);
    for (auto& p : unpack(model, batch, out, tape)) all.push_back(std::move(p));
  }
  return all;
}

}  // namespace sprop
