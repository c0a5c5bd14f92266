#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sprop/graph.hpp"
#include "sprop/tensor.hpp"

namespace sprop {

enum class TaskKind : std::uint8_t { Continuous = 0, Discrete = 1 };

struct SPropConfig {
  std::size_t emotion_dims = 1;  // E; node features are E emotion values + position
  std::size_t hidden = 512;      // H
  std::size_t pos_vocab = kPosCategoryCount;
  std::size_t dep_vocab = kDepCategoryCount;
  TaskKind task = TaskKind::Continuous;
  std::size_t outputs = 1;  // metrics (continuous) or classes (discrete)
  std::size_t attn_hidden = 256;
  std::size_t cont_head_hidden = 100;
  std::vector<std::size_t> disc_head_hidden = {1024, 512};
  std::size_t layers = 1;
  double dropout = 0.0;
  std::uint64_t seed = 42;
  // Labels carried into checkpoints and prediction files.
  std::vector<std::string> emotion_names;
  std::vector<std::string> output_names;

  bool operator==(const SPropConfig&) const = default;
};

// Throws ModelError when the config is unusable.
void validate_config(const SPropConfig& config);

struct NamedParameter {
  std::string name;
  ad::Tensor value;
};

// Parameter set of the network. Row-vector convention: a linear layer is
// y = x W + b with W of shape (fan_in x fan_out).
//
//   layer{l}.W_x, layer{l}.b_x   node feature transform ((E+1) x H for l = 0, H x H after)
//   layer{l}.W_s, layer{l}.b_s   scaling factor over [h_j; t_i; t_j; e_ij] (4H x H)
//   pos_embed (P x H), dep_embed (D x H)
//   attn.W1 (2H x A), attn.b1, attn.W2 (A x 1), attn.b2
//   continuous: head{m}.W1 (2H x 100), head{m}.b1, head{m}.W2 (100 x 1), head{m}.b2
//   discrete:   head.W1 .. head.W{k} following disc_head_hidden, then (.. x C)
class SPropModel {
 public:
  explicit SPropModel(SPropConfig config);

  const SPropConfig& config() const noexcept { return config_; }
  std::span<NamedParameter> parameters() noexcept { return params_; }
  std::span<const NamedParameter> parameters() const noexcept { return params_; }
  const ad::Tensor& param(std::string_view name) const;
  ad::Tensor& param(std::string_view name);
  std::size_t parameter_count() const;

  void zero_grad();
  // Dropout is the one config field that may change after construction.
  void set_dropout(double p);
  // Deep copy; the copy shares no storage with this model.
  SPropModel clone() const;

 private:
  friend SPropModel init_model(const SPropConfig& config);
  void add(std::string name, ad::Shape shape);

  SPropConfig config_;
  std::vector<NamedParameter> params_;
};

// Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases 0, embeddings
// ~ N(0, 0.02), all from a generator seeded with config.seed.
SPropModel init_model(const SPropConfig& config);

// Disjoint union of graphs, the unit the network runs on.
struct GraphBatch {
  ad::Tensor features;  // N x (E+1): emotion values then position
  std::vector<std::size_t> pos;
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  std::vector<std::size_t> edge_dep;
  std::vector<std::size_t> graph_of_node;
  std::vector<std::size_t> node_offset;  // n_graphs + 1 entries
  std::vector<std::size_t> edge_offset;  // n_graphs + 1 entries
  std::size_t n_graphs = 0;

  std::size_t n_nodes() const noexcept { return pos.size(); }
  std::size_t n_edges() const noexcept { return edge_src.size(); }
};

GraphBatch make_batch(std::span<const TextGraph* const> graphs, std::size_t emotion_dims);
GraphBatch make_batch(const TextGraph& graph, std::size_t emotion_dims);

struct SPropLayerOutput {
  ad::Tensor hidden;   // h'  (N x H)
  ad::Tensor scaling;  // s_ij per edge (n_edges x H), edge order of the batch
};

// One message-passing step over `input` (N x fan_in of the layer):
//   h_i  = x_i W_x + b_x
//   s_ij = tanh([h_j; t_i; t_j; e_ij] W_s + b_s)   for each edge j -> i
//   a_i  = sum_j s_ij * h_j
//   h'_i = relu(h_i + a_i)
// W_s is applied block-wise (node and embedding-table projections gathered
// per edge), which equals the product with the concatenated row.
SPropLayerOutput sprop_layer(ad::Tape& tape, const SPropModel& model, const GraphBatch& batch,
                             const ad::Tensor& input, std::size_t layer = 0);

struct PoolOutput {
  ad::Tensor pooled;     // B x 2H
  ad::Tensor attention;  // N x 1, sums to 1 within each graph
};

// z_i = [h'_i ; pos_embed(t_i)], alpha = softmax over the graph's nodes of
// the gate score, pooled = sum_i alpha_i z_i.
PoolOutput attention_pool(ad::Tape& tape, const SPropModel& model, const GraphBatch& batch, const ad::Tensor& hidden);

struct BatchOutput {
  // Continuous: B x M sigmoid outputs. Discrete: B x C logits.
  ad::Tensor output;
  ad::Tensor attention;
  ad::Tensor scaling;  // last layer
};

BatchOutput forward_batch(ad::Tape& tape, const SPropModel& model, const GraphBatch& batch, bool train, ad::Rng& rng);

struct EdgeScaling {
  double mean = 0.0;
  double l2 = 0.0;
  double mean_abs = 0.0;
};

struct ExplanationTrace {
  std::vector<double> attention;  // aligned with TextGraph::nodes
  std::vector<EdgeScaling> edges;  // aligned with TextGraph::edges
};

struct Prediction {
  // Continuous: one value in (0,1) per metric. Discrete: class probabilities.
  std::vector<double> values;
  ExplanationTrace trace;
};

Prediction forward(const SPropModel& model, const TextGraph& graph, bool train, ad::Rng& rng);
// Inference (train = false) for every graph, evaluated in batches.
std::vector<Prediction> predict(const SPropModel& model, std::span<const TextGraph> graphs, std::size_t batch_size = 64);

inline constexpr int kCheckpointVersion = 1;

// JSON header line (version, config, tensor manifest, payload checksum)
// followed by the raw little-endian float64 payload.
void save_model(const SPropModel& model, const std::string& path);
std::string serialize_model(const SPropModel& model);
SPropModel load_model(const std::string& path);
SPropModel deserialize_model(std::string_view bytes);

}  // namespace sprop
