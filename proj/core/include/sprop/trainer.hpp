#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sprop/graph.hpp"
#include "sprop/model.hpp"
#include "sprop/random.hpp"

namespace sprop {

// Continuous targets (one value in [0,1] per metric) or a class index.
using Target = std::variant<std::vector<double>, std::size_t>;

struct LabeledExample {
  std::string id;
  TextGraph graph;
  Target target;
};

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 5e-4;
  double dropout = 0.0;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  std::uint64_t seed = 42;
};

struct SweepGrid {
  std::vector<double> dropout = {0.0, 0.2, 0.4, 0.6};
  std::vector<double> lr = {5e-3, 5e-4, 5e-5};
  std::vector<double> weight_decay = {5e-3, 5e-4, 5e-5};

  std::size_t size() const noexcept { return dropout.size() * lr.size() * weight_decay.size(); }
};

void validate_train_config(const TrainConfig& config);

// --- dataset preparation ------------------------------------------------------

struct SplitSizes {
  std::size_t train = 8, eval = 1, test = 1;
};

template <typename T>
struct Splits {
  std::vector<T> train, eval, test;
};

std::array<std::size_t, 3> split_counts(std::size_t n, SplitSizes ratios = {});

// Seeded Fisher-Yates shuffle, then contiguous slices of
// floor(n*train/sum), floor(n*eval/sum) and the remainder.
template <typename T>
Splits<T> split_dataset(std::vector<T> items, std::uint64_t seed, SplitSizes ratios = {});

// Unique most-voted label; nullopt when the top count is shared.
std::optional<std::string> majority_label(const std::map<std::string, std::size_t>& votes);

// (x - min) / (max - min). Throws when x is outside [min, max].
double normalize_likert(double x, double min_rating, double max_rating);

struct LabelRow {
  std::string id;
  std::string text_ref;
  Target target;
};

struct LabelTableOptions {
  TaskKind task = TaskKind::Continuous;
  // Discrete: class names; a target cell may hold a name or an index.
  std::vector<std::string> classes;
  // Continuous: rescale raw ratings with normalize_likert when set.
  std::optional<std::pair<double, double>> likert;
};

struct LabelTable {
  std::vector<std::string> target_names;
  std::vector<LabelRow> rows;
};

// `id,text_ref,target...` with a header row; comma or tab separated.
LabelTable parse_label_table(std::string_view content, const LabelTableOptions& options);

struct VoteTable {
  std::vector<LabelRow> rows;         // text_ref == id
  std::vector<std::string> dropped;  // ids with tied votes
};

// `id,label,count` rows aggregated per id with majority_label.
VoteTable parse_vote_table(std::string_view content, std::span<const std::string> classes);

// Joins label rows to CoNLL-U documents by source_id and builds graphs.
std::vector<LabeledExample> assemble_examples(std::span<const LabelRow> rows, std::span<const ParsedDocument> docs,
                                              const Lexicon& lex);

// --- optimisation -------------------------------------------------------------

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

struct AdamWOptions {
  double lr = 5e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
};

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta), moments
// bias-corrected. Throws TrainingError on a non-finite gradient.
void adamw_step(std::span<NamedParameter> params, AdamWState& state, const AdamWOptions& options);

// Loss on the tape: mean squared error over examples and metrics
// (continuous), mean cross-entropy from logits (discrete).
ad::Tensor batch_loss(ad::Tape& tape, TaskKind task, const ad::Tensor& output, std::span<const Target> targets);

// Same losses from final predictions (values in (0,1) or probabilities).
double loss_value(TaskKind task, std::span<const std::vector<double>> predictions, std::span<const Target> targets);

// Mean Pearson over metrics (continuous; an undefined correlation counts as
// 0) or accuracy in [0,1] (discrete).
double evaluation_metric(const SPropModel& model, std::span<const LabeledExample> examples);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
};

struct TrainResult {
  SPropModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
};

// Seeded mini-batch AdamW. After every epoch the eval metric is computed;
// the best model is kept and training stops after `patience` epochs without
// strict improvement, or at max_epochs.
TrainResult train(const SPropModel& model, std::span<const LabeledExample> train_set,
                  std::span<const LabeledExample> eval_set, const TrainConfig& config);

std::string history_csv(std::span<const EpochRecord> history);

struct SweepEntry {
  double dropout = 0.0;
  double lr = 0.0;
  double weight_decay = 0.0;
  double best_metric = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t grid_index = 0;
};

struct SweepResult {
  std::vector<SweepEntry> ranked;  // best first; ties keep grid order
  TrainResult best;
};

// Trains every (dropout, lr, weight_decay) combination from a model freshly
// initialised with model_config.seed. Runs may execute on `threads` workers;
// the result does not depend on the thread count.
SweepResult grid_sweep(const SPropConfig& model_config, std::span<const LabeledExample> train_set,
                       std::span<const LabeledExample> eval_set, const TrainConfig& base, const SweepGrid& grid,
                       std::size_t threads = 1);

// --- template definitions -----------------------------------------------------

template <typename T>
Splits<T> split_dataset(std::vector<T> items, std::uint64_t seed, SplitSizes ratios) {
  const auto counts = split_counts(items.size(), ratios);
  Rng rng(seed);
  shuffle(std::span<T>(items), rng);
  Splits<T> out;
  auto it = std::make_move_iterator(items.begin());
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(counts[0]));
  it += static_cast<std::ptrdiff_t>(counts[0]);
  out.eval.assign(it, it + static_cast<std::ptrdiff_t>(counts[1]));
  it += static_cast<std::ptrdiff_t>(counts[1]);
  out.test.assign(it, std::make_move_iterator(items.end()));
  return out;
}

}  // namespace sprop
