#include "sprop/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "sprop/error.hpp"
#include "sprop/metrics.hpp"
#include "sprop/text.hpp"

namespace sprop {

using ad::Tape;
using ad::Tensor;

void validate_train_config(const TrainConfig& c) {
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw TrainingError("learning rate must be finite and non-negative");
  if (!(c.weight_decay >= 0.0) || !std::isfinite(c.weight_decay)) throw TrainingError("weight decay must be non-negative");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw TrainingError("dropout must be in [0,1)");
  if (c.batch_size == 0) throw TrainingError("batch size must be positive");
  if (c.max_epochs == 0) throw TrainingError("max_epochs must be positive");
  if (c.patience == 0) throw TrainingError("patience must be at least 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw TrainingError("betas must be in [0,1)");
  }
  if (!(c.eps > 0.0)) throw TrainingError("eps must be positive");
}

// --- dataset preparation ------------------------------------------------------

std::array<std::size_t, 3> split_counts(std::size_t n, SplitSizes r) {
  const auto sum = r.train + r.eval + r.test;
  if (sum == 0) throw DatasetError("split ratios must not all be zero");
  if (n < 10) throw DatasetError("splitting needs at least 10 examples, got " + std::to_string(n));
  const auto train = n * r.train / sum;
  const auto eval = n * r.eval / sum;
  return {train, eval, n - train - eval};
}

std::optional<std::string> majority_label(const std::map<std::string, std::size_t>& votes) {
  if (votes.empty()) throw DatasetError("majority_label: no votes");
  const auto best = std::max_element(votes.begin(), votes.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  const auto ties = std::count_if(votes.begin(), votes.end(), [&](const auto& v) { return v.second == best->second; });
  if (ties > 1) return std::nullopt;
  return best->first;
}

double normalize_likert(double x, double min_rating, double max_rating) {
  if (!(min_rating < max_rating)) throw DatasetError("Likert scale needs min < max");
  if (!(x >= min_rating && x <= max_rating)) {
    throw DatasetError("rating " + text::format_double(x) + " outside [" + text::format_double(min_rating) + ", " +
                       text::format_double(max_rating) + "]");
  }
  return (x - min_rating) / (max_rating - min_rating);
}

namespace {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

std::vector<Row> read_records(std::string_view content, std::vector<std::string>& header) {
  const char sep = content.substr(0, content.find('\n')).find('\t') != std::string_view::npos ? '\t' : ',';
  std::vector<Row> rows;
  std::size_t line_no = 0;
  bool have_header = false;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;
    auto cells = text::split_record(line, sep);
    for (auto& c : cells) c = std::string(text::trim(c));
    if (!have_header) {
      header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != header.size()) {
      throw DatasetError("expected " + std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()) +
                         " at line " + std::to_string(line_no));
    }
    rows.push_back({line_no, std::move(cells)});
  }
  if (!have_header) throw DatasetError("label table is empty");
  return rows;
}

std::size_t class_index(std::string_view cell, std::span<const std::string> classes, std::size_t line) {
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c] == cell) return c;
  }
  if (const auto i = text::parse_int(cell); i && *i >= 0 && static_cast<std::size_t>(*i) < classes.size()) {
    return static_cast<std::size_t>(*i);
  }
  throw DatasetError("unknown class `" + std::string(cell) + "` at line " + std::to_string(line));
}

}  // namespace

LabelTable parse_label_table(std::string_view content, const LabelTableOptions& options) {
  std::vector<std::string> header;
  const auto records = read_records(content, header);
  if (header.size() < 3 || header[0] != "id" || header[1] != "text_ref") {
    throw DatasetError("label table header must be `id,text_ref,target...`");
  }
  LabelTable table;
  table.target_names.assign(header.begin() + 2, header.end());
  if (options.task == TaskKind::Discrete) {
    if (table.target_names.size() != 1) throw DatasetError("a discrete label table has exactly one target column");
    if (options.classes.size() < 2) throw DatasetError("a discrete label table needs at least two class names");
  }
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& r : records) {
    if (r.cells[0].empty()) throw DatasetError("empty id at line " + std::to_string(r.line));
    if (!seen.emplace(r.cells[0], r.line).second) {
      throw DatasetError("duplicate id `" + r.cells[0] + "` at line " + std::to_string(r.line));
    }
    LabelRow row{r.cells[0], r.cells[1], {}};
    if (options.task == TaskKind::Discrete) {
      row.target = class_index(r.cells[2], options.classes, r.line);
    } else {
      std::vector<double> values;
      for (std::size_t k = 2; k < r.cells.size(); ++k) {
        const auto v = text::parse_double(r.cells[k]);
        if (!v) throw DatasetError("non-numeric target at line " + std::to_string(r.line));
        double x = *v;
        if (options.likert) x = normalize_likert(x, options.likert->first, options.likert->second);
        if (!(x >= 0.0 && x <= 1.0)) {
          throw DatasetError("continuous target outside [0,1] at line " + std::to_string(r.line));
        }
        values.push_back(x);
      }
      row.target = std::move(values);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

VoteTable parse_vote_table(std::string_view content, std::span<const std::string> classes) {
  std::vector<std::string> header;
  const auto records = read_records(content, header);
  if (header != std::vector<std::string>{"id", "label", "count"}) {
    throw DatasetError("vote table header must be `id,label,count`");
  }
  std::vector<std::string> order;
  std::unordered_map<std::string, std::map<std::string, std::size_t>> votes;
  for (const auto& r : records) {
    class_index(r.cells[1], classes, r.line);
    const auto n = text::parse_int(r.cells[2]);
    if (!n || *n < 0) throw DatasetError("invalid vote count at line " + std::to_string(r.line));
    auto [it, fresh] = votes.try_emplace(r.cells[0]);
    if (fresh) order.push_back(r.cells[0]);
    it->second[r.cells[1]] += static_cast<std::size_t>(*n);
  }
  VoteTable table;
  for (const auto& id : order) {
    const auto label = majority_label(votes.at(id));
    if (!label) {
      table.dropped.push_back(id);
      continue;
    }
    table.rows.push_back({id, id, class_index(*label, classes, 0)});
  }
  return table;
}

std::vector<LabeledExample> assemble_examples(std::span<const LabelRow> rows, std::span<const ParsedDocument> docs,
                                              const Lexicon& lex) {
  std::unordered_map<std::string_view, const ParsedDocument*> by_id;
  for (const auto& d : docs) by_id.emplace(d.source_id, &d);
  std::vector<LabeledExample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    const auto it = by_id.find(r.text_ref);
    if (it == by_id.end()) {
      throw DatasetError("no CoNLL-U document `" + r.text_ref + "` for label row `" + r.id + "`");
    }
    out.push_back({r.id, build_graph(*it->second, lex, GraphConfig{lex.dims()}), r.target});
  }
  return out;
}

// --- optimisation -------------------------------------------------------------

void adamw_step(std::span<NamedParameter> params, AdamWState& state, const AdamWOptions& o) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].value.size()) {
      throw ShapeError("optimizer state does not match parameter " + params[i].name);
    }
    if (!params[i].value.has_grad()) continue;
    for (const double g : params[i].value.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + params[i].name);
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].value.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has = params[i].value.has_grad();
    const auto grad = has ? params[i].value.grad() : std::span<const double>{};
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double g = has ? grad[k] : 0.0;
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] -= o.lr * (m_hat / (std::sqrt(v_hat) + o.eps) + o.weight_decay * theta[k]);
    }
  }
}

Tensor batch_loss(Tape& tape, TaskKind task, const Tensor& output, std::span<const Target> targets) {
  if (output.rows() != targets.size()) throw ShapeError("one target per output row required");
  if (task == TaskKind::Continuous) {
    std::vector<double> flat;
    flat.reserve(output.size());
    for (const auto& t : targets) {
      const auto* v = std::get_if<std::vector<double>>(&t);
      if (v == nullptr) throw ShapeError("class target given to a continuous task");
      if (v->size() != output.cols()) throw ShapeError("target has the wrong number of metrics");
      flat.insert(flat.end(), v->begin(), v->end());
    }
    return tape.mse(output, Tensor::from(output.shape(), std::move(flat)));
  }
  std::vector<std::size_t> classes;
  classes.reserve(targets.size());
  for (const auto& t : targets) {
    const auto* c = std::get_if<std::size_t>(&t);
    if (c == nullptr) throw ShapeError("continuous target given to a discrete task");
    classes.push_back(*c);
  }
  return tape.cross_entropy_with_softmax(output, classes);
}

double loss_value(TaskKind task, std::span<const std::vector<double>> predictions, std::span<const Target> targets) {
  if (predictions.size() != targets.size()) throw ShapeError("loss: predictions and targets differ in length");
  if (predictions.empty()) throw ShapeError("loss: no examples");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (task == TaskKind::Continuous) {
      const auto* t = std::get_if<std::vector<double>>(&targets[i]);
      if (t == nullptr || t->size() != p.size()) throw ShapeError("loss: target shape mismatch at row " + std::to_string(i));
      for (std::size_t k = 0; k < p.size(); ++k) total += (p[k] - (*t)[k]) * (p[k] - (*t)[k]);
      count += p.size();
    } else {
      const auto* c = std::get_if<std::size_t>(&targets[i]);
      if (c == nullptr || *c >= p.size()) throw ShapeError("loss: class target mismatch at row " + std::to_string(i));
      total -= std::log(p[*c]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double evaluation_metric(const SPropModel& model, std::span<const LabeledExample> examples) {
  if (examples.empty()) throw TrainingError("evaluation set is empty");
  std::vector<TextGraph> graphs;
  graphs.reserve(examples.size());
  for (const auto& e : examples) graphs.push_back(e.graph);
  const auto preds = predict(model, graphs);
  const auto& c = model.config();

  if (c.task == TaskKind::Discrete) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto* t = std::get_if<std::size_t>(&examples[i].target);
      if (t == nullptr) throw ShapeError("continuous target given to a discrete task");
      correct += metrics::argmax(preds[i].values) == *t;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
  }

  double sum = 0.0;
  for (std::size_t m = 0; m < c.outputs; ++m) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto* t = std::get_if<std::vector<double>>(&examples[i].target);
      if (t == nullptr || t->size() != c.outputs) throw ShapeError("target has the wrong number of metrics");
      x.push_back(preds[i].values[m]);
      y.push_back((*t)[m]);
    }
    try {
      sum += metrics::pearson(x, y);
    } catch (const StatsError&) {
      // Constant predictions or targets carry no ranking signal.
    }
  }
  return sum / static_cast<double>(c.outputs);
}

TrainResult train(const SPropModel& model, std::span<const LabeledExample> train_set,
                  std::span<const LabeledExample> eval_set, const TrainConfig& config) {
  validate_train_config(config);
  if (train_set.empty()) throw TrainingError("training set is empty");
  if (eval_set.empty()) throw TrainingError("evaluation set is empty");

  SPropModel current = model.clone();
  current.set_dropout(config.dropout);
  const auto task = current.config().task;
  const auto dims = current.config().emotion_dims;

  Rng order_rng(derive_seed(config.seed, 0));
  Rng dropout_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const AdamWOptions opt{config.lr, config.weight_decay, config.beta1, config.beta2, config.eps};
  AdamWState state;

  TrainResult result{current.clone(), {}, 0, -std::numeric_limits<double>::infinity()};
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto end = std::min(order.size(), start + config.batch_size);
      std::vector<const TextGraph*> graphs;
      std::vector<Target> targets;
      for (auto i = start; i < end; ++i) {
        graphs.push_back(&train_set[order[i]].graph);
        targets.push_back(train_set[order[i]].target);
      }
      const auto batch = make_batch(graphs, dims);
      Tape tape;
      current.zero_grad();
      const auto out = forward_batch(tape, current, batch, true, dropout_rng);
      const auto loss = batch_loss(tape, task, out.output, targets);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += value * static_cast<double>(end - start);
      tape.backward(loss);
      adamw_step(current.parameters(), state, opt);
    }
    current.zero_grad();

    const double metric = evaluation_metric(current, eval_set);
    result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), metric});
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      result.model = current.clone();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out << "epoch,train_loss,eval_metric\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << text::format_double(h.train_loss) << ',' << text::format_double(h.eval_metric) << '\n';
  }
  return out.str();
}

SweepResult grid_sweep(const SPropConfig& model_config, std::span<const LabeledExample> train_set,
                       std::span<const LabeledExample> eval_set, const TrainConfig& base, const SweepGrid& grid,
                       std::size_t threads) {
  const auto n = grid.size();
  if (n == 0) throw TrainingError("hyperparameter grid is empty");

  std::vector<SweepEntry> entries(n);
  for (std::size_t d = 0; d < grid.dropout.size(); ++d) {
    for (std::size_t l = 0; l < grid.lr.size(); ++l) {
      for (std::size_t w = 0; w < grid.weight_decay.size(); ++w) {
        const auto idx = (d * grid.lr.size() + l) * grid.weight_decay.size() + w;
        entries[idx].dropout = grid.dropout[d];
        entries[idx].lr = grid.lr[l];
        entries[idx].weight_decay = grid.weight_decay[w];
        entries[idx].grid_index = idx;
      }
    }
  }
  const auto initial = init_model(model_config);

  std::mutex mu;
  std::optional<TrainResult> best;
  std::size_t best_index = n;
  std::exception_ptr error;
  std::size_t error_index = n;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (auto i = next++; i < n; i = next++) {
      try {
        TrainConfig cfg = base;
        cfg.dropout = entries[i].dropout;
        cfg.lr = entries[i].lr;
        cfg.weight_decay = entries[i].weight_decay;
        SPropModel start = [&] {
          std::lock_guard lock(mu);
          return initial.clone();
        }();
        auto run = train(start, train_set, eval_set, cfg);
        std::lock_guard lock(mu);
        entries[i].best_metric = run.best_metric;
        entries[i].best_epoch = run.best_epoch;
        entries[i].epochs_run = run.history.size();
        // Higher metric wins; equal metrics keep the lower grid index, so the
        // outcome does not depend on completion order.
        if (!best || run.best_metric > best->best_metric ||
            (run.best_metric == best->best_metric && i < best_index)) {
          best = std::move(run);
          best_index = i;
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < error_index) {
          error = std::current_exception();
          error_index = i;
        }
      }
    }
  };

  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  std::stable_sort(entries.begin(), entries.end(),
                   [](const SweepEntry& a, const SweepEntry& b) { return a.best_metric > b.best_metric; });
  return {std::move(entries), std::move(*best)};
}

}  // namespace sprop
