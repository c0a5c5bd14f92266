#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sprop/bias_audit.hpp"
#include "sprop/conllu.hpp"
#include "sprop/error.hpp"
#include "sprop/explain.hpp"
#include "sprop/graph.hpp"
#include "sprop/lexicon.hpp"
#include "sprop/metrics.hpp"
#include "sprop/model.hpp"
#include "sprop/text.hpp"
#include "sprop/trainer.hpp"

#ifndef SPROP_VERSION
#define SPROP_VERSION "0.0.0"
#endif

namespace sprop::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

// Files are staged in memory and only written once the command has
// succeeded, each through a temporary file renamed into place.
class Outputs {
 public:
  void add(std::string path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }
  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first);
    return out;
  }

  void commit() const {
    std::vector<std::pair<std::string, std::string>> staged;
    auto cleanup = [&] {
      for (const auto& s : staged) {
        std::error_code ec;
        fs::remove(s.first, ec);
      }
    };
    for (const auto& [path, content] : files_) {
      const auto tmp = path + ".tmp." + std::to_string(::getpid());
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (out) out.write(content.data(), static_cast<std::streamsize>(content.size()));
      if (out) out.close();
      if (!out) {
        std::error_code ec;
        fs::remove(tmp, ec);
        cleanup();
        throw Error("cannot write " + path);
      }
      staged.emplace_back(tmp, path);
    }
    for (const auto& [tmp, path] : staged) fs::rename(tmp, path);
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

struct Manifest {
  json inputs = json::array();
  std::string started = utc_now();

  std::string read(const std::string& path) {
    if (!fs::exists(path)) throw Error("input file not found: " + path);
    auto content = text::read_file(path);
    inputs.push_back({{"path", path}, {"bytes", content.size()}, {"fnv1a64", text::hex64(text::fnv1a64(content))}});
    return content;
  }
};

struct Common {
  std::uint64_t seed = 42;
  std::size_t threads = 0;
  std::string manifest;
};

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPROP_THREADS")) {
    if (const auto n = text::parse_int(env); n && *n > 0) return static_cast<std::size_t>(*n);
    throw UsageError("SPROP_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every stochastic stage")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (0: SPROP_THREADS or all cores)")->capture_default_str();
  sub->add_option("--manifest", c.manifest, "Run manifest path (default <output>.manifest.json)");
  sub->add_option("--config", "Flat `key = value` file mirroring the flags; flags win");
}

// --- inputs -------------------------------------------------------------------

struct LexiconOptions {
  std::string path;
  std::string stopwords;
  std::string negations;
  std::string language = "en";
  std::vector<std::string> metrics;
};

void add_lexicon_options(CLI::App* sub, LexiconOptions& o, bool required = true) {
  auto* opt = sub->add_option("--lexicon", o.path, "Word emotion lexicon TSV (word<TAB>metric...)");
  if (required) opt->required();
  sub->add_option("--stopwords", o.stopwords, "Stopword list replacing the bundled one");
  sub->add_option("--negations", o.negations, "Negation list replacing the bundled one");
  sub->add_option("--language", o.language, "Language of the bundled word lists")->capture_default_str();
  sub->add_option("--metrics", o.metrics, "Expected lexicon metric columns")->delimiter(',');
}

LoadedLexicon load_lexicon_input(const LexiconOptions& o, Manifest& m) {
  auto loaded = parse_lexicon(m.read(o.path), LexiconConfig{o.metrics, o.language});
  if (!o.stopwords.empty()) loaded.lexicon.set_stopwords(parse_word_list(m.read(o.stopwords)));
  if (!o.negations.empty()) loaded.lexicon.set_negations(parse_word_list(m.read(o.negations)));
  return loaded;
}

struct DatasetOptions {
  std::string conllu;
  std::string labels;
  std::string votes;
  std::string task = "continuous";
  std::vector<std::string> classes;
  std::optional<double> likert_min, likert_max;
};

void add_dataset_options(CLI::App* sub, DatasetOptions& o) {
  sub->add_option("--conllu", o.conllu, "Parsed corpus; `# newdoc id` keys the documents")->required();
  auto* labels = sub->add_option("--labels", o.labels, "Label table `id,text_ref,target...`");
  auto* votes = sub->add_option("--votes", o.votes, "Vote table `id,label,count` (discrete, majority vote)");
  labels->excludes(votes);
  sub->add_option("--task", o.task, "continuous or discrete")
      ->check(CLI::IsMember({"continuous", "discrete"}))
      ->capture_default_str();
  sub->add_option("--classes", o.classes, "Class names for discrete targets")->delimiter(',');
  sub->add_option("--likert-min", o.likert_min, "Rescale raw ratings from this minimum");
  sub->add_option("--likert-max", o.likert_max, "Rescale raw ratings up to this maximum");
}

TaskKind task_of(const DatasetOptions& o) {
  return o.task == "discrete" || !o.votes.empty() ? TaskKind::Discrete : TaskKind::Continuous;
}

struct Dataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> output_names;
  TaskKind task = TaskKind::Continuous;
};

Dataset load_dataset(const DatasetOptions& o, const Lexicon& lex, Manifest& m, std::ostream& err) {
  if (o.labels.empty() && o.votes.empty()) throw UsageError("one of --labels or --votes is required");
  if (o.likert_min.has_value() != o.likert_max.has_value()) {
    throw UsageError("--likert-min and --likert-max go together");
  }
  Dataset d;
  d.task = task_of(o);
  const auto docs = parse_conllu(m.read(o.conllu));
  std::vector<LabelRow> rows;
  if (!o.votes.empty()) {
    if (o.classes.size() < 2) throw UsageError("--votes needs --classes");
    auto table = parse_vote_table(m.read(o.votes), o.classes);
    if (!table.dropped.empty()) err << "dropped " << table.dropped.size() << " texts with tied votes\n";
    rows = std::move(table.rows);
    d.output_names = o.classes;
  } else {
    LabelTableOptions lo;
    lo.task = d.task;
    lo.classes = o.classes;
    if (o.likert_min) lo.likert = std::pair{*o.likert_min, *o.likert_max};
    auto table = parse_label_table(m.read(o.labels), lo);
    rows = std::move(table.rows);
    d.output_names = d.task == TaskKind::Discrete ? o.classes : table.target_names;
  }
  d.examples = assemble_examples(rows, docs, lex);
  return d;
}

// --- model options --------------------------------------------------------------

struct ModelOptions {
  std::size_t hidden = 512;
  std::size_t layers = 1;
};

void add_model_options(CLI::App* sub, ModelOptions& o) {
  sub->add_option("--hidden", o.hidden, "Hidden dimension of the SProp layer")->capture_default_str();
  sub->add_option("--layers", o.layers, "Number of SProp layers")->capture_default_str();
}

void add_train_options(CLI::App* sub, TrainConfig& t, bool grid) {
  if (!grid) {
    sub->add_option("--lr", t.lr, "Learning rate")->capture_default_str();
    sub->add_option("--weight-decay", t.weight_decay, "Decoupled weight decay")->capture_default_str();
    sub->add_option("--dropout", t.dropout, "Dropout inside the output heads")->capture_default_str();
  }
  sub->add_option("--batch-size", t.batch_size, "Graphs per mini-batch")->capture_default_str();
  sub->add_option("--epochs", t.max_epochs, "Maximum number of epochs")->capture_default_str();
  sub->add_option("--patience", t.patience, "Epochs without improvement before stopping")->capture_default_str();
}

SPropConfig model_config(const ModelOptions& mo, const Lexicon& lex, const Dataset& d, std::uint64_t seed) {
  SPropConfig c;
  c.emotion_dims = lex.dims();
  c.hidden = mo.hidden;
  c.layers = mo.layers;
  c.task = d.task;
  c.outputs = d.output_names.size();
  c.seed = seed;
  c.emotion_names = lex.metric_names();
  c.output_names = d.output_names;
  return c;
}

void check_model_lexicon(const SPropModel& model, const Lexicon& lex) {
  const auto& c = model.config();
  if (c.emotion_dims != lex.dims()) {
    throw ModelError("model expects " + std::to_string(c.emotion_dims) + " lexicon metrics, lexicon has " +
                     std::to_string(lex.dims()));
  }
  if (!c.emotion_names.empty() && c.emotion_names != lex.metric_names()) {
    throw ModelError("lexicon metric names do not match the model's");
  }
}

std::string output_name(const SPropConfig& c, std::size_t k) {
  return k < c.output_names.size() ? c.output_names[k] : std::to_string(k);
}

// --- command plumbing ---------------------------------------------------------

struct Command {
  CLI::App* app = nullptr;
  Common common;
  std::function<void(Manifest&, Outputs&, std::string& primary)> body;
};

std::string manifest_json(const std::string& name, const Command& cmd, const Manifest& m, const Outputs& outs,
                          std::size_t threads) {
  const json j = {{"command", name},
                  {"version", SPROP_VERSION},
                  {"checkpoint_version", kCheckpointVersion},
                  {"config", cmd.app->config_to_str(true, false)},
                  {"seeds", {{"seed", cmd.common.seed}}},
                  {"threads", threads},
                  {"inputs", m.inputs},
                  {"outputs", outs.paths()},
                  {"started_at", m.started},
                  {"finished_at", utc_now()}};
  return j.dump(2) + "\n";
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.starts_with(flag + "=");
  });
}

// Merges `key = value` lines from --config into args for every option the
// command line does not already set.
std::vector<std::string> apply_config(std::vector<std::string> args, CLI::App* sub, Manifest& m) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;

  std::istringstream in(m.read(path));
  const auto items = CLI::ConfigTOML().from_config(in);
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--" || !item.parents.empty()) {
      throw UsageError("config file must be flat `key = value` lines");
    }
    auto name = item.name;
    std::replace(name.begin(), name.end(), '_', '-');
    const auto flag = "--" + name;
    const auto* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || name == "config") throw UsageError("unknown config key `" + item.name + "`");
    if (given_on_command_line(args, flag)) continue;
    if (opt->get_expected_max() == 0) {
      const auto v = item.inputs.empty() ? std::string("true") : text::utf8_lower(item.inputs.front());
      if (v == "true" || v == "1" || v == "yes" || v == "on") args.push_back(flag);
      continue;
    }
    args.push_back(flag);
    args.insert(args.end(), item.inputs.begin(), item.inputs.end());
  }
  return args;
}

// --- subcommands --------------------------------------------------------------

void cmd_build_graphs(CLI::App& app, Command& cmd) {
  struct Opts {
    std::string conllu, output;
    LexiconOptions lex;
  };
  auto o = std::make_shared<Opts>();
  cmd.app = app.add_subcommand("build-graphs", "Build text graphs from CoNLL-U (one JSON object per line)");
  cmd.app->add_option("--conllu", o->conllu, "Parsed corpus")->required();
  cmd.app->add_option("--output", o->output, "Graph JSONL output")->required();
  add_lexicon_options(cmd.app, o->lex);
  add_common(cmd.app, cmd.common);
  cmd.body = [o](Manifest& m, Outputs& outs, std::string& primary) {
    const auto lex = load_lexicon_input(o->lex, m).lexicon;
    const auto docs = parse_conllu(m.read(o->conllu));
    std::string lines;
    for (const auto& d : docs) lines += graph_to_json(build_graph(d, lex, GraphConfig{lex.dims()})) + "\n";
    outs.add(o->output, std::move(lines));
    primary = o->output;
  };
}

struct TrainOpts {
  DatasetOptions data;
  LexiconOptions lex;
  ModelOptions model;
  TrainConfig train;
  std::string output, history;
  std::vector<double> grid_dropout = SweepGrid{}.dropout;
  std::vector<double> grid_lr = SweepGrid{}.lr;
  std::vector<double> grid_wd = SweepGrid{}.weight_decay;
};

std::string splits_csv(const Splits<LabeledExample>& s) {
  std::string out = "id,split\n";
  for (const auto& e : s.train) out += e.id + ",train\n";
  for (const auto& e : s.eval) out += e.id + ",eval\n";
  for (const auto& e : s.test) out += e.id + ",test\n";
  return out;
}

void report_test_metric(std::ostream& out, const SPropModel& model, const std::vector<LabeledExample>& test) {
  if (test.empty()) return;
  const auto metric = evaluation_metric(model, test);
  out << (model.config().task == TaskKind::Continuous ? "test mean pearson " : "test accuracy ")
      << text::format_double(metric) << "\n";
}

void cmd_train(CLI::App& app, Command& cmd, std::ostream& out, std::ostream& err, bool sweep) {
  auto o = std::make_shared<TrainOpts>();
  cmd.app = sweep ? app.add_subcommand("sweep", "Grid search over dropout, learning rate and weight decay")
                  : app.add_subcommand("train", "Train an SProp model with early stopping");
  add_dataset_options(cmd.app, o->data);
  add_lexicon_options(cmd.app, o->lex);
  add_model_options(cmd.app, o->model);
  add_train_options(cmd.app, o->train, sweep);
  cmd.app->add_option("--output", o->output, "Checkpoint path (best model)")->required();
  cmd.app->add_option("--history", o->history, "Training history CSV (default <output>.history.csv)");
  if (sweep) {
    cmd.app->add_option("--grid-dropout", o->grid_dropout, "Dropout values")->delimiter(',')->capture_default_str();
    cmd.app->add_option("--grid-lr", o->grid_lr, "Learning rates")->delimiter(',')->capture_default_str();
    cmd.app->add_option("--grid-weight-decay", o->grid_wd, "Weight decay values")->delimiter(',')->capture_default_str();
  }
  add_common(cmd.app, cmd.common);
  auto* common = &cmd.common;
  cmd.body = [o, common, sweep, &out, &err](Manifest& m, Outputs& outs, std::string& primary) {
    const auto lex = load_lexicon_input(o->lex, m).lexicon;
    const auto data = load_dataset(o->data, lex, m, err);
    auto split = split_dataset(data.examples, common->seed);
    auto cfg = o->train;
    cfg.seed = common->seed;
    const auto mc = model_config(o->model, lex, data, common->seed);

    std::optional<TrainResult> result;
    if (sweep) {
      const SweepGrid grid{o->grid_dropout, o->grid_lr, o->grid_wd};
      auto s = grid_sweep(mc, split.train, split.eval, cfg, grid, resolve_threads(common->threads));
      std::string table = "rank,grid_index,dropout,lr,weight_decay,best_metric,best_epoch,epochs_run\n";
      for (std::size_t r = 0; r < s.ranked.size(); ++r) {
        const auto& e = s.ranked[r];
        table += std::to_string(r + 1) + "," + std::to_string(e.grid_index) + "," + text::format_double(e.dropout) + "," +
                 text::format_double(e.lr) + "," + text::format_double(e.weight_decay) + "," +
                 text::format_double(e.best_metric) + "," + std::to_string(e.best_epoch) + "," +
                 std::to_string(e.epochs_run) + "\n";
      }
      outs.add(o->output + ".sweep.csv", std::move(table));
      const auto& top = s.ranked.front();
      out << "best config dropout=" << text::format_double(top.dropout) << " lr=" << text::format_double(top.lr)
          << " weight_decay=" << text::format_double(top.weight_decay) << "\n";
      result.emplace(std::move(s.best));
    } else {
      result.emplace(train(init_model(mc), split.train, split.eval, cfg));
    }
    out << "best epoch " << result->best_epoch << " of " << result->history.size() << ", eval metric "
        << text::format_double(result->best_metric) << "\n";
    report_test_metric(out, result->model, split.test);

    outs.add(o->output, serialize_model(result->model));
    outs.add(o->history.empty() ? o->output + ".history.csv" : o->history, history_csv(result->history));
    outs.add(o->output + ".splits.csv", splits_csv(split));
    primary = o->output;
  };
}

void cmd_predict(CLI::App& app, Command& cmd) {
  struct Opts {
    std::string model, conllu, output;
    LexiconOptions lex;
    bool baseline = false;
    std::size_t batch_size = 64;
  };
  auto o = std::make_shared<Opts>();
  cmd.app = app.add_subcommand("predict", "Predict per document; CSV `id,metric_or_class,value`");
  cmd.app->add_option("--model", o->model, "Checkpoint");
  cmd.app->add_option("--conllu", o->conllu, "Parsed corpus")->required();
  cmd.app->add_option("--output", o->output, "Predictions CSV")->required();
  cmd.app->add_flag("--lexicon-baseline", o->baseline, "Mean lexicon score of content words instead of a model");
  cmd.app->add_option("--batch-size", o->batch_size, "Graphs per forward batch")->capture_default_str();
  add_lexicon_options(cmd.app, o->lex);
  add_common(cmd.app, cmd.common);
  cmd.body = [o](Manifest& m, Outputs& outs, std::string& primary) {
    if (o->baseline == !o->model.empty()) throw UsageError("predict needs exactly one of --model or --lexicon-baseline");
    const auto lex = load_lexicon_input(o->lex, m).lexicon;
    const auto docs = parse_conllu(m.read(o->conllu));
    std::string csv = "id,metric_or_class,value\n";
    if (o->baseline) {
      for (const auto& d : docs) {
        const auto tokens = scored_tokens(d, lex);
        const auto score = lexicon_baseline(tokens, lex);
        if (!score) continue;
        for (std::size_t k = 0; k < lex.dims(); ++k) {
          csv += d.source_id + "," + lex.metric_names()[k] + "," + text::format_double((*score)[k]) + "\n";
        }
      }
    } else {
      m.read(o->model);
      const auto model = load_model(o->model);
      check_model_lexicon(model, lex);
      std::vector<TextGraph> graphs;
      for (const auto& d : docs) graphs.push_back(build_graph(d, lex, GraphConfig{lex.dims()}));
      const auto preds = predict(model, graphs, o->batch_size);
      for (std::size_t i = 0; i < docs.size(); ++i) {
        for (std::size_t k = 0; k < preds[i].values.size(); ++k) {
          csv += docs[i].source_id + "," + output_name(model.config(), k) + "," + text::format_double(preds[i].values[k]) + "\n";
        }
      }
    }
    outs.add(o->output, std::move(csv));
    primary = o->output;
  };
}

std::map<std::string, std::map<std::string, double>> read_predictions(std::string_view content) {
  std::map<std::string, std::map<std::string, double>> out;
  std::size_t line_no = 0;
  bool header = true;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;
    const auto cells = text::split_record(line, ',');
    if (header) {
      if (cells != std::vector<std::string>{"id", "metric_or_class", "value"}) {
        throw DatasetError("predictions header must be `id,metric_or_class,value`");
      }
      header = false;
      continue;
    }
    if (cells.size() != 3) throw DatasetError("expected 3 columns at line " + std::to_string(line_no));
    const auto v = text::parse_double(cells[2]);
    if (!v) throw DatasetError("non-numeric prediction at line " + std::to_string(line_no));
    out[cells[0]][cells[1]] = *v;
  }
  return out;
}

void cmd_evaluate(CLI::App& app, Command& cmd, std::ostream& out) {
  struct Opts {
    std::string predictions, output, json_path;
    DatasetOptions data;
  };
  auto o = std::make_shared<Opts>();
  cmd.app = app.add_subcommand("evaluate", "Score predictions against labels (TSV and JSON)");
  cmd.app->add_option("--predictions", o->predictions, "Predictions CSV from `predict`")->required();
  cmd.app->add_option("--labels", o->data.labels, "Label table `id,text_ref,target...`")->required();
  cmd.app->add_option("--task", o->data.task, "continuous or discrete")
      ->check(CLI::IsMember({"continuous", "discrete"}))
      ->capture_default_str();
  cmd.app->add_option("--classes", o->data.classes, "Class names for discrete targets")->delimiter(',');
  cmd.app->add_option("--likert-min", o->data.likert_min, "Rescale raw ratings from this minimum");
  cmd.app->add_option("--likert-max", o->data.likert_max, "Rescale raw ratings up to this maximum");
  cmd.app->add_option("--output", o->output, "Metrics TSV")->required();
  cmd.app->add_option("--json", o->json_path, "Metrics JSON (default <output>.json)");
  add_common(cmd.app, cmd.common);
  cmd.body = [o, &out](Manifest& m, Outputs& outs, std::string& primary) {
    if (o->data.likert_min.has_value() != o->data.likert_max.has_value()) {
      throw UsageError("--likert-min and --likert-max go together");
    }
    const auto preds = read_predictions(m.read(o->predictions));
    LabelTableOptions lo;
    lo.task = task_of(o->data);
    lo.classes = o->data.classes;
    if (o->data.likert_min) lo.likert = std::pair{*o->data.likert_min, *o->data.likert_max};
    const auto table = parse_label_table(m.read(o->data.labels), lo);

    std::string tsv;
    json j = {{"version", "1"}};
    std::size_t missing = 0;
    if (lo.task == TaskKind::Continuous) {
      tsv = "metric\tn\tpearson\n";
      j["metrics"] = json::array();
      for (std::size_t k = 0; k < table.target_names.size(); ++k) {
        const auto& name = table.target_names[k];
        std::vector<double> x, y;
        for (const auto& row : table.rows) {
          const auto it = preds.find(row.text_ref);
          const auto hit = it == preds.end() ? nullptr : &it->second;
          if (hit == nullptr || !hit->contains(name)) {
            missing += k == 0;
            continue;
          }
          x.push_back(hit->at(name));
          y.push_back(std::get<std::vector<double>>(row.target)[k]);
        }
        const double r = metrics::pearson(x, y);
        tsv += name + "\t" + std::to_string(x.size()) + "\t" + text::format_double(r) + "\n";
        j["metrics"].push_back({{"metric", name}, {"n", x.size()}, {"pearson", r}});
        out << name << ": pearson " << text::format_double(r) << " (n=" << x.size() << ")\n";
      }
    } else {
      std::vector<std::size_t> guess, truth;
      for (const auto& row : table.rows) {
        const auto it = preds.find(row.text_ref);
        if (it == preds.end()) {
          ++missing;
          continue;
        }
        std::vector<double> probs;
        for (const auto& c : lo.classes) {
          const auto p = it->second.find(c);
          probs.push_back(p == it->second.end() ? -std::numeric_limits<double>::infinity() : p->second);
        }
        guess.push_back(metrics::argmax(probs));
        truth.push_back(std::get<std::size_t>(row.target));
      }
      const auto report = metrics::class_report(guess, truth, lo.classes);
      auto opt = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); };
      tsv = "class\taccuracy\tprecision\trecall\tsupport\n";
      j["classes"] = json::array();
      for (const auto& c : report.classes) {
        tsv += c.label + "\t" + text::format_double(c.accuracy) + "\t" + opt(c.precision) + "\t" + opt(c.recall) + "\t" +
               std::to_string(c.support) + "\n";
        j["classes"].push_back({{"class", c.label},
                                {"accuracy", c.accuracy},
                                {"precision", c.precision ? json(*c.precision) : json(nullptr)},
                                {"recall", c.recall ? json(*c.recall) : json(nullptr)},
                                {"support", c.support}});
      }
      tsv += "overall\t" + text::format_double(report.overall_accuracy) + "\t\t\t" + std::to_string(guess.size()) + "\n";
      j["overall_accuracy"] = report.overall_accuracy;
      out << "overall accuracy " << text::format_double(report.overall_accuracy) << "% (n=" << guess.size() << ")\n";
    }
    j["missing_predictions"] = missing;
    if (missing > 0) out << missing << " labeled texts had no prediction\n";
    outs.add(o->output, std::move(tsv));
    outs.add(o->json_path.empty() ? o->output + ".json" : o->json_path, j.dump(2) + "\n");
    primary = o->output;
  };
}

void cmd_explain(CLI::App& app, Command& cmd, std::ostream& out) {
  struct Opts {
    std::string model, conllu, out_dot, out_json, doc;
    LexiconOptions lex;
    DotStyle style;
  };
  auto o = std::make_shared<Opts>();
  cmd.app = app.add_subcommand("explain", "Attention and scaling-factor export for one document");
  cmd.app->add_option("--model", o->model, "Checkpoint")->required();
  cmd.app->add_option("--conllu", o->conllu, "Parsed corpus")->required();
  cmd.app->add_option("--doc", o->doc, "Document id (default: the first document)");
  cmd.app->add_option("--out-dot", o->out_dot, "GraphViz DOT output")->required();
  cmd.app->add_option("--out-json", o->out_json, "JSON trace output")->required();
  cmd.app->add_option("--min-size", o->style.min_size, "Smallest node diameter")->capture_default_str();
  cmd.app->add_option("--size-scale", o->style.scale, "Node diameter per unit of attention")->capture_default_str();
  add_lexicon_options(cmd.app, o->lex);
  add_common(cmd.app, cmd.common);
  cmd.body = [o, &out](Manifest& m, Outputs& outs, std::string& primary) {
    const auto lex = load_lexicon_input(o->lex, m).lexicon;
    const auto docs = parse_conllu(m.read(o->conllu));
    m.read(o->model);
    const auto model = load_model(o->model);
    check_model_lexicon(model, lex);
    auto it = docs.begin();
    if (!o->doc.empty()) {
      it = std::find_if(docs.begin(), docs.end(), [&](const ParsedDocument& d) { return d.source_id == o->doc; });
      if (it == docs.end()) throw DatasetError("no document with id `" + o->doc + "`");
    }
    const auto graph = build_graph(*it, lex, GraphConfig{lex.dims()});
    Rng unused(0);
    const auto pred = forward(model, graph, false, unused);
    for (std::size_t k = 0; k < pred.values.size(); ++k) {
      out << it->source_id << " " << output_name(model.config(), k) << " " << text::format_double(pred.values[k]) << "\n";
    }
    outs.add(o->out_dot, export_dot(graph, pred.trace, o->style));
    outs.add(o->out_json, export_json(graph, pred.trace));
    primary = o->out_json;
  };
}

void cmd_audit(CLI::App& app, Command& cmd, std::ostream& out) {
  struct Opts {
    std::string input, output, json_path, text_path, reference;
    std::size_t permutations = 100000;
  };
  auto o = std::make_shared<Opts>();
  cmd.app = app.add_subcommand("audit-bias", "Permutation-tested regressions of predicted valence on bias factors");
  cmd.app->add_option("--input", o->input, "CSV politician_id,stimulus_type,affiliation,gender,y_sprop[,y_transformer]")
      ->required();
  cmd.app->add_option("--permutations", o->permutations, "Permutations per test")->capture_default_str();
  cmd.app->add_option("--reference", o->reference, "Baseline affiliation (default: first in the input)");
  cmd.app->add_option("--output", o->output, "Report TSV")->required();
  cmd.app->add_option("--json", o->json_path, "Report JSON (default <output>.json)");
  cmd.app->add_option("--text", o->text_path, "Report table (default <output>.txt)");
  add_common(cmd.app, cmd.common);
  auto* common = &cmd.common;
  cmd.body = [o, common, &out](Manifest& m, Outputs& outs, std::string& primary) {
    const auto records = audit::parse_records(m.read(o->input));
    audit::AuditOptions ao;
    ao.permutations = {o->permutations, common->seed, resolve_threads(common->threads)};
    ao.reference = o->reference;
    const auto report = audit::run_audit(records, ao);
    auto table = audit::report_text(report);
    out << table;
    outs.add(o->output, audit::report_tsv(report));
    outs.add(o->json_path.empty() ? o->output + ".json" : o->json_path, audit::report_json(report));
    outs.add(o->text_path.empty() ? o->output + ".txt" : o->text_path, std::move(table));
    primary = o->output;
  };
}

void cmd_lexicon_check(CLI::App& app, Command& cmd, std::ostream& out) {
  struct Opts {
    std::string conllu, output;
    LexiconOptions lex;
  };
  auto o = std::make_shared<Opts>();
  cmd.app = app.add_subcommand("lexicon-check", "Validate a lexicon and report corpus coverage");
  cmd.app->add_option("--conllu", o->conllu, "Corpus to measure coverage on");
  cmd.app->add_option("--output", o->output, "JSON report");
  add_lexicon_options(cmd.app, o->lex);
  add_common(cmd.app, cmd.common);
  cmd.body = [o, &out](Manifest& m, Outputs& outs, std::string& primary) {
    const auto loaded = load_lexicon_input(o->lex, m);
    const auto& lex = loaded.lexicon;
    json j = {{"version", "1"},
              {"entries", lex.size()},
              {"rows", loaded.report.rows},
              {"metrics", lex.metric_names()},
              {"duplicates", loaded.report.duplicates},
              {"duplicate_keys", loaded.report.duplicate_keys},
              {"stopwords", lex.stopwords().size()},
              {"negations", lex.negations().size()}};
    out << "entries " << lex.size() << " (" << loaded.report.rows << " rows, " << loaded.report.duplicates
        << " duplicates)\nmetrics";
    for (const auto& n : lex.metric_names()) out << " " << n;
    out << "\nstopwords " << lex.stopwords().size() << ", negations " << lex.negations().size() << "\n";
    if (!o->conllu.empty()) {
      std::size_t content = 0, covered = 0;
      for (const auto& d : parse_conllu(m.read(o->conllu))) {
        for (const auto& t : scored_tokens(d, lex)) {
          if (t.stopword || t.punctuation || t.negation) continue;
          ++content;
          covered += lex.lookup(t.form, t.lemma).has_value();
        }
      }
      const double rate = content == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(content);
      j["content_tokens"] = content;
      j["covered_tokens"] = covered;
      j["coverage"] = rate;
      out << "coverage " << covered << "/" << content << " content tokens (" << text::format_double(rate) << ")\n";
    }
    if (!o->output.empty()) {
      outs.add(o->output, j.dump(2) + "\n");
      primary = o->output;
    }
  };
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sprop: syntax-aware emotion prediction with semantically blinded graph networks", "sprop"};
  app.set_version_flag("--version", SPROP_VERSION);
  app.require_subcommand(1);
  app.fallthrough(false);

  std::map<std::string, Command> commands;
  cmd_build_graphs(app, commands["build-graphs"]);
  cmd_train(app, commands["train"], out, err, false);
  cmd_train(app, commands["sweep"], out, err, true);
  cmd_predict(app, commands["predict"]);
  cmd_evaluate(app, commands["evaluate"], out);
  cmd_explain(app, commands["explain"], out);
  cmd_audit(app, commands["audit-bias"], out);
  cmd_lexicon_check(app, commands["lexicon-check"], out);

  Manifest manifest;
  try {
    const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return !a.starts_with("-"); });
    if (sub != args.end() && commands.contains(*sub)) args = apply_config(std::move(args), commands.at(*sub).app, manifest);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << SPROP_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& [name, c] : commands) {
      if (c.app->parsed()) {
        err << c.app->help();
        return kExitUsage;
      }
    }
    err << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }

  for (auto& [name, cmd] : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      Outputs outs;
      std::string primary;
      cmd.body(manifest, outs, primary);
      const auto threads = resolve_threads(cmd.common.threads);
      std::string manifest_path = cmd.common.manifest;
      if (manifest_path.empty() && !primary.empty()) manifest_path = primary + ".manifest.json";
      if (!manifest_path.empty()) outs.add(manifest_path, manifest_json(name, cmd, manifest, outs, threads));
      outs.commit();
      return kExitOk;
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n" << cmd.app->help();
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitData;
    }
  }
  return kExitUsage;
}

}  // namespace sprop::cli
