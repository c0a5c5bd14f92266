// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any required criterion fails; criterion 10 runs only when EmoBank paths
// are supplied through SPROP_EMOBANK_CONLLU, SPROP_EMOBANK_LABELS and
// SPROP_EMOBANK_LEXICON.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "oracles.hpp"
#include "sprop/bias_audit.hpp"
#include "sprop/metrics.hpp"
#include "sprop/text.hpp"
#include "sprop/trainer.hpp"
#include "synthetic.hpp"

using namespace sprop;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

char buf[512];

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SPropConfig small_config(TaskKind task, std::size_t outputs, std::size_t emotion_dims) {
  SPropConfig c;
  c.emotion_dims = emotion_dims;
  c.hidden = 6;
  c.attn_hidden = 5;
  c.cont_head_hidden = 4;
  c.disc_head_hidden = {7, 5};
  c.task = task;
  c.outputs = outputs;
  return c;
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  std::size_t coords = 0;
  for (int i = 0; i < 10; ++i) {
    const auto g = testkit::random_graph(rng, 3 + uniform_index(rng, 8), 2);
    const std::vector<const TextGraph*> graphs{&g};
    auto cont_cfg = small_config(TaskKind::Continuous, 2, 2);
    cont_cfg.seed = 1000 + static_cast<std::uint64_t>(i);
    auto cont = init_model(cont_cfg);
    const std::vector<Target> ct{std::vector<double>{uniform01(rng), uniform01(rng)}};
    auto rc = testkit::check_model_gradients(cont, graphs, ct);

    auto disc_cfg = small_config(TaskKind::Discrete, 3, 2);
    disc_cfg.seed = 2000 + static_cast<std::uint64_t>(i);
    auto disc = init_model(disc_cfg);
    const std::vector<Target> dt{uniform_index(rng, 3)};
    auto rd = testkit::check_model_gradients(disc, graphs, dt);
    worst = std::max({worst, rc.max_rel_error, rd.max_rel_error});
    coords += rc.checked + rd.checked;
  }
  const double s = seconds_since(t0);
  return {worst < 1e-4 && s < 120.0 ? Outcome::Pass : Outcome::Fail,
          fmt("max relative error %.2e over %zu coordinates, both heads, %.1f s", worst, coords, s)};
}

bool same_prediction(const Prediction& a, const Prediction& b) {
  if (a.values != b.values || a.trace.attention != b.trace.attention) return false;
  if (a.trace.edges.size() != b.trace.edges.size()) return false;
  for (std::size_t e = 0; e < a.trace.edges.size(); ++e) {
    const auto &x = a.trace.edges[e], &y = b.trace.edges[e];
    if (x.mean != y.mean || x.l2 != y.l2 || x.mean_abs != y.mean_abs) return false;
  }
  return true;
}

Outcome semantic_blinding() {
  Rng rng(202);
  SPropConfig cc;
  SPropConfig dc;
  dc.task = TaskKind::Discrete;
  dc.outputs = 4;
  const auto cont = init_model(cc);
  const auto disc = init_model(dc);
  std::size_t identical = 0;
  for (int i = 0; i < 100; ++i) {
    const auto g = testkit::random_graph(rng, 3 + uniform_index(rng, 12), 1);
    auto renamed = g;
    for (auto& n : renamed.nodes) n.debug_form = "tok" + std::to_string(rng() % 100000);
    ad::Rng r1(1), r2(1);
    const bool ok = same_prediction(forward(cont, g, false, r1), forward(cont, renamed, false, r2)) &&
                    same_prediction(forward(disc, g, false, r1), forward(disc, renamed, false, r2));
    identical += ok;
  }
  return {identical == 100 ? Outcome::Pass : Outcome::Fail,
          fmt("%zu/100 graphs bit-identical (predictions and traces, both heads)", identical)};
}

Outcome permutation_equivariance() {
  Rng rng(303);
  SPropConfig cc;
  cc.emotion_dims = 2;
  cc.outputs = 2;
  const auto model = init_model(cc);
  double worst_pred = 0.0, worst_attn = 0.0, worst_edge = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto g = testkit::random_graph(rng, 3 + uniform_index(rng, 12), 2);
    std::vector<std::size_t> perm(g.nodes.size());
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(std::span<std::size_t>(perm), rng);
    const auto pg = testkit::permute_nodes(g, perm);
    ad::Rng r(0);
    const auto a = forward(model, g, false, r);
    const auto b = forward(model, pg, false, r);
    for (std::size_t k = 0; k < a.values.size(); ++k) worst_pred = std::max(worst_pred, std::abs(a.values[k] - b.values[k]));
    for (std::size_t n = 0; n < g.nodes.size(); ++n) {
      worst_attn = std::max(worst_attn, std::abs(a.trace.attention[n] - b.trace.attention[perm[n]]));
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      worst_edge = std::max(worst_edge, std::abs(a.trace.edges[e].mean - b.trace.edges[e].mean));
    }
  }
  const bool ok = worst_pred < 1e-9 && worst_attn <= 1e-12 && worst_edge <= 1e-12;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("100 graphs: max |dprediction| %.1e, max |dattention| %.1e after relabeling, max |dscaling| %.1e", worst_pred,
              worst_attn, worst_edge)};
}

struct Learned {
  bool ran = false;
  double train_r = 0, heldout_r = 0, seconds = 0, happy = 0, not_happy = 0;
  std::size_t epochs = 0;
};

double pearson_of(const SPropModel& m, std::span<const LabeledExample> set) {
  std::vector<TextGraph> graphs;
  std::vector<double> truth;
  for (const auto& ex : set) {
    graphs.push_back(ex.graph);
    truth.push_back(std::get<std::vector<double>>(ex.target)[0]);
  }
  std::vector<double> pred;
  for (const auto& p : predict(m, graphs)) pred.push_back(p.values[0]);
  return metrics::pearson(pred, truth);
}

Learned learn_synthetic() {
  Learned out;
  const auto lex = testkit::synthetic_lexicon();
  const auto train_set = testkit::synthetic_examples(80, 1, lex, "train");
  const auto valid_set = testkit::synthetic_examples(20, 2, lex, "valid");
  const auto heldout = testkit::synthetic_examples(20, 3, lex, "test");
  SPropConfig mc;
  mc.seed = 7;
  TrainConfig tc;
  tc.max_epochs = 500;
  tc.patience = 50;
  tc.batch_size = 16;
  tc.weight_decay = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train(init_model(mc), train_set, valid_set, tc);
  out.seconds = seconds_since(t0);
  out.epochs = r.history.size();
  out.train_r = pearson_of(r.model, train_set);
  out.heldout_r = pearson_of(r.model, heldout);
  const std::vector<TextGraph> probe{build_graph(testkit::i_am("pos", "happy", false), lex, {}),
                                     build_graph(testkit::i_am("neg", "happy", true), lex, {})};
  const auto p = predict(r.model, probe);
  out.happy = p[0].values[0];
  out.not_happy = p[1].values[0];
  out.ran = true;
  return out;
}

Outcome learnability(const Learned& l) {
  const bool ok = l.train_r >= 0.95 && l.heldout_r >= 0.8 && l.epochs <= 500 && l.seconds < 300.0;
  return {ok ? Outcome::Pass : Outcome::Fail, fmt("train r %.4f, held-out r %.4f (20 texts), %zu epochs, %.1f s",
                                                  l.train_r, l.heldout_r, l.epochs, l.seconds)};
}

Outcome negation_direction(const Learned& l) {
  const double gap = l.happy - l.not_happy;
  return {gap > 0.1 ? Outcome::Pass : Outcome::Fail,
          fmt("valence(I am happy) %.3f - valence(I am not happy) %.3f = %.3f", l.happy, l.not_happy, gap)};
}

audit::DesignMatrix design(const std::vector<std::vector<double>>& rows, std::vector<std::string> names) {
  audit::DesignMatrix x;
  x.names = std::move(names);
  x.rows = rows.size();
  for (const auto& r : rows) x.values.insert(x.values.end(), r.begin(), r.end());
  return x;
}

Outcome audit_oracle() {
  struct Case {
    std::vector<std::vector<double>> x;
    std::vector<std::string> names;
    std::vector<double> y;
  };
  const std::vector<Case> cases{
      {{{1, 0}, {1, 1}, {1, 2}, {1, 3}, {1, 4}, {1, 5}}, {"(Intercept)", "x"}, {0.3, 1.9, 1.2, 3.8, 2.6, 4.1}},
      {{{1, 0, 0}, {1, 0, 1}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}, {1, 1, 0}},
       {"(Intercept)", "opposition", "gender"},
       {52.1, 55.0, 47.3, 49.9, 54.2, 48.8}},
      {{{1, 0, 0}, {1, 1, 0}, {1, 0, 1}, {1, 0, 0}, {1, 1, 1}, {1, 0, 1}},
       {"(Intercept)", "opposition", "independent"},
       {10.0, 10.4, 9.1, 10.9, 9.8, 10.2}},
  };
  double worst_p = 0.0, worst_ols = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const auto x = design(c.x, c.names);
    const auto mc = audit::permutation_test_f(x, c.y, {.n_permutations = 100000, .seed = 500 + i});
    worst_p = std::max(worst_p, std::abs(mc.p_value - testkit::exact_permutation_p(c.x, c.y)));
    const auto fit = audit::ols_fit(x, c.y);
    const auto hand = testkit::normal_equations(c.x, c.y);
    for (std::size_t k = 0; k < c.names.size(); ++k) {
      worst_ols = std::max({worst_ols, std::abs(fit.coefficients[k].estimate - hand.beta[k]),
                            std::abs(fit.coefficients[k].std_error - hand.std_error[k])});
    }
    worst_ols = std::max({worst_ols, std::abs(fit.r2 - hand.r2), std::abs(fit.f_stat - hand.f_stat)});
  }
  return {worst_p <= 0.02 && worst_ols <= 1e-8 ? Outcome::Pass : Outcome::Fail,
          fmt("3 strata of n=6: max |p_MC - p_exact(720)| %.4f; max OLS deviation from normal equations %.1e", worst_p,
              worst_ols)};
}

Outcome audit_identities() {
  audit::AuditOptions o;
  o.permutations.n_permutations = 2000;

  auto planted = testkit::audit_records(31, 2, true);
  for (auto& r : planted) {
    const double bias = (r.affiliation == "opposition" ? -4.0 : r.affiliation == "independent" ? 2.5 : 0.0) + 3.0 * r.gender;
    r.y_sprop = 40.0 + 2.0 * static_cast<double>(r.stimulus);
    r.y_transformer = r.y_sprop + bias;
  }
  const double gamma = audit::run_audit(planted, o).approach3->fit.coef("bias").estimate;

  auto same = testkit::audit_records(32, 2, true);
  for (auto& r : same) r.y_sprop = *r.y_transformer;
  const double beta = audit::run_audit(same, o).approach2->fit.coef("bias").estimate;

  const bool ok = std::abs(gamma + 1.0) <= 1e-8 && std::abs(beta) <= 1e-8;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("approach 3 gamma_bias %.12f (want -1); approach 2 beta_bias %.1e (want 0)", gamma, beta)};
}

Outcome structural_fidelity() {
  const auto lex = parse_lexicon("word\tvalence\nhappy\t0.9\n").lexicon;
  const auto g = build_graph(testkit::i_am("d", "happy", true), lex, {});
  std::size_t words = 0, sentences = 0, dep_edges = 0, link_edges = 0;
  for (const auto& n : g.nodes) (n.kind == NodeKind::Word ? words : sentences)++;
  for (const auto& e : g.edges) (e.dep == DepCategory::SentenceLink ? link_edges : dep_edges)++;
  bool ok = words == 4 && sentences == 1 && dep_edges == 6 && link_edges == 8;
  for (std::size_t i = 0; i < 4; ++i) ok &= g.nodes[i].position == static_cast<double>(i + 1) / 4.0;
  ok &= g.nodes[3].emotion == std::vector<double>{0.9} && g.nodes[2].emotion == std::vector<double>{0.0};

  const auto fixture = testkit::slurp(fs::path(SPROP_FIXTURE_DIR) / "punctuation.conllu");
  std::vector<std::string> expected;
  std::istringstream lines(fixture);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("# expect = ", 0) == 0) expected.push_back(line.substr(11));
  }
  const auto docs = parse_conllu(fixture);
  std::size_t matched = 0;
  for (std::size_t d = 0; d < docs.size() && d < expected.size(); ++d) {
    std::string forms;
    for (const auto& n : build_graph(docs[d], lex, {}).nodes) {
      if (n.kind != NodeKind::Word) continue;
      forms += (forms.empty() ? "" : " ") + n.debug_form;
    }
    matched += forms == expected[d];
  }
  ok &= docs.size() == 20 && matched == 20;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("\"I am not happy .\": %zu word + %zu sentence nodes, %zu dependency + %zu sentence-link edges; "
              "punctuation fixture %zu/20",
              words, sentences, dep_edges, link_edges, matched)};
}

Outcome determinism() {
  const auto ws = testkit::write_workspace("acceptance", 60, 9);
  const auto run_train = [&](const std::string& out) {
    std::ostringstream o, e;
    return cli::run({"train", "--conllu", ws.conllu, "--labels", ws.labels, "--lexicon", ws.lexicon, "--hidden", "32",
                     "--epochs", "5", "--batch-size", "8", "--dropout", "0.2", "--output", (ws.dir / out).string()},
                    o, e);
  };
  const int a = run_train("a.bin"), b = run_train("b.bin");
  bool ok = a == 0 && b == 0;
  std::string detail = fmt("exit codes %d/%d", a, b);
  if (ok) {
    const auto ca = testkit::slurp(ws.dir / "a.bin"), cb = testkit::slurp(ws.dir / "b.bin");
    const auto strip = [](std::string m, const std::string& out) {
      std::string kept;
      std::istringstream in(m);
      for (std::string line; std::getline(in, line);) {
        if (line.find("_at\"") != std::string::npos) continue;
        for (auto p = line.find(out); p != std::string::npos; p = line.find(out)) line.replace(p, out.size(), "X.bin");
        kept += line + "\n";
      }
      return kept;
    };
    const bool manifests = strip(testkit::slurp(ws.dir / "a.bin.manifest.json"), "a.bin") ==
                           strip(testkit::slurp(ws.dir / "b.bin.manifest.json"), "b.bin");
    ok = ca == cb && manifests && !ca.empty();
    detail = fmt("two train runs: checkpoints %s (%zu bytes), manifests %s apart from timestamps",
                 ca == cb ? "byte-identical" : "DIFFER", ca.size(), manifests ? "identical" : "differ");
  }
  fs::remove_all(ws.dir);
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

Outcome emobank() {
  const char* conllu = std::getenv("SPROP_EMOBANK_CONLLU");
  const char* labels = std::getenv("SPROP_EMOBANK_LABELS");
  const char* lexicon = std::getenv("SPROP_EMOBANK_LEXICON");
  if (!conllu || !labels || !lexicon) {
    return {Outcome::Skip, "set SPROP_EMOBANK_CONLLU, SPROP_EMOBANK_LABELS and SPROP_EMOBANK_LEXICON to run"};
  }
  const auto lex = load_lexicon(lexicon).lexicon;
  LabelTableOptions lo;
  if (const char* lo_min = std::getenv("SPROP_EMOBANK_LIKERT_MIN")) {
    lo.likert = std::pair{std::stod(lo_min), std::stod(std::getenv("SPROP_EMOBANK_LIKERT_MAX"))};
  }
  const auto table = parse_label_table(text::read_file(labels), lo);
  const auto docs = parse_conllu(text::read_file(conllu));
  const auto split = split_dataset(assemble_examples(table.rows, docs, lex), 42);
  SPropConfig mc;
  mc.emotion_dims = lex.dims();
  mc.outputs = table.target_names.size();
  const auto r = train(init_model(mc), split.train, split.eval, TrainConfig{});
  std::vector<TextGraph> graphs;
  for (const auto& ex : split.test) graphs.push_back(ex.graph);
  const auto preds = predict(r.model, graphs);
  const std::map<std::string, double> reference{{"valence", 0.62}, {"arousal", 0.45}};
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < table.target_names.size(); ++k) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      x.push_back(preds[i].values[k]);
      y.push_back(std::get<std::vector<double>>(split.test[i].target)[k]);
    }
    const double rr = metrics::pearson(x, y);
    const auto it = reference.find(table.target_names[k]);
    if (it != reference.end()) ok &= std::abs(rr - it->second) <= 0.07;
    detail += fmt("%s r %.3f%s", table.target_names[k].c_str(), rr,
                  it == reference.end() ? " (no reference)" : fmt(" (reference %.2f)", it->second).c_str());
    if (k + 1 < table.target_names.size()) detail += "; ";
  }
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    bool required;
    std::function<Outcome()> run;
  };
  Learned learned;
  const auto ensure_learned = [&]() -> const Learned& {
    if (!learned.ran) learned = learn_synthetic();
    return learned;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", true, gradient_correctness},
      {2, "semantic blinding", true, semantic_blinding},
      {3, "permutation equivariance", true, permutation_equivariance},
      {4, "learnability", true, [&] { return learnability(ensure_learned()); }},
      {5, "negation direction", true, [&] { return negation_direction(ensure_learned()); }},
      {6, "bias-audit oracle", true, audit_oracle},
      {7, "bias-audit identities", true, audit_identities},
      {8, "structural fidelity", true, structural_fidelity},
      {9, "determinism", true, determinism},
      {10, "EmoBank reference (optional)", false, emobank},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Skip ? "SKIP" : "FAIL";
    std::printf("[%s] criterion %d %s: %s\n", tag, c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (o.kind == Outcome::Fail && c.required) ++failures;
  }
  std::printf("%d required criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
