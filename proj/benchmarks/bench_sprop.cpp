#include <benchmark/benchmark.h>

#include <vector>

#include "sprop/bias_audit.hpp"
#include "sprop/conllu.hpp"
#include "sprop/graph.hpp"
#include "sprop/model.hpp"
#include "sprop/trainer.hpp"
#include "synthetic.hpp"

using namespace sprop;

namespace {

std::vector<TextGraph> graphs(std::size_t n, std::size_t nodes) {
  Rng rng(11);
  std::vector<TextGraph> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testkit::random_graph(rng, nodes, 1));
  return out;
}

void BM_BuildGraph(benchmark::State& state) {
  const auto lex = testkit::synthetic_lexicon();
  const auto docs = testkit::synthetic_documents(64, 3, "b");
  for (auto _ : state) {
    for (const auto& d : docs) benchmark::DoNotOptimize(build_graph(d, lex, {}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(docs.size()));
}
BENCHMARK(BM_BuildGraph);

// Batched inference at the default width; range(0) is nodes per graph.
void BM_Predict(benchmark::State& state) {
  const auto model = init_model(SPropConfig{});
  const auto gs = graphs(16, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, gs, 16));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Predict)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// One optimiser step: forward, loss, backward, AdamW. range(0) is H.
void BM_TrainStep(benchmark::State& state) {
  SPropConfig cfg;
  cfg.hidden = static_cast<std::size_t>(state.range(0));
  cfg.attn_hidden = cfg.hidden / 2;
  auto model = init_model(cfg);
  const auto gs = graphs(16, 12);
  std::vector<const TextGraph*> ptrs;
  std::vector<Target> targets;
  for (const auto& g : gs) {
    ptrs.push_back(&g);
    targets.emplace_back(std::vector<double>{0.5});
  }
  const auto batch = make_batch(ptrs, 1);
  AdamWState opt;
  ad::Rng rng(5);
  for (auto _ : state) {
    model.zero_grad();
    ad::Tape tape;
    const auto out = forward_batch(tape, model, batch, true, rng);
    const auto loss = batch_loss(tape, TaskKind::Continuous, out.output, targets);
    tape.backward(loss);
    adamw_step(model.parameters(), opt, {});
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_PermutationF(benchmark::State& state) {
  const auto rs = testkit::audit_records(4, 10, false);
  const auto levels = audit::affiliation_levels(rs);
  const auto x = audit::approach1_design(rs, levels, levels.front());
  std::vector<double> y;
  for (const auto& r : rs) y.push_back(r.y_sprop);
  audit::PermutationOptions o;
  o.n_permutations = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(audit::permutation_test_f(x, y, o));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PermutationF)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
