#include <benchmark/benchmark.h>

#include <random>

#include "vnp/batch.hpp"
#include "vnp/objective.hpp"
#include "vnp/optim.hpp"

using namespace vnp;

namespace {

Tensor<float> uniform(Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor<float> t(std::move(s));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::vector<gp::Task> tasks(std::size_t n) {
  gp::TaskSamplerConfig cfg;
  cfg.seed = 1;
  return gp::sample_task_set(cfg, n);
}

void BM_Attention(benchmark::State& state) {
  const auto sets = static_cast<std::size_t>(state.range(0));
  const std::size_t m = 32, d = 64;
  std::mt19937_64 rng(0);
  const auto q = uniform({sets * m, d}, rng), k = uniform({sets * m, d}, rng), v = uniform({sets * m, d}, rng);
  const auto seg = Segments::uniform(sets, m);
  for (auto _ : state) {
    Graph<float> g;
    auto out = multihead_attention(g.variable("q", q), g.variable("k", k), g.variable("v", v), 4, seg, seg);
    benchmark::DoNotOptimize(g.backward(sum(out)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sets));
}
BENCHMARK(BM_Attention)->Arg(1)->Arg(8)->Arg(32);

void BM_ModFc(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64, sets = 32;
  std::mt19937_64 rng(0);
  const auto x = uniform({rows, d}, rng), s = uniform({sets, d}, rng), w = uniform({d, d}, rng);
  const auto seg = Segments::uniform(sets, rows / sets);
  for (auto _ : state) {
    Graph<float> g;
    auto out = modfc(g.variable("x", x), g.variable("s", s), g.variable("w", w), seg);
    benchmark::DoNotOptimize(g.backward(sum(out)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_ModFc)->Arg(32 * 20)->Arg(32 * 80);

void BM_TrainStep(benchmark::State& state) {
  const auto L_K = static_cast<std::size_t>(state.range(0));
  ModelDims dims;
  const Model model = build_variant(L_K == 0 ? VariantSpec::vnp(0) : VariantSpec::vnp(L_K), dims);
  auto params = init_params<float>(model, 0);
  const auto batch_tasks = tasks(32);
  const auto batch = make_batch<float>(batch_tasks);
  Rng rng(0);
  const auto noise = draw_noise<float>(L_K, batch.size(), dims.d_z, rng);
  AdamState<float> adam;
  AdamConfig cfg;
  std::int64_t t = 0;
  for (auto _ : state) {
    Graph<float> g;
    const auto loss = elbo_loss(g, params, model, batch, 1.0, noise);
    adam_step(params, g.backward(loss.total), adam, cfg, ++t);
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_IwEval(benchmark::State& state) {
  const Model model = build_variant(VariantSpec::vnp(4), ModelDims{});
  const auto params = init_params<float>(model, 0);
  const auto set = tasks(8);
  EvalConfig cfg;
  cfg.iw_samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(score_split(params, model, std::span<const gp::Task>(set), cfg, false));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_IwEval)->Arg(1)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
