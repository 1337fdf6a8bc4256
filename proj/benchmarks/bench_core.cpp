#include <benchmark/benchmark.h>

#include <vector>

#include "dawgen/gradient_surgery.hpp"
#include "dawgen/model.hpp"
#include "dawgen/prompt_tuning.hpp"
#include "dawgen/rng.hpp"
#include "dawgen/sampling.hpp"
#include "dawgen/task.hpp"
#include "dawgen/tensor.hpp"
#include "dawgen/vocab.hpp"

namespace {

using namespace dawgen;

Model& bench_model() {
  static Model m = [] {
    ModelDims dims;
    dims.vocab_size = Vocabulary::toy().size();
    return Model(dims, 7);
  }();
  return m;
}

std::vector<int> bench_ids(int n) {
  Rng rng(3);
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int& t : ids)
    t = static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(Vocabulary::toy().size())));
  return ids;
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  std::vector<double> av(static_cast<std::size_t>(n) * n), bv = av;
  for (double& x : av) x = rng.normal();
  for (double& x : bv) x = rng.normal();
  Tensor a = Tensor::from({n, n}, av);
  Tensor b = Tensor::from({n, n}, bv);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}

void BM_ForwardHidden(benchmark::State& state) {
  Model& m = bench_model();
  auto ids = bench_ids(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Tensor h = m.forward_hidden(m.embed(ids));
    benchmark::DoNotOptimize(h.values().data());
  }
}

void BM_ForwardBackward(benchmark::State& state) {
  Model& m = bench_model();
  const Vocabulary& vocab = Vocabulary::toy();
  auto spec = TaskSpec::named("toy-paraphrase");
  auto batch = build_task(spec, 5, 1, 1, 4).train_pool;
  batch.resize(4);
  Rng rng(9);
  std::vector<double> pv(10 * static_cast<std::size_t>(m.dims().d_model));
  for (double& x : pv) x = 0.1 * rng.normal();
  Tensor prompt = Tensor::from({10, m.dims().d_model}, pv, true);
  for (auto _ : state) {
    Tensor loss = classification_loss(m, prompt, batch, spec, vocab);
    backward(loss);
    benchmark::DoNotOptimize(prompt.grad().data());
  }
}

void BM_IncrementalDecodeStep(benchmark::State& state) {
  Model& m = bench_model();
  auto ids = bench_ids(24);
  for (auto _ : state) {
    InferenceRun run(m, Tensor());
    for (int t : ids) {
      run.feed(t);
      benchmark::DoNotOptimize(run.last_hidden().data());
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(ids.size()));
}

void BM_SampleToken(benchmark::State& state) {
  Rng rng(11);
  std::vector<double> logits(static_cast<std::size_t>(Vocabulary::toy().size()));
  for (double& x : logits) x = rng.normal();
  DecodeConfig cfg;
  cfg.strategy = state.range(0) == 0 ? DecodeStrategy::TopK
                                     : DecodeStrategy::Nucleus;
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_token(logits, cfg, rng));
}

void BM_GradProject(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  Rng rng(13);
  std::vector<double> syn(dim), real(dim);
  for (double& x : syn) x = rng.normal();
  for (double& x : real) x = rng.normal();
  // force the conflicting branch so the projection actually runs
  double d = 0.0;
  for (std::size_t i = 0; i < dim; ++i) d += syn[i] * real[i];
  if (d >= 0.0)
    for (double& x : syn) x = -x;
  for (auto _ : state) {
    auto out = grad_project(syn, real);
    benchmark::DoNotOptimize(out.data());
  }
}

BENCHMARK(BM_Matmul)->Arg(64)->Arg(128);
BENCHMARK(BM_ForwardHidden)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_ForwardBackward);
BENCHMARK(BM_IncrementalDecodeStep);
BENCHMARK(BM_SampleToken)->Arg(0)->Arg(1);
BENCHMARK(BM_GradProject)->Arg(640)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
