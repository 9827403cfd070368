#include <benchmark/benchmark.h>

#include <random>

#include "attralign/losses.hpp"
#include "attralign/mining.hpp"
#include "attralign/model.hpp"
#include "attralign/numerics.hpp"
#include "attralign/tape.hpp"
#include "attralign/training.hpp"

using namespace attralign;

namespace {

Matrix gaussian(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(rng);
  return m;
}

RawBatch raw_batch(std::size_t b, std::size_t dim, std::size_t k) {
  std::mt19937_64 rng(1);
  RawBatch raw;
  raw.objects = gaussian(rng, b, dim);
  raw.attributes = gaussian(rng, b, dim);
  raw.categories = gaussian(rng, b, dim);
  raw.negative_attributes = gaussian(rng, b * k, dim);
  raw.negative_categories = gaussian(rng, b * k, dim);
  for (std::size_t i = 0; i <= b; ++i) raw.negative_offsets.push_back(i * k);
  return raw;
}

ProjectionModel bench_model(std::size_t dim) {
  ModelConfig mc;
  mc.dim_object = dim;
  mc.dim_text = dim;
  return make_model(mc);
}

}  // namespace

static void BM_CosineSim(benchmark::State& state) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(state.range(0)), b(state.range(0));
  for (auto& x : a) x = n(rng);
  for (auto& x : b) x = n(rng);
  const Vector va(a), vb(b);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_sim(va, vb));
}
BENCHMARK(BM_CosineSim)->Arg(64)->Arg(1024);

static void BM_Stage1Objective(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const BatchViews views = forward(bench_model(32), raw_batch(b, 32, 3), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(stage1_objective(views).report.stage1_total);
}
BENCHMARK(BM_Stage1Objective)->Arg(16)->Arg(64);

static void BM_TapeForwardBackward(benchmark::State& state) {
  const auto model = bench_model(32);
  const RawBatch raw = raw_batch(static_cast<std::size_t>(state.range(0)), 32, 3);
  for (auto _ : state) {
    Tape tape;
    const auto binding = bind_model(tape, model);
    const auto nodes = record_stage1(tape, record_forward(tape, model, binding, raw, 1.0));
    benchmark::DoNotOptimize(tape.backward(nodes.total).of(binding.all().front()));
  }
}
BENCHMARK(BM_TapeForwardBackward)->Arg(16)->Arg(64);

static void BM_Mine(benchmark::State& state) {
  SynthConfig cfg;
  cfg.num_classes = static_cast<std::size_t>(state.range(0));
  cfg.samples_per_class = 50;
  const auto ds = generate_synthetic(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(mine(ds, 3).entries.size());
}
BENCHMARK(BM_Mine)->Arg(10)->Arg(50);

static void BM_TrainEpoch(benchmark::State& state) {
  const SynthConfig data;
  const auto ds = generate_synthetic(data);
  const auto negatives = mine(ds, 3);
  const auto model = bench_model(32);
  TrainConfig cfg;
  cfg.stage2.epochs = 0;
  cfg.eval.choices = 2;
  for (auto _ : state) benchmark::DoNotOptimize(train(ds, negatives, model, cfg).history.size());
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
