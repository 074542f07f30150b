#include <benchmark/benchmark.h>

#include <random>

#include "ld/geometry.hpp"
#include "ld/harness.hpp"
#include "ld/losses.hpp"
#include "ld/regions.hpp"
#include "ld/theory.hpp"

namespace {

std::vector<double> logits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 2.0);
  std::vector<double> z(n);
  for (double& v : z) v = d(rng);
  return z;
}

void BM_KdLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto zs = logits(n, 1);
  const auto zt = logits(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ld::kd_loss(zs, zt, 10.0));
}
BENCHMARK(BM_KdLoss)->Arg(9)->Arg(17)->Arg(33);

void BM_LdBoxLoss(benchmark::State& state) {
  const auto grid = ld::make_grid(0.0, 16.0, static_cast<std::size_t>(state.range(0)));
  ld::BoxDistribution s;
  ld::BoxDistribution t;
  for (std::uint64_t e = 0; e < 4; ++e) {
    s.edges.emplace_back(logits(grid.size(), e), grid);
    t.edges.emplace_back(logits(grid.size(), e + 10), grid);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ld::ld_box_loss(s, t, 10.0));
}
BENCHMARK(BM_LdBoxLoss)->Arg(8)->Arg(16);

void BM_AssignRegions(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(0.0, 500.0);
  std::uniform_real_distribution<double> size(8.0, 64.0);
  auto box = [&] {
    const double x = pos(rng);
    const double y = pos(rng);
    return ld::BoundingBox{x, y, x + size(rng), y + size(rng)};
  };
  std::vector<ld::BoundingBox> anchors(static_cast<std::size_t>(state.range(0)));
  for (auto& a : anchors) a = box();
  std::vector<ld::BoundingBox> gts(10);
  for (auto& g : gts) g = box();
  for (auto _ : state) benchmark::DoNotOptimize(ld::assign_regions(anchors, gts, 0.5, 0.25));
}
BENCHMARK(BM_AssignRegions)->Arg(1000)->Arg(10000);

void BM_Decomposition(benchmark::State& state) {
  ld::Rng rng(4);
  const auto l = ld::random_simplex(rng, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ld::theory::decompose_localization(l, 0.4, 2, 3));
}
BENCHMARK(BM_Decomposition)->Arg(9)->Arg(17);

void BM_TrainEpochs(benchmark::State& state) {
  ld::harness::ExperimentConfig cfg;
  const auto data = ld::harness::gen_dataset(cfg.data, cfg.train.distill, 0);
  const ld::harness::LinearLocalizer student(cfg.data.input_dim, cfg.student, cfg.train.distill.grid, 1);
  const ld::harness::LinearLocalizer teacher(cfg.data.input_dim, cfg.teacher, cfg.train.distill.grid, 2);
  auto train = cfg.train;
  train.epochs = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ld::harness::train(student, data, ld::harness::Scheme::LdMain, &teacher, train));
  }
}
BENCHMARK(BM_TrainEpochs)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
