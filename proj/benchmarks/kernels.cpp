#include <benchmark/benchmark.h>

#include <random>

#include "vdls/compositor.hpp"
#include "vdls/ensemble.hpp"
#include "vdls/ops.hpp"
#include "vdls/render.hpp"
#include "vdls/view.hpp"

using namespace vdls;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  int64_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = d(rng);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(grad);
  return t;
}

Volume desk_member(int64_t n) {
  const SimParams p{{1.2, 0.3, 0.5, 0.5}, ParameterSpace::synthetic_default()};
  return simulate(p, {n, n, n});
}

}  // namespace

// One RAE batch worth of rays through a k_r=8 conv layer, forward and backward.
static void BM_Conv1dRays(benchmark::State& state) {
  const int64_t rays = state.range(0);
  auto x = random_tensor({rays, 8, 64}, 1, true);
  auto w = random_tensor({8, 8, 3}, 2, true);
  auto b = random_tensor({8}, 3, true);
  for (auto _ : state) {
    auto y = sum(conv1d(x, w, b));
    y.backward();
    benchmark::DoNotOptimize(y.item());
  }
  state.SetItemsProcessed(state.iterations() * rays);
}
BENCHMARK(BM_Conv1dRays)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

// Predictor up-block sized conv on a 16x16x4 grid with 16 channels.
static void BM_Conv3dForward(benchmark::State& state) {
  auto x = random_tensor({1, 16, 16, 16, 4}, 4);
  auto w = random_tensor({16, 16, 3, 3, 3}, 5);
  auto b = random_tensor({16}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d(x, w, b).values().data());
}
BENCHMARK(BM_Conv3dForward)->Unit(benchmark::kMillisecond);

static void BM_RenderDesk(benchmark::State& state) {
  const auto vol = desk_member(64);
  const auto cam = Camera::orbit({0.6, 0.48, 0.64}, 2.2, static_cast<int>(state.range(0)),
                                 static_cast<int>(state.range(0)));
  const auto tf = TransferFunction::three_surfaces();
  for (auto _ : state) benchmark::DoNotOptimize(render_volume(vol, cam, tf).pixels.data());
}
BENCHMARK(BM_RenderDesk)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_FuseToGrid(benchmark::State& state) {
  const auto vol = desk_member(state.range(0));
  const Normalization norm{-0.1, 2.1};
  const auto normalized = normalize(vol, norm);
  std::vector<ViewDependentVolume> views;
  for (int a = 0; a < 3; ++a) {
    ViewConfig c;
    c.axis = a;
    c.width = c.height = c.ray_length = state.range(0);
    views.push_back(sample_view(normalized, c));
  }
  std::vector<const ViewDependentVolume*> ptrs{&views[0], &views[1], &views[2]};
  for (auto _ : state) benchmark::DoNotOptimize(fuse_to_grid(ptrs, {0.6, 0.48, 0.64}, vol.extents).values.data());
  state.SetItemsProcessed(state.iterations() * vol.size());
}
BENCHMARK(BM_FuseToGrid)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
