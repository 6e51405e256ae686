#include <benchmark/benchmark.h>

#include <vector>

#include "cnce/encoder.hpp"
#include "cnce/numerics.hpp"
#include "cnce/samplers.hpp"

namespace {

using namespace cnce;

void BM_logsumexp(benchmark::State& state) {
  Rng r(0);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = r.normal();
  for (auto _ : state) benchmark::DoNotOptimize(logsumexp(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_logsumexp)->Arg(101)->Arg(4096);

void BM_ring_select(benchmark::State& state) {
  Rng r(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  Matrix store(n, 16);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = store.row(i);
    for (auto& x : row) x = r.normal();
    const double norm = l2_norm(row);
    for (auto& x : row) x /= norm;
  }
  const std::vector<double> anchor(store.row(0).begin(), store.row(0).end());
  for (auto _ : state) benchmark::DoNotOptimize(ring_select(anchor, store, RingSpec{0.5, 0.85}, 0.1, 0));
}
BENCHMARK(BM_ring_select)->Arg(640)->Arg(8192);

void BM_mlp_forward_backward(benchmark::State& state) {
  Rng r(2);
  Mlp mlp({16, 64, 16}, r);
  std::vector<double> x(16);
  for (auto& v : x) v = r.normal();
  auto unit = [&] {
    Embedding e(16);
    for (auto& v : e) v = r.normal();
    const double n = l2_norm(e);
    for (auto& v : e) v /= n;
    return e;
  };
  const Embedding pos = unit();
  std::vector<Embedding> negs(64);
  for (auto& n : negs) n = unit();
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(mlp, x, pos, negs, 0.1));
}
BENCHMARK(BM_mlp_forward_backward);

void BM_kmeans(benchmark::State& state) {
  Rng r(3);
  Matrix pts(static_cast<std::size_t>(state.range(0)), 16);
  for (auto& v : pts.data) v = r.normal();
  for (auto _ : state) {
    Rng local(4);
    benchmark::DoNotOptimize(kmeans(pts, 8, 20, local));
  }
}
BENCHMARK(BM_kmeans)->Arg(640);

}  // namespace
BENCHMARK_MAIN();
