#include "cgo/cgo.hpp"
#include "cgo/grid.hpp"
#include "cgo/operators.hpp"
#include "cgo/parallel.hpp"

#include <benchmark/benchmark.h>

#include <numbers>

using namespace cgo;

namespace {

GridSpec grid(int n) { return GridSpec::centered(n, 2 * std::numbers::pi); }

Medium bump_medium(const GridSpec& g) {
  MediumSpec s;
  s.rho = std::numbers::pi - 3 * g.h();
  Bump b;
  b.radius = s.rho;
  b.amp_mu = 0.03;
  b.amp_gamma = cplx(0.02, 0.01);
  b.sigma = 4 * g.h();
  b.power = 6;
  s.bumps.push_back(b);
  return make_bump_medium(g, s);
}

void BM_dft_spinor(benchmark::State& st) {
  const GridSpec g = grid(static_cast<int>(st.range(0)));
  Field u = random_band_limited(g, Rank::spinor8, 4, 1);
  for (auto _ : st) {
    dft_forward_inplace(u);
    dft_inverse_inplace(u);
    benchmark::DoNotOptimize(u.values().data());
  }
  st.SetItemsProcessed(st.iterations() * 2 * 8 * static_cast<long>(g.points()));
}
BENCHMARK(BM_dft_spinor)->Arg(24)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_apply_P(benchmark::State& st) {
  const GridSpec g = grid(static_cast<int>(st.range(0)));
  const Field u = random_band_limited(g, Rank::spinor8, 4, 2);
  for (auto _ : st) benchmark::DoNotOptimize(apply_P(u));
}
BENCHMARK(BM_apply_P)->Arg(24)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_potential(benchmark::State& st) {
  const GridSpec g = grid(static_cast<int>(st.range(0)));
  const MediumOperators ops(bump_medium(g));
  for (auto _ : st) benchmark::DoNotOptimize(ops.potential(PotentialKind::Q));
}
BENCHMARK(BM_potential)->Arg(24)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_solve_cgo(benchmark::State& st) {
  const GridSpec g = grid(static_cast<int>(st.range(0)));
  const Background bg;
  const MediumOperators ops(bump_medium(g));
  const Field Q = ops.potential(PotentialKind::Q);
  const CgoDirections d = build_zeta_pair(Vec3(1, 0, 0), static_cast<double>(st.range(1)), bg);
  const Vec8 L = build_L(d.zeta1, polarization_z(Mode::f, d), bg);
  for (auto _ : st) {
    const CgoSolution z = solve_cgo(d.zeta1, Q, PotentialKind::Q, L, bg, d.eta1, g.box_length);
    st.counters["iterations"] = z.stats.iterations;
  }
}
BENCHMARK(BM_solve_cgo)->Args({24, 4})->Args({24, 32})->Args({32, 8})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
