#include "cgo/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace cgo;

namespace {

const double kPi = std::numbers::pi;
const GridSpec kGrid = GridSpec::centered(16, 2 * kPi);

Medium bump(double amp_mu, cplx amp_gamma) {
  MediumSpec s;
  s.rho = kPi - 3 * kGrid.h();
  Bump b;
  b.radius = s.rho;
  b.amp_mu = amp_mu;
  b.amp_gamma = amp_gamma;
  b.sigma = 1.0;
  b.power = 6;
  s.bumps.push_back(b);
  return make_bump_medium(kGrid, s);
}

DomainMask omega() { return DomainMask::ball(kGrid, Vec3::Zero(), kPi - 2.5 * kGrid.h()); }
DomainMask omega_prime() { return DomainMask::ball(kGrid, Vec3::Zero(), kPi - 3 * kGrid.h()); }

}  // namespace

TEST_CASE("Fourier oracle of a lattice plane wave") {
  const Vec3 k(1, -2, 0);
  const Field f = sample_scalar(kGrid, [&](const Vec3& x) { return std::exp(cplx(0, k.dot(x))); });
  CHECK(std::abs(fourier_oracle(f, k) - kGrid.volume()) < 1e-9);
  CHECK(std::abs(fourier_oracle(f, Vec3(1, 0, 0))) < 1e-9);
}

TEST_CASE("lattice cube enumerates every nonzero mode once") {
  CHECK(lattice_cube(kGrid, 2).size() == 124);
  CHECK_THROWS(lattice_cube(kGrid, 8));
  CHECK_THROWS(lattice_cube(kGrid, 0));
}

TEST_CASE("linearized inversion of an oracle spectrum is exact") {
  const Medium a = bump(0.01, 0.01);
  const Medium b = make_background_medium(kGrid, Background{});
  const LogFields la = log_fields(a), lb = log_fields(b);
  const Field da = la.alpha - lb.alpha, db = la.beta - lb.beta;
  const Background bg;
  RecoveryResult r = invert_linearized(oracle_spectrum(da, db, bg), kGrid, bg, omega_prime());
  score_recovery(r, da, db, omega_prime());
  CHECK(r.rel_error_alpha < 1e-10);
  CHECK(r.rel_error_beta < 1e-10);
  CHECK_FALSE(r.coincide);
}

TEST_CASE("forward map matches the 2x2 system") {
  const Vec3 xi(1, 2, 0);
  const auto [f, g] = linearized_forward(xi, 1.0, cplx(1, 0), cplx(0, 0));
  CHECK(f == cplx(-(0.5 * 5 + 1)));
  CHECK(g == cplx(-1));
}

TEST_CASE("identical media give an exactly vanishing pairing") {
  const Medium a = bump(0.01, cplx(0.01, 0.002));
  const PairingContext ctx(make_medium_pair(a, a, omega(), omega_prime()));
  CHECK(ctx.identical());
  const NullTestResult r = null_test(ctx, {Vec3(1, 0, 0), Vec3(0, 1, 1)}, 8.0);
  CHECK(r.coincide);
  CHECK(r.max_f == 0.0);
  CHECK(r.max_g == 0.0);
}

TEST_CASE("perturbed media are told apart from the background") {
  const Medium a = bump(0.01, 0.01);
  const Medium b = make_background_medium(kGrid, Background{});
  const PairingContext ctx(make_medium_pair(a, b, omega(), omega_prime()));
  const NullTestResult r = null_test(ctx, {Vec3(1, 0, 0)}, 8.0);
  CHECK_FALSE(r.coincide);
  CHECK(r.separation > 10.0);
}

TEST_CASE("pairing approaches the oracle transform as tau grows") {
  const Medium a = bump(0.01, 0.005);
  const Medium b = make_background_medium(kGrid, Background{});
  const PairingContext ctx(make_medium_pair(a, b, omega(), omega_prime()));
  const auto [f, g] = compute_fg(ctx.pair(), ctx.pair().omega);
  const Vec3 xi(1, 0, 0);
  const cplx oracle = fourier_oracle(f, xi);
  double prev = 1e300;
  for (double tau : {4.0, 8.0, 16.0}) {
    const CgoDirections d = build_zeta_pair(xi, tau, ctx.background());
    const double err = std::abs(compute_pairing(ctx, d, Mode::f).value - oracle);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 0.01 * std::abs(oracle));
}

TEST_CASE("Carleman cores vanish for equal media and reject interior points") {
  const Medium a = bump(0.01, 0.01);
  const Medium b = make_background_medium(kGrid, Background{});
  const Vec3 x0(kPi - 0.5 * kGrid.h(), 0, 0);
  const CarlemanDiagnostic eq = carleman_functionals(make_medium_pair(a, a, omega(), omega_prime()), x0, {1.0, 0.5});
  CHECK(eq.lhs_core[0] == 0.0);
  CHECK(eq.rhs_core[1] == 0.0);
  const CarlemanDiagnostic ne = carleman_functionals(make_medium_pair(a, b, omega(), omega_prime()), x0, {1.0, 0.5});
  CHECK(ne.lhs_core[0] > 0.0);
  CHECK(ne.d1 < ne.d2);
  CHECK_THROWS(carleman_functionals(make_medium_pair(a, b, omega(), omega_prime()), Vec3::Zero(), {1.0}));
}
