#include "cgo/operators.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace cgo;

namespace {

const GridSpec kGrid = GridSpec::centered(32, 2 * std::numbers::pi);

Medium smooth_medium() {
  MediumSpec s;
  s.rho = std::numbers::pi - 3 * kGrid.h();
  Bump b;
  b.radius = s.rho;
  b.amp_mu = 0.03;
  b.amp_gamma = cplx(0.02, 0.01);
  b.sigma = 4 * kGrid.h();
  b.power = 6;
  s.bumps.push_back(b);
  return make_bump_medium(kGrid, s);
}

}  // namespace

TEST_CASE("symbol squares to l.l for random real and complex arguments") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    CVec3 l(cplx(n(rng), n(rng)), cplx(n(rng), n(rng)), cplx(n(rng), t % 2 ? n(rng) : 0.0));
    const Mat8 S = symbol(l);
    const cplx ll = (l.array() * l.array()).sum();
    CHECK((S * S - ll * Mat8::Identity()).cwiseAbs().maxCoeff() < 1e-13 * (1 + std::abs(ll)));
  }
}

TEST_CASE("symbol_apply agrees with the matrix") {
  const CVec3 k(cplx(1, 2), cplx(-0.5, 0), cplx(0.25, -1));
  Vec8 u;
  for (int i = 0; i < 8; ++i) u[i] = cplx(i + 1, -i);
  Vec8 v;
  symbol_apply(k, u.data(), v.data());
  CHECK((v - symbol(k) * u).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("boundary operator squares to minus identity") {
  const Vec3 nrm = Vec3(1, 2, -2).normalized();
  const Mat8 P = assemble_PN(nrm);
  CHECK((P * P + Mat8::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS(assemble_PN(Vec3(1, 1, 0)));
}

TEST_CASE("P is symmetric and squares to minus the Laplacian") {
  const Field u = random_band_limited(kGrid, Rank::spinor8, 4, 5);
  const Field v = random_band_limited(kGrid, Rank::spinor8, 4, 6);
  CHECK(verify_P_symmetry(u, v) < 1e-13);
  const Field pp = apply_P(apply_P(u));
  const Field lap = spectral_derivative(u, Deriv::laplacian);
  CHECK(max_abs(pp + lap) < 1e-10 * max_abs(lap));
}

TEST_CASE("shifted P matches conjugation by a lattice plane wave") {
  const Field u = random_band_limited(kGrid, Rank::spinor8, 3, 8);
  const Vec3 s(1, 0, -2);
  const Field e = sample_scalar(kGrid, [&](const Vec3& x) { return std::exp(cplx(0, s.dot(x))); });
  const Field eb = sample_scalar(kGrid, [&](const Vec3& x) { return std::exp(cplx(0, -s.dot(x))); });
  const Field direct = multiply(eb, apply_P(multiply(e, u)));
  CHECK(max_abs(direct - apply_P_shifted(u, s.cast<cplx>())) < 1e-11);
}

TEST_CASE("background medium has the exact constant potential") {
  const MediumOperators ops(make_background_medium(kGrid, Background{}));
  for (PotentialKind k : {PotentialKind::Q, PotentialKind::Qhat, PotentialKind::Qtilde}) {
    const Field Q = ops.potential(k);
    CHECK(max_abs(Q - matrix_field_constant(kGrid, -Mat8::Identity())) == 0.0);
  }
}

TEST_CASE("zeroth-order expressions pass the Leibniz test and P fails it") {
  const MediumOperators ops(smooth_medium());
  for (ZerothOrderCheck w :
       {ZerothOrderCheck::WP_PWt, ZerothOrderCheck::WstarP_PWbar, ZerothOrderCheck::swapped})
    CHECK(verify_zeroth_order(ops, w, 11).residual < 1e-4);
  CHECK(verify_zeroth_order(ops, ZerothOrderCheck::control_P, 11).residual > 1e-2);
}

TEST_CASE("Leibniz residual converges spectrally under refinement") {
  // The residual is pure aliasing of coefficient products, so it must fall
  // much faster than any fixed power of h.
  double prev = 1.0;
  for (int n : {24, 32, 40}) {
    const GridSpec g = GridSpec::centered(n, 2 * std::numbers::pi);
    MediumSpec s;
    s.rho = std::numbers::pi - 3 * g.h();
    Bump b;
    b.radius = s.rho;
    b.amp_mu = 0.03;
    b.amp_gamma = cplx(0.02, 0.01);
    b.sigma = 1.0;
    b.power = 6;
    s.bumps.push_back(b);
    const MediumOperators ops(make_bump_medium(g, s));
    const double r = verify_zeroth_order(ops, ZerothOrderCheck::WP_PWt, 11).residual;
    CHECK(r < prev / 10);
    prev = r;
  }
}

TEST_CASE("factorizations reproduce the Schroedinger potentials") {
  const MediumOperators ops(smooth_medium());
  for (PotentialKind k : {PotentialKind::Q, PotentialKind::Qhat, PotentialKind::Qtilde}) {
    const IdentityReport r = verify_factorization(ops, k, ops.potential(k), 3);
    CHECK(r.residual < 1e-7);
  }
  // A wrong potential must be caught.
  const Field wrong = ops.potential(PotentialKind::Qhat);
  CHECK(verify_factorization(ops, PotentialKind::Q, wrong, 3).residual > 1e-6);
}

TEST_CASE("W* relates to W^t with swapped arguments") {
  const MediumOperators ops(smooth_medium());
  CHECK(wstar_swap_identity(ops) < 1e-14);
}

TEST_CASE("plane wave in the background solves both first-order systems") {
  const MediumOperators ops(make_background_medium(kGrid, Background{}));
  const Vec3 k(1, 0, 0), e0(0, 1, 0);
  const Vec3 h0 = k.cross(e0);
  const Field E = sample(kGrid, Rank::vector3, [&](const Vec3& x, cplx* v) {
    for (int a = 0; a < 3; ++a) v[a] = e0[a] * std::exp(cplx(0, k.dot(x)));
  });
  const Field H = sample(kGrid, Rank::vector3, [&](const Vec3& x, cplx* v) {
    for (int a = 0; a < 3; ++a) v[a] = h0[a] * std::exp(cplx(0, k.dot(x)));
  });
  const Field X = maxwell_to_augmented(E, H);
  CHECK(augmented_residual(ops, X) < 1e-12);
  CHECK(rescaled_residual(ops, rescale_X(X, ops.medium())) < 1e-12);
  // The wrong polarization is not a solution.
  const Field bad = maxwell_to_augmented(E, -1.0 * H);
  CHECK(augmented_residual(ops, bad) > 0.1);
}
