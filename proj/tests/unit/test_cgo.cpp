#include "cgo/cgo.hpp"
#include "cgo/operators.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace cgo;

namespace {

const double kPi = std::numbers::pi;

cplx bilinear(const CVec3& a, const CVec3& b) { return (a.array() * b.array()).sum(); }

Vec3 random_lattice_xi(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(-4, 4);
  Vec3 m;
  do m = Vec3(d(rng), d(rng), d(rng));
  while (m.isZero());
  return m;
}

}  // namespace

TEST_CASE("zeta pair invariants over random xi and tau") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> tau_d(1.0, 64.0);
  const Background bg{1.3, 0.8, 1.7};
  for (int t = 0; t < 100; ++t) {
    const Vec3 xi = random_lattice_xi(rng);
    const double tau = tau_d(rng);
    const CgoDirections d = build_zeta_pair(xi, tau, bg);
    const double scale = 1.0 + d.zeta1.squaredNorm();
    CHECK(std::abs(bilinear(d.zeta1, d.zeta1) - bg.k0sq()) < 1e-12 * scale);
    CHECK(std::abs(bilinear(d.zeta2, d.zeta2) - bg.k0sq()) < 1e-12 * scale);
    // zeta1 - conj(zeta2) = -xi
    CHECK((d.zeta1 - d.zeta2.conjugate() + xi.cast<cplx>()).norm() < 1e-12 * std::sqrt(scale));
    CHECK(std::abs(d.eta1.dot(xi)) < 1e-12 * xi.norm());
    CHECK(std::abs(d.eta2.dot(xi)) < 1e-12 * xi.norm());
    CHECK(std::abs(d.eta1.dot(d.eta2)) < 1e-14);
    CHECK(d.eta1.norm() == doctest::Approx(1.0));
    for (Mode m : {Mode::f, Mode::g}) {
      const Polarization pz = polarization_z(m, d);
      const Polarization py = polarization_y(m, d);
      CHECK(std::abs(constraint_value_z(pz, d) - 1.0) < 1e-14);
      CHECK(std::abs(constraint_value_y(py, d) - 1.0) < 1e-14);
    }
  }
}

TEST_CASE("xi = 0 and non-orthonormal etas are rejected") {
  CHECK_THROWS(build_zeta_pair(Vec3::Zero(), 4.0, Background{}));
  CHECK_THROWS(build_zeta_pair(Vec3(1, 0, 0), 4.0, Background{}, Vec3(1, 0, 0), Vec3(0, 1, 0)));
  CHECK_THROWS(build_zeta_pair(Vec3(1, 0, 0), 4.0, Background{}, Vec3(0, 2, 0), Vec3(0, 0, 1)));
}

TEST_CASE("Lambda(zeta) maps the Q-hat leading vector onto M(zeta)") {
  const CgoDirections d = build_zeta_pair(Vec3(1, 1, 0), 8.0, Background{});
  for (Mode m : {Mode::f, Mode::g}) {
    const Polarization p = polarization_y(m, d);
    const Vec8 lhs = symbol(d.zeta2) * build_Lhat(d.zeta2, p);
    CHECK((lhs - build_M(d.zeta2, p)).norm() < 1e-12);
  }
}

TEST_CASE("Bloch shift keeps eta1.(k + theta) away from zero") {
  const double L = 2 * kPi;
  for (const Vec3& v : {Vec3(0, 1, 0), Vec3(1, -2, 0), Vec3(3, 1, -2)}) {
    const auto th = bloch_shift(v.normalized(), L);
    REQUIRE(th.has_value());
    const Vec3 u = *th * (L / kPi);
    CHECK(std::abs(v.dot(u) - 1.0) < 1e-12);
    CHECK(u.isApprox(u.array().round().matrix()));
  }
  CHECK_FALSE(bloch_shift(Vec3(1.0, std::sqrt(2.0), 0).normalized(), L).has_value());
}

TEST_CASE("Faddeev operator inverts the conjugated Laplacian") {
  const GridSpec g = GridSpec::centered(16, 2 * kPi);
  const CgoDirections d = build_zeta_pair(Vec3(1, 0, 0), 6.0, Background{});
  const Vec3 th = *bloch_shift(d.eta1, g.box_length);
  const FaddeevOperator G(g, d.zeta1, th);
  CHECK(G.shifted_modes() == 0);
  const Field F = random_band_limited(g, Rank::spinor8, 4, 21);
  CHECK(max_abs(G.apply_symbol(G.apply(F)) - F) < 1e-10 * max_abs(F));
}

TEST_CASE("constant medium gives a vanishing remainder in zero iterations") {
  const GridSpec g = GridSpec::centered(16, 2 * kPi);
  const Background bg;
  const MediumOperators ops(make_background_medium(g, bg));
  const CgoDirections d = build_zeta_pair(Vec3(1, 0, 0), 4.0, bg);
  const Vec8 L = build_L(d.zeta1, polarization_z(Mode::f, d), bg);
  const CgoSolution z =
      solve_cgo(d.zeta1, ops.potential(PotentialKind::Q), PotentialKind::Q, L, bg, d.eta1, g.box_length);
  CHECK(z.stats.iterations == 0);
  CHECK(max_abs(z.amp.q) == 0.0);
}

TEST_CASE("bump medium CGO solves its equation and yields Maxwell fields") {
  const GridSpec g = GridSpec::centered(32, 2 * kPi);
  MediumSpec s;
  s.rho = kPi - 3 * g.h();
  Bump b;
  b.radius = s.rho;
  b.amp_mu = 0.02;
  b.amp_gamma = cplx(0.02, 0.01);
  b.sigma = 4 * g.h();
  b.power = 6;
  s.bumps.push_back(b);
  const MediumOperators ops(make_bump_medium(g, s));
  const Background bg;
  const CgoDirections d = build_zeta_pair(Vec3(1, 0, 0), 8.0, bg);
  CgoOptions opt;
  opt.tol = 1e-10;
  const Field Q = ops.potential(PotentialKind::Q);
  const CgoSolution z = solve_cgo(d.zeta1, Q, PotentialKind::Q,
                                  build_L(d.zeta1, polarization_z(Mode::f, d), bg), bg, d.eta1,
                                  g.box_length, opt);
  CHECK(z.stats.residual <= opt.tol);
  CHECK(cgo_equation_residual(z, Q, bg.k0sq()) < 10 * opt.tol);
  const MaxwellSolution mx = derive_maxwell_solution(z, ops);
  // Limited by the 32^3 resolution of the coefficients, not by the solver.
  CHECK(mx.scalar_slots < 1e-7);
  CHECK(mx.ampere_residual < 1e-7);
  CHECK(mx.faraday_residual < 1e-7);
  const AuxIdentityReport aux = verify_aux_identity(z, mx, ops);
  CHECK(aux.fourth_slot_max < 1e-12);

  const Polarization py = polarization_y(Mode::f, d);
  const CgoSolution zh =
      solve_cgo(d.zeta2, ops.potential(PotentialKind::Qhat), PotentialKind::Qhat,
                build_Lhat(d.zeta2, py), bg, d.eta1, g.box_length, opt);
  const DiracSolution dy = derive_dirac_solution(zh, ops, py);
  CHECK(dy.residual < 1e-7);
  CHECK(dy.leading_gap < 1.0);
}

TEST_CASE("iteration cap is reported with the residual history") {
  const GridSpec g = GridSpec::centered(16, 2 * kPi);
  MediumSpec s;
  s.rho = kPi - 3 * g.h();
  Bump b;
  b.radius = s.rho;
  b.amp_mu = 0.2;
  b.sigma = 4 * g.h();
  s.bumps.push_back(b);
  const MediumOperators ops(make_bump_medium(g, s));
  const Background bg;
  const CgoDirections d = build_zeta_pair(Vec3(1, 0, 0), 4.0, bg);
  CgoOptions opt;
  opt.tol = 1e-14;
  opt.max_iter = 1;
  try {
    (void)solve_cgo(d.zeta1, ops.potential(PotentialKind::Q), PotentialKind::Q,
                    build_L(d.zeta1, polarization_z(Mode::f, d), bg), bg, d.eta1, g.box_length,
                    opt);
    FAIL("expected a numerical failure");
  } catch (const NumericalFailure& e) {
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}
