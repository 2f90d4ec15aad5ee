#include "cgo/media.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace cgo;

namespace {

MediumSpec one_bump(double amp_mu, cplx amp_gamma, double rho = 1.5) {
  MediumSpec s;
  s.rho = rho;
  Bump b;
  b.radius = rho;
  b.amp_mu = amp_mu;
  b.amp_gamma = amp_gamma;
  b.sigma = 0.6;
  b.power = 6;
  s.bumps.push_back(b);
  return s;
}

const GridSpec kGrid = GridSpec::centered(16, 2 * std::numbers::pi);

}  // namespace

TEST_CASE("background medium is admissible and flat") {
  const Medium m = make_background_medium(kGrid, Background{});
  const AdmissibilityReport r = check_admissibility(m);
  CHECK(r.pass);
  const LogFields l = log_fields(m);
  CHECK(max_abs(l.Dalpha) == 0.0);
  CHECK(max_abs(l.Dbeta) == 0.0);
  CHECK(std::abs(l.kappa.at(0, 0) - cplx(1.0)) < 1e-15);
}

TEST_CASE("bump profiles vanish outside their support") {
  Bump b;
  b.radius = 1.0;
  CHECK(bump_profile(b, Vec3(1.0, 0, 0)) == 0.0);
  CHECK(bump_profile(b, Vec3(0, 2.0, 0)) == 0.0);
  CHECK(bump_profile(b, Vec3::Zero()) == doctest::Approx(1.0));
  b.profile = BumpProfile::exp_bump;
  CHECK(bump_profile(b, Vec3::Zero()) == doctest::Approx(1.0));
}

TEST_CASE("positivity failure names the lattice point") {
  try {
    (void)make_bump_medium(kGrid, one_bump(-1.5, 0.0));
    FAIL("expected a positivity failure");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("lattice index") != std::string::npos);
  }
}

TEST_CASE("bumps must stay inside B(0, rho)") {
  MediumSpec s = one_bump(0.1, 0.0);
  s.bumps[0].center = Vec3(0.5, 0, 0);
  CHECK_THROWS_AS(make_bump_medium(kGrid, s), std::invalid_argument);
}

TEST_CASE("complex permittivity keeps a real permeability") {
  const Medium m = make_bump_medium(kGrid, one_bump(0.1, cplx(0.1, 0.05)));
  const AdmissibilityReport r = check_admissibility(m);
  CHECK(r.pass);
  CHECK(r.max_imag_mu == 0.0);
  CHECK(r.min_mu >= 1.0);
}

TEST_CASE("f and g vanish for identical media") {
  const Medium m = make_bump_medium(kGrid, one_bump(0.05, 0.02));
  const DomainMask om = DomainMask::ball(kGrid, Vec3::Zero(), 2.0);
  const MediumPair p = make_medium_pair(m, m, om, om);
  const auto [f, g] = compute_fg(p, om);
  CHECK(max_abs(f) == 0.0);
  CHECK(max_abs(g) == 0.0);
}

TEST_CASE("pairs differing outside Omega' are rejected") {
  const Medium a = make_bump_medium(kGrid, one_bump(0.05, 0.0));
  const Medium b = make_background_medium(kGrid, Background{});
  const DomainMask om = DomainMask::ball(kGrid, Vec3::Zero(), 2.0);
  const DomainMask small = DomainMask::ball(kGrid, Vec3::Zero(), 0.5);
  CHECK_NOTHROW(make_medium_pair(a, b, om, om));
  CHECK_THROWS_AS(make_medium_pair(a, b, om, small), std::invalid_argument);
}

TEST_CASE("f is the log-permittivity expression for a pure permittivity bump") {
  const Medium a = make_bump_medium(kGrid, one_bump(0.0, 0.03));
  const Medium b = make_background_medium(kGrid, Background{});
  const DomainMask om = DomainMask::ball(kGrid, Vec3::Zero(), 2.0);
  const auto [f, g] = compute_fg(make_medium_pair(a, b, om, om), om);
  // With mu flat, g reduces to the wavenumber difference.
  const LogFields la = log_fields(a);
  const Field k2 = multiply(la.kappa, la.kappa);
  double worst = 0.0;
  for (std::size_t i = 0; i < kGrid.points(); ++i)
    if (om.inside(i)) worst = std::max(worst, std::abs(g.at(0, i) - (1.0 - k2.at(0, i))));
  CHECK(worst < 1e-12);
}
