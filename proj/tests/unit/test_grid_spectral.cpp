#include "cgo/field_io.hpp"
#include "cgo/grid.hpp"
#include "cgo/operators.hpp"
#include "cgo/parallel.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace cgo;

namespace {

const double kPi = std::numbers::pi;

double max_diff(const Field& a, const Field& b) { return max_abs(a - b); }

}  // namespace

TEST_CASE("grid validation rejects bad shapes") {
  CHECK_THROWS(GridSpec::centered(7, 1.0).validate());
  CHECK_THROWS(GridSpec::centered(9, 1.0).validate());
  CHECK_THROWS(GridSpec::centered(16, 0.0).validate());
  CHECK_NOTHROW(GridSpec::centered(16, 2.0).validate());
}

TEST_CASE("centered grid covers [-L/2, L/2)") {
  const GridSpec g = GridSpec::centered(16, 2 * kPi);
  CHECK(g.position(0)[0] == doctest::Approx(-kPi));
  CHECK(g.position(g.index(15, 0, 0))[0] == doctest::Approx(kPi - g.h()));
  CHECK(g.mode(7) == 7);
  CHECK(g.mode(8) == -8);
  CHECK(g.deriv_wavenumber(8) == 0.0);
}

TEST_CASE("dft round trip is exact to round-off") {
  const GridSpec g = GridSpec::centered(16, 3.0);
  const Field u = random_band_limited(g, Rank::spinor8, 7, 42);
  CHECK(max_diff(dft_inverse(dft_forward(u)), u) < 1e-13);
}

TEST_CASE("spectral derivative of a lattice plane wave") {
  const GridSpec g = GridSpec::centered(16, 2 * kPi);
  const Vec3 k(2, -1, 3);
  const Field f = sample_scalar(g, [&](const Vec3& x) { return std::exp(cplx(0, k.dot(x))); });
  const Field grad = spectral_derivative(f, Deriv::gradient);
  // D = (1/i) grad, so D e^{ik.x} = k e^{ik.x}.
  for (int a = 0; a < 3; ++a)
    CHECK(max_diff(grad.component(a), cplx(k[a]) * f) < 1e-12);
  CHECK(max_diff(spectral_derivative(f, Deriv::laplacian), cplx(-k.squaredNorm()) * f) < 1e-11);
}

TEST_CASE("curl of a gradient and divergence of a curl vanish") {
  const GridSpec g = GridSpec::centered(16, 2.0);
  const Field s = random_band_limited(g, Rank::scalar, 5, 3);
  const Field v = random_band_limited(g, Rank::vector3, 5, 4);
  const Field cg = spectral_derivative(spectral_derivative(s, Deriv::gradient), Deriv::curl);
  const Field dc = spectral_derivative(spectral_derivative(v, Deriv::curl), Deriv::divergence);
  CHECK(max_abs(cg) < 1e-10);
  CHECK(max_abs(dc) < 1e-10);
}

TEST_CASE("dealias keeps the inner two-thirds") {
  const GridSpec g = GridSpec::centered(24, 2 * kPi);
  const Field lo = sample_scalar(g, [](const Vec3& x) { return std::cos(3 * x[0]); });
  const Field hi = sample_scalar(g, [](const Vec3& x) { return std::cos(9 * x[1]); });
  CHECK(max_diff(dealias(lo), lo) < 1e-13);
  CHECK(max_abs(dealias(hi)) < 1e-13);
}

TEST_CASE("inner product is linear in the first slot and conjugate linear in the second") {
  const GridSpec g = GridSpec::centered(8, 1.0);
  const Field u = random_band_limited(g, Rank::vector3, 2, 1);
  const Field v = random_band_limited(g, Rank::vector3, 2, 2);
  const cplx a(0.3, -1.2);
  CHECK(std::abs(inner_product(a * u, v) - a * inner_product(u, v)) < 1e-12);
  CHECK(std::abs(inner_product(u, a * v) - std::conj(a) * inner_product(u, v)) < 1e-12);
  CHECK(std::abs(inner_product(u, u).real() - l2_norm(u) * l2_norm(u)) < 1e-12);
}

TEST_CASE("ball masks keep a two-cell margin") {
  const GridSpec g = GridSpec::centered(16, 2.0);
  CHECK_NOTHROW(DomainMask::ball(g, Vec3::Zero(), 1.0 - 2.5 * g.h()));
  CHECK_THROWS_AS(DomainMask::ball(g, Vec3::Zero(), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(DomainMask::ball(g, Vec3::Zero(), -1.0), std::invalid_argument);
}

TEST_CASE("snapshot round trip and corrupt header") {
  const GridSpec g = GridSpec::centered(8, 1.5);
  const Field u = random_band_limited(g, Rank::matrix8x8, 2, 9);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p = (dir / "cgo_unit_snapshot.cgof").string();
  write_snapshot(p, u);
  const Field r = read_snapshot(p);
  CHECK(r.grid() == g);
  CHECK(r.rank() == Rank::matrix8x8);
  CHECK(max_diff(r, u) == 0.0);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS(read_snapshot(p));
  std::filesystem::remove(p);
}

TEST_CASE("field kernels give identical bits for any thread count") {
  const GridSpec g = GridSpec::centered(16, 2.0);
  const Field u = random_band_limited(g, Rank::spinor8, 5, 77);
  set_num_threads(1);
  const Field a = apply_P(u);
  const double na = l2_norm(a);
  set_num_threads(3);
  const Field b = apply_P(u);
  const double nb = l2_norm(b);
  set_num_threads(1);
  CHECK(max_diff(a, b) == 0.0);
  CHECK(na == nb);
}

TEST_CASE("non-finite samples are reported") {
  const GridSpec g = GridSpec::centered(8, 1.0);
  Field u(g, Rank::scalar);
  u.at(0, 5) = cplx(std::nan(""), 0.0);
  CHECK_FALSE(u.all_finite());
  CHECK_THROWS(u.require_finite("u"));
}
