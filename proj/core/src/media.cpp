#include "cgo/media.hpp"

#include "cgo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cgo {

double Background::k0() const { return omega * std::sqrt(eps0 * mu0); }

void Background::validate() const {
  if (!(mu0 > 0.0) || !(eps0 > 0.0) || !(omega > 0.0))
    throw std::invalid_argument("background: mu0, eps0, omega must be > 0");
}

double bump_profile(const Bump& b, const Vec3& x) {
  const double r = (x - b.center).norm();
  const double t = r / b.radius;
  if (t >= 1.0) return 0.0;
  const double window = 1.0 - 1.0 / (1.0 - t * t);
  if (b.profile == BumpProfile::exp_bump) return std::exp(window);
  return std::exp(-r * r / (2.0 * b.sigma * b.sigma) + b.power * window);
}

namespace {

std::string describe_point(const GridSpec& g, std::size_t idx) {
  const Vec3 x = g.position(idx);
  std::ostringstream os;
  os << "lattice index " << idx << " at (" << x[0] << ", " << x[1] << ", "
     << x[2] << ")";
  return os.str();
}

}  // namespace

Medium make_bump_medium(const GridSpec& grid, const MediumSpec& spec) {
  grid.validate();
  spec.bg.validate();
  if (!(spec.bound_M > 0.0)) throw std::invalid_argument("medium: M must be > 0");
  if (!(spec.rho > 0.0)) throw std::invalid_argument("medium: rho must be > 0");
  // Sources of the periodic problems must vanish near the box seam.
  if (spec.rho > 0.5 * grid.box_length - 2.0 * grid.h())
    throw std::invalid_argument(
        "medium: rho must leave two cells between B(0,rho) and the box faces");
  for (std::size_t b = 0; b < spec.bumps.size(); ++b) {
    const Bump& bp = spec.bumps[b];
    if (!(bp.radius > 0.0))
      throw std::invalid_argument("medium: bump radius must be > 0");
    if (bp.profile == BumpProfile::windowed_gaussian && !(bp.sigma > 0.0))
      throw std::invalid_argument("medium: bump sigma must be > 0");
    if (bp.center.norm() + bp.radius > spec.rho * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "medium: bump " << b << " leaves the ball of radius " << spec.rho;
      throw std::invalid_argument(os.str());
    }
  }

  Medium m;
  m.grid = grid;
  m.bg = spec.bg;
  m.bound_M = spec.bound_M;
  m.rho = spec.rho;
  m.mu = Field(grid, Rank::scalar, spec.bg.mu0);
  m.gamma = Field(grid, Rank::scalar, spec.bg.eps0);
  for (std::size_t idx = 0; idx < grid.points(); ++idx) {
    const Vec3 x = grid.position(idx);
    for (const Bump& bp : spec.bumps) {
      const double phi = bump_profile(bp, x);
      if (phi == 0.0) continue;
      m.mu.at(0, idx) += bp.amp_mu * phi;
      m.gamma.at(0, idx) += bp.amp_gamma * phi;
    }
  }

  const double lower = 1.0 / spec.bound_M;
  for (std::size_t idx = 0; idx < grid.points(); ++idx) {
    if (m.mu.at(0, idx).real() < lower)
      throw std::invalid_argument("medium: mu below 1/M at " +
                                  describe_point(grid, idx));
    if (m.gamma.at(0, idx).real() < lower)
      throw std::invalid_argument("medium: Re gamma below 1/M at " +
                                  describe_point(grid, idx));
  }
  return m;
}

Medium make_background_medium(const GridSpec& grid, const Background& bg,
                              double bound_M) {
  MediumSpec spec;
  spec.bg = bg;
  spec.bound_M = bound_M;
  spec.rho = 0.25 * grid.box_length;
  return make_bump_medium(grid, spec);
}

double w2inf_norm(const Field& f) {
  if (f.rank() != Rank::scalar)
    throw std::invalid_argument("w2inf_norm: needs a scalar field");
  double best = max_abs(f);
  // Derivatives of D f: grad = i D, second derivatives -D_i D_j.
  const Field d1 = spectral_derivative(f, Deriv::gradient);
  best = std::max(best, max_abs(d1));
  // Second derivatives -D_i D_j f: diagonal and off-diagonal triples.
  const Field diag = spectral_map(f, Rank::vector3,
                                  [](const Vec3& k, const cplx* u, cplx* v) {
                                    for (int i = 0; i < 3; ++i)
                                      v[i] = -k[i] * k[i] * u[0];
                                  });
  const Field off = spectral_map(f, Rank::vector3,
                                 [](const Vec3& k, const cplx* u, cplx* v) {
                                   v[0] = -k[0] * k[1] * u[0];
                                   v[1] = -k[1] * k[2] * u[0];
                                   v[2] = -k[0] * k[2] * u[0];
                                 });
  best = std::max({best, max_abs(diag), max_abs(off)});
  return best;
}

AdmissibilityReport check_admissibility(const Medium& m) {
  AdmissibilityReport r;
  const GridSpec& g = m.grid;
  r.min_mu = m.mu.at(0, 0).real();
  r.min_re_gamma = m.gamma.at(0, 0).real();
  const Vec3 centre = Vec3::Zero();
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    const cplx mu = m.mu.at(0, idx);
    const cplx ga = m.gamma.at(0, idx);
    if (mu.real() < r.min_mu) {
      r.min_mu = mu.real();
      r.argmin_mu = idx;
    }
    if (ga.real() < r.min_re_gamma) {
      r.min_re_gamma = ga.real();
      r.argmin_re_gamma = idx;
    }
    r.max_imag_mu = std::max(r.max_imag_mu, std::abs(mu.imag()));
    if ((g.position(idx) - centre).norm() > m.rho) {
      r.outside_rho_deviation =
          std::max({r.outside_rho_deviation, std::abs(mu - m.bg.mu0),
                    std::abs(ga - m.bg.eps0)});
    }
  }
  r.w2inf_mu = w2inf_norm(m.mu);
  r.w2inf_gamma = w2inf_norm(m.gamma);

  const double lower = 1.0 / m.bound_M;
  if (r.min_mu < lower)
    r.failures.push_back("mu below 1/M at " + describe_point(g, r.argmin_mu));
  if (r.min_re_gamma < lower)
    r.failures.push_back("Re gamma below 1/M at " +
                         describe_point(g, r.argmin_re_gamma));
  if (r.max_imag_mu > 0.0) r.failures.push_back("mu has an imaginary part");
  if (r.w2inf_mu > m.bound_M)
    r.failures.push_back("discrete W2inf norm of mu exceeds M");
  if (r.w2inf_gamma > m.bound_M)
    r.failures.push_back("discrete W2inf norm of gamma exceeds M");
  if (r.outside_rho_deviation > 0.0)
    r.failures.push_back("coefficients differ from background outside B(0,rho)");
  r.pass = r.failures.empty();
  return r;
}

LogFields log_fields(const Medium& m) {
  const GridSpec& g = m.grid;
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    if (!(m.mu.at(0, idx).real() > 0.0))
      throw std::domain_error("log_fields: nonpositive mu at " +
                              describe_point(g, idx));
    if (!(m.gamma.at(0, idx).real() > 0.0))
      throw std::domain_error("log_fields: Re gamma not positive at " +
                              describe_point(g, idx));
  }
  LogFields l;
  l.alpha = Field(g, Rank::scalar);
  l.beta = Field(g, Rank::scalar);
  l.kappa = Field(g, Rank::scalar);
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    const cplx mu = m.mu.at(0, idx);
    const cplx ga = m.gamma.at(0, idx);
    l.alpha.at(0, idx) = std::log(ga);
    l.beta.at(0, idx) = std::log(mu);
    l.kappa.at(0, idx) = m.bg.omega * std::sqrt(mu) * std::sqrt(ga);
  }
  l.Dalpha = spectral_derivative(l.alpha, Deriv::gradient);
  l.Dbeta = spectral_derivative(l.beta, Deriv::gradient);
  return l;
}

MediumPair make_medium_pair(Medium m1, Medium m2, DomainMask omega,
                            DomainMask omega_prime) {
  if (m1.grid != m2.grid || omega.grid != m1.grid || omega_prime.grid != m1.grid)
    throw std::invalid_argument("medium pair: grid mismatch");
  if (m1.bg.mu0 != m2.bg.mu0 || m1.bg.eps0 != m2.bg.eps0 ||
      m1.bg.omega != m2.bg.omega)
    throw std::invalid_argument("medium pair: backgrounds differ");
  for (std::size_t idx = 0; idx < m1.grid.points(); ++idx) {
    if (omega_prime.inside(idx)) {
      if (!omega.inside(idx))
        throw std::invalid_argument(
            "medium pair: omega_prime is not contained in omega");
      continue;
    }
    if (m1.mu.at(0, idx) != m2.mu.at(0, idx) ||
        m1.gamma.at(0, idx) != m2.gamma.at(0, idx))
      throw std::invalid_argument(
          "medium pair: media differ outside omega_prime at " +
          describe_point(m1.grid, idx));
  }
  return MediumPair{std::move(m1), std::move(m2), std::move(omega),
                    std::move(omega_prime)};
}

std::pair<Field, Field> compute_fg(const LogFields& l1, const LogFields& l2,
                                   const DomainMask& mask) {
  const GridSpec& g = l1.alpha.grid();
  auto one = [&](const Field& a1, const Field& a2, const Field& d1,
                 const Field& d2) {
    Field lap = spectral_derivative(a1 - a2, Deriv::laplacian);
    Field out(g, Rank::scalar);
    for (std::size_t idx = 0; idx < g.points(); ++idx) {
      // grad a . grad a = -(D a . D a)
      cplx q1 = 0.0, q2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        q1 += d1.at(c, idx) * d1.at(c, idx);
        q2 += d2.at(c, idx) * d2.at(c, idx);
      }
      const cplx k1 = l1.kappa.at(0, idx);
      const cplx k2 = l2.kappa.at(0, idx);
      const cplx v = 0.5 * lap.at(0, idx) - 0.25 * (q1 - q2) + (k2 * k2 - k1 * k1);
      out.at(0, idx) = mask.weight[idx] * v;
    }
    return out;
  };
  Field f = one(l1.alpha, l2.alpha, l1.Dalpha, l2.Dalpha);
  Field gg = one(l1.beta, l2.beta, l1.Dbeta, l2.Dbeta);
  return {std::move(f), std::move(gg)};
}

std::pair<Field, Field> compute_fg(const MediumPair& pair,
                                   const DomainMask& mask) {
  return compute_fg(log_fields(pair.m1), log_fields(pair.m2), mask);
}

}  // namespace cgo
