#pragma once

#include "cgo/grid.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cgo {

struct Background {
  double mu0 = 1.0;
  double eps0 = 1.0;
  double omega = 1.0;

  double k0() const;
  double k0sq() const { return omega * omega * eps0 * mu0; }
  void validate() const;
};

enum class BumpProfile {
  // exp(1 - 1/(1 - r^2)) on the unit ball, scaled to radius.
  exp_bump,
  // exp(-r^2 / (2 sigma^2)) * exp(p (1 - 1/(1 - (r/radius)^2))). Same
  // compact support, but a much shorter spectral tail at desk resolution.
  windowed_gaussian
};

struct Bump {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;  // support radius
  double amp_mu = 0.0;  // added to mu0 at the bump peak
  cplx amp_gamma = 0.0;  // added to eps0 at the bump peak
  BumpProfile profile = BumpProfile::windowed_gaussian;
  double sigma = 0.5;  // windowed_gaussian only
  double power = 4.0;  // windowed_gaussian only
};

double bump_profile(const Bump& b, const Vec3& x);

struct MediumSpec {
  Background bg;
  double bound_M = 10.0;
  double rho = 1.0;  // all bumps inside the centered ball B(0, rho)
  std::vector<Bump> bumps;
};

struct Medium {
  GridSpec grid;
  Background bg;
  double bound_M = 10.0;
  double rho = 0.0;
  Field mu;     // real positive
  Field gamma;  // eps + i sigma / omega
};

// Builds and validates; throws naming the offending lattice point when a
// positivity bound fails or a bump leaves B(0, rho).
Medium make_bump_medium(const GridSpec& grid, const MediumSpec& spec);
Medium make_background_medium(const GridSpec& grid, const Background& bg,
                              double bound_M = 10.0);

struct AdmissibilityReport {
  double min_mu = 0.0;
  double min_re_gamma = 0.0;
  std::size_t argmin_mu = 0;
  std::size_t argmin_re_gamma = 0;
  double w2inf_mu = 0.0;
  double w2inf_gamma = 0.0;
  double max_imag_mu = 0.0;
  double outside_rho_deviation = 0.0;
  bool pass = false;
  std::vector<std::string> failures;
};

// Lattice surrogate of the admissibility bounds: positivity against 1/M,
// and every sampled value, first and second spectral derivative of mu and
// gamma bounded by M.
AdmissibilityReport check_admissibility(const Medium& m);

// Largest of |f|, |d_i f|, |d_i d_j f| over the lattice.
double w2inf_norm(const Field& f);

struct LogFields {
  Field alpha;   // log gamma, principal branch
  Field beta;    // log mu
  Field kappa;   // omega mu^{1/2} gamma^{1/2}
  Field Dalpha;  // (1/i) grad alpha
  Field Dbeta;   // (1/i) grad beta
};

LogFields log_fields(const Medium& m);

struct MediumPair {
  Medium m1;
  Medium m2;
  DomainMask omega;        // the domain
  DomainMask omega_prime;  // where the media may differ
};

// Rejects pairs whose difference leaves omega_prime, or whose grids or
// backgrounds disagree.
MediumPair make_medium_pair(Medium m1, Medium m2, DomainMask omega,
                            DomainMask omega_prime);

// f = chi (1/2 lap(a1 - a2) + 1/4 (grad a1.grad a1 - grad a2.grad a2)
//          + k2^2 - k1^2), g the same with beta.
std::pair<Field, Field> compute_fg(const MediumPair& pair,
                                   const DomainMask& mask);
std::pair<Field, Field> compute_fg(const LogFields& l1, const LogFields& l2,
                                   const DomainMask& mask);

}  // namespace cgo
