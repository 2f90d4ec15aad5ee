#pragma once

#include "cgo/grid.hpp"
#include "cgo/media.hpp"
#include "cgo/operators.hpp"
#include "cgo/parallel.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cgo {

struct CgoDirections {
  Vec3 xi = Vec3::Zero();
  double tau = 0.0;
  Vec3 eta1 = Vec3::Zero();
  Vec3 eta2 = Vec3::Zero();
  CVec3 zeta1 = CVec3::Zero();
  CVec3 zeta2 = CVec3::Zero();
  double k0sq = 0.0;
};

// Gram-Schmidt of xi against the coordinate axis it is least aligned with
// (lowest index on ties): eta1 ~ |xi|^2 e_j - xi_j xi, eta2 ~ xi x eta1.
std::pair<Vec3, Vec3> choose_etas(const Vec3& xi);

// zeta1 = -xi/2 + i (tau^2 + |xi|^2/4)^{1/2} eta1 + (tau^2 + k0^2)^{1/2} eta2
// zeta2 =  xi/2 - i (tau^2 + |xi|^2/4)^{1/2} eta1 + (tau^2 + k0^2)^{1/2} eta2
CgoDirections build_zeta_pair(const Vec3& xi, double tau, const Background& bg);
CgoDirections build_zeta_pair(const Vec3& xi, double tau, const Background& bg,
                              const Vec3& eta1, const Vec3& eta2);

enum class Mode { f, g };
const char* mode_name(Mode m);

struct Polarization {
  CVec3 A = CVec3::Zero();
  CVec3 B = CVec3::Zero();
  Mode mode = Mode::f;
};

// A1 = (-i eta1 + eta2)/sqrt2 in f-mode (B1 = 0); B1 likewise in g-mode.
Polarization polarization_z(Mode mode, const CgoDirections& d);
// A2 = conj(A1), B2 = conj(B1).
Polarization polarization_y(Mode mode, const CgoDirections& d);
// (i eta1/sqrt2 + eta2/sqrt2) . v for v = A1 (or B1), and . conj(A2).
cplx constraint_value_z(const Polarization& p, const CgoDirections& d);
cplx constraint_value_y(const Polarization& p, const CgoDirections& d);

double zeta_norm(const CVec3& zeta);
// L = (zeta.A, k0 B | zeta.B, k0 A) / |zeta|.
Vec8 build_L(const CVec3& zeta, const Polarization& p, const Background& bg);
// M = (zeta.A, -zeta x A | zeta.B, zeta x B) / |zeta|.
Vec8 build_M(const CVec3& zeta, const Polarization& p);
// Leading amplitude of the Q-hat solution: (0, B | 0, A) / |zeta|, chosen
// so that Lambda(zeta) applied to it is exactly M(zeta).
Vec8 build_Lhat(const CVec3& zeta, const Polarization& p);

// Amplitude c + e^{i theta.x} q(x) with constant c and periodic q. The
// physical field is e^{i zeta.x} times this.
struct BlochAmplitude {
  std::vector<cplx> c;
  Field q;
  Vec3 theta = Vec3::Zero();

  Rank rank() const { return q.rank(); }
  const GridSpec& grid() const { return q.grid(); }
  Field values() const;
};

BlochAmplitude make_constant_amplitude(const GridSpec& g, const Vec8& c,
                                       const Vec3& theta);
BlochAmplitude operator+(const BlochAmplitude& a, const BlochAmplitude& b);
BlochAmplitude operator-(const BlochAmplitude& a, const BlochAmplitude& b);

// e^{-i zeta.x} P e^{i zeta.x} on a spinor amplitude.
BlochAmplitude conjugated_P(const BlochAmplitude& a, const CVec3& zeta);

// Pointwise linear map with a known background value. map(idx, in, out)
// and background(in, out) act on dim(in) -> dim(out) values.
template <class Map, class BgMap>
BlochAmplitude map_pointwise(const BlochAmplitude& a, Rank out_rank, Map&& map,
                             BgMap&& background) {
  const GridSpec& g = a.grid();
  const int dout = rank_dim(out_rank);
  const int din = rank_dim(a.rank());
  BlochAmplitude r;
  r.theta = a.theta;
  r.c.assign(dout, 0.0);
  background(a.c.data(), r.c.data());
  r.q = Field(g, out_rank);
  parallel_for(g.points(), static_cast<std::size_t>(g.n) * g.n,
               [&](std::size_t b, std::size_t e) {
                 cplx in[64], out_q[64], out_c[64];
                 for (std::size_t idx = b; idx < e; ++idx) {
                   for (int k = 0; k < din; ++k) in[k] = a.q.at(k, idx);
                   map(idx, in, out_q);
                   map(idx, a.c.data(), out_c);
                   const Vec3 x = g.position(idx);
                   const cplx ph = std::exp(cplx(0.0, -a.theta.dot(x)));
                   for (int k = 0; k < dout; ++k)
                     r.q.at(k, idx) = out_q[k] + ph * (out_c[k] - r.c[k]);
                 }
               });
  return r;
}

BlochAmplitude apply_first_order(const MediumOperators& ops, FirstOrder kind,
                                 const BlochAmplitude& a);

// Bloch shift theta = (pi/L) u with v.u = 1, v the primitive integer
// vector parallel to eta1. Then eta1.(k + theta) never vanishes on the
// lattice and the Faddeev symbol stays away from zero. Empty when eta1 is
// not parallel to a lattice direction.
std::optional<Vec3> bloch_shift(const Vec3& eta1, double box_length);

struct FaddeevOptions {
  double floor_factor = 1e-6;        // floor = factor * |zeta|^2
  double max_shifted_fraction = 1e-3;
};

// Multiplier 1 / (|k + theta|^2 + 2 zeta.(k + theta)) on periodic fields.
// Modes whose symbol falls below the floor receive +i floor and are
// counted; too many shifted modes abort with advice.
class FaddeevOperator {
 public:
  FaddeevOperator(const GridSpec& g, const CVec3& zeta, const Vec3& theta,
                  const FaddeevOptions& opt = {});
  Field apply(const Field& F) const;
  Field apply_symbol(const Field& u) const;
  std::size_t shifted_modes() const { return shifted_; }
  double min_abs_symbol() const { return min_abs_; }
  double max_abs_multiplier() const { return 1.0 / min_abs_; }

 private:
  Field scale(const Field& F, const std::vector<cplx>& mult) const;
  GridSpec grid_;
  std::vector<cplx> symbol_;
  std::vector<cplx> inverse_;
  std::size_t shifted_ = 0;
  double min_abs_ = 0.0;
};

// Plain periodic inverse (no Bloch shift), with the floor rule.
Field faddeev_apply(const CVec3& zeta, const Field& F,
                    const FaddeevOptions& opt = {});

struct CgoOptions {
  double tol = 1e-9;
  int max_iter = 200;
  bool bloch = true;
  FaddeevOptions faddeev;
  double contraction_switch = 0.9;
  int krylov_restart = 40;
};

struct SolverStats {
  int iterations = 0;
  double residual = 0.0;
  double contraction = 0.0;
  bool krylov = false;
  std::vector<double> history;
  std::size_t shifted_modes = 0;
  double min_symbol = 0.0;
};

struct CgoSolution {
  CVec3 zeta = CVec3::Zero();
  Vec8 leading = Vec8::Zero();
  // amp.c is the leading vector, e^{i theta.x} amp.q the remainder.
  BlochAmplitude amp;
  PotentialKind kind = PotentialKind::Q;
  SolverStats stats;

  // ||R||_{L2(mask)} = ||q||_{L2(mask)}.
  double remainder_norm(const DomainMask& mask) const;
};

// Solves R = -G_zeta[(potential + k0^2)(L + R)]. Born iteration, switching
// to restarted GMRES when the observed contraction exceeds the switch.
// Throws NumericalFailure on non-convergence.
CgoSolution solve_cgo(const CVec3& zeta, const Field& potential,
                      PotentialKind kind, const Vec8& leading, double k0sq,
                      const Vec3& theta, const CgoOptions& opt = {});

// Convenience: chooses theta from eta1 (or the floor fallback).
CgoSolution solve_cgo(const CVec3& zeta, const Field& potential,
                      PotentialKind kind, const Vec8& leading,
                      const Background& bg, const Vec3& eta1, double box_length,
                      const CgoOptions& opt = {});

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Residual of the CGO equation for a given solution, recomputed.
double cgo_equation_residual(const CgoSolution& s, const Field& potential,
                             double k0sq, const FaddeevOptions& opt = {});

struct MaxwellSolution {
  BlochAmplitude Y;  // (P - W^t) Z
  BlochAmplitude E;  // gamma^{-1/2} block v2
  BlochAmplitude H;  // mu^{-1/2} block v1
  double scalar_slots = 0.0;       // ||(Y_s1, Y_s2)|| / ||Y||
  double rescaled_residual = 0.0;  // ||(P + W) Y|| / ||Y||
  double ampere_residual = 0.0;    // ||curl H + i w gamma E|| / ||w gamma E||
  double faraday_residual = 0.0;   // ||curl E - i w mu H|| / ||w mu H||
};

MaxwellSolution derive_maxwell_solution(const CgoSolution& z,
                                        const MediumOperators& ops);

struct DiracSolution {
  BlochAmplitude Y;           // (P - Wbar) Z-hat
  double residual = 0.0;      // ||(P + W*) Y|| / ||Y||
  double leading_gap = 0.0;   // |Y.c - M(zeta)| / |M(zeta)|
};

DiracSolution derive_dirac_solution(const CgoSolution& zhat,
                                    const MediumOperators& ops,
                                    const Polarization& pol);

struct AuxIdentityReport {
  double residual_printed = 0.0;    // against the right-hand side as printed
  double residual_corrected = 0.0;  // first slot with the opposite sign
  double first_slot_scale = 0.0;    // ||printed first slot||
  double fourth_slot_max = 0.0;     // max |gamma^{1/2} - kappa mu^{-1/2}/w|
  double other_slots = 0.0;         // ||slots 2, 3 of the left side|| / ||rhs||
};

// Z_aux replaces the v2 block of Z by Z_E + mu^{-1/2} E / w.
BlochAmplitude build_z_aux(const CgoSolution& z, const MaxwellSolution& mx,
                           const MediumOperators& ops);
AuxIdentityReport verify_aux_identity(const CgoSolution& z,
                                      const MaxwellSolution& mx,
                                      const MediumOperators& ops,
                                      double max_scalar_slots = 1e-6);

// ||Z||_{L2(mask)} / ||E||_{L2(mask)} for the physical fields, evaluated
// with the common exponential factor rescaled to avoid overflow.
double measure_stability_ratio(const CgoSolution& z, const MaxwellSolution& mx,
                               const DomainMask& mask);

}  // namespace cgo
