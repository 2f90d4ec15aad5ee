#pragma once

#include "cgo/cgo.hpp"
#include "cgo/media.hpp"
#include "cgo/operators.hpp"

#include <string>
#include <vector>

namespace cgo {

// Everything the pairing needs from a medium pair, built once.
class PairingContext {
 public:
  explicit PairingContext(MediumPair pair);

  const MediumPair& pair() const { return pair_; }
  const GridSpec& grid() const { return pair_.m1.grid; }
  const Background& background() const { return pair_.m1.bg; }
  const MediumOperators& ops1() const { return ops1_; }
  const MediumOperators& ops2() const { return ops2_; }
  const Field& Q1() const { return Q1_; }
  const Field& Qhat2() const { return Qhat2_; }
  const Field& dQ() const { return dQ_; }
  bool identical() const { return identical_; }
  // max_x |Q1(x) + k0^2 I|_F.
  double potential_scale() const { return potential_scale_; }

 private:
  MediumPair pair_;
  MediumOperators ops1_, ops2_;
  Field Q1_, Qhat2_, dQ_;
  bool identical_ = false;
  double potential_scale_ = 0.0;
};

struct PairingSample {
  Vec3 xi = Vec3::Zero();
  double tau = 0.0;
  Mode mode = Mode::f;
  cplx value = 0.0;
  double residual_z = 0.0;  // CGO residual of Z1
  double residual_y = 0.0;  // CGO residual of the Q-hat solution behind Y2
  int iterations = 0;
};

// ((Q1 - Q2) Z1 | Y2)_Omega with Z1 the Q1-CGO at zeta1 and Y2 = (P - Wbar)
// applied to the Q-hat2-CGO at zeta2.
PairingSample compute_pairing(const PairingContext& ctx, const CgoDirections& d,
                              Mode mode, const CgoOptions& opt = {});

// f^(xi) = sum_x f(x) e^{-i xi.x} h^3.
cplx fourier_oracle(const Field& f, const Vec3& xi);

// 10 tol * max|Q1 + k0^2 I| * vol(Omega).
double noise_floor(const PairingContext& ctx, double tol);

struct SpectrumEntry {
  Vec3 xi = Vec3::Zero();
  cplx fhat = 0.0, ghat = 0.0;            // raw value at the largest tau
  cplx fhat_rich = 0.0, ghat_rich = 0.0;  // one Richardson step, O(1/tau)
  double tau_used = 0.0;
  double extrapolation_error_f = 0.0;  // |v(tau_max) - v(tau_max / 2)|
  double extrapolation_error_g = 0.0;
  bool mirrored = false;  // filled from -xi by Hermitian symmetry
  bool ok = true;
  std::string error;
  std::vector<PairingSample> samples;
};

struct SpectrumEstimate {
  std::vector<SpectrumEntry> entries;
  std::size_t failures = 0;
};

struct SweepOptions {
  std::vector<double> tau_schedule{4.0, 8.0, 16.0, 32.0};
  CgoOptions cgo;
  // Real coefficients make f, g real: sample half the grid and mirror.
  bool hermitian = false;
};

// Per xi runs the whole tau schedule; failures are recorded per entry.
SpectrumEstimate sweep_spectrum(const PairingContext& ctx,
                                const std::vector<Vec3>& xi_grid,
                                const SweepOptions& opt = {});

// Lattice vectors (2 pi / L) m with 0 < max|m_i| <= K.
std::vector<Vec3> lattice_cube(const GridSpec& g, int K);

// Forward map of the linearized f, g about the background:
// f^ = -(|xi|^2/2 + k0^2) da^ - k0^2 db^, g^ = -k0^2 da^ - (|xi|^2/2 + k0^2) db^.
std::pair<cplx, cplx> linearized_forward(const Vec3& xi, double k0sq, cplx da,
                                         cplx db);

struct RecoveryOptions {
  double det_floor = 1e-12;
  // Perturbation norm below which the media are declared to coincide.
  double perturbation_floor = 0.0;
};

struct RecoveryResult {
  Field delta_alpha, delta_beta;
  Field reference_alpha, reference_beta;  // empty if no ground truth
  double rel_error_alpha = 0.0, rel_error_beta = 0.0;  // L2(Omega')
  double leakage_alpha = 0.0, leakage_beta = 0.0;      // mass fraction outside Omega'
  double norm_alpha = 0.0, norm_beta = 0.0;            // L2(Omega')
  double perturbation_floor = 0.0;
  std::size_t modes_used = 0;
  std::size_t modes_zeroed = 0;
  // The zero mode is not observable from xi != 0 samples; it is fixed by
  // requiring zero mean outside Omega'.
  bool zero_mode_filled = true;
  bool coincide = true;
};

// Solves the 2x2 system per sampled lattice mode and transforms back.
// omega_prime decides the zero mode and the error and leakage metrics.
RecoveryResult invert_linearized(const SpectrumEstimate& spectrum, const GridSpec& g,
                                 const Background& bg, const DomainMask& omega_prime,
                                 const RecoveryOptions& opt = {});

// Attaches ground truth and fills the error metrics.
void score_recovery(RecoveryResult& r, const Field& true_alpha, const Field& true_beta,
                    const DomainMask& omega_prime);

// Spectrum of known perturbations through the linearized forward map, on
// every lattice mode except zero.
SpectrumEstimate oracle_spectrum(const Field& delta_alpha, const Field& delta_beta,
                                 const Background& bg);

struct NullTestResult {
  bool coincide = true;
  double noise_floor = 0.0;
  double max_f = 0.0, max_g = 0.0;
  double separation = 0.0;  // max(|f^|, |g^|) / noise floor
  std::vector<PairingSample> samples;
};

NullTestResult null_test(const PairingContext& ctx, const std::vector<Vec3>& xi_sample,
                         double tau, const CgoOptions& opt = {});

struct CarlemanDiagnostic {
  Vec3 x0 = Vec3::Zero();
  double d1 = 0.0, d2 = 0.0;
  std::vector<double> h_sweep;
  std::vector<double> lhs_core, rhs_core;
  std::vector<double> log_lhs, log_rhs;  // natural logs; -inf for zero cores
  std::vector<double> ratio;             // rhs / lhs, NaN when lhs = 0
};

// phi1 = gamma1^{1/2} - gamma2^{1/2}, phi2 = mu1^{1/2} - mu2^{1/2};
// lhs = e^{d1/h} sum_j (h |phi_j|^2 + h^3 |grad phi_j|^2),
// rhs = e^{d2/h} h^4 (|f|^2 + |g|^2), norms over Omega.
CarlemanDiagnostic carleman_functionals(const MediumPair& pair, const Vec3& x0,
                                        const std::vector<double>& h_sweep);

}  // namespace cgo
