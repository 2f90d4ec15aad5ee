#pragma once

#include "cgo/grid.hpp"
#include "cgo/media.hpp"

#include <cstdint>
#include <string>

namespace cgo {

// Spinor layout: [s1, v1 (3) | s2, v2 (3)].
//
// Symbol of P: P(e^{ik.x} u) = Lambda(k) u e^{ik.x}. Lambda(l)^2 = (l.l) I
// for real and complex l.
Mat8 symbol(const CVec3& lambda);
// out = Lambda(k) u without forming the matrix.
void symbol_apply(const CVec3& k, const cplx* u, cplx* out);

// Boundary matrix with the 1/i prefactor: P_N = -i Lambda(N), so
// P_N^2 = -I. Rejects non-unit normals.
Mat8 assemble_PN(const Vec3& normal);

// Rescaled-system coefficient at one point: kappa I + 1/2 (D alpha, D beta
// blocks), with D alpha = (1/i) grad alpha supplied as a vector.
Mat8 w_block(cplx kappa, const CVec3& Dalpha, const CVec3& Dbeta);
// Augmented-system coefficient at one point.
Mat8 v_block(cplx omega_mu, cplx omega_gamma, const CVec3& Dalpha,
             const CVec3& Dbeta);

Field apply_P(const Field& u);
// e^{-i s.x} P e^{i s.x}: symbol evaluated at k + s.
Field apply_P_shifted(const Field& u, const CVec3& shift);

// Pointwise matrix field products.
Field apply_matrix(const Field& M, const Field& u);
Field matrix_field_constant(const GridSpec& g, const Mat8& A);
Mat8 matrix_at(const Field& M, std::size_t idx);

enum class FirstOrder { V, W, Wt, Wstar, Wbar, W_swapped, Wt_swapped };
const char* first_order_name(FirstOrder k);

enum class PotentialKind { Q, Qhat, Qtilde };
const char* potential_name(PotentialKind k);

// Coefficient operators of one medium, evaluated pointwise on demand.
class MediumOperators {
 public:
  explicit MediumOperators(const Medium& m);

  const Medium& medium() const { return medium_; }
  const LogFields& logs() const { return logs_; }
  const GridSpec& grid() const { return medium_.grid; }

  Mat8 at(FirstOrder kind, std::size_t idx) const;
  // Value where the medium equals its background.
  Mat8 at_background(FirstOrder kind) const;
  Field matrix_field(FirstOrder kind) const;

  // Pointwise action. With dealias, the product is truncated to the inner
  // two-thirds cube, matching how products are fed to derivatives.
  Field apply(FirstOrder kind, const Field& u, bool dealias_product = false) const;

  // Pointwise potential from the constant-column trick:
  // column j = -P(Wr e_j) - Wl Wr e_j.
  Field potential(PotentialKind kind) const;
  // Left and right factors: -Lap + Q = (P + Wl)(P - Wr).
  static FirstOrder left_factor(PotentialKind kind);
  static FirstOrder right_factor(PotentialKind kind);

 private:
  Medium medium_;
  LogFields logs_;
  Field Dalpha_conj_;  // D(conj alpha)
};

struct IdentityReport {
  std::string name;
  double residual = 0.0;   // relative, as defined per check
  double absolute = 0.0;
  double reference = 0.0;  // denominator used
};

// Random band-limited test fields; modes with |m_i| <= band on each axis.
Field random_band_limited(const GridSpec& g, Rank rank, int band,
                          std::uint64_t seed);

enum class ZerothOrderCheck { WP_PWt, WstarP_PWbar, swapped, control_P };

// ||T(chi u) - chi T(u)|| / ||T(chi u)|| with T the candidate expression.
// When T(chi u) itself is at round-off level the reference falls back to
// max|Wl| ||P(chi u)||.
IdentityReport verify_zeroth_order(const MediumOperators& ops,
                                   ZerothOrderCheck which, std::uint64_t seed,
                                   int band = 2, bool dealias_products = false);

// ||(P + Wl)(P - Wr)u - (-Lap u + Q u)|| / ||Lap u||.
IdentityReport verify_factorization(const MediumOperators& ops,
                                    PotentialKind which, const Field& potential,
                                    std::uint64_t seed, int band = 2,
                                    bool dealias_products = false);

// Max over lattice of |W*(k,a,b) + W^t(-conj k, conj a, b)|.
double wstar_swap_identity(const MediumOperators& ops);

// X = (0, H | 0, E); Y = diag(mu^{1/2} I4, gamma^{1/2} I4) X.
Field maxwell_to_augmented(const Field& E, const Field& H);
Field rescale_X(const Field& X, const Medium& m);
// ||(P + V) X|| / ||X|| and ||(P + W) Y|| / ||Y||.
double augmented_residual(const MediumOperators& ops, const Field& X);
double rescaled_residual(const MediumOperators& ops, const Field& Y);

// |(PU|V) - (U|PV)| / (||U|| ||V||) over the periodic box.
double verify_P_symmetry(const Field& U, const Field& V);

}  // namespace cgo
