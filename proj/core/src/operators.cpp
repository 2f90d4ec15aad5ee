#include "cgo/operators.hpp"

#include "cgo/parallel.hpp"
#include "cgo/spectral.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cgo {

namespace {

const cplx I(0.0, 1.0);

Eigen::Matrix3cd cross_matrix(const CVec3& a) {
  Eigen::Matrix3cd C;
  C << 0.0, -a[2], a[1],
       a[2], 0.0, -a[0],
       -a[1], a[0], 0.0;
  return C;
}

std::size_t slab(const GridSpec& g) {
  return static_cast<std::size_t>(g.n) * g.n;
}

}  // namespace

Mat8 symbol(const CVec3& l) {
  Mat8 M = Mat8::Zero();
  // Rows s1, v1 act on (s2, v2); rows s2, v2 act on (s1, v1).
  Eigen::Matrix4cd A, B;
  A << 0.0, l[0], l[1], l[2],
       l[0], 0.0, l[2], -l[1],
       l[1], -l[2], 0.0, l[0],
       l[2], l[1], -l[0], 0.0;
  B << 0.0, l[0], l[1], l[2],
       l[0], 0.0, -l[2], l[1],
       l[1], l[2], 0.0, -l[0],
       l[2], -l[1], l[0], 0.0;
  M.block<4, 4>(0, 4) = A;
  M.block<4, 4>(4, 0) = B;
  return M;
}

void symbol_apply(const CVec3& k, const cplx* u, cplx* o) {
  const cplx s1 = u[0], s2 = u[4];
  const cplx a0 = u[1], a1 = u[2], a2 = u[3];  // v1
  const cplx b0 = u[5], b1 = u[6], b2 = u[7];  // v2
  // s1 = k.v2 ; v1 = k s2 - k x v2
  o[0] = k[0] * b0 + k[1] * b1 + k[2] * b2;
  o[1] = k[0] * s2 - (k[1] * b2 - k[2] * b1);
  o[2] = k[1] * s2 - (k[2] * b0 - k[0] * b2);
  o[3] = k[2] * s2 - (k[0] * b1 - k[1] * b0);
  // s2 = k.v1 ; v2 = k s1 + k x v1
  o[4] = k[0] * a0 + k[1] * a1 + k[2] * a2;
  o[5] = k[0] * s1 + (k[1] * a2 - k[2] * a1);
  o[6] = k[1] * s1 + (k[2] * a0 - k[0] * a2);
  o[7] = k[2] * s1 + (k[0] * a1 - k[1] * a0);
}

Mat8 assemble_PN(const Vec3& normal) {
  if (std::abs(normal.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("assemble_PN: normal must be a unit vector");
  return -I * symbol(normal.cast<cplx>());
}

Mat8 w_block(cplx kappa, const CVec3& Da, const CVec3& Db) {
  Mat8 W = kappa * Mat8::Identity();
  const Eigen::Matrix3cd Ca = cross_matrix(Da);
  const Eigen::Matrix3cd Cb = cross_matrix(Db);
  // row s1: 1/2 Da . v2 ; row v1: 1/2 (Da s2 + Da x v2)
  W.block<1, 3>(0, 5) += 0.5 * Da.transpose();
  W.block<3, 1>(1, 4) += 0.5 * Da;
  W.block<3, 3>(1, 5) += 0.5 * Ca;
  // row s2: 1/2 Db . v1 ; row v2: 1/2 (Db s1 - Db x v1)
  W.block<1, 3>(4, 1) += 0.5 * Db.transpose();
  W.block<3, 1>(5, 0) += 0.5 * Db;
  W.block<3, 3>(5, 1) -= 0.5 * Cb;
  return W;
}

Mat8 v_block(cplx wmu, cplx wgamma, const CVec3& Da, const CVec3& Db) {
  Mat8 V = Mat8::Zero();
  V(0, 0) = wmu;
  V.block<3, 3>(1, 1) = wmu * Eigen::Matrix3cd::Identity();
  V(4, 4) = wgamma;
  V.block<3, 3>(5, 5) = wgamma * Eigen::Matrix3cd::Identity();
  V.block<1, 3>(0, 5) += Da.transpose();
  V.block<3, 1>(1, 4) += Da;
  V.block<1, 3>(4, 1) += Db.transpose();
  V.block<3, 1>(5, 0) += Db;
  return V;
}

Field apply_P(const Field& u) {
  if (u.rank() != Rank::spinor8)
    throw std::invalid_argument("apply_P: needs a spinor8 field");
  return spectral_map(u, Rank::spinor8,
                      [](const Vec3& k, const cplx* a, cplx* b) {
                        symbol_apply(k.cast<cplx>(), a, b);
                      });
}

Field apply_P_shifted(const Field& u, const CVec3& shift) {
  if (u.rank() != Rank::spinor8)
    throw std::invalid_argument("apply_P_shifted: needs a spinor8 field");
  return spectral_map(u, Rank::spinor8,
                      [&shift](const Vec3& k, const cplx* a, cplx* b) {
                        symbol_apply(k.cast<cplx>() + shift, a, b);
                      });
}

Mat8 matrix_at(const Field& M, std::size_t idx) {
  Mat8 A;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) A(r, c) = M.at(8 * r + c, idx);
  return A;
}

Field apply_matrix(const Field& M, const Field& u) {
  if (M.rank() != Rank::matrix8x8 || u.rank() != Rank::spinor8)
    throw std::invalid_argument("apply_matrix: needs matrix8x8 and spinor8");
  if (M.grid() != u.grid())
    throw std::invalid_argument("apply_matrix: grid mismatch");
  Field out(u.grid(), Rank::spinor8);
  parallel_for(u.points(), slab(u.grid()), [&](std::size_t b, std::size_t e) {
    for (int r = 0; r < 8; ++r) {
      cplx* o = out.comp(r);
      for (int c = 0; c < 8; ++c) {
        const cplx* m = M.comp(8 * r + c);
        const cplx* x = u.comp(c);
        for (std::size_t i = b; i < e; ++i) o[i] += m[i] * x[i];
      }
    }
  });
  return out;
}

Field matrix_field_constant(const GridSpec& g, const Mat8& A) {
  Field M(g, Rank::matrix8x8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      cplx* p = M.comp(8 * r + c);
      for (std::size_t i = 0; i < g.points(); ++i) p[i] = A(r, c);
    }
  return M;
}

const char* first_order_name(FirstOrder k) {
  switch (k) {
    case FirstOrder::V: return "V";
    case FirstOrder::W: return "W";
    case FirstOrder::Wt: return "Wt";
    case FirstOrder::Wstar: return "Wstar";
    case FirstOrder::Wbar: return "Wbar";
    case FirstOrder::W_swapped: return "W_swapped";
    case FirstOrder::Wt_swapped: return "Wt_swapped";
  }
  return "?";
}

const char* potential_name(PotentialKind k) {
  switch (k) {
    case PotentialKind::Q: return "Q";
    case PotentialKind::Qhat: return "Qhat";
    case PotentialKind::Qtilde: return "Qtilde";
  }
  return "?";
}

// ------------------------------------------------------ MediumOperators

MediumOperators::MediumOperators(const Medium& m)
    : medium_(m), logs_(log_fields(m)) {
  // D(conj a) = -conj(D a) holds exactly because the Nyquist bin of the
  // derivative wavenumbers is zero.
  Dalpha_conj_ = Field(m.grid, Rank::vector3);
  for (std::size_t i = 0; i < Dalpha_conj_.size(); ++i)
    Dalpha_conj_.values()[i] = -std::conj(logs_.Dalpha.values()[i]);
}

Mat8 MediumOperators::at(FirstOrder kind, std::size_t idx) const {
  auto vec = [&](const Field& f) {
    return CVec3(f.at(0, idx), f.at(1, idx), f.at(2, idx));
  };
  const cplx kappa = logs_.kappa.at(0, idx);
  switch (kind) {
    case FirstOrder::V:
      return v_block(medium_.bg.omega * medium_.mu.at(0, idx),
                     medium_.bg.omega * medium_.gamma.at(0, idx),
                     vec(logs_.Dalpha), vec(logs_.Dbeta));
    case FirstOrder::W:
      return w_block(kappa, vec(logs_.Dalpha), vec(logs_.Dbeta));
    case FirstOrder::Wt:
      return w_block(kappa, vec(logs_.Dalpha), vec(logs_.Dbeta)).transpose();
    case FirstOrder::Wstar:
      return w_block(kappa, vec(logs_.Dalpha), vec(logs_.Dbeta)).adjoint();
    case FirstOrder::Wbar:
      return w_block(kappa, vec(logs_.Dalpha), vec(logs_.Dbeta)).conjugate();
    case FirstOrder::W_swapped:
      return w_block(-std::conj(kappa), vec(Dalpha_conj_), vec(logs_.Dbeta));
    case FirstOrder::Wt_swapped:
      return w_block(-std::conj(kappa), vec(Dalpha_conj_), vec(logs_.Dbeta))
          .transpose();
  }
  throw std::invalid_argument("unknown first-order operator");
}

Mat8 MediumOperators::at_background(FirstOrder kind) const {
  const Background& bg = medium_.bg;
  const CVec3 z = CVec3::Zero();
  const cplx k0 = bg.k0();
  switch (kind) {
    case FirstOrder::V:
      return v_block(bg.omega * bg.mu0, bg.omega * bg.eps0, z, z);
    case FirstOrder::W:
    case FirstOrder::Wt:
    case FirstOrder::Wstar:
    case FirstOrder::Wbar:
      return k0 * Mat8::Identity();
    case FirstOrder::W_swapped:
    case FirstOrder::Wt_swapped:
      return -k0 * Mat8::Identity();
  }
  throw std::invalid_argument("unknown first-order operator");
}

Field MediumOperators::matrix_field(FirstOrder kind) const {
  const GridSpec& g = grid();
  Field M(g, Rank::matrix8x8);
  parallel_for(g.points(), slab(g), [&](std::size_t b, std::size_t e) {
    for (std::size_t idx = b; idx < e; ++idx) {
      const Mat8 A = at(kind, idx);
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) M.at(8 * r + c, idx) = A(r, c);
    }
  });
  return M;
}

Field MediumOperators::apply(FirstOrder kind, const Field& u,
                             bool dealias_product) const {
  if (u.rank() != Rank::spinor8)
    throw std::invalid_argument("apply: needs a spinor8 field");
  if (u.grid() != grid())
    throw std::invalid_argument("apply: grid mismatch");
  Field out(u.grid(), Rank::spinor8);
  parallel_for(u.points(), slab(u.grid()), [&](std::size_t b, std::size_t e) {
    for (std::size_t idx = b; idx < e; ++idx) {
      const Mat8 A = at(kind, idx);
      Vec8 x;
      for (int c = 0; c < 8; ++c) x[c] = u.at(c, idx);
      const Vec8 y = A * x;
      for (int c = 0; c < 8; ++c) out.at(c, idx) = y[c];
    }
  });
  if (dealias_product) dealias_inplace(out);
  return out;
}

FirstOrder MediumOperators::left_factor(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::Q: return FirstOrder::W;
    case PotentialKind::Qhat: return FirstOrder::Wstar;
    case PotentialKind::Qtilde: return FirstOrder::W_swapped;
  }
  throw std::invalid_argument("unknown potential");
}

FirstOrder MediumOperators::right_factor(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::Q: return FirstOrder::Wt;
    case PotentialKind::Qhat: return FirstOrder::Wbar;
    case PotentialKind::Qtilde: return FirstOrder::Wt_swapped;
  }
  throw std::invalid_argument("unknown potential");
}

Field MediumOperators::potential(PotentialKind kind) const {
  const GridSpec& g = grid();
  const FirstOrder wl = left_factor(kind);
  const FirstOrder wr = right_factor(kind);
  // Homogeneous medium: every factor is a constant multiple of I and the
  // potential is exactly -k0^2 I. Skipping the FFT keeps it exact.
  bool homogeneous = true;
  for (std::size_t i = 0; i < g.points() && homogeneous; ++i)
    homogeneous = medium_.mu.at(0, i) == medium_.bg.mu0 &&
                  medium_.gamma.at(0, i) == medium_.bg.eps0;
  if (homogeneous)
    return matrix_field_constant(g, -medium_.bg.k0sq() * Mat8::Identity());
  Field Q(g, Rank::matrix8x8);
  for (int j = 0; j < 8; ++j) {
    // Column j of Wr as a spinor field.
    Field col(g, Rank::spinor8);
    parallel_for(g.points(), slab(g), [&](std::size_t b, std::size_t e) {
      for (std::size_t idx = b; idx < e; ++idx) {
        const Mat8 A = at(wr, idx);
        for (int r = 0; r < 8; ++r) col.at(r, idx) = A(r, j);
      }
    });
    const Field pcol = apply_P(col);
    const Field wcol = apply(wl, col);
    for (int r = 0; r < 8; ++r) {
      cplx* q = Q.comp(8 * r + j);
      const cplx* a = pcol.comp(r);
      const cplx* w = wcol.comp(r);
      for (std::size_t i = 0; i < g.points(); ++i) q[i] = -a[i] - w[i];
    }
  }
  return Q;
}

// --------------------------------------------------------------- checks

Field random_band_limited(const GridSpec& g, Rank rank, int band,
                          std::uint64_t seed) {
  if (band < 0 || 2 * band >= g.n)
    throw std::invalid_argument("random_band_limited: band out of range");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Field spec(g, rank);
  const int n = g.n;
  const double scale = static_cast<double>(g.points());
  for (int c = 0; c < spec.dim(); ++c)
    for (int mz = -band; mz <= band; ++mz)
      for (int my = -band; my <= band; ++my)
        for (int mx = -band; mx <= band; ++mx) {
          const double re = gauss(rng);
          const double im = gauss(rng);
          const std::size_t idx = g.index((mx + n) % n, (my + n) % n, (mz + n) % n);
          spec.at(c, idx) = scale * cplx(re, im);
        }
  return dft_inverse(spec);
}

namespace {

// T(u) = Wl P u - P(Wr u); the control case is T = P.
Field zeroth_candidate(const MediumOperators& ops, ZerothOrderCheck which,
                       const Field& u, bool dealias_products) {
  FirstOrder wl, wr;
  switch (which) {
    case ZerothOrderCheck::WP_PWt: wl = FirstOrder::W; wr = FirstOrder::Wt; break;
    case ZerothOrderCheck::WstarP_PWbar: wl = FirstOrder::Wstar; wr = FirstOrder::Wbar; break;
    case ZerothOrderCheck::swapped: wl = FirstOrder::W_swapped; wr = FirstOrder::Wt_swapped; break;
    case ZerothOrderCheck::control_P: return apply_P(u);
    default: throw std::invalid_argument("unknown check");
  }
  Field t = ops.apply(wl, apply_P(u));
  t -= apply_P(ops.apply(wr, u, dealias_products));
  return t;
}

double max_coefficient(const MediumOperators& ops, FirstOrder kind) {
  double m = 0.0;
  for (std::size_t idx = 0; idx < ops.grid().points(); ++idx)
    m = std::max(m, ops.at(kind, idx).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

IdentityReport verify_zeroth_order(const MediumOperators& ops,
                                   ZerothOrderCheck which, std::uint64_t seed,
                                   int band, bool dealias_products) {
  const GridSpec& g = ops.grid();
  const Field chi = random_band_limited(g, Rank::scalar, band, seed);
  const Field u = random_band_limited(g, Rank::spinor8, band, seed + 1);
  const Field chiu = multiply(chi, u);

  const Field t_chiu = zeroth_candidate(ops, which, chiu, dealias_products);
  const Field chi_tu = multiply(chi, zeroth_candidate(ops, which, u, dealias_products));

  IdentityReport r;
  static const char* names[] = {"leibniz_WP_PWt", "leibniz_WstarP_PWbar",
                                "leibniz_swapped", "leibniz_control_P"};
  r.name = names[static_cast<int>(which)];
  r.absolute = l2_norm(t_chiu - chi_tu);
  const double t_norm = l2_norm(t_chiu);
  const double fallback =
      max_coefficient(ops, FirstOrder::W) * l2_norm(apply_P(chiu));
  // A vanishing expression (constant coefficients) is measured against the
  // size of the terms that cancelled.
  r.reference = t_norm > 1e-12 * fallback ? t_norm : fallback;
  r.residual = r.reference > 0.0 ? r.absolute / r.reference : 0.0;
  return r;
}

IdentityReport verify_factorization(const MediumOperators& ops,
                                    PotentialKind which, const Field& Q,
                                    std::uint64_t seed, int band,
                                    bool dealias_products) {
  const GridSpec& g = ops.grid();
  const Field u = random_band_limited(g, Rank::spinor8, band, seed);
  const FirstOrder wl = MediumOperators::left_factor(which);
  const FirstOrder wr = MediumOperators::right_factor(which);

  Field inner = apply_P(u);
  inner -= ops.apply(wr, u, dealias_products);
  Field lhs = apply_P(inner);
  lhs += ops.apply(wl, inner);

  const Field lap = spectral_derivative(u, Deriv::laplacian);
  Field rhs = apply_matrix(Q, u);
  rhs -= lap;

  IdentityReport r;
  r.name = std::string("factorization_") + potential_name(which);
  r.absolute = l2_norm(lhs - rhs);
  r.reference = l2_norm(lap);
  r.residual = r.absolute / r.reference;
  return r;
}

double wstar_swap_identity(const MediumOperators& ops) {
  double worst = 0.0;
  for (std::size_t idx = 0; idx < ops.grid().points(); ++idx) {
    const Mat8 s = ops.at(FirstOrder::Wstar, idx) + ops.at(FirstOrder::Wt_swapped, idx);
    worst = std::max(worst, s.cwiseAbs().maxCoeff());
  }
  return worst;
}

Field maxwell_to_augmented(const Field& E, const Field& H) {
  if (E.rank() != Rank::vector3 || H.rank() != Rank::vector3)
    throw std::invalid_argument("maxwell_to_augmented: needs vector3 fields");
  if (E.grid() != H.grid())
    throw std::invalid_argument("maxwell_to_augmented: grid mismatch");
  Field X(E.grid(), Rank::spinor8);
  for (int c = 0; c < 3; ++c) {
    X.set_component(1 + c, H.component(c));
    X.set_component(5 + c, E.component(c));
  }
  return X;
}

Field rescale_X(const Field& X, const Medium& m) {
  if (X.rank() != Rank::spinor8)
    throw std::invalid_argument("rescale_X: needs a spinor8 field");
  Field Y = X;
  for (std::size_t idx = 0; idx < X.points(); ++idx) {
    const cplx smu = std::sqrt(m.mu.at(0, idx));
    const cplx sga = std::sqrt(m.gamma.at(0, idx));
    for (int c = 0; c < 4; ++c) Y.at(c, idx) *= smu;
    for (int c = 4; c < 8; ++c) Y.at(c, idx) *= sga;
  }
  return Y;
}

double augmented_residual(const MediumOperators& ops, const Field& X) {
  Field r = apply_P(X);
  r += ops.apply(FirstOrder::V, X);
  return l2_norm(r) / l2_norm(X);
}

double rescaled_residual(const MediumOperators& ops, const Field& Y) {
  Field r = apply_P(Y);
  r += ops.apply(FirstOrder::W, Y);
  return l2_norm(r) / l2_norm(Y);
}

double verify_P_symmetry(const Field& U, const Field& V) {
  const cplx a = inner_product(apply_P(U), V);
  const cplx b = inner_product(U, apply_P(V));
  return std::abs(a - b) / (l2_norm(U) * l2_norm(V));
}

}  // namespace cgo
