#include "cgo/cgo.hpp"

#include "cgo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cgo {

namespace {

const cplx I(0.0, 1.0);

std::size_t slab(const GridSpec& g) {
  return static_cast<std::size_t>(g.n) * g.n;
}

cplx dotu(const CVec3& a, const CVec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

CVec3 crossu(const CVec3& a, const CVec3& b) {
  return CVec3(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
               a[0] * b[1] - a[1] * b[0]);
}

double values_norm(const BlochAmplitude& a, const DomainMask* mask = nullptr) {
  const Field v = a.values();
  return mask ? l2_norm(v, *mask) : l2_norm(v);
}

}  // namespace

// ------------------------------------------------------------ directions

std::pair<Vec3, Vec3> choose_etas(const Vec3& xi) {
  const double n2 = xi.squaredNorm();
  if (!(n2 > 0.0)) throw std::invalid_argument("choose_etas: xi must be nonzero");
  int j = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(xi[a]) < std::abs(xi[j])) j = a;
  Vec3 v = -xi[j] * xi;
  v[j] += n2;
  const Vec3 eta1 = v.normalized();
  const Vec3 eta2 = xi.cross(eta1).normalized();
  return {eta1, eta2};
}

CgoDirections build_zeta_pair(const Vec3& xi, double tau, const Background& bg,
                              const Vec3& eta1, const Vec3& eta2) {
  if (!(xi.norm() > 0.0))
    throw std::invalid_argument("build_zeta_pair: xi = 0 is not admissible");
  if (!(tau >= 1.0)) throw std::invalid_argument("build_zeta_pair: tau must be >= 1");
  bg.validate();
  const double tol = 1e-12 * std::max(1.0, xi.norm());
  if (std::abs(eta1.norm() - 1.0) > 1e-12 || std::abs(eta2.norm() - 1.0) > 1e-12 ||
      std::abs(eta1.dot(eta2)) > 1e-12 || std::abs(eta1.dot(xi)) > tol ||
      std::abs(eta2.dot(xi)) > tol)
    throw std::invalid_argument(
        "build_zeta_pair: eta1, eta2 must be orthonormal and orthogonal to xi");
  CgoDirections d;
  d.xi = xi;
  d.tau = tau;
  d.eta1 = eta1;
  d.eta2 = eta2;
  d.k0sq = bg.k0sq();
  const double a = std::sqrt(tau * tau + 0.25 * xi.squaredNorm());
  const double b = std::sqrt(tau * tau + d.k0sq);
  const CVec3 x = xi.cast<cplx>();
  d.zeta1 = -0.5 * x + I * a * eta1.cast<cplx>() + b * eta2.cast<cplx>();
  d.zeta2 = 0.5 * x - I * a * eta1.cast<cplx>() + b * eta2.cast<cplx>();
  return d;
}

CgoDirections build_zeta_pair(const Vec3& xi, double tau, const Background& bg) {
  if (!(xi.norm() > 0.0))
    throw std::invalid_argument("build_zeta_pair: xi = 0 is not admissible");
  const auto [e1, e2] = choose_etas(xi);
  return build_zeta_pair(xi, tau, bg, e1, e2);
}

const char* mode_name(Mode m) { return m == Mode::f ? "f" : "g"; }

Polarization polarization_z(Mode mode, const CgoDirections& d) {
  Polarization p;
  p.mode = mode;
  const CVec3 v = (-I * d.eta1.cast<cplx>() + d.eta2.cast<cplx>()) / std::sqrt(2.0);
  if (mode == Mode::f) p.A = v; else p.B = v;
  return p;
}

Polarization polarization_y(Mode mode, const CgoDirections& d) {
  Polarization p = polarization_z(mode, d);
  p.A = p.A.conjugate();
  p.B = p.B.conjugate();
  return p;
}

cplx constraint_value_z(const Polarization& p, const CgoDirections& d) {
  const CVec3 w = (I * d.eta1.cast<cplx>() + d.eta2.cast<cplx>()) / std::sqrt(2.0);
  return dotu(w, p.mode == Mode::f ? p.A : p.B);
}

cplx constraint_value_y(const Polarization& p, const CgoDirections& d) {
  const CVec3 w = (I * d.eta1.cast<cplx>() + d.eta2.cast<cplx>()) / std::sqrt(2.0);
  return dotu(w, (p.mode == Mode::f ? p.A : p.B).conjugate());
}

double zeta_norm(const CVec3& zeta) { return zeta.norm(); }

Vec8 build_L(const CVec3& zeta, const Polarization& p, const Background& bg) {
  const double nz = zeta_norm(zeta);
  if (!(nz > 0.0)) throw std::invalid_argument("build_L: |zeta| must be > 0");
  const double k0 = bg.k0();
  Vec8 L;
  L[0] = dotu(zeta, p.A);
  L.segment<3>(1) = k0 * p.B;
  L[4] = dotu(zeta, p.B);
  L.segment<3>(5) = k0 * p.A;
  return L / nz;
}

Vec8 build_M(const CVec3& zeta, const Polarization& p) {
  const double nz = zeta_norm(zeta);
  if (!(nz > 0.0)) throw std::invalid_argument("build_M: |zeta| must be > 0");
  Vec8 M;
  M[0] = dotu(zeta, p.A);
  M.segment<3>(1) = -crossu(zeta, p.A);
  M[4] = dotu(zeta, p.B);
  M.segment<3>(5) = crossu(zeta, p.B);
  return M / nz;
}

Vec8 build_Lhat(const CVec3& zeta, const Polarization& p) {
  const double nz = zeta_norm(zeta);
  if (!(nz > 0.0)) throw std::invalid_argument("build_Lhat: |zeta| must be > 0");
  Vec8 L = Vec8::Zero();
  L.segment<3>(1) = p.B;
  L.segment<3>(5) = p.A;
  return L / nz;
}

// ------------------------------------------------------ Bloch amplitudes

Field BlochAmplitude::values() const {
  const GridSpec& g = q.grid();
  Field v(g, q.rank());
  const int d = q.dim();
  parallel_for(g.points(), slab(g), [&](std::size_t b, std::size_t e) {
    for (std::size_t idx = b; idx < e; ++idx) {
      const cplx ph = std::exp(cplx(0.0, theta.dot(g.position(idx))));
      for (int k = 0; k < d; ++k) v.at(k, idx) = c[k] + ph * q.at(k, idx);
    }
  });
  return v;
}

BlochAmplitude make_constant_amplitude(const GridSpec& g, const Vec8& c,
                                       const Vec3& theta) {
  BlochAmplitude a;
  a.c.assign(c.data(), c.data() + 8);
  a.q = Field(g, Rank::spinor8);
  a.theta = theta;
  return a;
}

namespace {

void require_same(const BlochAmplitude& a, const BlochAmplitude& b) {
  if (a.theta != b.theta || a.c.size() != b.c.size())
    throw std::invalid_argument("amplitudes: incompatible shift or rank");
}

}  // namespace

BlochAmplitude operator+(const BlochAmplitude& a, const BlochAmplitude& b) {
  require_same(a, b);
  BlochAmplitude r = a;
  for (std::size_t k = 0; k < r.c.size(); ++k) r.c[k] += b.c[k];
  r.q += b.q;
  return r;
}

BlochAmplitude operator-(const BlochAmplitude& a, const BlochAmplitude& b) {
  require_same(a, b);
  BlochAmplitude r = a;
  for (std::size_t k = 0; k < r.c.size(); ++k) r.c[k] -= b.c[k];
  r.q -= b.q;
  return r;
}

BlochAmplitude conjugated_P(const BlochAmplitude& a, const CVec3& zeta) {
  if (a.rank() != Rank::spinor8)
    throw std::invalid_argument("conjugated_P: needs a spinor amplitude");
  BlochAmplitude r;
  r.theta = a.theta;
  r.c.assign(8, 0.0);
  symbol_apply(zeta, a.c.data(), r.c.data());
  r.q = apply_P_shifted(a.q, a.theta.cast<cplx>() + zeta);
  return r;
}

BlochAmplitude apply_first_order(const MediumOperators& ops, FirstOrder kind,
                                 const BlochAmplitude& a) {
  const Mat8 bgm = ops.at_background(kind);
  return map_pointwise(
      a, Rank::spinor8,
      [&](std::size_t idx, const cplx* in, cplx* out) {
        const Mat8 A = ops.at(kind, idx);
        Eigen::Map<const Vec8> x(in);
        Eigen::Map<Vec8> y(out);
        y = A * x;
      },
      [&](const cplx* in, cplx* out) {
        Eigen::Map<const Vec8> x(in);
        Eigen::Map<Vec8> y(out);
        y = bgm * x;
      });
}

namespace {

// e^{-i zeta.x} curl e^{i zeta.x} on a vector amplitude: i (zeta + D) x.
BlochAmplitude conjugated_curl(const BlochAmplitude& a, const CVec3& zeta) {
  BlochAmplitude r;
  r.theta = a.theta;
  const CVec3 c(a.c[0], a.c[1], a.c[2]);
  const CVec3 cc = I * crossu(zeta, c);
  r.c = {cc[0], cc[1], cc[2]};
  const CVec3 shift = a.theta.cast<cplx>() + zeta;
  r.q = spectral_map(a.q, Rank::vector3,
                     [&shift](const Vec3& k, const cplx* u, cplx* v) {
                       const CVec3 kk = k.cast<cplx>() + shift;
                       const CVec3 uu(u[0], u[1], u[2]);
                       const CVec3 w = I * crossu(kk, uu);
                       v[0] = w[0];
                       v[1] = w[1];
                       v[2] = w[2];
                     });
  return r;
}

// s(x) * block of a spinor amplitude (first component `from`), as a vector
// amplitude. s_bg is the background value of s.
BlochAmplitude scaled_block(const BlochAmplitude& a, int from, const Field& s,
                            cplx s_bg) {
  return map_pointwise(
      a, Rank::vector3,
      [&](std::size_t idx, const cplx* in, cplx* out) {
        const cplx f = s.at(0, idx);
        for (int k = 0; k < 3; ++k) out[k] = f * in[from + k];
      },
      [&](const cplx* in, cplx* out) {
        for (int k = 0; k < 3; ++k) out[k] = s_bg * in[from + k];
      });
}

// s(x) * vector amplitude.
BlochAmplitude scaled_vector(const BlochAmplitude& a, const Field& s, cplx s_bg) {
  return map_pointwise(
      a, Rank::vector3,
      [&](std::size_t idx, const cplx* in, cplx* out) {
        const cplx f = s.at(0, idx);
        for (int k = 0; k < 3; ++k) out[k] = f * in[k];
      },
      [&](const cplx* in, cplx* out) {
        for (int k = 0; k < 3; ++k) out[k] = s_bg * in[k];
      });
}

Field pointwise_scalar(const GridSpec& g, const std::function<cplx(std::size_t)>& f) {
  Field s(g, Rank::scalar);
  for (std::size_t idx = 0; idx < g.points(); ++idx) s.at(0, idx) = f(idx);
  return s;
}

}  // namespace

// ---------------------------------------------------------- Bloch shift

std::optional<Vec3> bloch_shift(const Vec3& eta1, double box_length) {
  const double big = eta1.cwiseAbs().maxCoeff();
  if (!(big > 0.0)) return std::nullopt;
  long long v[3] = {0, 0, 0};
  bool found = false;
  for (int s = 1; s <= 4096 && !found; ++s) {
    const Vec3 w = eta1 / big * static_cast<double>(s);
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      const double r = std::round(w[a]);
      if (std::abs(w[a] - r) > 1e-9 * s) ok = false;
      v[a] = static_cast<long long>(r);
    }
    found = ok;
  }
  if (!found) return std::nullopt;
  const long long gg = std::gcd(std::gcd(std::llabs(v[0]), std::llabs(v[1])), std::llabs(v[2]));
  for (auto& x : v) x /= gg;

  // Extended Euclid: u with v.u = 1.
  auto egcd = [](long long a, long long b, long long& x, long long& y) {
    long long x0 = 1, y0 = 0, x1 = 0, y1 = 1;
    while (b != 0) {
      const long long q = a / b;
      long long t = a - q * b; a = b; b = t;
      t = x0 - q * x1; x0 = x1; x1 = t;
      t = y0 - q * y1; y0 = y1; y1 = t;
    }
    x = x0;
    y = y0;
    return a;
  };
  long long x0, x1, y0, y2;
  const long long d01 = egcd(v[0], v[1], x0, x1);
  const long long d = egcd(d01, v[2], y0, y2);
  long long u[3] = {x0 * y0, x1 * y0, y2};
  if (d < 0) for (auto& x : u) x = -x;
  if (v[0] * u[0] + v[1] * u[1] + v[2] * u[2] != 1) return std::nullopt;
  return Vec3(static_cast<double>(u[0]), static_cast<double>(u[1]),
              static_cast<double>(u[2])) *
         (std::numbers::pi / box_length);
}

// ------------------------------------------------------------- Faddeev

FaddeevOperator::FaddeevOperator(const GridSpec& g, const CVec3& zeta,
                                 const Vec3& theta, const FaddeevOptions& opt)
    : grid_(g) {
  const std::size_t np = g.points();
  symbol_.resize(np);
  inverse_.resize(np);
  const double floor = opt.floor_factor * zeta.squaredNorm();
  min_abs_ = std::numeric_limits<double>::infinity();
  for (std::size_t idx = 0; idx < np; ++idx) {
    const CVec3 k = (g.deriv_k(idx) + theta).cast<cplx>();
    cplx s = dotu(k, k) + 2.0 * dotu(zeta, k);
    if (std::abs(s) < floor) {
      s += cplx(0.0, floor);
      ++shifted_;
    }
    symbol_[idx] = s;
    inverse_[idx] = 1.0 / s;
    min_abs_ = std::min(min_abs_, std::abs(s));
  }
  if (static_cast<double>(shifted_) > opt.max_shifted_fraction * static_cast<double>(np)) {
    std::ostringstream os;
    os << "faddeev: " << shifted_ << " of " << np
       << " lattice modes sit on the characteristic set; choose a different box length";
    throw NumericalFailure(os.str());
  }
}

Field FaddeevOperator::scale(const Field& F, const std::vector<cplx>& mult) const {
  if (F.grid() != grid_) throw std::invalid_argument("faddeev: grid mismatch");
  Field out = dft_forward(F);
  const std::size_t np = grid_.points();
  for (int c = 0; c < out.dim(); ++c) {
    cplx* p = out.comp(c);
    for (std::size_t i = 0; i < np; ++i) p[i] *= mult[i];
  }
  dft_inverse_inplace(out);
  return out;
}

Field FaddeevOperator::apply(const Field& F) const { return scale(F, inverse_); }
Field FaddeevOperator::apply_symbol(const Field& u) const { return scale(u, symbol_); }

Field faddeev_apply(const CVec3& zeta, const Field& F, const FaddeevOptions& opt) {
  return FaddeevOperator(F.grid(), zeta, Vec3::Zero(), opt).apply(F);
}

// ---------------------------------------------------------------- solve

double CgoSolution::remainder_norm(const DomainMask& mask) const {
  return l2_norm(amp.q, mask);
}

namespace {

struct CgoProblem {
  const Field& potential;
  double k0sq;
  const FaddeevOperator& G;
  Field src;  // e^{-i theta.x} (Q + k0^2) L

  Field m_apply(const Field& q) const {
    Field r = apply_matrix(potential, q);
    const std::size_t n = r.size();
    for (std::size_t i = 0; i < n; ++i) r.values()[i] += k0sq * q.values()[i];
    return r;
  }
  // A q = q + G[m q]
  Field A(const Field& q) const {
    Field r = G.apply(m_apply(q));
    r += q;
    return r;
  }
  // Fixed-point residual q + G[src + m q].
  Field residual(const Field& q) const {
    Field t = m_apply(q);
    t += src;
    Field r = G.apply(t);
    r += q;
    return r;
  }
};

cplx dot(const Field& a, const Field& b) {
  // sum conj(b) a with fixed order; cell volume irrelevant here
  return inner_product(a, b);
}

// Restarted GMRES on A q = b starting from q; stops when the fixed-point
// residual relative to scale drops below tol.
void gmres(const CgoProblem& pb, Field& q, const Field& b, double scale, double tol,
           int restart, int max_iter, SolverStats& st) {
  int total = 0;
  while (total < max_iter) {
    Field r = b;
    r -= pb.A(q);
    const double beta = l2_norm(r);
    st.residual = beta / scale;
    st.history.push_back(st.residual);
    if (st.residual < tol) return;
    const int m = std::min(restart, max_iter - total);
    std::vector<Field> V;
    V.reserve(m + 1);
    V.push_back((1.0 / beta) * r);
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m + 1, m);
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(m + 1);
    g[0] = beta;
    std::vector<cplx> cs(m), sn(m);
    int k = 0;
    for (; k < m; ++k) {
      Field w = pb.A(V[k]);
      for (int j = 0; j <= k; ++j) {
        H(j, k) = dot(w, V[j]);
        Field t = V[j];
        t *= H(j, k);
        w -= t;
      }
      const double hn = l2_norm(w);
      H(k + 1, k) = hn;
      for (int j = 0; j < k; ++j) {
        const cplx t = std::conj(cs[j]) * H(j, k) + std::conj(sn[j]) * H(j + 1, k);
        H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
        H(j, k) = t;
      }
      const double den = std::sqrt(std::norm(H(k, k)) + std::norm(H(k + 1, k)));
      cs[k] = den > 0.0 ? H(k, k) / den : 1.0;
      sn[k] = den > 0.0 ? H(k + 1, k) / den : 0.0;
      H(k, k) = std::conj(cs[k]) * H(k, k) + std::conj(sn[k]) * H(k + 1, k);
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = std::conj(cs[k]) * g[k];
      ++total;
      ++st.iterations;
      if (std::abs(g[k + 1]) / scale < 0.5 * tol || hn == 0.0) {
        ++k;
        break;
      }
      V.push_back((1.0 / hn) * w);
    }
    // Back substitution on the k x k triangle.
    Eigen::VectorXcd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    for (int j = 0; j < k; ++j) {
      Field t = V[j];
      t *= y[j];
      q += t;
    }
  }
  Field r = b;
  r -= pb.A(q);
  st.residual = l2_norm(r) / scale;
  st.history.push_back(st.residual);
}

}  // namespace

CgoSolution solve_cgo(const CVec3& zeta, const Field& potential, PotentialKind kind,
                      const Vec8& leading, double k0sq, const Vec3& theta,
                      const CgoOptions& opt) {
  if (potential.rank() != Rank::matrix8x8)
    throw std::invalid_argument("solve_cgo: potential must be a matrix8x8 field");
  if (std::abs(dotu(zeta, zeta) - k0sq) > 1e-9 * std::max(1.0, zeta.squaredNorm()))
    throw std::invalid_argument("solve_cgo: zeta.zeta must equal k0^2");
  const GridSpec& g = potential.grid();

  CgoSolution sol;
  sol.zeta = zeta;
  sol.leading = leading;
  sol.kind = kind;
  sol.amp = make_constant_amplitude(g, leading, theta);

  const FaddeevOperator G(g, zeta, theta, opt.faddeev);
  sol.stats.shifted_modes = G.shifted_modes();
  sol.stats.min_symbol = G.min_abs_symbol();

  CgoProblem pb{potential, k0sq, G, Field(g, Rank::spinor8)};
  bool any = false;
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    Vec8 mL = matrix_at(potential, idx) * leading + k0sq * leading;
    if (mL.isZero(0.0)) continue;
    any = true;
    const cplx ph = std::exp(cplx(0.0, -theta.dot(g.position(idx))));
    for (int c = 0; c < 8; ++c) pb.src.at(c, idx) = ph * mL[c];
  }
  if (!any) return sol;  // exact exponential solution, R = 0

  Field& q = sol.amp.q;
  SolverStats& st = sol.stats;
  double prev = 0.0;
  bool switch_to_krylov = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    const Field r = pb.residual(q);
    const double scale = values_norm(sol.amp);
    st.residual = l2_norm(r) / scale;
    st.history.push_back(st.residual);
    if (it > 0) st.contraction = st.residual / prev;
    if (st.residual < opt.tol) return sol;
    if (it >= 2 && st.contraction > opt.contraction_switch) {
      switch_to_krylov = true;
      break;
    }
    prev = st.residual;
    q -= r;  // q_{m+1} = -G[src + m q_m]
    ++st.iterations;
  }

  if (switch_to_krylov) {
    st.krylov = true;
    Field b = G.apply(pb.src);
    b *= -1.0;
    const double scale = values_norm(sol.amp);
    gmres(pb, q, b, scale, opt.tol, opt.krylov_restart, opt.max_iter, st);
    st.residual = l2_norm(pb.residual(q)) / values_norm(sol.amp);
    if (st.residual < opt.tol) return sol;
    std::ostringstream os;
    os << "solve_cgo: no convergence (Born contraction " << st.contraction
       << " > " << opt.contraction_switch << ", Krylov residual " << st.residual
       << "); increase tau";
    throw NumericalFailure(os.str());
  }
  std::ostringstream os;
  os << "solve_cgo: iteration cap " << opt.max_iter << " reached; residual history:";
  for (double h : st.history) os << ' ' << h;
  throw NumericalFailure(os.str());
}

CgoSolution solve_cgo(const CVec3& zeta, const Field& potential, PotentialKind kind,
                      const Vec8& leading, const Background& bg, const Vec3& eta1,
                      double box_length, const CgoOptions& opt) {
  Vec3 theta = Vec3::Zero();
  if (opt.bloch)
    if (auto t = bloch_shift(eta1, box_length)) theta = *t;
  return solve_cgo(zeta, potential, kind, leading, bg.k0sq(), theta, opt);
}

double cgo_equation_residual(const CgoSolution& s, const Field& potential, double k0sq,
                             const FaddeevOptions& opt) {
  const GridSpec& g = potential.grid();
  const FaddeevOperator G(g, s.zeta, s.amp.theta, opt);
  CgoProblem pb{potential, k0sq, G, Field(g, Rank::spinor8)};
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    const Vec8 mL = matrix_at(potential, idx) * s.leading + k0sq * s.leading;
    const cplx ph = std::exp(cplx(0.0, -s.amp.theta.dot(g.position(idx))));
    for (int c = 0; c < 8; ++c) pb.src.at(c, idx) = ph * mL[c];
  }
  return l2_norm(pb.residual(s.amp.q)) / values_norm(s.amp);
}

// ----------------------------------------------------- derived solutions

MaxwellSolution derive_maxwell_solution(const CgoSolution& z, const MediumOperators& ops) {
  if (z.kind != PotentialKind::Q)
    throw std::invalid_argument("derive_maxwell_solution: needs a Q solution");
  const Medium& m = ops.medium();
  const GridSpec& g = m.grid;
  MaxwellSolution r;
  r.Y = conjugated_P(z.amp, z.zeta) - apply_first_order(ops, FirstOrder::Wt, z.amp);

  const Field inv_sqrt_mu =
      pointwise_scalar(g, [&](std::size_t i) { return 1.0 / std::sqrt(m.mu.at(0, i)); });
  const Field inv_sqrt_gamma =
      pointwise_scalar(g, [&](std::size_t i) { return 1.0 / std::sqrt(m.gamma.at(0, i)); });
  r.H = scaled_block(r.Y, 1, inv_sqrt_mu, 1.0 / std::sqrt(cplx(m.bg.mu0)));
  r.E = scaled_block(r.Y, 5, inv_sqrt_gamma, 1.0 / std::sqrt(cplx(m.bg.eps0)));

  const Field yv = r.Y.values();
  double s2 = 0.0;
  for (std::size_t i = 0; i < g.points(); ++i)
    s2 += std::norm(yv.at(0, i)) + std::norm(yv.at(4, i));
  r.scalar_slots = std::sqrt(s2 * g.cell_volume()) / l2_norm(yv);

  const BlochAmplitude pw =
      conjugated_P(r.Y, z.zeta) + apply_first_order(ops, FirstOrder::W, r.Y);
  r.rescaled_residual = values_norm(pw) / l2_norm(yv);

  const double w = m.bg.omega;
  const Field wgamma = pointwise_scalar(g, [&](std::size_t i) { return w * m.gamma.at(0, i); });
  const Field wmu = pointwise_scalar(g, [&](std::size_t i) { return w * m.mu.at(0, i); });
  const BlochAmplitude gE = scaled_vector(r.E, wgamma, w * m.bg.eps0);
  const BlochAmplitude mH = scaled_vector(r.H, wmu, w * m.bg.mu0);
  BlochAmplitude amp = conjugated_curl(r.H, z.zeta);
  {
    BlochAmplitude t = gE;
    for (auto& c : t.c) c *= I;
    t.q *= I;
    amp = amp + t;
  }
  BlochAmplitude far = conjugated_curl(r.E, z.zeta);
  {
    BlochAmplitude t = mH;
    for (auto& c : t.c) c *= I;
    t.q *= I;
    far = far - t;
  }
  r.ampere_residual = values_norm(amp) / values_norm(gE);
  r.faraday_residual = values_norm(far) / values_norm(mH);
  return r;
}

DiracSolution derive_dirac_solution(const CgoSolution& zhat, const MediumOperators& ops,
                                    const Polarization& pol) {
  if (zhat.kind != PotentialKind::Qhat)
    throw std::invalid_argument("derive_dirac_solution: needs a Q-hat solution");
  DiracSolution r;
  r.Y = conjugated_P(zhat.amp, zhat.zeta) - apply_first_order(ops, FirstOrder::Wbar, zhat.amp);
  const BlochAmplitude res =
      conjugated_P(r.Y, zhat.zeta) + apply_first_order(ops, FirstOrder::Wstar, r.Y);
  r.residual = values_norm(res) / values_norm(r.Y);
  const Vec8 M = build_M(zhat.zeta, pol);
  Eigen::Map<const Vec8> c(r.Y.c.data());
  r.leading_gap = (c - M).norm() / M.norm();
  return r;
}

// ------------------------------------------------ auxiliary-system identity

BlochAmplitude build_z_aux(const CgoSolution& z, const MaxwellSolution& mx,
                           const MediumOperators& ops) {
  const Medium& m = ops.medium();
  const double w = m.bg.omega;
  // mu^{-1/2} E / w = mu^{-1/2} gamma^{-1/2} Y_v2 / w
  const Field s = pointwise_scalar(m.grid, [&](std::size_t i) {
    return 1.0 / (std::sqrt(m.mu.at(0, i)) * std::sqrt(m.gamma.at(0, i)) * w);
  });
  const cplx s_bg = 1.0 / (std::sqrt(cplx(m.bg.mu0)) * std::sqrt(cplx(m.bg.eps0)) * w);
  const BlochAmplitude add = map_pointwise(
      mx.Y, Rank::spinor8,
      [&](std::size_t idx, const cplx* in, cplx* out) {
        for (int k = 0; k < 5; ++k) out[k] = 0.0;
        for (int k = 5; k < 8; ++k) out[k] = s.at(0, idx) * in[k];
      },
      [&](const cplx* in, cplx* out) {
        for (int k = 0; k < 5; ++k) out[k] = 0.0;
        for (int k = 5; k < 8; ++k) out[k] = s_bg * in[k];
      });
  return z.amp + add;
}

AuxIdentityReport verify_aux_identity(const CgoSolution& z, const MaxwellSolution& mx,
                                      const MediumOperators& ops,
                                      double max_scalar_slots) {
  if (mx.scalar_slots > max_scalar_slots)
    throw std::invalid_argument("verify_aux_identity: Y is not of Maxwell form");
  const Medium& m = ops.medium();
  const GridSpec& g = m.grid;
  const double w = m.bg.omega;

  const BlochAmplitude zaux = build_z_aux(z, mx, ops);
  const BlochAmplitude lhs =
      conjugated_P(zaux, z.zeta) - apply_first_order(ops, FirstOrder::Wt, zaux);

  // Printed right-hand side, first slot
  // (-i/w)(-2 grad mu^{-1/2} + mu^{-1/2} grad alpha) . E, with grad = i D.
  const Field mu_m12 =
      pointwise_scalar(g, [&](std::size_t i) { return 1.0 / std::sqrt(m.mu.at(0, i)); });
  const Field grad_mu = [&] {
    Field d = spectral_derivative(mu_m12, Deriv::gradient);
    d *= I;
    return d;
  }();
  const Field grad_alpha = [&] {
    Field d = ops.logs().Dalpha;
    d *= I;
    return d;
  }();
  const Field& kappa = ops.logs().kappa;

  AuxIdentityReport rep;
  const BlochAmplitude rhs = map_pointwise(
      mx.E, Rank::spinor8,
      [&](std::size_t idx, const cplx* e, cplx* out) {
        cplx s = 0.0;
        for (int k = 0; k < 3; ++k)
          s += (-2.0 * grad_mu.at(k, idx) + mu_m12.at(0, idx) * grad_alpha.at(k, idx)) * e[k];
        out[0] = (-I / w) * s;
        for (int k = 1; k < 5; ++k) out[k] = 0.0;
        const cplx slot = std::sqrt(m.gamma.at(0, idx)) - kappa.at(0, idx) * mu_m12.at(0, idx) / w;
        for (int k = 0; k < 3; ++k) out[5 + k] = slot * e[k];
      },
      [&](const cplx* e, cplx* out) {
        for (int k = 0; k < 5; ++k) out[k] = 0.0;
        const cplx slot = std::sqrt(cplx(m.bg.eps0)) - m.bg.k0() / (std::sqrt(cplx(m.bg.mu0)) * w);
        for (int k = 0; k < 3; ++k) out[5 + k] = slot * e[k];
      });

  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    const cplx slot = std::sqrt(m.gamma.at(0, idx)) - kappa.at(0, idx) * mu_m12.at(0, idx) / w;
    rep.fourth_slot_max = std::max(rep.fourth_slot_max, std::abs(slot));
  }

  const Field lv = lhs.values();
  const Field rv = rhs.values();
  Field corrected = rv;
  for (std::size_t i = 0; i < g.points(); ++i) corrected.at(0, i) = -rv.at(0, i);
  const double rn = l2_norm(rv);
  rep.first_slot_scale = l2_norm(rv.component(0));
  rep.residual_printed = l2_norm(lv - rv) / rn;
  rep.residual_corrected = l2_norm(lv - corrected) / l2_norm(corrected);
  double mid = 0.0;
  for (std::size_t i = 0; i < g.points(); ++i)
    for (int k = 1; k < 5; ++k) mid += std::norm(lv.at(k, i));
  rep.other_slots = std::sqrt(mid * g.cell_volume()) / rn;
  return rep;
}

double measure_stability_ratio(const CgoSolution& z, const MaxwellSolution& mx,
                               const DomainMask& mask) {
  const GridSpec& g = mask.grid;
  const Vec3 im(z.zeta[0].imag(), z.zeta[1].imag(), z.zeta[2].imag());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t idx = 0; idx < g.points(); ++idx)
    if (mask.inside(idx)) top = std::max(top, -2.0 * im.dot(g.position(idx)));
  const Field zv = z.amp.values();
  const Field ev = mx.E.values();
  double sz = 0.0, se = 0.0;
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    if (!mask.inside(idx)) continue;
    const double wgt = mask.weight[idx] * std::exp(-2.0 * im.dot(g.position(idx)) - top);
    for (int k = 0; k < 8; ++k) sz += wgt * std::norm(zv.at(k, idx));
    for (int k = 0; k < 3; ++k) se += wgt * std::norm(ev.at(k, idx));
  }
  if (!(se > 0.0)) throw std::invalid_argument("measure_stability_ratio: E vanishes");
  return std::sqrt(sz / se);
}

}  // namespace cgo
