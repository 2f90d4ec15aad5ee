#include "cgo/pipeline.hpp"

#include "cgo/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cgo {

namespace {

std::size_t slab(const GridSpec& g) { return static_cast<std::size_t>(g.n) * g.n; }

bool same_medium(const Medium& a, const Medium& b) {
  return a.mu.values() == b.mu.values() && a.gamma.values() == b.gamma.values();
}

}  // namespace

PairingContext::PairingContext(MediumPair pair)
    : pair_(std::move(pair)), ops1_(pair_.m1), ops2_(pair_.m2) {
  Q1_ = ops1_.potential(PotentialKind::Q);
  Qhat2_ = ops2_.potential(PotentialKind::Qhat);
  identical_ = same_medium(pair_.m1, pair_.m2);
  if (identical_) {
    dQ_ = Field(grid(), Rank::matrix8x8);
  } else {
    dQ_ = Q1_;
    dQ_ -= ops2_.potential(PotentialKind::Q);
  }
  const double k0sq = background().k0sq();
  const GridSpec& g = grid();
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    Mat8 m = matrix_at(Q1_, idx);
    m.diagonal().array() += k0sq;
    potential_scale_ = std::max(potential_scale_, m.norm());
  }
}

PairingSample compute_pairing(const PairingContext& ctx, const CgoDirections& d,
                              Mode mode, const CgoOptions& opt) {
  const GridSpec& g = ctx.grid();
  const Background& bg = ctx.background();
  PairingSample s;
  s.xi = d.xi;
  s.tau = d.tau;
  s.mode = mode;
  try {
    const Polarization pz = polarization_z(mode, d);
    const CgoSolution z1 = solve_cgo(d.zeta1, ctx.Q1(), PotentialKind::Q,
                                     build_L(d.zeta1, pz, bg), bg, d.eta1,
                                     g.box_length, opt);
    const Polarization py = polarization_y(mode, d);
    const CgoSolution zh2 = solve_cgo(d.zeta2, ctx.Qhat2(), PotentialKind::Qhat,
                                      build_Lhat(d.zeta2, py), bg, d.eta1,
                                      g.box_length, opt);
    s.residual_z = z1.stats.residual;
    s.residual_y = zh2.stats.residual;
    s.iterations = z1.stats.iterations + zh2.stats.iterations;

    const BlochAmplitude y2 = conjugated_P(zh2.amp, d.zeta2) -
                              apply_first_order(ctx.ops2(), FirstOrder::Wbar, zh2.amp);
    const Field zv = z1.amp.values();
    const Field yv = y2.values();
    const Field& dQ = ctx.dQ();
    const DomainMask& mask = ctx.pair().omega;
    // e^{i zeta1.x} conj(e^{i zeta2.x}) = e^{-i xi.x}
    const cplx sum = parallel_sum<cplx>(g.points(), slab(g), [&](std::size_t b,
                                                                  std::size_t e) {
      cplx acc = 0.0;
      for (std::size_t idx = b; idx < e; ++idx) {
        const double w = mask.weight[idx];
        if (w == 0.0) continue;
        cplx dot = 0.0;
        for (int r = 0; r < 8; ++r) {
          cplx row = 0.0;
          for (int c = 0; c < 8; ++c) row += dQ.at(r * 8 + c, idx) * zv.at(c, idx);
          dot += std::conj(yv.at(r, idx)) * row;
        }
        acc += w * std::exp(cplx(0.0, -d.xi.dot(g.position(idx)))) * dot;
      }
      return acc;
    });
    s.value = sum * g.cell_volume();
  } catch (const NumericalFailure& e) {
    std::ostringstream os;
    os << e.what() << " [xi = (" << d.xi[0] << ", " << d.xi[1] << ", " << d.xi[2]
       << "), tau = " << d.tau << ", mode " << mode_name(mode) << "]";
    throw NumericalFailure(os.str());
  }
  return s;
}

cplx fourier_oracle(const Field& f, const Vec3& xi) {
  if (f.rank() != Rank::scalar)
    throw std::invalid_argument("fourier_oracle: needs a scalar field");
  const GridSpec& g = f.grid();
  const cplx sum = parallel_sum<cplx>(g.points(), slab(g), [&](std::size_t b,
                                                                std::size_t e) {
    cplx acc = 0.0;
    for (std::size_t idx = b; idx < e; ++idx)
      acc += f.at(0, idx) * std::exp(cplx(0.0, -xi.dot(g.position(idx))));
    return acc;
  });
  return sum * g.cell_volume();
}

double noise_floor(const PairingContext& ctx, double tol) {
  return 10.0 * tol * ctx.potential_scale() * ctx.pair().omega.support_volume();
}

// ------------------------------------------------------------- spectrum

namespace {

// Lattice mode of xi; throws when xi is off the lattice.
std::array<int, 3> lattice_mode(const GridSpec& g, const Vec3& xi) {
  const double unit = 2.0 * std::numbers::pi / g.box_length;
  std::array<int, 3> m{};
  for (int a = 0; a < 3; ++a) {
    const double t = xi[a] / unit;
    m[a] = static_cast<int>(std::lround(t));
    if (std::abs(t - m[a]) > 1e-9)
      throw std::invalid_argument("xi is not an integer multiple of 2 pi / L");
  }
  return m;
}

bool canonical_half(const std::array<int, 3>& m) {
  for (int a = 2; a >= 0; --a) {
    if (m[a] > 0) return true;
    if (m[a] < 0) return false;
  }
  return false;
}

void run_entry(const PairingContext& ctx, SpectrumEntry& e, const SweepOptions& opt) {
  const Background& bg = ctx.background();
  cplx prev_f = 0.0, prev_g = 0.0;
  bool have_prev = false;
  for (double tau : opt.tau_schedule) {
    const CgoDirections d = build_zeta_pair(e.xi, tau, bg);
    const PairingSample sf = compute_pairing(ctx, d, Mode::f, opt.cgo);
    const PairingSample sg = compute_pairing(ctx, d, Mode::g, opt.cgo);
    e.samples.push_back(sf);
    e.samples.push_back(sg);
    if (have_prev) {
      e.extrapolation_error_f = std::abs(sf.value - prev_f);
      e.extrapolation_error_g = std::abs(sg.value - prev_g);
      e.fhat_rich = 2.0 * sf.value - prev_f;
      e.ghat_rich = 2.0 * sg.value - prev_g;
    } else {
      e.fhat_rich = sf.value;
      e.ghat_rich = sg.value;
    }
    e.fhat = sf.value;
    e.ghat = sg.value;
    e.tau_used = tau;
    prev_f = sf.value;
    prev_g = sg.value;
    have_prev = true;
  }
}

}  // namespace

SpectrumEstimate sweep_spectrum(const PairingContext& ctx, const std::vector<Vec3>& xi_grid,
                                const SweepOptions& opt) {
  if (opt.tau_schedule.empty())
    throw std::invalid_argument("sweep_spectrum: empty tau schedule");
  const GridSpec& g = ctx.grid();
  SpectrumEstimate out;
  out.entries.resize(xi_grid.size());

  std::map<std::array<int, 3>, std::size_t> where;
  for (std::size_t i = 0; i < xi_grid.size(); ++i) {
    if (!(xi_grid[i].norm() > 0.0))
      throw std::invalid_argument("sweep_spectrum: xi = 0 is not admissible");
    out.entries[i].xi = xi_grid[i];
    where[lattice_mode(g, xi_grid[i])] = i;
  }

  // With Hermitian symmetry only one of each +-xi pair is solved.
  std::vector<std::size_t> jobs;
  std::vector<std::pair<std::size_t, std::size_t>> mirrors;
  for (std::size_t i = 0; i < xi_grid.size(); ++i) {
    const auto m = lattice_mode(g, xi_grid[i]);
    if (opt.hermitian && !canonical_half(m)) {
      const auto it = where.find({-m[0], -m[1], -m[2]});
      if (it != where.end()) {
        mirrors.emplace_back(i, it->second);
        continue;
      }
    }
    jobs.push_back(i);
  }

  parallel_for(jobs.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t j = b; j < e; ++j) {
      SpectrumEntry& entry = out.entries[jobs[j]];
      try {
        run_entry(ctx, entry, opt);
      } catch (const std::exception& ex) {
        entry.ok = false;
        entry.error = ex.what();
      }
    }
  });

  for (const auto& [dst, src] : mirrors) {
    const SpectrumEntry& s = out.entries[src];
    SpectrumEntry& d = out.entries[dst];
    d.fhat = std::conj(s.fhat);
    d.ghat = std::conj(s.ghat);
    d.fhat_rich = std::conj(s.fhat_rich);
    d.ghat_rich = std::conj(s.ghat_rich);
    d.tau_used = s.tau_used;
    d.extrapolation_error_f = s.extrapolation_error_f;
    d.extrapolation_error_g = s.extrapolation_error_g;
    d.ok = s.ok;
    d.error = s.error;
    d.mirrored = true;
  }
  for (const auto& e : out.entries)
    if (!e.ok) ++out.failures;
  return out;
}

std::vector<Vec3> lattice_cube(const GridSpec& g, int K) {
  if (K < 1 || K >= g.n / 2)
    throw std::invalid_argument("lattice_cube: need 1 <= K < n/2");
  const double unit = 2.0 * std::numbers::pi / g.box_length;
  std::vector<Vec3> out;
  for (int c = -K; c <= K; ++c)
    for (int b = -K; b <= K; ++b)
      for (int a = -K; a <= K; ++a)
        if (a != 0 || b != 0 || c != 0) out.emplace_back(unit * a, unit * b, unit * c);
  return out;
}

// ------------------------------------------------------------ inversion

std::pair<cplx, cplx> linearized_forward(const Vec3& xi, double k0sq, cplx da, cplx db) {
  const double a = 0.5 * xi.squaredNorm() + k0sq;
  return {-a * da - k0sq * db, -k0sq * da - a * db};
}

namespace {

// Field from per-bin spectral values v(xi) = sum f e^{-i xi.x} h^3.
Field from_spectrum(const GridSpec& g, std::vector<cplx> bins) {
  Field F(g, Rank::scalar);
  std::copy(bins.begin(), bins.end(), F.comp(0));
  dft_inverse_inplace(F);
  return F;
}

std::size_t bin_of(const GridSpec& g, const std::array<int, 3>& m) {
  auto w = [&](int v) { return ((v % g.n) + g.n) % g.n; };
  return g.index(w(m[0]), w(m[1]), w(m[2]));
}

double outside_mass(const Field& f, const DomainMask& mask) {
  double s = 0.0;
  for (std::size_t idx = 0; idx < f.points(); ++idx)
    if (!mask.inside(idx)) s += std::norm(f.at(0, idx));
  return s * f.grid().cell_volume();
}

void fill_zero_mode(Field& f, const DomainMask& mask) {
  cplx sum = 0.0;
  std::size_t count = 0;
  for (std::size_t idx = 0; idx < f.points(); ++idx)
    if (!mask.inside(idx)) {
      sum += f.at(0, idx);
      ++count;
    }
  if (count == 0) return;
  const cplx c = sum / static_cast<double>(count);
  for (std::size_t idx = 0; idx < f.points(); ++idx) f.at(0, idx) -= c;
}

}  // namespace

RecoveryResult invert_linearized(const SpectrumEstimate& spectrum, const GridSpec& g,
                                 const Background& bg, const DomainMask& omega_prime,
                                 const RecoveryOptions& opt) {
  bg.validate();
  if (omega_prime.grid != g) throw std::invalid_argument("invert: mask grid mismatch");
  const double k0sq = bg.k0sq();
  const std::size_t np = g.points();
  std::vector<cplx> ba(np, 0.0), bb(np, 0.0);
  RecoveryResult r;
  for (const SpectrumEntry& e : spectrum.entries) {
    if (!e.ok) continue;
    const auto m = lattice_mode(g, e.xi);
    if (m[0] == 0 && m[1] == 0 && m[2] == 0) continue;
    // [-a, -k; -k, -a] [da; db] = [f; g]
    const double a = 0.5 * e.xi.squaredNorm() + k0sq;
    const double det = a * a - k0sq * k0sq;
    if (std::abs(det) < opt.det_floor) {
      ++r.modes_zeroed;
      continue;
    }
    const cplx da = (-a * e.fhat + k0sq * e.ghat) / det;
    const cplx db = (k0sq * e.fhat - a * e.ghat) / det;
    // bins carry F[m] = v e^{i xi.origin} / h^3 so that the inverse DFT
    // evaluates (1/V) sum v e^{i xi.x}.
    const cplx ph = std::exp(cplx(0.0, e.xi.dot(g.origin))) / g.cell_volume();
    const std::size_t bin = bin_of(g, m);
    ba[bin] = da * ph;
    bb[bin] = db * ph;
    ++r.modes_used;
  }
  r.delta_alpha = from_spectrum(g, std::move(ba));
  r.delta_beta = from_spectrum(g, std::move(bb));
  fill_zero_mode(r.delta_alpha, omega_prime);
  fill_zero_mode(r.delta_beta, omega_prime);
  r.zero_mode_filled = true;

  r.norm_alpha = l2_norm(r.delta_alpha, omega_prime);
  r.norm_beta = l2_norm(r.delta_beta, omega_prime);
  auto leak = [&](const Field& f) {
    const double total = l2_norm(f);
    return total > 0.0 ? outside_mass(f, omega_prime) / (total * total) : 0.0;
  };
  r.leakage_alpha = leak(r.delta_alpha);
  r.leakage_beta = leak(r.delta_beta);
  r.perturbation_floor = opt.perturbation_floor;
  r.coincide = std::max(r.norm_alpha, r.norm_beta) <= opt.perturbation_floor;
  return r;
}

void score_recovery(RecoveryResult& r, const Field& true_alpha, const Field& true_beta,
                    const DomainMask& omega_prime) {
  r.reference_alpha = true_alpha;
  r.reference_beta = true_beta;
  auto rel = [&](const Field& got, const Field& want) {
    const double err = l2_norm(got - want, omega_prime);
    const double ref = l2_norm(want, omega_prime);
    return ref > 0.0 ? err / ref : err;
  };
  r.rel_error_alpha = rel(r.delta_alpha, true_alpha);
  r.rel_error_beta = rel(r.delta_beta, true_beta);
}

SpectrumEstimate oracle_spectrum(const Field& delta_alpha, const Field& delta_beta,
                                 const Background& bg) {
  const GridSpec& g = delta_alpha.grid();
  if (delta_beta.grid() != g) throw std::invalid_argument("oracle_spectrum: grid mismatch");
  const Field A = dft_forward(delta_alpha);
  const Field B = dft_forward(delta_beta);
  const double unit = 2.0 * std::numbers::pi / g.box_length;
  SpectrumEstimate s;
  s.entries.reserve(g.points() - 1);
  for (int k = 0; k < g.n; ++k)
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i) {
        if (i == 0 && j == 0 && k == 0) continue;
        SpectrumEntry e;
        e.xi = Vec3(g.mode(i), g.mode(j), g.mode(k)) * unit;
        const std::size_t bin = g.index(i, j, k);
        const cplx ph = std::exp(cplx(0.0, -e.xi.dot(g.origin))) * g.cell_volume();
        const auto [f, gg] = linearized_forward(e.xi, bg.k0sq(), A.at(0, bin) * ph,
                                                B.at(0, bin) * ph);
        e.fhat = e.fhat_rich = f;
        e.ghat = e.ghat_rich = gg;
        s.entries.push_back(std::move(e));
      }
  return s;
}

// ------------------------------------------------------------ null test

NullTestResult null_test(const PairingContext& ctx, const std::vector<Vec3>& xi_sample,
                         double tau, const CgoOptions& opt) {
  NullTestResult r;
  r.noise_floor = noise_floor(ctx, opt.tol);
  r.samples.resize(2 * xi_sample.size());
  parallel_for(xi_sample.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const CgoDirections d = build_zeta_pair(xi_sample[i], tau, ctx.background());
      r.samples[2 * i] = compute_pairing(ctx, d, Mode::f, opt);
      r.samples[2 * i + 1] = compute_pairing(ctx, d, Mode::g, opt);
    }
  });
  for (const PairingSample& s : r.samples) {
    double& slot = s.mode == Mode::f ? r.max_f : r.max_g;
    slot = std::max(slot, std::abs(s.value));
  }
  const double top = std::max(r.max_f, r.max_g);
  r.coincide = top <= r.noise_floor;
  r.separation = r.noise_floor > 0.0 ? top / r.noise_floor
                                     : (top > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return r;
}

// ------------------------------------------------------------- Carleman

CarlemanDiagnostic carleman_functionals(const MediumPair& pair, const Vec3& x0,
                                        const std::vector<double>& h_sweep) {
  const GridSpec& g = pair.m1.grid;
  const DomainMask& omega = pair.omega;
  CarlemanDiagnostic c;
  c.x0 = x0;
  c.h_sweep = h_sweep;
  c.d1 = std::numeric_limits<double>::infinity();
  c.d2 = 0.0;
  bool any = false;
  for (std::size_t idx = 0; idx < g.points(); ++idx) {
    if (!omega.inside(idx)) continue;
    any = true;
    const double r2 = (g.position(idx) - x0).squaredNorm();
    c.d1 = std::min(c.d1, r2);
    c.d2 = std::max(c.d2, r2);
  }
  if (!any) throw std::invalid_argument("carleman: empty domain mask");
  if (c.d1 <= g.h() * g.h())
    throw std::invalid_argument("carleman: x0 must lie strictly outside the domain");
  for (double h : h_sweep)
    if (!(h > 0.0)) throw std::invalid_argument("carleman: h must be > 0");

  auto sqrt_diff = [&](const Field& a, const Field& b) {
    Field d(g, Rank::scalar);
    for (std::size_t idx = 0; idx < g.points(); ++idx)
      d.at(0, idx) = std::sqrt(a.at(0, idx)) - std::sqrt(b.at(0, idx));
    return d;
  };
  const Field phi1 = sqrt_diff(pair.m1.gamma, pair.m2.gamma);
  const Field phi2 = sqrt_diff(pair.m1.mu, pair.m2.mu);
  auto sq = [&](const Field& f) {
    const double n = l2_norm(f, omega);
    return n * n;
  };
  const double p0 = sq(phi1) + sq(phi2);
  const double p1 = sq(spectral_derivative(phi1, Deriv::gradient)) +
                    sq(spectral_derivative(phi2, Deriv::gradient));
  const auto [f, gg] = compute_fg(pair, omega);
  const double fg = sq(f) + sq(gg);

  for (double h : h_sweep) {
    const double lcore = h * p0 + h * h * h * p1;
    const double rcore = h * h * h * h * fg;
    const double ll = lcore > 0.0 ? c.d1 / h + std::log(lcore)
                                  : -std::numeric_limits<double>::infinity();
    const double lr = rcore > 0.0 ? c.d2 / h + std::log(rcore)
                                  : -std::numeric_limits<double>::infinity();
    c.log_lhs.push_back(ll);
    c.log_rhs.push_back(lr);
    c.lhs_core.push_back(lcore > 0.0 ? std::exp(ll) : 0.0);
    c.rhs_core.push_back(rcore > 0.0 ? std::exp(lr) : 0.0);
    c.ratio.push_back(lcore > 0.0 ? std::exp(lr - ll)
                                  : std::numeric_limits<double>::quiet_NaN());
  }
  return c;
}

}  // namespace cgo
