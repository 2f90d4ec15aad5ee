#include "cgo/grid.hpp"

#include "cgo/parallel.hpp"
#include "cgo/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cgo {

GridSpec GridSpec::centered(int n, double box_length) {
  GridSpec g;
  g.n = n;
  g.box_length = box_length;
  g.origin = Vec3::Constant(-0.5 * box_length);
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (n < 8) throw std::invalid_argument("grid: n must be >= 8");
  if (n % 2 != 0) throw std::invalid_argument("grid: n must be even");
  if (!(box_length > 0.0) || !std::isfinite(box_length))
    throw std::invalid_argument("grid: box_length must be positive");
  if (!origin.allFinite()) throw std::invalid_argument("grid: origin not finite");
}

Vec3 GridSpec::position(std::size_t idx) const {
  const std::size_t nn = static_cast<std::size_t>(n);
  const double hh = h();
  return origin + hh * Vec3(static_cast<double>(idx % nn),
                            static_cast<double>((idx / nn) % nn),
                            static_cast<double>(idx / (nn * nn)));
}

double GridSpec::wavenumber(int m) const {
  return 2.0 * std::numbers::pi / box_length * mode(m);
}

double GridSpec::deriv_wavenumber(int m) const {
  return m == n / 2 ? 0.0 : wavenumber(m);
}

Vec3 GridSpec::deriv_k(std::size_t idx) const {
  const std::size_t nn = static_cast<std::size_t>(n);
  return Vec3(deriv_wavenumber(static_cast<int>(idx % nn)),
              deriv_wavenumber(static_cast<int>((idx / nn) % nn)),
              deriv_wavenumber(static_cast<int>(idx / (nn * nn))));
}

bool GridSpec::operator==(const GridSpec& o) const {
  return n == o.n && box_length == o.box_length && origin == o.origin;
}

const char* rank_name(Rank r) {
  switch (r) {
    case Rank::scalar: return "scalar";
    case Rank::vector3: return "vector3";
    case Rank::spinor8: return "spinor8";
    case Rank::matrix8x8: return "matrix8x8";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Field

Field::Field(const GridSpec& grid, Rank rank, cplx fill)
    : grid_(grid), rank_(rank) {
  grid_.validate();
  data_.assign(grid_.points() * rank_dim(rank), fill);
}

bool Field::all_finite() const {
  for (const cplx& v : data_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

void Field::require_finite(const char* what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const cplx& v = data_[i];
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      std::ostringstream os;
      os << what << ": non-finite sample at component " << i / points()
         << ", lattice index " << i % points();
      throw std::domain_error(os.str());
    }
  }
}

void Field::require_compatible(const Field& o, const char* what) const {
  if (grid_ != o.grid_)
    throw std::invalid_argument(std::string(what) + ": grid mismatch");
  if (rank_ != o.rank_)
    throw std::invalid_argument(std::string(what) + ": rank mismatch (" +
                                rank_name(rank_) + " vs " +
                                rank_name(o.rank_) + ")");
}

Field& Field::operator+=(const Field& o) {
  require_compatible(o, "field +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Field& Field::operator-=(const Field& o) {
  require_compatible(o, "field -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Field& Field::operator*=(cplx s) {
  for (cplx& v : data_) v *= s;
  return *this;
}

Field Field::component(int c) const {
  if (c < 0 || c >= dim()) throw std::out_of_range("field component");
  Field s(grid_, Rank::scalar);
  std::memcpy(s.comp(0), comp(c), points() * sizeof(cplx));
  return s;
}

void Field::set_component(int c, const Field& scalar) {
  if (c < 0 || c >= dim()) throw std::out_of_range("field component");
  if (scalar.rank() != Rank::scalar || scalar.grid() != grid_)
    throw std::invalid_argument("set_component: expects scalar on same grid");
  std::memcpy(comp(c), scalar.comp(0), points() * sizeof(cplx));
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(cplx s, Field a) { return a *= s; }

Field sample(const GridSpec& grid, Rank rank,
             const std::function<void(const Vec3&, cplx*)>& f) {
  Field out(grid, rank);
  const int d = out.dim();
  const std::size_t np = grid.points();
  parallel_for(np, static_cast<std::size_t>(grid.n) * grid.n,
               [&](std::size_t b, std::size_t e) {
                 std::vector<cplx> v(d);
                 for (std::size_t idx = b; idx < e; ++idx) {
                   f(grid.position(idx), v.data());
                   for (int c = 0; c < d; ++c) out.at(c, idx) = v[c];
                 }
               });
  return out;
}

Field sample_scalar(const GridSpec& grid,
                    const std::function<cplx(const Vec3&)>& f) {
  return sample(grid, Rank::scalar,
                [&](const Vec3& x, cplx* v) { v[0] = f(x); });
}

Field multiply(const Field& scalar, const Field& u) {
  if (scalar.rank() != Rank::scalar)
    throw std::invalid_argument("multiply: first argument must be scalar");
  if (scalar.grid() != u.grid())
    throw std::invalid_argument("multiply: grid mismatch");
  Field out = u;
  const std::size_t np = u.points();
  for (int c = 0; c < u.dim(); ++c) {
    cplx* o = out.comp(c);
    const cplx* s = scalar.comp(0);
    for (std::size_t i = 0; i < np; ++i) o[i] *= s[i];
  }
  return out;
}

double max_abs(const Field& u) {
  double m = 0.0;
  for (const cplx& v : u.values()) m = std::max(m, std::abs(v));
  return m;
}

// ------------------------------------------------------------------ FFT

namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  int alignment = 0;
};

class PlanCache {
 public:
  const PlanPair& get(int n) {
    std::lock_guard<std::mutex> lk(lock_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    const std::size_t np = static_cast<std::size_t>(n) * n * n;
    fftw_complex* buf = fftw_alloc_complex(np);
    if (!buf) throw std::bad_alloc();
    PlanPair p;
    // The lattice is x-fastest, so FFTW's row-major last dimension is x.
    p.forward = fftw_plan_dft_3d(n, n, n, buf, buf, FFTW_FORWARD,
                                 FFTW_ESTIMATE);
    p.inverse = fftw_plan_dft_3d(n, n, n, buf, buf, FFTW_BACKWARD,
                                 FFTW_ESTIMATE);
    p.alignment = fftw_alignment_of(reinterpret_cast<double*>(buf));
    fftw_free(buf);
    if (!p.forward || !p.inverse)
      throw std::runtime_error("fftw: plan creation failed");
    return plans_.emplace(n, p).first->second;
  }

 private:
  std::mutex lock_;
  std::map<int, PlanPair> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void transform_component(cplx* data, int n, bool forward) {
  const PlanPair& p = plan_cache().get(n);
  fftw_plan plan = forward ? p.forward : p.inverse;
  const std::size_t np = static_cast<std::size_t>(n) * n * n;
  auto* ptr = reinterpret_cast<fftw_complex*>(data);
  if (fftw_alignment_of(reinterpret_cast<double*>(data)) == p.alignment) {
    fftw_execute_dft(plan, ptr, ptr);
  } else {
    // Same plan on an aligned copy, so the arithmetic is identical.
    fftw_complex* tmp = fftw_alloc_complex(np);
    if (!tmp) throw std::bad_alloc();
    std::memcpy(tmp, ptr, np * sizeof(fftw_complex));
    fftw_execute_dft(plan, tmp, tmp);
    std::memcpy(ptr, tmp, np * sizeof(fftw_complex));
    fftw_free(tmp);
  }
  if (!forward) {
    const double s = 1.0 / static_cast<double>(np);
    for (std::size_t i = 0; i < np; ++i) data[i] *= s;
  }
}

void transform_all(Field& f, bool forward) {
  const int n = f.grid().n;
  parallel_for(static_cast<std::size_t>(f.dim()), 1,
               [&](std::size_t b, std::size_t e) {
                 for (std::size_t c = b; c < e; ++c)
                   transform_component(f.comp(static_cast<int>(c)), n,
                                       forward);
               });
}

}  // namespace

void dft_forward_inplace(Field& f) {
  f.require_finite("dft_forward");
  transform_all(f, true);
}

void dft_inverse_inplace(Field& F) {
  F.require_finite("dft_inverse");
  transform_all(F, false);
}

Field dft_forward(const Field& f) {
  Field out = f;
  dft_forward_inplace(out);
  return out;
}

Field dft_inverse(const Field& F) {
  Field out = F;
  dft_inverse_inplace(out);
  return out;
}

// ---------------------------------------------------------- derivatives

Field spectral_derivative(const Field& f, Deriv which, const CVec3& zeta) {
  switch (which) {
    case Deriv::gradient:
      if (f.rank() != Rank::scalar)
        throw std::invalid_argument("gradient: needs a scalar field");
      return spectral_map(f, Rank::vector3,
                          [](const Vec3& k, const cplx* u, cplx* v) {
                            v[0] = k[0] * u[0];
                            v[1] = k[1] * u[0];
                            v[2] = k[2] * u[0];
                          });
    case Deriv::divergence:
      if (f.rank() != Rank::vector3)
        throw std::invalid_argument("divergence: needs a vector3 field");
      return spectral_map(f, Rank::scalar,
                          [](const Vec3& k, const cplx* u, cplx* v) {
                            v[0] = k[0] * u[0] + k[1] * u[1] + k[2] * u[2];
                          });
    case Deriv::curl:
      if (f.rank() != Rank::vector3)
        throw std::invalid_argument("curl: needs a vector3 field");
      return spectral_map(f, Rank::vector3,
                          [](const Vec3& k, const cplx* u, cplx* v) {
                            v[0] = k[1] * u[2] - k[2] * u[1];
                            v[1] = k[2] * u[0] - k[0] * u[2];
                            v[2] = k[0] * u[1] - k[1] * u[0];
                          });
    case Deriv::laplacian: {
      const int d = f.dim();
      return spectral_map(f, f.rank(),
                          [d](const Vec3& k, const cplx* u, cplx* v) {
                            const double s = -k.squaredNorm();
                            for (int c = 0; c < d; ++c) v[c] = s * u[c];
                          });
    }
    case Deriv::directional:
      if (f.rank() != Rank::scalar)
        throw std::invalid_argument("directional: needs a scalar field");
      return spectral_map(f, Rank::scalar,
                          [&zeta](const Vec3& k, const cplx* u, cplx* v) {
                            v[0] = (zeta[0] * k[0] + zeta[1] * k[1] +
                                    zeta[2] * k[2]) *
                                   u[0];
                          });
  }
  throw std::invalid_argument("spectral_derivative: unknown operator");
}

void dealias_inplace(Field& f) {
  const GridSpec& g = f.grid();
  dft_forward_inplace(f);
  const int n = g.n;
  const int cut = n / 3;
  const std::size_t np = g.points();
  for (std::size_t idx = 0; idx < np; ++idx) {
    const int i = g.mode(static_cast<int>(idx % n));
    const int j = g.mode(static_cast<int>((idx / n) % n));
    const int k = g.mode(static_cast<int>(idx / (static_cast<std::size_t>(n) * n)));
    if (std::abs(i) >= cut || std::abs(j) >= cut || std::abs(k) >= cut)
      for (int c = 0; c < f.dim(); ++c) f.at(c, idx) = 0.0;
  }
  dft_inverse_inplace(f);
}

Field dealias(const Field& f) {
  Field out = f;
  dealias_inplace(out);
  return out;
}

// ----------------------------------------------------------------- masks

DomainMask DomainMask::full(const GridSpec& grid) {
  DomainMask m;
  m.grid = grid;
  m.weight.assign(grid.points(), 1.0);
  return m;
}

DomainMask DomainMask::ball(const GridSpec& grid, const Vec3& center,
                            double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("mask: radius must be > 0");
  DomainMask m;
  m.grid = grid;
  m.weight.assign(grid.points(), 0.0);
  for (std::size_t idx = 0; idx < grid.points(); ++idx)
    if ((grid.position(idx) - center).norm() <= radius) m.weight[idx] = 1.0;
  m.validate_margin();
  return m;
}

double DomainMask::support_volume() const {
  double s = 0.0;
  for (double w : weight) s += w;
  return s * grid.cell_volume();
}

void DomainMask::validate_margin(int cells) const {
  const int n = grid.n;
  for (std::size_t idx = 0; idx < weight.size(); ++idx) {
    if (weight[idx] <= 0.0) continue;
    const int ijk[3] = {static_cast<int>(idx % n),
                        static_cast<int>((idx / n) % n),
                        static_cast<int>(idx / (static_cast<std::size_t>(n) * n))};
    for (int a = 0; a < 3; ++a)
      if (ijk[a] < cells || ijk[a] > n - 1 - cells)
        throw std::invalid_argument(
            "mask: support must keep a margin of two cells from the box faces");
  }
}

// -------------------------------------------------------- inner products

cplx inner_product(const Field& u, const Field& v, const DomainMask& mask) {
  u.require_compatible(v, "inner_product");
  if (mask.grid != u.grid())
    throw std::invalid_argument("inner_product: mask grid mismatch");
  const GridSpec& g = u.grid();
  const int d = u.dim();
  const cplx s = parallel_sum<cplx>(
      g.points(), static_cast<std::size_t>(g.n) * g.n,
      [&](std::size_t b, std::size_t e) {
        cplx acc = 0.0;
        for (std::size_t idx = b; idx < e; ++idx) {
          const double w = mask.weight[idx];
          if (w == 0.0) continue;
          cplx p = 0.0;
          for (int c = 0; c < d; ++c) p += std::conj(v.at(c, idx)) * u.at(c, idx);
          acc += w * p;
        }
        return acc;
      });
  return s * g.cell_volume();
}

cplx inner_product(const Field& u, const Field& v) {
  return inner_product(u, v, DomainMask::full(u.grid()));
}

double l2_norm(const Field& u, const DomainMask& mask) {
  if (mask.grid != u.grid())
    throw std::invalid_argument("l2_norm: mask grid mismatch");
  const GridSpec& g = u.grid();
  const int d = u.dim();
  const double s = parallel_sum<double>(
      g.points(), static_cast<std::size_t>(g.n) * g.n,
      [&](std::size_t b, std::size_t e) {
        double acc = 0.0;
        for (std::size_t idx = b; idx < e; ++idx) {
          const double w = mask.weight[idx];
          if (w == 0.0) continue;
          double p = 0.0;
          for (int c = 0; c < d; ++c) p += std::norm(u.at(c, idx));
          acc += w * p;
        }
        return acc;
      });
  return std::sqrt(s * g.cell_volume());
}

double l2_norm(const Field& u) {
  return l2_norm(u, DomainMask::full(u.grid()));
}

}  // namespace cgo
