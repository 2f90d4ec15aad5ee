#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <new>
#include <vector>

namespace cgo {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using Vec8 = Eigen::Matrix<cplx, 8, 1>;
using Mat8 = Eigen::Matrix<cplx, 8, 8>;

// Periodic sampling lattice. Point (i,j,k) sits at origin + h*(i,j,k) and
// the flat index is x-fastest: i + n*(j + n*k).
struct GridSpec {
  int n = 0;
  double box_length = 0.0;
  Vec3 origin = Vec3::Zero();

  // Box [-L/2, L/2)^3, the layout used for every whole-space problem.
  static GridSpec centered(int n, double box_length);

  void validate() const;
  double h() const { return box_length / n; }
  std::size_t points() const {
    return static_cast<std::size_t>(n) * n * n;
  }
  double cell_volume() const { return h() * h() * h(); }
  double volume() const { return box_length * box_length * box_length; }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(n) * k);
  }
  Vec3 position(std::size_t idx) const;
  // Signed mode number of FFT bin m: 0..n/2-1, then -n/2..-1.
  int mode(int m) const { return m < n / 2 ? m : m - n; }
  double wavenumber(int m) const;
  // Derivative wavenumber: the Nyquist bin is zeroed so that real fields
  // stay real and the discrete P squares to minus the discrete Laplacian.
  double deriv_wavenumber(int m) const;
  Vec3 deriv_k(std::size_t idx) const;

  bool operator==(const GridSpec& o) const;
  bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

enum class Rank : std::uint8_t {
  scalar = 1,
  vector3 = 3,
  spinor8 = 8,
  matrix8x8 = 64
};

inline int rank_dim(Rank r) { return static_cast<int>(r); }
const char* rank_name(Rank r);

template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t count) {
    std::size_t bytes = count * sizeof(T);
    bytes = (bytes + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes == 0 ? alignment : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
  template <class U>
  bool operator!=(const AlignedAllocator<U>&) const { return false; }
};

using Samples = std::vector<cplx, AlignedAllocator<cplx>>;

// Complex samples of rank dim() per lattice point, stored component-major:
// component c occupies [c*points, (c+1)*points). Matrix fields use
// component r*8 + c for entry (r, c).
class Field {
 public:
  Field() = default;
  Field(const GridSpec& grid, Rank rank, cplx fill = cplx(0.0));

  const GridSpec& grid() const { return grid_; }
  Rank rank() const { return rank_; }
  int dim() const { return rank_dim(rank_); }
  std::size_t points() const { return grid_.points(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  cplx* comp(int c) { return data_.data() + c * points(); }
  const cplx* comp(int c) const { return data_.data() + c * points(); }
  cplx& at(int c, std::size_t idx) { return data_[c * points() + idx]; }
  const cplx& at(int c, std::size_t idx) const {
    return data_[c * points() + idx];
  }
  Samples& values() { return data_; }
  const Samples& values() const { return data_; }

  bool all_finite() const;
  // Throws with a diagnostic naming the first bad sample.
  void require_finite(const char* what) const;
  void require_compatible(const Field& o, const char* what) const;

  Field& operator+=(const Field& o);
  Field& operator-=(const Field& o);
  Field& operator*=(cplx s);

  // Single component c as a scalar field.
  Field component(int c) const;
  void set_component(int c, const Field& scalar);

 private:
  GridSpec grid_;
  Rank rank_ = Rank::scalar;
  Samples data_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(cplx s, Field a);

// Sample f(x) on every lattice point; f writes dim(rank) values.
Field sample(const GridSpec& grid, Rank rank,
             const std::function<void(const Vec3&, cplx*)>& f);
Field sample_scalar(const GridSpec& grid,
                    const std::function<cplx(const Vec3&)>& f);

// Pointwise product of a scalar field with a field of any rank.
Field multiply(const Field& scalar, const Field& u);
double max_abs(const Field& u);

// Unnormalized forward transform, inverse carries 1/n^3. Componentwise.
Field dft_forward(const Field& f);
Field dft_inverse(const Field& F);
void dft_forward_inplace(Field& f);
void dft_inverse_inplace(Field& F);

enum class Deriv { gradient, divergence, curl, laplacian, directional };

// D = (1/i) grad. gradient: scalar -> vector3 (D f); divergence:
// vector3 -> scalar (D.v); curl: vector3 -> vector3 (D x v);
// laplacian: any rank, componentwise; directional: scalar -> scalar
// (zeta . D f).
Field spectral_derivative(const Field& f, Deriv which,
                          const CVec3& zeta = CVec3::Zero());

// Keep only modes with |mode| < n/3 on every axis.
Field dealias(const Field& f);
void dealias_inplace(Field& f);

// Weight per lattice point in [0, 1] approximating a characteristic
// function.
struct DomainMask {
  GridSpec grid;
  std::vector<double> weight;

  static DomainMask full(const GridSpec& grid);
  // Closed ball; rejects balls closer than two cells to the box faces.
  static DomainMask ball(const GridSpec& grid, const Vec3& center,
                         double radius);
  double support_volume() const;
  bool inside(std::size_t idx) const { return weight[idx] > 0.0; }
  void validate_margin(int cells = 2) const;
};

// (U|V) = sum mask * V^* U * h^3, linear in U and conjugate linear in V.
cplx inner_product(const Field& u, const Field& v, const DomainMask& mask);
cplx inner_product(const Field& u, const Field& v);
double l2_norm(const Field& u, const DomainMask& mask);
double l2_norm(const Field& u);

}  // namespace cgo
