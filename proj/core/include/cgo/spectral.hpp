#pragma once

#include "cgo/grid.hpp"
#include "cgo/parallel.hpp"

#include <array>

namespace cgo {

// Applies a per-mode linear map in Fourier space. f(k, u_hat, out_hat) is
// called at every mode with k the derivative wavenumber, u_hat holding
// dim(in) values and out_hat receiving dim(out_rank) values.
template <class F>
Field spectral_map(const Field& in, Rank out_rank, F&& f) {
  const GridSpec& g = in.grid();
  Field spec = dft_forward(in);
  Field out(g, out_rank);
  const int n = g.n;
  const int din = in.dim();
  const int dout = out.dim();
  std::vector<double> kd(n);
  for (int m = 0; m < n; ++m) kd[m] = g.deriv_wavenumber(m);
  const std::size_t np = g.points();
  const std::size_t slab = static_cast<std::size_t>(n) * n;
  parallel_for(np, slab, [&](std::size_t b, std::size_t e) {
    std::array<cplx, 64> u{};
    std::array<cplx, 64> v{};
    for (std::size_t idx = b; idx < e; ++idx) {
      const int i = static_cast<int>(idx % n);
      const int j = static_cast<int>((idx / n) % n);
      const int k = static_cast<int>(idx / slab);
      const Vec3 kv(kd[i], kd[j], kd[k]);
      for (int c = 0; c < din; ++c) u[c] = spec.at(c, idx);
      f(kv, u.data(), v.data());
      for (int c = 0; c < dout; ++c) out.at(c, idx) = v[c];
    }
  });
  dft_inverse_inplace(out);
  return out;
}

}  // namespace cgo
