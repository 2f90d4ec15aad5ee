#include "cgo/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cgo {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed endian platforms are not supported");

template <class T>
void put(std::ofstream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(b[i], b[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T)))
    throw std::runtime_error("snapshot: truncated file");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
      std::swap(b[i], b[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

Rank rank_from_tag(std::uint8_t tag) {
  switch (tag) {
    case 1: return Rank::scalar;
    case 3: return Rank::vector3;
    case 8: return Rank::spinor8;
    case 64: return Rank::matrix8x8;
  }
  throw std::runtime_error("snapshot: unknown rank tag " + std::to_string(tag));
}

}  // namespace

void write_snapshot(const std::string& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("snapshot: cannot open " + path);
  os.write("CGOF", 4);
  put<std::uint32_t>(os, kSnapshotVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(f.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid().n));
  put<double>(os, f.grid().box_length);
  for (int a = 0; a < 3; ++a) put<double>(os, f.grid().origin[a]);
  for (const cplx& v : f.values()) {
    put<double>(os, v.real());
    put<double>(os, v.imag());
  }
  if (!os) throw std::runtime_error("snapshot: write failed for " + path);
}

Field read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("snapshot: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CGOF", 4) != 0)
    throw std::runtime_error("snapshot: bad magic in " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kSnapshotVersion)
    throw std::runtime_error("snapshot: unsupported version");
  const Rank rank = rank_from_tag(get<std::uint8_t>(is));
  GridSpec g;
  g.n = static_cast<int>(get<std::uint32_t>(is));
  g.box_length = get<double>(is);
  for (int a = 0; a < 3; ++a) g.origin[a] = get<double>(is);
  Field f(g, rank);
  for (cplx& v : f.values()) {
    const double re = get<double>(is);
    const double im = get<double>(is);
    v = cplx(re, im);
  }
  return f;
}

}  // namespace cgo
