#pragma once

#include "cgo/grid.hpp"

#include <string>

namespace cgo {

// Snapshot layout (little endian): "CGOF", u32 version, u8 rank tag
// (component count), u32 n, f64 box_length, 3 x f64 origin, then
// (re, im) f64 pairs. Samples are x-fastest within each component and
// components follow one another.
inline constexpr std::uint32_t kSnapshotVersion = 1;

void write_snapshot(const std::string& path, const Field& f);
Field read_snapshot(const std::string& path);

}  // namespace cgo
