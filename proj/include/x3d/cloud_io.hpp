#pragma once

#include "x3d/core_geometry.hpp"

#include <filesystem>
#include <iosfwd>

namespace x3d::io {

/// ASCII PLY: vertex x/y/z plus any further scalar vertex properties, which
/// become feature columns in declaration order. Other elements are skipped.
PointCloud read_ply(const std::filesystem::path& path);
PointCloud parse_ply(std::istream& in);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);

// X3PC little-endian binary layout:
//   char[4] "X3PC" | u32 N | u32 C | f64 coords[N*3] | f64 features[N*C] | i32 labels[N] (optional)
// Labels are present iff the 4*N trailing bytes exist.
PointCloud read_x3pc(const std::filesystem::path& path);
PointCloud decode_x3pc(std::istream& in);
void write_x3pc(const std::filesystem::path& path, const PointCloud& cloud);
void encode_x3pc(std::ostream& out, const PointCloud& cloud);

}  // namespace x3d::io
