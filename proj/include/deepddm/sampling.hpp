#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deepddm/points.hpp"
#include "deepddm/shapes.hpp"

namespace deepddm {

/// n points in the open rectangle, one per stratum per axis.
Points latin_hypercube(std::size_t n, const Rect& bounds, std::uint64_t seed);

/// Stratified points on the open segment; the fixed coordinate is copied exactly.
Points segment_lhs(std::size_t n, const Segment& segment, std::uint64_t seed);

struct GridShape {
  std::size_t rows = 0;  ///< along y
  std::size_t cols = 0;  ///< along x
};

/// rows = round(sqrt(n_total / aspect)), cols = floor(n_total / rows), each >= 2,
/// where aspect = width / height.
GridShape test_grid_shape(const Rect& bounds, std::size_t n_total);

/// Regular rows x cols grid over the closed rectangle, row-major in y then x.
Points test_grid(const Rect& bounds, std::size_t n_total);

/// Writes "x,y,tag" rows for plotting overlays.
void write_points_csv(const std::filesystem::path& path,
                      std::span<const std::pair<const Points*, std::string>> groups);

}  // namespace deepddm
