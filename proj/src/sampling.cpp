#include "deepddm/sampling.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "deepddm/csv.hpp"
#include "deepddm/rng.hpp"

namespace deepddm {

namespace {

// (k + 0.5) * 2^-53 lies in the open interval (0, 1).
double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

std::vector<double> stratified_axis(std::size_t n, double lo, double hi, Rng& rng) {
  std::vector<std::size_t> strata(n);
  std::iota(strata.begin(), strata.end(), std::size_t{0});
  shuffle_in_place(strata, rng);
  std::vector<double> out(n);
  const double h = (hi - lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = lo + (static_cast<double>(strata[i]) + uniform_open01(rng)) * h;
    // Guard the open interval against rounding at the ends.
    if (v <= lo) v = std::nextafter(lo, hi);
    if (v >= hi) v = std::nextafter(hi, lo);
    out[i] = v;
  }
  return out;
}

}  // namespace

std::string_view edge_name(Edge e) {
  switch (e) {
    case Edge::left: return "left";
    case Edge::right: return "right";
    case Edge::bottom: return "bottom";
    case Edge::top: return "top";
  }
  return "?";
}

Segment edge_segment(const Rect& r, Edge e) {
  switch (e) {
    case Edge::left: return {{r.x0, r.y0}, {r.x0, r.y1}};
    case Edge::right: return {{r.x1, r.y0}, {r.x1, r.y1}};
    case Edge::bottom: return {{r.x0, r.y0}, {r.x1, r.y0}};
    case Edge::top: return {{r.x0, r.y1}, {r.x1, r.y1}};
  }
  throw std::invalid_argument("edge_segment: bad edge");
}

Points latin_hypercube(std::size_t n, const Rect& bounds, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("latin_hypercube: n must be >= 1");
  if (bounds.degenerate()) throw std::invalid_argument("latin_hypercube: degenerate rectangle");
  Rng rng(seed);
  const auto xs = stratified_axis(n, bounds.x0, bounds.x1, rng);
  const auto ys = stratified_axis(n, bounds.y0, bounds.y1, rng);
  Points pts(2);
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back(Vec2{xs[i], ys[i]});
  return pts;
}

Points segment_lhs(std::size_t n, const Segment& segment, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("segment_lhs: n must be >= 1");
  if (!(segment.length() > 0.0) || (segment.a.x != segment.b.x && segment.a.y != segment.b.y))
    throw std::invalid_argument("segment_lhs: segment must be axis-aligned and non-degenerate");
  Rng rng(seed);
  Points pts(2);
  pts.reserve(n);
  if (segment.vertical()) {
    for (double y : stratified_axis(n, segment.a.y, segment.b.y, rng)) pts.push_back(Vec2{segment.a.x, y});
  } else {
    for (double x : stratified_axis(n, segment.a.x, segment.b.x, rng)) pts.push_back(Vec2{x, segment.a.y});
  }
  return pts;
}

GridShape test_grid_shape(const Rect& bounds, std::size_t n_total) {
  if (n_total < 4) throw std::invalid_argument("test_grid: n_total must be >= 4");
  if (bounds.degenerate()) throw std::invalid_argument("test_grid: degenerate rectangle");
  const double aspect = bounds.width() / bounds.height();
  auto rows = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_total) / aspect)));
  rows = std::clamp<std::size_t>(rows, 2, n_total / 2);
  const std::size_t cols = std::max<std::size_t>(2, n_total / rows);
  return {rows, cols};
}

Points test_grid(const Rect& bounds, std::size_t n_total) {
  const auto [rows, cols] = test_grid_shape(bounds, n_total);
  Points pts(2);
  pts.reserve(rows * cols);
  const double hx = bounds.width() / static_cast<double>(cols - 1);
  const double hy = bounds.height() / static_cast<double>(rows - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = r + 1 == rows ? bounds.y1 : bounds.y0 + static_cast<double>(r) * hy;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = c + 1 == cols ? bounds.x1 : bounds.x0 + static_cast<double>(c) * hx;
      pts.push_back(Vec2{x, y});
    }
  }
  return pts;
}

void write_points_csv(const std::filesystem::path& path,
                      std::span<const std::pair<const Points*, std::string>> groups) {
  CsvWriter csv(path, {"x", "y", "tag"});
  for (const auto& [pts, tag] : groups) {
    for (std::size_t i = 0; i < pts->size(); ++i) {
      const auto p = pts->at2(i);
      csv.row(p.x, p.y, tag);
    }
  }
}

}  // namespace deepddm
