#pragma once

#include <array>
#include <string_view>

#include "deepddm/points.hpp"

namespace deepddm {

enum class Edge { left = 0, right = 1, bottom = 2, top = 3 };

inline constexpr std::array<Edge, 4> kAllEdges{Edge::left, Edge::right, Edge::bottom, Edge::top};

std::string_view edge_name(Edge e);

/// Axis-aligned rectangle [x0,x1] x [y0,y1]. For space-time problems y is t.
struct Rect {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool degenerate() const { return !(x1 > x0) || !(y1 > y0); }
  bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  bool contains_open(Vec2 p) const { return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; }
};

/// Axis-aligned segment from `a` to `b`; exactly one coordinate varies.
struct Segment {
  Vec2 a;
  Vec2 b;

  bool vertical() const { return a.x == b.x; }
  double length() const { return vertical() ? b.y - a.y : b.x - a.x; }
};

Segment edge_segment(const Rect& r, Edge e);

}  // namespace deepddm
