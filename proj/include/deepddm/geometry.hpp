#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "deepddm/nn.hpp"
#include "deepddm/points.hpp"
#include "deepddm/shapes.hpp"

namespace deepddm {

struct Subdomain {
  std::size_t id = 0;
  std::size_t ix = 0;  ///< column index along x
  std::size_t iy = 0;  ///< row index along y
  Rect bounds;
  std::vector<std::size_t> neighbor_ids;  ///< every subdomain whose rectangle overlaps this one
  std::vector<Edge> physical_edges;       ///< edges on the global boundary
  std::vector<Edge> interface_edges;      ///< artificial edges strictly inside the domain
};

/// One artificial edge of its owner subdomain.
struct Interface {
  std::size_t owner_id = 0;
  Edge side = Edge::left;
  Segment segment;
  std::vector<std::size_t> donor_ids;  ///< neighbors touching some part of the segment
};

/**
 * @brief Uniform n x m overlapping rectangular decomposition.
 *
 * Core cells split the domain uniformly; subdomain (i, j) is its core cell
 * grown by delta/2 on every side and clipped to the domain, so neighbors
 * overlap by delta. Subdomain ids are row-major: id = iy * n + ix.
 */
class Decomposition {
 public:
  static Decomposition build(const Rect& bounds, std::size_t n, std::size_t m, double delta);

  const Rect& bounds() const { return bounds_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  double overlap() const { return delta_; }
  std::size_t size() const { return subdomains_.size(); }
  const std::vector<Subdomain>& subdomains() const { return subdomains_; }
  const Subdomain& subdomain(std::size_t id) const { return subdomains_.at(id); }
  const std::vector<Interface>& interfaces() const { return interfaces_; }

  /// Unnormalized ramp weight of subdomain s at x: product of linear ramps of
  /// width delta off each artificial edge, zero outside the closed rectangle.
  double ramp_weight(std::size_t s, Vec2 x) const;

  /// (chi_1(x), ..., chi_S(x)); throws std::out_of_range for x outside the domain.
  std::vector<double> partition_of_unity(Vec2 x) const;

  /// Donors for one interface point: neighbors containing it in their open
  /// interior, or in their closure when no interior contains it.
  std::vector<std::size_t> donors_at(std::size_t owner, Vec2 p) const;

  /// sum_s chi_s(x) h_s(x); nets[s] is only evaluated where chi_s(x) > 0.
  double composite_eval(std::span<const Mlp> nets, Vec2 x) const;

  nlohmann::json to_json() const;

 private:
  Rect bounds_;
  std::size_t nx_ = 1, ny_ = 1;
  double delta_ = 0.0;
  std::vector<Subdomain> subdomains_;
  std::vector<Interface> interfaces_;
};

/// Partition-of-unity weights at a fixed point set, precomputed so the
/// composite solution can be evaluated repeatedly with batched network calls.
class CompositeEvaluator {
 public:
  CompositeEvaluator(const Decomposition& dec, const Points& points);

  std::vector<double> evaluate(std::span<const Mlp> nets) const;
  std::size_t size() const { return count_; }

 private:
  struct Share {
    std::vector<std::size_t> index;  // point indices with chi_s > 0
    std::vector<double> weight;
    Points points{2};
  };
  std::size_t count_ = 0;
  std::vector<Share> shares_;
};

}  // namespace deepddm
