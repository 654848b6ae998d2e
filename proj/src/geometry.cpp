#include "deepddm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace deepddm {

namespace {

double ramp(double distance, double width) { return std::clamp(distance / width, 0.0, 1.0); }

bool rects_overlap(const Rect& a, const Rect& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

// Uniform partition line i of [lo, hi] into n cells; the last line is hi exactly.
double split_line(double lo, double hi, std::size_t n, std::size_t i) {
  if (i == n) return hi;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
}

nlohmann::json rect_json(const Rect& r) { return {r.x0, r.x1, r.y0, r.y1}; }

}  // namespace

Decomposition Decomposition::build(const Rect& bounds, std::size_t n, std::size_t m, double delta) {
  if (n == 0 || m == 0) throw std::invalid_argument("build_decomposition: subdomain counts must be >= 1");
  if (bounds.degenerate()) throw std::invalid_argument("build_decomposition: degenerate domain");
  const double core_x = bounds.width() / static_cast<double>(n);
  const double core_y = bounds.height() / static_cast<double>(m);
  if (n > 1 || m > 1) {
    if (!(delta > 0.0)) throw std::invalid_argument("build_decomposition: overlap must be positive");
    if ((n > 1 && delta >= core_x) || (m > 1 && delta >= core_y))
      throw std::invalid_argument("build_decomposition: overlap " + std::to_string(delta) +
                                  " not smaller than the subdomain core size");
  }

  Decomposition dec;
  dec.bounds_ = bounds;
  dec.nx_ = n;
  dec.ny_ = m;
  dec.delta_ = delta;

  for (std::size_t iy = 0; iy < m; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      Subdomain s;
      s.id = iy * n + ix;
      s.ix = ix;
      s.iy = iy;
      const double h = 0.5 * delta;
      s.bounds.x0 = ix == 0 ? bounds.x0 : split_line(bounds.x0, bounds.x1, n, ix) - h;
      s.bounds.x1 = ix + 1 == n ? bounds.x1 : split_line(bounds.x0, bounds.x1, n, ix + 1) + h;
      s.bounds.y0 = iy == 0 ? bounds.y0 : split_line(bounds.y0, bounds.y1, m, iy) - h;
      s.bounds.y1 = iy + 1 == m ? bounds.y1 : split_line(bounds.y0, bounds.y1, m, iy + 1) + h;
      (ix == 0 ? s.physical_edges : s.interface_edges).push_back(Edge::left);
      (ix + 1 == n ? s.physical_edges : s.interface_edges).push_back(Edge::right);
      (iy == 0 ? s.physical_edges : s.interface_edges).push_back(Edge::bottom);
      (iy + 1 == m ? s.physical_edges : s.interface_edges).push_back(Edge::top);
      dec.subdomains_.push_back(std::move(s));
    }
  }

  for (auto& s : dec.subdomains_)
    for (const auto& r : dec.subdomains_)
      if (r.id != s.id && rects_overlap(s.bounds, r.bounds)) s.neighbor_ids.push_back(r.id);

  for (const auto& s : dec.subdomains_) {
    for (Edge e : s.interface_edges) {
      Interface itf;
      itf.owner_id = s.id;
      itf.side = e;
      itf.segment = edge_segment(s.bounds, e);
      for (std::size_t r : s.neighbor_ids) {
        const Rect& rb = dec.subdomains_[r].bounds;
        const Segment& g = itf.segment;
        const bool touches = g.vertical()
                                 ? (g.a.x > rb.x0 && g.a.x < rb.x1 && g.a.y < rb.y1 && g.b.y > rb.y0)
                                 : (g.a.y > rb.y0 && g.a.y < rb.y1 && g.a.x < rb.x1 && g.b.x > rb.x0);
        if (touches) itf.donor_ids.push_back(r);
      }
      if (itf.donor_ids.empty())
        throw std::logic_error("build_decomposition: interface without donor");
      dec.interfaces_.push_back(std::move(itf));
    }
  }
  return dec;
}

double Decomposition::ramp_weight(std::size_t s, Vec2 x) const {
  const Subdomain& sd = subdomains_.at(s);
  const Rect& b = sd.bounds;
  if (!b.contains(x)) return 0.0;
  double w = 1.0;
  for (Edge e : sd.interface_edges) {
    switch (e) {
      case Edge::left: w *= ramp(x.x - b.x0, delta_); break;
      case Edge::right: w *= ramp(b.x1 - x.x, delta_); break;
      case Edge::bottom: w *= ramp(x.y - b.y0, delta_); break;
      case Edge::top: w *= ramp(b.y1 - x.y, delta_); break;
    }
  }
  return w;
}

std::vector<double> Decomposition::partition_of_unity(Vec2 x) const {
  if (!bounds_.contains(x)) throw std::out_of_range("partition_of_unity: point outside the domain");
  std::vector<double> w(subdomains_.size());
  double sum = 0.0;
  for (std::size_t s = 0; s < w.size(); ++s) {
    w[s] = ramp_weight(s, x);
    sum += w[s];
  }
  if (!(sum > 0.0)) throw std::logic_error("partition_of_unity: no subdomain covers the point");
  for (double& v : w) v /= sum;
  return w;
}

std::vector<std::size_t> Decomposition::donors_at(std::size_t owner, Vec2 p) const {
  std::vector<std::size_t> open, closed;
  for (std::size_t r : subdomains_.at(owner).neighbor_ids) {
    if (subdomains_[r].bounds.contains_open(p)) open.push_back(r);
    else if (subdomains_[r].bounds.contains(p)) closed.push_back(r);
  }
  if (!open.empty()) return open;
  if (!closed.empty()) return closed;
  throw std::runtime_error("interface point of subdomain " + std::to_string(owner) + " has no donor");
}

double Decomposition::composite_eval(std::span<const Mlp> nets, Vec2 x) const {
  if (nets.size() != subdomains_.size()) throw std::invalid_argument("composite_eval: one network per subdomain");
  const auto chi = partition_of_unity(x);
  const double pt[2] = {x.x, x.y};
  double u = 0.0;
  for (std::size_t s = 0; s < chi.size(); ++s)
    if (chi[s] > 0.0) u += chi[s] * nets[s].eval(pt);
  return u;
}

nlohmann::json Decomposition::to_json() const {
  nlohmann::json j;
  j["bounds"] = rect_json(bounds_);
  j["grid"] = {nx_, ny_};
  j["overlap"] = delta_;
  auto& subs = j["subdomains"] = nlohmann::json::array();
  for (const auto& s : subdomains_) {
    nlohmann::json e;
    e["id"] = s.id;
    e["bounds"] = rect_json(s.bounds);
    e["neighbors"] = s.neighbor_ids;
    for (Edge g : s.physical_edges) e["physical_edges"].push_back(edge_name(g));
    for (Edge g : s.interface_edges) e["interface_edges"].push_back(edge_name(g));
    subs.push_back(std::move(e));
  }
  auto& itfs = j["interfaces"] = nlohmann::json::array();
  for (const auto& i : interfaces_) {
    itfs.push_back({{"owner", i.owner_id},
                    {"side", edge_name(i.side)},
                    {"segment", {i.segment.a.x, i.segment.a.y, i.segment.b.x, i.segment.b.y}},
                    {"donors", i.donor_ids}});
  }
  return j;
}

CompositeEvaluator::CompositeEvaluator(const Decomposition& dec, const Points& points)
    : count_(points.size()), shares_(dec.size()) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2 x = points.at2(i);
    const auto chi = dec.partition_of_unity(x);
    for (std::size_t s = 0; s < chi.size(); ++s) {
      if (chi[s] > 0.0) {
        shares_[s].index.push_back(i);
        shares_[s].weight.push_back(chi[s]);
        shares_[s].points.push_back(x);
      }
    }
  }
}

std::vector<double> CompositeEvaluator::evaluate(std::span<const Mlp> nets) const {
  if (nets.size() != shares_.size()) throw std::invalid_argument("CompositeEvaluator: one network per subdomain");
  std::vector<double> out(count_, 0.0);
  for (std::size_t s = 0; s < shares_.size(); ++s) {
    const auto& sh = shares_[s];
    if (sh.index.empty()) continue;
    const auto h = nets[s].eval_batch(sh.points);
    for (std::size_t k = 0; k < h.size(); ++k) out[sh.index[k]] += sh.weight[k] * h[k];
  }
  return out;
}

}  // namespace deepddm
