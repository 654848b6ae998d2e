#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deepddm/nn.hpp"
#include "deepddm/shapes.hpp"

namespace deepddm {

/**
 * @brief L(u) = f in the domain, B(u) = g on the constrained edges, D(u) on interfaces.
 *
 * All three operators are linear in the network jet. Space-time problems use
 * y as t; their final-time edge carries no condition.
 */
struct PdeProblem {
  std::string name;
  Rect domain;
  JetOperator residual_op;
  std::function<double(Vec2)> source;
  JetOperator boundary_op;
  std::function<double(Vec2, Edge)> boundary_data;
  std::array<bool, 4> constrained_edges{true, true, true, true};
  JetOperator transmission_op;
  std::function<double(Vec2)> analytic;  ///< empty when no closed form exists
  double diffusivity = 0.0;              ///< heat problems only

  double residual(const EvalJet& jet, Vec2 x) const { return residual_op.apply(jet) - source(x); }
  double boundary_residual(const EvalJet& jet, Vec2 x, Edge e) const {
    return boundary_op.apply(jet) - boundary_data(x, e);
  }
  double transmission(const EvalJet& jet) const { return transmission_op.apply(jet); }
  bool constrains(Edge e) const { return constrained_edges[static_cast<std::size_t>(e)]; }
  bool has_analytic() const { return static_cast<bool>(analytic); }
};

enum class PoissonVariant { sin2x, sin2pix };

/// -Laplace(u) = f with Dirichlet data from the manufactured solution:
/// sin2x:   u = sin(2x) e^y    on [0,pi] x [0,1]
/// sin2pix: u = sin(2 pi x) e^y on [0,pi] x [0,1.6]
PdeProblem poisson_problem(PoissonVariant variant);

struct Gaussian {
  double center = 5.0;
  double width = 1.0;
  double amplitude = 1.0;

  double operator()(double x) const;
};

/// dT/dt = alpha d2T/dx2 on [0,10] x [0,0.3], T = 0 on x = 0 and x = 10,
/// T(x, 0) = gaussian(x).
PdeProblem heat_problem(Gaussian gaussian = {}, double alpha = 4.0);

PdeProblem problem_from_name(const std::string& name, Gaussian gaussian = {});

/// Crank-Nicolson reference: nx spatial nodes, nt steps, values[k * nx + i] at (x_i, t_k).
struct FdSolution {
  std::size_t nx = 0;
  std::size_t nt = 0;
  Rect domain;
  double dx = 0.0;
  double dt = 0.0;
  double alpha = 0.0;
  std::vector<double> values;

  double at(std::size_t time_level, std::size_t node) const { return values[time_level * nx + node]; }
  double x(std::size_t node) const;
  double t(std::size_t level) const;
  /// Bilinear interpolation; clamps to the grid.
  double interpolate(double x, double t) const;
  void write_csv(const std::filesystem::path& path) const;
};

FdSolution fd_heat_solve(const PdeProblem& problem, std::size_t nx, std::size_t nt);

/// (sum |truth - pred|^2 / sum |truth|^2)^(1/2). Throws on length mismatch or zero truth.
double relative_l2(std::span<const double> pred, std::span<const double> truth);

}  // namespace deepddm
