#include "deepddm/problems.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "deepddm/csv.hpp"

namespace deepddm {

namespace {

JetOperator negative_laplacian() {
  JetOperator op;
  op.grad_coef = {0.0, 0.0};
  op.hess_coef = {-1.0, -1.0};
  return op;
}

}  // namespace

PdeProblem poisson_problem(PoissonVariant variant) {
  PdeProblem p;
  const double k = variant == PoissonVariant::sin2x ? 2.0 : 2.0 * std::numbers::pi;
  p.name = variant == PoissonVariant::sin2x ? "poisson_sin2x" : "poisson_sin2pix";
  p.domain = variant == PoissonVariant::sin2x ? Rect{0.0, std::numbers::pi, 0.0, 1.0}
                                              : Rect{0.0, std::numbers::pi, 0.0, 1.6};
  auto exact = [k](Vec2 x) { return std::sin(k * x.x) * std::exp(x.y); };
  // -Laplace(sin(kx) e^y) = (k^2 - 1) sin(kx) e^y
  p.residual_op = negative_laplacian();
  p.source = [k, exact](Vec2 x) { return (k * k - 1.0) * exact(x); };
  p.boundary_op = JetOperator::identity(2);
  p.boundary_data = [exact](Vec2 x, Edge) { return exact(x); };
  p.transmission_op = JetOperator::identity(2);
  p.analytic = exact;
  return p;
}

double Gaussian::operator()(double x) const {
  const double z = (x - center) / width;
  return amplitude * std::exp(-0.5 * z * z);
}

PdeProblem heat_problem(Gaussian gaussian, double alpha) {
  if (!(gaussian.width > 0.0)) throw std::invalid_argument("heat_problem: gaussian width must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("heat_problem: diffusivity must be positive");
  PdeProblem p;
  p.name = "heat";
  p.domain = Rect{0.0, 10.0, 0.0, 0.3};
  p.residual_op.value_coef = 0.0;
  p.residual_op.grad_coef = {0.0, 1.0};
  p.residual_op.hess_coef = {-alpha, 0.0};
  p.source = [](Vec2) { return 0.0; };
  p.boundary_op = JetOperator::identity(2);
  p.boundary_data = [gaussian](Vec2 x, Edge e) { return e == Edge::bottom ? gaussian(x.x) : 0.0; };
  p.constrained_edges = {true, true, true, false};
  p.transmission_op = JetOperator::identity(2);
  p.diffusivity = alpha;
  return p;
}

PdeProblem problem_from_name(const std::string& name, Gaussian gaussian) {
  if (name == "poisson_sin2x" || name == "sin2x") return poisson_problem(PoissonVariant::sin2x);
  if (name == "poisson_sin2pix" || name == "sin2pix") return poisson_problem(PoissonVariant::sin2pix);
  if (name == "heat") return heat_problem(gaussian);
  throw std::invalid_argument("unknown problem '" + name + "'");
}

double FdSolution::x(std::size_t node) const {
  return node + 1 == nx ? domain.x1 : domain.x0 + static_cast<double>(node) * dx;
}
double FdSolution::t(std::size_t level) const {
  return level == nt ? domain.y1 : domain.y0 + static_cast<double>(level) * dt;
}

double FdSolution::interpolate(double xq, double tq) const {
  const double fx = std::clamp((xq - domain.x0) / dx, 0.0, static_cast<double>(nx - 1));
  const double ft = std::clamp((tq - domain.y0) / dt, 0.0, static_cast<double>(nt));
  const auto i = std::min(static_cast<std::size_t>(fx), nx - 2);
  const auto k = std::min(static_cast<std::size_t>(ft), nt - 1);
  const double a = fx - static_cast<double>(i);
  const double b = ft - static_cast<double>(k);
  return (1 - a) * (1 - b) * at(k, i) + a * (1 - b) * at(k, i + 1) + (1 - a) * b * at(k + 1, i) +
         a * b * at(k + 1, i + 1);
}

void FdSolution::write_csv(const std::filesystem::path& path) const {
  CsvWriter csv(path, {"x", "t", "T"});
  for (std::size_t k = 0; k <= nt; ++k)
    for (std::size_t i = 0; i < nx; ++i) csv.row(x(i), t(k), at(k, i));
}

FdSolution fd_heat_solve(const PdeProblem& problem, std::size_t nx, std::size_t nt) {
  if (nx < 3 || nt < 1) throw std::invalid_argument("fd_heat_solve: need nx >= 3 and nt >= 1");
  if (!(problem.diffusivity > 0.0)) throw std::invalid_argument("fd_heat_solve: not a heat problem");
  FdSolution sol;
  sol.nx = nx;
  sol.nt = nt;
  sol.domain = problem.domain;
  sol.alpha = problem.diffusivity;
  sol.dx = problem.domain.width() / static_cast<double>(nx - 1);
  sol.dt = problem.domain.height() / static_cast<double>(nt);
  sol.values.assign((nt + 1) * nx, 0.0);

  auto edge = [&](std::size_t node, double t) {
    return problem.boundary_data(Vec2{sol.x(node), t}, node == 0 ? Edge::left : Edge::right);
  };
  for (std::size_t i = 1; i + 1 < nx; ++i)
    sol.values[i] = problem.boundary_data(Vec2{sol.x(i), problem.domain.y0}, Edge::bottom);
  sol.values[0] = edge(0, sol.t(0));
  sol.values[nx - 1] = edge(nx - 1, sol.t(0));

  const double r = sol.alpha * sol.dt / (sol.dx * sol.dx);
  const std::size_t m = nx - 2;
  // Constant tridiagonal system: diag 1 + r, off-diagonals -r/2. Thomas with
  // the forward sweep factors precomputed.
  std::vector<double> cprime(m), rhs(m), denom(m);
  const double off = -0.5 * r;
  const double diag = 1.0 + r;
  denom[0] = diag;
  cprime[0] = off / diag;
  for (std::size_t j = 1; j < m; ++j) {
    denom[j] = diag - off * cprime[j - 1];
    cprime[j] = off / denom[j];
  }

  for (std::size_t k = 0; k < nt; ++k) {
    const double* u = sol.values.data() + k * nx;
    double* v = sol.values.data() + (k + 1) * nx;
    const double t_next = sol.t(k + 1);
    v[0] = edge(0, t_next);
    v[nx - 1] = edge(nx - 1, t_next);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = j + 1;
      rhs[j] = (1.0 - r) * u[i] + 0.5 * r * (u[i - 1] + u[i + 1]);
    }
    rhs[0] -= off * v[0];
    rhs[m - 1] -= off * v[nx - 1];
    rhs[0] /= denom[0];
    for (std::size_t j = 1; j < m; ++j) rhs[j] = (rhs[j] - off * rhs[j - 1]) / denom[j];
    for (std::size_t j = m - 1; j-- > 0;) rhs[j] -= cprime[j] * rhs[j + 1];
    for (std::size_t j = 0; j < m; ++j) v[j + 1] = rhs[j];
  }
  return sol;
}

double relative_l2(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || truth.empty())
    throw std::invalid_argument("relative_l2: lengths must match and be >= 1");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - pred[i];
    num += e * e;
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw std::domain_error("relative_l2: reference is identically zero");
  return std::sqrt(num / den);
}

}  // namespace deepddm
