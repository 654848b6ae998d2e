// Acceptance checks. Usage: acceptance [criterion...]; no argument runs all.
// One PASS/FAIL line per criterion; exit status is nonzero if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "deepddm/adam.hpp"
#include "deepddm/ddm.hpp"
#include "deepddm/experiment.hpp"
#include "deepddm/geometry.hpp"
#include "deepddm/nn.hpp"
#include "deepddm/problems.hpp"
#include "deepddm/rng.hpp"
#include "deepddm/sampling.hpp"

using namespace deepddm;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

std::string iters(const std::optional<std::size_t>& n) { return n ? std::to_string(*n) : "none"; }

std::optional<std::size_t> first_at_or_below(const std::vector<double>& errors, double target) {
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (errors[k] <= target) return k + 1;
  return std::nullopt;
}

// Run `c` once for one decomposition, mode and seed.
OuterTrace run_case(const ExperimentConfig& c, const PdeProblem& problem, const ErrorReference& ref,
                    DecompositionSpec d, DdmMode mode, std::uint64_t seed) {
  RunSpec run;
  run.decomposition = d;
  run.mode = mode;
  run.seed = seed;
  run.label = d.label() + "_" + std::string(mode_name(mode)) + "_s" + std::to_string(seed);
  return run_single(c, run, problem, ref);
}

// ---------------------------------------------------------------------------

Mlp random_mlp(Rng& rng, std::uint64_t seed) {
  const std::size_t depth = 1 + static_cast<std::size_t>(uniform01(rng) * 3.0);
  std::vector<std::size_t> dims{2};
  for (std::size_t l = 0; l < depth; ++l) dims.push_back(1 + static_cast<std::size_t>(uniform01(rng) * 20.0));
  dims.push_back(1);
  Mlp net(dims, seed);
  for (double& p : net.parameters()) p += uniform(rng, -0.3, 0.3);
  return net;
}

Outcome derivative_correctness() {
  constexpr double tol = 1e-5;
  constexpr long double floor = 1e-8L;  // absolute floor for entries that vanish
  Rng rng(20240601);
  double worst = 0.0;
  std::size_t checked = 0;
  auto rel = [&](double got, long double want) {
    const long double err = std::fabs(static_cast<long double>(got) - want) / std::max(std::fabs(want), floor);
    worst = std::max(worst, static_cast<double>(err));
    ++checked;
  };
  for (int n = 0; n < 100; ++n) {
    const Mlp net = random_mlp(rng, 1000 + static_cast<std::uint64_t>(n));
    const oracle::Net ref(net);
    for (int k = 0; k < 4; ++k) {
      const std::vector<double> x{uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)};
      const auto jet = net.eval_jet(x);
      const auto fd = oracle::fd_jet(ref, {x[0], x[1]}, 1e-3L);
      rel(jet.value, fd.value);
      for (int i = 0; i < 2; ++i) {
        rel(jet.grad_x[i], fd.grad[i]);
        rel(jet.hess_diag[i], fd.hess[i]);
      }
    }
    const auto interior = latin_hypercube(5, Rect{-1, 1, -1, 1}, 50 + static_cast<std::uint64_t>(n));
    const auto boundary = segment_lhs(3, Segment{{-1, 1}, {1, 1}}, 70 + static_cast<std::uint64_t>(n));
    std::vector<double> f(interior.size()), g(boundary.size());
    for (auto& v : f) v = uniform(rng, -2, 2);
    for (auto& v : g) v = uniform(rng, -1, 1);
    const JetOperator op = n % 2 ? JetOperator{0.0, {0.0, 1.0}, {-4.0, 0.0}} : JetOperator{0.0, {0.0, 0.0}, {-1.0, -1.0}};
    const std::vector<ResidualTerm> terms{{"omega", op, &interior, f, 1.0},
                                          {"boundary", JetOperator::identity(2), &boundary, g, 1.0}};
    const auto lv = loss_param_grad(net, terms);
    const auto fd = oracle::fd_param_grad(ref, terms, 1e-5L);
    for (std::size_t p = 0; p < fd.size(); ++p) rel(lv.grad[p], fd[p]);
  }
  return {worst <= tol, std::to_string(checked) + " entries over 100 nets, worst relative error " + fmt(worst, 3) +
                            " (bound 1e-5)"};
}

Outcome partition_of_unity() {
  const Rect omega{0, std::numbers::pi, 0, 1.6};
  double worst_sum = 0.0, worst_iface = 0.0;
  bool negative = false;
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto dec = Decomposition::build(omega, n, n, 0.2);
    const auto pts = latin_hypercube(10000, omega, 300 + n);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto chi = dec.partition_of_unity(pts.at2(i));
      double sum = 0.0;
      for (double w : chi) {
        sum += w;
        negative = negative || w < 0.0;
      }
      worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
    }
    for (const auto& itf : dec.interfaces()) {
      const auto on = segment_lhs(10000 / dec.interfaces().size() + 1, itf.segment, 400 + n);
      for (std::size_t i = 0; i < on.size(); ++i)
        worst_iface = std::max(worst_iface, std::fabs(dec.partition_of_unity(on.at2(i))[itf.owner_id]));
    }
  }
  return {worst_sum <= 1e-12 && worst_iface == 0.0 && !negative,
          "max |sum - 1| = " + fmt(worst_sum, 3) + ", max owner weight on its interfaces = " + fmt(worst_iface, 3) +
              (negative ? ", negative weight found" : "")};
}

Outcome adam_oracle() {
  AdamState s(1);
  std::vector<double> theta{0.0};
  s.step(theta, std::vector<double>{1.0}, 0.01);
  const double expected = -0.01 / (1.0 + 1e-8);  // m_hat = v_hat = 1
  const double first_err = std::fabs(theta[0] - expected);

  AdamState q(2);
  std::vector<double> x{1.0, 1.0};
  for (int i = 0; i < 500; ++i) q.step(x, std::vector<double>{2 * x[0], 2 * x[1]}, 0.01);
  const double norm = std::hypot(x[0], x[1]);
  return {first_err <= 1e-12 && norm <= 1e-3,
          "first step " + fmt(theta[0], 12) + " (error " + fmt(first_err, 2) + "), |theta| after 500 steps " +
              fmt(norm, 3)};
}

Outcome single_domain_pinn() {
  auto c = parse_experiment_config(json{{"experiment", "single_pinn"}, {"workers", 1}});
  const auto problem = make_problem(c);
  const auto ref = make_reference(c, problem);
  std::vector<std::string> parts;
  int passed = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t = run_case(c, problem, ref, {1, 1}, DdmMode::one_level, seed);
    const double err = t.records.back().global_error;
    passed += err <= 0.05;
    parts.push_back("s" + std::to_string(seed) + " " + fmt(err, 3) + " in " +
                    std::to_string(t.records.back().subdomain_epochs[0]) + " epochs");
  }
  return {passed == 3, join(parts) + " (bound 0.05, 3/3 required; 3x20 net, decay " + fmt(c.fine.lr_decay) +
                           ", stop rule absolute)"};
}

Outcome fd_heat_oracle() {
  const auto problem = heat_problem();
  // Nested grids: nx - 1 doubles, so every coarse node is a fine node.
  const auto a = fd_heat_solve(problem, 100, 240);
  const auto b = fd_heat_solve(problem, 199, 480);
  const auto c = fd_heat_solve(problem, 397, 960);
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t level : {60u, 120u, 240u})
    for (std::size_t i = 0; i < a.nx; ++i) {
      const double ua = a.at(level, i), ub = b.at(2 * level, 2 * i), uc = c.at(4 * level, 4 * i);
      e1 = std::max(e1, std::fabs(ua - ub));
      e2 = std::max(e2, std::fabs(ub - uc));
    }
  const double ratio = e1 / e2;
  const double max0 = *std::max_element(a.values.begin(), a.values.begin() + static_cast<long>(a.nx));
  double max_all = 0.0;
  for (double v : a.values) max_all = std::max(max_all, std::fabs(v));
  return {ratio >= 3.0 && max_all <= max0 + 1e-12,
          "self-convergence ratio " + fmt(ratio, 4) + " (bound 3), max |T| " + fmt(max_all, 6) + " vs initial max " +
              fmt(max0, 6)};
}

Outcome one_level_degradation() {
  auto c = parse_experiment_config(json{{"experiment", "strong_poisson"},
                                        {"decompositions", {"2x2", "3x3"}},
                                        {"outer", {{"stop_at_error", 0.10}, {"max_iterations", 40}}},
                                        {"workers", 1}});
  const auto problem = make_problem(c);
  const auto ref = make_reference(c, problem);
  std::vector<std::string> parts;
  int passed = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto n2 = first_at_or_below(run_case(c, problem, ref, {2, 2}, DdmMode::one_level, seed).global_errors(), 0.10);
    const auto n3 = first_at_or_below(run_case(c, problem, ref, {3, 3}, DdmMode::one_level, seed).global_errors(), 0.10);
    const bool ok = n2 && (!n3 || *n3 > *n2);
    passed += ok;
    parts.push_back("s" + std::to_string(seed) + " 2x2 " + iters(n2) + " 3x3 " + iters(n3));
  }
  return {passed == 3, "iterations to 0.10: " + join(parts) + " (3x3 > 2x2 required for every seed)"};
}

Outcome two_level_acceleration() {
  auto c = parse_experiment_config(json{{"experiment", "weak_poisson"},
                                        {"outer", {{"stop_at_error", 0.05}}},
                                        {"workers", 1}});
  const auto problem = make_problem(c);
  const auto ref = make_reference(c, problem);
  const std::size_t cap = c.outer.max_iterations;
  std::vector<std::string> parts;
  bool all = true;
  for (DecompositionSpec d : {DecompositionSpec{3, 3}, DecompositionSpec{4, 4}}) {
    int passed = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto one = run_case(c, problem, ref, d, DdmMode::one_level, seed);
      const auto two = run_case(c, problem, ref, d, DdmMode::two_level, seed);
      const auto n1 = first_at_or_below(one.global_errors(), 0.05);
      const auto n2 = first_at_or_below(two.global_errors(), 0.05);
      // An unreached one-level target counts as cap + 1; an unreached two-level target fails.
      const double base = n1 ? static_cast<double>(*n1) : static_cast<double>(cap + 1);
      const bool ok = n2 && static_cast<double>(*n2) <= 0.6 * base;
      passed += ok;
      parts.push_back(d.label() + " s" + std::to_string(seed) + " one " + iters(n1) + " (final " +
                      fmt(one.global_errors().back(), 3) + ") two " + iters(n2) + " (final " +
                      fmt(two.global_errors().back(), 3) + ")");
    }
    all = all && passed >= 2;
  }
  return {all, "iterations to 0.05 within " + std::to_string(cap) + ": " + join(parts) +
                   " (two <= 0.6 x one on 2/3 seeds per decomposition)"};
}

Outcome decoupling_identity() {
  auto c = parse_experiment_config(json{{"experiment", "weak_poisson"},
                                        {"outer", {{"max_iterations", 4}}},
                                        {"fine", {{"max_epochs", 60}}},
                                        {"coarse", {{"lambda_c", {{"initial", 0.0}, {"constant", true}}},
                                                    {"lambda_f", 0.0},
                                                    {"max_epochs", 60}}},
                                        {"workers", 1}});
  const auto problem = make_problem(c);
  const auto ref = make_reference(c, problem);
  std::size_t compared = 0, mismatched = 0;
  for (std::uint64_t seed : {1, 2}) {
    const auto one = run_case(c, problem, ref, {3, 3}, DdmMode::one_level, seed);
    const auto two = run_case(c, problem, ref, {3, 3}, DdmMode::two_level, seed);
    if (one.records.size() != two.records.size()) return {false, "trace lengths differ"};
    for (std::size_t k = 0; k < one.records.size(); ++k)
      for (std::size_t s = 0; s < one.records[k].subdomain_errors.size(); ++s) {
        ++compared;
        mismatched += one.records[k].subdomain_errors[s] != two.records[k].subdomain_errors[s];
      }
  }
  return {compared > 0 && mismatched == 0, std::to_string(compared) + " subdomain errors compared on 3x3, " +
                                               std::to_string(mismatched) + " differ bit-wise"};
}

struct FlowStats {
  std::vector<std::size_t> first;  // per strip, 1-indexed
  double iter1_first = 0.0, iter1_last = 0.0;
  std::size_t spread() const {
    const auto [lo, hi] = std::minmax_element(first.begin(), first.end());
    return *hi - *lo;
  }
  bool non_decreasing() const { return std::is_sorted(first.begin(), first.end()); }
};

FlowStats flow_stats(const OuterTrace& t) {
  FlowStats f;
  for (std::size_t s = 0; s < t.subdomains; ++s) {
    const auto e = t.subdomain_error_series(s);
    std::size_t k = 0;
    while (e[k] > 2.0 * e.back()) ++k;
    f.first.push_back(k + 1);
  }
  f.iter1_first = t.records.front().subdomain_errors.front();
  f.iter1_last = t.records.front().subdomain_errors.back();
  return f;
}

Outcome information_flow() {
  auto c = parse_experiment_config(json{{"experiment", "heat_strong"},
                                        {"outer", {{"max_iterations", 40}}},
                                        {"workers", 1}});
  const auto problem = make_problem(c);
  const auto ref = make_reference(c, problem);
  std::vector<std::string> parts;
  int passed = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto one = flow_stats(run_case(c, problem, ref, {1, 4}, DdmMode::one_level, seed));
    const auto two = flow_stats(run_case(c, problem, ref, {1, 4}, DdmMode::two_level, seed));
    const bool ok = one.non_decreasing() && two.spread() < one.spread();
    passed += ok;
    parts.push_back("s" + std::to_string(seed) + " one [" + join(one.first) + "] two [" + join(two.first) + "]" +
                    (one.iter1_last >= one.iter1_first ? "" : " (strip 4 below strip 1 at iteration 1)"));
  }
  return {passed >= 2, "first iteration within 2x final error per strip: " + join(parts) +
                           " (one-level non-decreasing and two-level spread smaller on 2/3 seeds)"};
}

Outcome metric_exactness() {
  const std::vector<double> truth{0.3, -1.2, 2.5, 0.0, 4.1};
  std::vector<double> zero(truth.size(), 0.0), scaled(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) scaled[i] = 1.1 * truth[i];
  const double a = relative_l2(truth, truth), b = relative_l2(zero, truth), c = relative_l2(scaled, truth);
  const bool ok = std::fabs(a) <= 1e-12 && std::fabs(b - 1.0) <= 1e-12 && std::fabs(c - 0.1) <= 1e-12;
  return {ok, "identical " + fmt(a, 3) + ", zero prediction " + fmt(b, 17) + ", 1.1x truth " + fmt(c, 17)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "derivative correctness", 30, derivative_correctness},
      {2, "partition of unity", 10, partition_of_unity},
      {3, "Adam oracle", 5, adam_oracle},
      {4, "single-domain PINN", 900, single_domain_pinn},
      {5, "FD heat oracle", 5, fd_heat_oracle},
      {6, "one-level scalability degradation", 1800, one_level_degradation},
      {7, "two-level acceleration", 2700, two_level_acceleration},
      {8, "decoupling identity", 600, decoupling_identity},
      {9, "information flow", 1800, information_flow},
      {10, "metric exactness", 1, metric_exactness},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    char* end = nullptr;
    const long v = std::strtol(argv[i], &end, 10);
    if (*end != '\0' || v < 1 || v > 10) {
      std::fprintf(stderr, "usage: %s [criterion 1-10 ...]\n", argv[0]);
      return 2;
    }
    selected.push_back(static_cast<int>(v));
  }
  if (selected.empty())
    for (const auto& c : all) selected.push_back(c.id);

  bool ok = true;
  for (int id : selected) {
    const auto& c = all[static_cast<std::size_t>(id - 1)];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    ok = ok && pass;
    std::printf("criterion %d %s: %s | %s | %.1f s (budget %.0f s)%s\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : " over budget");
    std::fflush(stdout);
  }
  return ok ? 0 : 1;
}
