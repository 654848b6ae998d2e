#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deepddm/ddm.hpp"

using namespace deepddm;

namespace {

void make_constant(Mlp& net, double c) {
  std::fill(net.parameters().begin(), net.parameters().end(), 0.0);
  const std::size_t last = net.layer_count() - 1;
  net.biases(last)[0] = c;
}

DdmConfig small_config(DdmMode mode, std::uint64_t seed) {
  DdmConfig c;
  c.mode = mode;
  c.seed = seed;
  c.fine_hidden = {6};
  c.coarse_hidden = {4};
  c.fine_counts = {60, 12, 6};
  c.coarse_counts = {40, 8};
  c.fine.max_epochs = 5;
  c.fine.batch_size = 30;
  c.coarse.max_epochs = 5;
  c.coarse.batch_size = 40;
  c.outer_max = 3;
  c.convergence_tests = false;
  c.workers = 1;
  return c;
}

DdmSolver strip_solver(DdmMode mode, std::uint64_t seed = 1) {
  const auto prob = poisson_problem(PoissonVariant::sin2x);
  auto dec = Decomposition::build(prob.domain, 2, 1, 0.2);
  return DdmSolver(std::move(dec), prob, small_config(mode, seed), analytic_reference(prob, 400));
}

}  // namespace

TEST_CASE("lambda schedule") {
  LambdaSchedule s;
  CHECK(s.at(0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.at(1) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(s.at(2) == doctest::Approx(0.576).epsilon(1e-15));
  for (std::size_t k = 1; k < 50; ++k) {
    CHECK(s.at(k) <= s.at(k - 1));
    CHECK(s.at(k) >= 0.0);
  }
  const LambdaSchedule c{0.5, 0.8, true};
  CHECK(c.at(0) == 0.5);
  CHECK(c.at(17) == 0.5);
}

TEST_CASE("apportion and stream seeds") {
  const std::vector<double> w{1.0, 1.0, 2.0};
  CHECK(apportion(8, w) == std::vector<std::size_t>{2, 2, 4});
  const auto a = apportion(5, w);
  CHECK(a[0] + a[1] + a[2] == 5);
  CHECK(a[2] == 3);
  CHECK(apportion(0, w) == std::vector<std::size_t>{0, 0, 0});
  CHECK(apportion(3, std::vector<double>{}).empty());
  CHECK_THROWS_AS(apportion(3, std::vector<double>{0.0}), std::invalid_argument);

  CHECK(stream_seed(1, 0, Stream::interior) == stream_seed(1, 0, Stream::interior));
  CHECK(stream_seed(1, 0, Stream::interior) != stream_seed(1, 1, Stream::interior));
  CHECK(stream_seed(1, 0, Stream::interior) != stream_seed(1, 0, Stream::boundary));
  CHECK(stream_seed(1, 0, Stream::train, 0) != stream_seed(1, 0, Stream::train, 1));
  CHECK(stream_seed(1, 0, Stream::init) != stream_seed(2, 0, Stream::init));
}

TEST_CASE("relative change and convergence tests") {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 3.3}, z{0, 0, 0};
  CHECK(relative_change(a, a) == 0.0);
  CHECK(relative_change(z, z) == 0.0);
  CHECK(std::isinf(relative_change(a, z)));
  CHECK(relative_change(b, a) == doctest::Approx(0.3 / std::sqrt(14.0)).epsilon(1e-14));

  Snapshot s0{{a, a}, {a}};
  CHECK_FALSE(outer_convergence_tests(nullptr, s0, 1e-2).networks);
  CHECK_FALSE(outer_convergence_tests(nullptr, s0, 1e-2).interfaces);
  const auto same = outer_convergence_tests(&s0, s0, 1e-2);
  CHECK(same.networks);
  CHECK(same.interfaces);
  Snapshot s1{{a, b}, {a}};
  const auto one = outer_convergence_tests(&s0, s1, 1e-2);
  CHECK_FALSE(one.networks);
  CHECK(one.interfaces);
  Snapshot s2{{a, a}, {b}};
  CHECK_FALSE(outer_convergence_tests(&s0, s2, 1e-2).interfaces);
  Snapshot lonely{{a}, {}};
  const auto none = outer_convergence_tests(&lonely, lonely, 1e-2);
  CHECK(none.networks);
  CHECK_FALSE(none.interfaces);
  CHECK_THROWS_AS(outer_convergence_tests(&s0, lonely, 1e-2), std::invalid_argument);
}

TEST_CASE("config validation") {
  auto c = small_config(DdmMode::two_level, 1);
  c.lambda_c.initial = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(DdmMode::one_level, 1);
  c.outer_max = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(DdmMode::one_level, 1);
  c.outer_tol = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(DdmMode::one_level, 1);
  c.lambda_f = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(mode_from_name(mode_name(DdmMode::two_level)) == DdmMode::two_level);
  CHECK_THROWS_AS(mode_from_name("three_level"), std::invalid_argument);
}

TEST_CASE("construction samples points where they belong") {
  auto solver = strip_solver(DdmMode::two_level);
  const auto& dec = solver.decomposition();
  for (std::size_t s = 0; s < dec.size(); ++s) {
    const auto& set = solver.training_set(s);
    CHECK(set.interior.size() == 60);
    CHECK(set.boundary.size() == 12);
    CHECK(set.interface.size() == 6);  // one artificial edge each
    for (std::size_t i = 0; i < set.interior.size(); ++i) CHECK(dec.subdomain(s).bounds.contains_open(set.interior.at2(i)));
    for (std::size_t i = 0; i < set.boundary.size(); ++i) {
      const Vec2 p = set.boundary.at2(i);
      const Rect& o = dec.bounds();
      CHECK((p.x == o.x0 || p.x == o.x1 || p.y == o.y0 || p.y == o.y1));
    }
  }
  const auto* coarse = solver.coarse_training_set();
  REQUIRE(coarse != nullptr);
  CHECK(coarse->interior.size() == 40);
  CHECK(coarse->boundary.size() == 8);
  CHECK(coarse->fine.size() == 40);
  CHECK(coarse->lambda_f == 0.05);
  CHECK(strip_solver(DdmMode::one_level).coarse_network() == nullptr);
}

TEST_CASE("initial interface targets come from the donors") {
  auto solver = strip_solver(DdmMode::one_level);
  const auto& itfs = solver.decomposition().interfaces();
  for (std::size_t k = 0; k < itfs.size(); ++k) {
    const auto& donor = solver.networks()[itfs[k].donor_ids[0]];
    const auto vals = solver.interface_values(k);
    const auto& pts = solver.interface_points(k);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(vals[i] == doctest::Approx(donor.eval(pts[i])).epsilon(1e-13));
  }
}

TEST_CASE("interface update blends coarse and donor values") {
  auto solver = strip_solver(DdmMode::two_level);
  for (auto& net : solver.networks()) make_constant(net, 2.0);
  make_constant(*solver.coarse_network(), 4.0);
  const std::size_t n = solver.decomposition().interfaces().size();
  solver.update_interfaces(0.5);
  for (std::size_t k = 0; k < n; ++k)
    for (double w : solver.interface_values(k)) CHECK(w == 3.0);
  solver.update_interfaces(0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (double w : solver.interface_values(k)) CHECK(w == 2.0);
  solver.update_interfaces(1.0);
  for (std::size_t k = 0; k < n; ++k)
    for (double w : solver.interface_values(k)) CHECK(w == 4.0);
  CHECK_THROWS_AS(solver.update_interfaces(1.2), std::invalid_argument);

  auto one = strip_solver(DdmMode::one_level);
  CHECK_THROWS_AS(one.update_interfaces(0.5), std::invalid_argument);
}

TEST_CASE("corner interface points average their donors") {
  const auto prob = poisson_problem(PoissonVariant::sin2x);
  auto dec = Decomposition::build(prob.domain, 2, 2, 0.2);
  auto cfg = small_config(DdmMode::one_level, 3);
  cfg.fine_counts.interface = 40;
  DdmSolver solver(dec, prob, cfg, analytic_reference(prob, 400));
  for (std::size_t s = 0; s < 4; ++s) make_constant(solver.networks()[s], static_cast<double>(s + 1));
  solver.update_interfaces(0.0);
  for (std::size_t k = 0; k < dec.interfaces().size(); ++k) {
    const auto& pts = solver.interface_points(k);
    const auto vals = solver.interface_values(k);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto donors = dec.donors_at(dec.interfaces()[k].owner_id, pts.at2(i));
      double mean = 0.0;
      for (auto d : donors) mean += static_cast<double>(d + 1);
      CHECK(vals[i] == doctest::Approx(mean / static_cast<double>(donors.size())).epsilon(1e-15));
    }
  }
}

TEST_CASE("snapshot between iterations") {
  auto solver = strip_solver(DdmMode::one_level);
  const auto a = solver.snapshot();
  const auto b = solver.snapshot();
  const auto flags = outer_convergence_tests(&a, b, 1e-12);
  CHECK(flags.networks);
  CHECK(flags.interfaces);
  CHECK(a.interior.size() == 2);
  CHECK(a.interior[0].size() == 60);
  CHECK(a.interface.size() == 2);
}

TEST_CASE("single subdomain reduces to plain PINN training") {
  const auto prob = poisson_problem(PoissonVariant::sin2x);
  auto cfg = small_config(DdmMode::one_level, 11);
  cfg.outer_max = 1;
  cfg.fine.max_epochs = 20;
  const auto ref = analytic_reference(prob, 900);
  DdmSolver solver(Decomposition::build(prob.domain, 1, 1, 0.2), prob, cfg, ref);
  Mlp net = solver.networks()[0];
  const TrainingSet set = solver.training_set(0);
  CHECK(set.interface.empty());
  const auto trace = solver.run();

  AdamState adam(net.parameter_count(), cfg.adam);
  train_network(net, adam, set, cfg.fine, stream_seed(cfg.seed, 0, Stream::train, 0));
  CHECK(std::equal(net.parameters().begin(), net.parameters().end(), solver.networks()[0].parameters().begin()));
  REQUIRE(trace.records.size() == 1);
  CHECK(trace.records[0].global_error == relative_l2(net.eval_batch(ref.points), ref.truth));
  CHECK(trace.records[0].subdomain_errors[0] == trace.records[0].global_error);
}

TEST_CASE("runs are deterministic and traces are consistent") {
  auto a = strip_solver(DdmMode::two_level, 5), b = strip_solver(DdmMode::two_level, 5);
  const auto ta = a.run("x"), tb = b.run("x");
  REQUIRE(ta.records.size() == 3);
  CHECK(ta.stop_reason == "outer_max");
  CHECK(ta.global_errors() == tb.global_errors());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& r = ta.records[k];
    CHECK(r.iteration == k + 1);
    CHECK(r.lambda_c == LambdaSchedule{}.at(k));
    CHECK(r.subdomain_errors.size() == 2);
    CHECK(r.subdomain_losses.size() == 2);
    CHECK(r.coarse_error.has_value());
    CHECK(r.subdomain_errors == tb.records[k].subdomain_errors);
  }
  CHECK(ta.subdomain_error_series(1).size() == 3);
  CHECK(ta.to_json()["records"].size() == 3);
  const auto ck = a.checkpoint();
  CHECK(ck.contains("coarse"));
}

TEST_CASE("coarse network with zero blend and zero penalty decouples") {
  auto one = strip_solver(DdmMode::one_level, 9);
  auto cfg = small_config(DdmMode::two_level, 9);
  cfg.lambda_c = LambdaSchedule{0.0, 0.8, true};
  cfg.lambda_f = 0.0;
  const auto prob = poisson_problem(PoissonVariant::sin2x);
  DdmSolver two(Decomposition::build(prob.domain, 2, 1, 0.2), prob, cfg, analytic_reference(prob, 400));
  const auto t1 = one.run(), t2 = two.run();
  REQUIRE(t1.records.size() == t2.records.size());
  for (std::size_t k = 0; k < t1.records.size(); ++k) CHECK(t1.records[k].subdomain_errors == t2.records[k].subdomain_errors);
}

TEST_CASE("stopping on the error target and on convergence") {
  auto cfg = small_config(DdmMode::one_level, 2);
  cfg.outer_max = 10;
  cfg.stop_at_error = 10.0;  // any network clears this
  const auto prob = poisson_problem(PoissonVariant::sin2x);
  DdmSolver s(Decomposition::build(prob.domain, 2, 1, 0.2), prob, cfg, analytic_reference(prob, 400));
  const auto t = s.run();
  CHECK(t.records.size() == 1);
  CHECK(t.stop_reason == "target_error");

  cfg.stop_at_error.reset();
  cfg.convergence_tests = true;
  cfg.outer_tol = 1e9;
  DdmSolver c(Decomposition::build(prob.domain, 2, 1, 0.2), prob, cfg, analytic_reference(prob, 400));
  const auto tc = c.run();
  CHECK(tc.records.size() == 2);  // first iteration has nothing to compare against
  CHECK(tc.stop_reason == "networks_converged");
}

TEST_CASE("2x2 sin2x regression fixture") {
  const auto prob = poisson_problem(PoissonVariant::sin2x);
  DdmConfig c;
  c.fine_hidden = {20};
  c.fine_counts = {300, 50, 25};
  c.fine.max_epochs = 200;
  c.fine.lr_decay = 0.95;
  c.outer_max = 20;
  c.convergence_tests = false;
  c.seed = 1;
  c.workers = 1;
  DdmSolver solver(Decomposition::build(prob.domain, 2, 2, 0.2), prob, c, analytic_reference(prob, 10000));
  const auto errors = solver.run().global_errors();
  CHECK(errors.back() <= 0.1);
  CHECK(errors.back() < errors.front());
}
