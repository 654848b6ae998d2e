#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "deepddm/nn.hpp"
#include "deepddm/rng.hpp"
#include "deepddm/sampling.hpp"

using namespace deepddm;

namespace {

Mlp single_neuron() {
  // W1 = [[1, 0]], b1 = [0], W2 = [[1]], b2 = [0]
  return Mlp::from_parameters({2, 1, 1}, {1.0, 0.0, 0.0, 1.0, 0.0});
}

Mlp random_net(Rng& rng, std::uint64_t seed) {
  const std::size_t depth = 1 + static_cast<std::size_t>(uniform01(rng) * 3.0);
  std::vector<std::size_t> dims{2};
  for (std::size_t l = 0; l < depth; ++l) dims.push_back(1 + static_cast<std::size_t>(uniform01(rng) * 20.0));
  dims.push_back(1);
  Mlp net(dims, seed);
  for (double& b : net.parameters()) b += uniform(rng, -0.3, 0.3);
  return net;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(Mlp({2, 20, 1}, 0).parameter_count() == 81);
  CHECK(Mlp({2, 20, 20, 20, 1}, 7).parameter_count() == 921);
  const std::vector<std::size_t> dims{2, 3, 4, 1};
  CHECK(parameter_count(dims) == 2 * 3 + 3 + 3 * 4 + 4 + 4 + 1);
}

TEST_CASE("construction validates dims") {
  CHECK_THROWS_AS(Mlp({2, 1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(Mlp({2, 5, 2}, 0), std::invalid_argument);
  CHECK_THROWS_AS(Mlp({2, 0, 1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(Mlp::from_parameters({2, 1, 1}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Mlp::from_parameters({2, 1, 1}, {1.0, 0.0, NAN, 1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("glorot init is deterministic with zero biases and bounded weights") {
  Mlp a({2, 20, 20, 1}, 42), b({2, 20, 20, 1}, 42), c({2, 20, 20, 1}, 43);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const auto& d = a.layer_dims();
    const double limit = std::sqrt(6.0 / static_cast<double>(d[l] + d[l + 1]));
    for (double w : a.weights(l)) CHECK(std::fabs(w) <= limit);
    for (double bias : a.biases(l)) CHECK(bias == 0.0);
  }
}

TEST_CASE("zero network evaluates to zero with zero derivatives") {
  Mlp z = Mlp::zeros({2, 5, 5, 1});
  const std::vector<double> x{0.3, -1.7};
  CHECK(z.eval(x) == 0.0);
  const auto j = z.eval_jet(x);
  CHECK(j.value == 0.0);
  CHECK(j.grad_x == std::vector<double>{0.0, 0.0});
  CHECK(j.hess_diag == std::vector<double>{0.0, 0.0});
}

TEST_CASE("single hidden neuron by hand") {
  const Mlp net = single_neuron();
  const std::vector<double> x{0.5, 3.0};
  CHECK(net.eval(x) == doctest::Approx(0.46211715726000974).epsilon(1e-14));
  const auto j = net.eval_jet(x);
  CHECK(j.value == doctest::Approx(0.46211715726000974).epsilon(1e-14));
  CHECK(j.grad_x[0] == doctest::Approx(0.7864477329659274).epsilon(1e-14));
  CHECK(j.grad_x[1] == 0.0);
  CHECK(j.hess_diag[0] == doctest::Approx(-0.7268619813835873).epsilon(1e-14));
  CHECK(j.hess_diag[1] == 0.0);
}

TEST_CASE("permuting inputs and first-layer columns leaves the output unchanged") {
  Mlp net({2, 7, 1}, 3);
  Mlp swapped = net;
  auto w = swapped.weights(0);
  for (std::size_t r = 0; r < 7; ++r) std::swap(w[r * 2], w[r * 2 + 1]);
  const std::vector<double> x{0.2, -0.9}, xs{-0.9, 0.2};
  CHECK(net.eval(x) == doctest::Approx(swapped.eval(xs)).epsilon(1e-15));
}

TEST_CASE("batch paths agree with the scalar path") {
  Mlp net({2, 9, 6, 1}, 11);
  net.set_input_affine({1.0, 0.5}, {0.7, 2.0});
  const auto pts = latin_hypercube(600, Rect{0, 3, 0, 1}, 5);  // spans several chunks
  const auto vals = net.eval_batch(pts);
  const auto jets = net.eval_jet_batch(pts);
  for (std::size_t i = 0; i < pts.size(); i += 37) {
    CHECK(vals[i] == doctest::Approx(net.eval(pts[i])).epsilon(1e-13));
    CHECK(jets[i].value == doctest::Approx(vals[i]).epsilon(1e-13));
  }
}

TEST_CASE("jets and parameter gradients match finite differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    Mlp net = random_net(rng, 100 + static_cast<std::uint64_t>(trial));
    if (trial % 2 == 1) net.set_input_affine({uniform(rng, -1, 1), uniform(rng, -1, 1)}, {uniform(rng, 0.5, 2), uniform(rng, 0.5, 2)});
    const oracle::Net ref(net);
    for (int k = 0; k < 5; ++k) {
      const std::vector<double> x{uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)};
      const auto j = net.eval_jet(x);
      const auto fd = oracle::fd_jet(ref, {x[0], x[1]}, 1e-3L);
      CHECK(oracle::close(j.value, fd.value, 1e-12L, 1e-14L));
      for (int i = 0; i < 2; ++i) {
        CHECK(oracle::close(j.grad_x[i], fd.grad[i], 1e-5L, 1e-8L));
        CHECK(oracle::close(j.hess_diag[i], fd.hess[i], 1e-5L, 1e-8L));
      }
    }

    const auto interior = latin_hypercube(6, Rect{-1, 1, -1, 1}, 7 + trial);
    const auto boundary = segment_lhs(3, Segment{{-1, -1}, {1, -1}}, 9 + trial);
    std::vector<double> f(interior.size()), g(boundary.size());
    for (auto& v : f) v = uniform(rng, -2, 2);
    for (auto& v : g) v = uniform(rng, -1, 1);
    JetOperator lap{0.0, {0.0, 0.0}, {-1.0, -1.0}};
    JetOperator heat{0.0, {0.0, 1.0}, {-4.0, 0.0}};
    std::vector<ResidualTerm> terms{{"omega", trial % 2 ? heat : lap, &interior, f, 1.0},
                                    {"boundary", JetOperator::identity(2), &boundary, g, 0.7}};
    const auto lv = loss_param_grad(net, terms);
    CHECK(lv.total == doctest::Approx(static_cast<double>(oracle::loss(ref, terms))).epsilon(1e-12));
    const auto fd = oracle::fd_param_grad(ref, terms, 1e-5L);
    REQUIRE(lv.grad.size() == fd.size());
    for (std::size_t p = 0; p < fd.size(); ++p) CHECK(oracle::close(lv.grad[p], fd[p], 1e-5L, 1e-8L));
  }
}

TEST_CASE("zero network against a constant target") {
  const Mlp z = Mlp::zeros({2, 3, 1});
  Points pts(2);
  pts.push_back(Vec2{0.1, 0.2});
  const std::vector<double> target{2.0};
  std::vector<ResidualTerm> terms{{"fit", JetOperator::identity(2), &pts, target, 1.0}};
  const auto lv = loss_param_grad(z, terms);
  CHECK(lv.total == 4.0);
  CHECK(lv.grad[z.bias_offset(1)] == -4.0);
}

TEST_CASE("duplicating every point leaves loss and gradient unchanged") {
  Mlp net({2, 6, 1}, 5);
  const auto pts = latin_hypercube(10, Rect{0, 1, 0, 1}, 3);
  Points twice(2);
  for (std::size_t i = 0; i < pts.size(); ++i) twice.push_back(pts.at2(i));
  for (std::size_t i = 0; i < pts.size(); ++i) twice.push_back(pts.at2(i));
  std::vector<double> t(pts.size()), t2;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * static_cast<double>(i);
  t2 = t;
  t2.insert(t2.end(), t.begin(), t.end());
  const JetOperator lap{0.0, {0.0, 0.0}, {-1.0, -1.0}};
  const auto a = loss_param_grad(net, std::vector<ResidualTerm>{{"o", lap, &pts, t, 1.0}});
  const auto b = loss_param_grad(net, std::vector<ResidualTerm>{{"o", lap, &twice, t2, 1.0}});
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-13));
  for (std::size_t p = 0; p < a.grad.size(); ++p) CHECK(a.grad[p] == doctest::Approx(b.grad[p]).epsilon(1e-12));
}

TEST_CASE("scaling the output layer scales the jet") {
  Mlp net({2, 8, 8, 1}, 9);
  Mlp scaled = net;
  const double c = -2.5;
  for (double& w : scaled.weights(2)) w *= c;
  for (double& b : scaled.biases(2)) b *= c;
  const std::vector<double> x{0.4, -0.3};
  const auto a = net.eval_jet(x), b = scaled.eval_jet(x);
  CHECK(b.value == doctest::Approx(c * a.value).epsilon(1e-13));
  for (int i = 0; i < 2; ++i) {
    CHECK(b.grad_x[i] == doctest::Approx(c * a.grad_x[i]).epsilon(1e-13));
    CHECK(b.hess_diag[i] == doctest::Approx(c * a.hess_diag[i]).epsilon(1e-13));
  }
}

TEST_CASE("loss errors") {
  Mlp net({2, 4, 1}, 1);
  Points empty(2), one(2), three(3);
  one.push_back(Vec2{0, 0});
  three.push_back(std::vector<double>{0, 0, 0});
  const std::vector<double> t1{0.0}, t2{0.0, 1.0}, tnan{NAN};
  const auto id = JetOperator::identity(2);
  CHECK_THROWS_AS(loss_param_grad(net, std::vector<ResidualTerm>{}), std::invalid_argument);
  CHECK_THROWS_AS(loss_param_grad(net, std::vector<ResidualTerm>{{"e", id, &empty, {}, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(loss_param_grad(net, std::vector<ResidualTerm>{{"m", id, &one, t2, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(loss_param_grad(net, std::vector<ResidualTerm>{{"d", id, &three, t1, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(loss_param_grad(net, std::vector<ResidualTerm>{{"n", id, &one, tnan, 1.0}}), std::domain_error);
  CHECK_THROWS_AS(net.eval(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("checkpoint json round-trips bit-exactly") {
  Mlp net({2, 5, 3, 1}, 77);
  for (double& p : net.parameters()) p += 1e-3 / 3.0;
  net.set_input_affine({0.25, -1.0}, {2.0 / 3.0, 4.0});
  const auto j = mlp_to_json(net);
  const Mlp back = mlp_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.layer_dims() == net.layer_dims());
  CHECK(back.seed() == 77);
  CHECK(std::equal(net.parameters().begin(), net.parameters().end(), back.parameters().begin()));
  CHECK(back.input_scale() == net.input_scale());
  CHECK(j["weights"][1].size() == 3);  // rows of layer 1
  CHECK(j["weights"][1][0].size() == 5);
}
