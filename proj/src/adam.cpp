#include "deepddm/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace deepddm {

double lr_schedule(double lr0, double decay, std::size_t epoch) {
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("lr_schedule: decay must be in (0,1]");
  return lr0 * std::pow(decay, static_cast<double>(epoch));
}

AdamState::AdamState(std::size_t parameter_count, AdamConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0) || !(config.beta2 > 0.0 && config.beta2 < 1.0))
    throw std::invalid_argument("AdamState: betas must be in (0,1)");
  if (!(config.eps > 0.0)) throw std::invalid_argument("AdamState: eps must be positive");
}

void AdamState::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (grad.size() != m_.size() || params.size() != m_.size())
    throw std::invalid_argument("AdamState::step: length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::domain_error("AdamState::step: non-finite gradient");

  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

void AdamState::reset() {
  t_ = 0;
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
}

nlohmann::json AdamState::to_json() const {
  return {{"beta1", config_.beta1}, {"beta2", config_.beta2}, {"eps", config_.eps},
          {"lr0", config_.lr0},     {"lr_decay", config_.lr_decay}, {"step", t_},
          {"m", m_},                {"v", v_}};
}

AdamState AdamState::from_json(const nlohmann::json& j) {
  AdamConfig c;
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  AdamState s(0, c);
  s.t_ = j.at("step").get<std::uint64_t>();
  s.m_ = j.at("m").get<std::vector<double>>();
  s.v_ = j.at("v").get<std::vector<double>>();
  if (s.m_.size() != s.v_.size()) throw std::invalid_argument("AdamState::from_json: moment lengths differ");
  return s;
}

}  // namespace deepddm
