#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace deepddm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr0 = 1e-2;
  double lr_decay = 0.95;  ///< multiplicative, applied once per epoch

  bool operator==(const AdamConfig&) const = default;
};

/// lr0 * decay^epoch. Requires decay in (0, 1].
double lr_schedule(double lr0, double decay, std::size_t epoch);

/// First/second moment state for one parameter vector.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t parameter_count, AdamConfig config = {});

  /// One bias-corrected Adam update of `params` in place at learning rate `lr`.
  /// Throws std::domain_error on a non-finite gradient entry (params untouched).
  void step(std::span<double> params, std::span<const double> grad, double lr);

  void reset();

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  std::size_t size() const { return m_.size(); }

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);

  friend bool operator==(const AdamState&, const AdamState&) = default;

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace deepddm
