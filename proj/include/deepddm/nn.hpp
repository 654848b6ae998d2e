#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepddm/points.hpp"

namespace deepddm {

/// Value and per-axis first/second input derivatives of a scalar network at one point.
struct EvalJet {
  double value = 0.0;
  std::vector<double> grad_x;
  std::vector<double> hess_diag;
};

/**
 * @brief Linear functional of a jet.
 *
 * apply(j) = value_coef * j.value + sum_i grad_coef[i] * j.grad_x[i]
 *           + sum_i hess_coef[i] * j.hess_diag[i].
 *
 * Every operator in scope (Laplacian, heat operator, Dirichlet trace) has this
 * form, which lets the training path push adjoints straight into the jet.
 */
struct JetOperator {
  double value_coef = 0.0;
  std::vector<double> grad_coef;
  std::vector<double> hess_coef;

  static JetOperator identity(std::size_t dim);

  double apply(const EvalJet& jet) const;
  bool needs_derivatives() const;
  std::size_t dim() const { return grad_coef.size(); }
};

/**
 * @brief Fully connected network: tanh on hidden layers, identity output, scalar output.
 *
 * Parameters are stored flat in canonical order: for each affine layer l,
 * the weight matrix W_l (rows = layer_dims[l+1], cols = layer_dims[l]) in
 * row-major order, followed by the bias b_l. Gradients and optimizer state
 * use the same order.
 */
class Mlp {
 public:
  Mlp() = default;

  /// Glorot-uniform weights, zero biases. Deterministic in `seed`.
  Mlp(std::vector<std::size_t> layer_dims, std::uint64_t seed);

  static Mlp zeros(std::vector<std::size_t> layer_dims);
  static Mlp from_parameters(std::vector<std::size_t> layer_dims, std::vector<double> params,
                             std::uint64_t seed = 0);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t layer_count() const { return dims_.size() - 1; }
  std::size_t parameter_count() const { return params_.size(); }
  std::uint64_t seed() const { return seed_; }

  /// Inputs enter the first layer as (x_i - shift_i) * scale_i. Identity by default.
  void set_input_affine(std::vector<double> shift, std::vector<double> scale);
  const std::vector<double>& input_shift() const { return shift_; }
  const std::vector<double>& input_scale() const { return scale_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + dims_[layer] * dims_[layer + 1];
  }
  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  double eval(std::span<const double> x) const;
  EvalJet eval_jet(std::span<const double> x) const;
  std::vector<double> eval_batch(const Points& points) const;
  std::vector<EvalJet> eval_jet_batch(const Points& points) const;

 private:
  void validate_and_layout();

  std::vector<std::size_t> dims_;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
  std::vector<double> shift_;
  std::vector<double> scale_;
  std::uint64_t seed_ = 0;
};

std::size_t parameter_count(std::span<const std::size_t> layer_dims);

/// One term of a composite loss: weight * mean_i (op(h)(x_i) - target_i)^2.
struct ResidualTerm {
  std::string name;
  JetOperator op;
  const Points* points = nullptr;
  std::span<const double> targets;
  double weight = 1.0;
};

struct LossValue {
  double total = 0.0;
  std::vector<double> terms;  ///< unweighted means, aligned with the input terms
  std::vector<double> grad;   ///< empty when only the value was requested
};

/// Composite loss and its exact gradient with respect to every parameter.
/// Throws std::invalid_argument on empty/misaligned terms and
/// std::domain_error on a non-finite residual.
LossValue loss_param_grad(const Mlp& net, std::span<const ResidualTerm> terms);

/// Same loss without the reverse pass.
LossValue loss_value(const Mlp& net, std::span<const ResidualTerm> terms);

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace deepddm
