#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepddm/adam.hpp"
#include "deepddm/nn.hpp"
#include "deepddm/points.hpp"
#include "deepddm/problems.hpp"

namespace deepddm {

struct LossBreakdown {
  double m_omega = 0.0;
  double m_boundary = 0.0;
  double m_interface = 0.0;
  double m_fine = 0.0;  ///< unweighted; enters total as lambda_f * m_fine
  double total = 0.0;
  std::size_t epoch = 0;
};

/// How the loss-stabilization ratio (M_i - M_{i-eta}) / M_i is compared to tol_m.
enum class StopRule {
  as_printed,  ///< signed numerator: any decrease over the window stops training
  absolute,    ///< |M_i - M_{i-eta}| / M_i <= tol_m
};

struct TrainConfig {
  double tol_m = 1e-3;
  std::size_t eta = 10;
  std::size_t max_epochs = 1000;
  std::size_t batch_size = 64;
  double lr0 = 1e-2;
  double lr_decay = 0.95;
  StopRule stop_rule = StopRule::absolute;

  void validate() const;
};

/// Collocation points of one network with their fixed targets.
struct TrainingSet {
  JetOperator residual_op;
  JetOperator boundary_op;
  JetOperator transmission_op;

  Points interior{2};
  std::vector<double> interior_targets;  ///< f(x_f)
  Points boundary{2};
  std::vector<double> boundary_targets;  ///< g(x_g)
  Points interface{2};
  std::vector<double> interface_targets;  ///< W_s
  Points fine{2};
  std::vector<double> fine_targets;  ///< composite subdomain solution at coarse interior points
  double lambda_f = 0.0;
};

/// Interior and boundary terms for `problem`; interface and fine terms are left empty.
TrainingSet make_training_set(const PdeProblem& problem, Points interior, Points boundary,
                              const std::vector<Edge>& boundary_edges);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full-set losses: each term is the mean of squared residuals; absent terms are 0.
LossBreakdown compute_losses(const Mlp& net, const TrainingSet& set);

enum class StopReason { stabilized, max_epochs };

struct TrainResult {
  std::size_t epochs_run = 0;
  LossBreakdown initial;
  LossBreakdown final;
  StopReason stop_reason = StopReason::max_epochs;
  std::vector<LossBreakdown> history;  ///< one entry per epoch, initial state first
};

/// True when the stabilization criterion holds between losses `now` and `before`.
bool loss_stabilized(double now, double before, double tol, StopRule rule);

/**
 * @brief Adam over shuffled mini-batches until the loss stabilizes or max_epochs.
 *
 * Each epoch splits every active point set into ceil(N_interior / batch_size)
 * slices, one slice per set per batch. The learning rate of epoch e is
 * lr0 * lr_decay^e, counted from the start of this call; Adam moments are
 * whatever `adam` already holds. After epoch i >= eta the full-set loss M_i
 * is compared with M_{i-eta}. Throws TrainingError on a non-finite loss.
 */
TrainResult train_network(Mlp& net, AdamState& adam, const TrainingSet& set,
                          const TrainConfig& config, std::uint64_t seed);

/// One row per history entry: epoch, m_omega, m_boundary, m_interface, m_fine, total.
void write_loss_history_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& history);

/// Network plus its optimizer state: {"network": ..., "adam": ...}.
nlohmann::json checkpoint_to_json(const Mlp& net, const AdamState& adam);
void checkpoint_from_json(const nlohmann::json& j, Mlp& net, AdamState& adam);

}  // namespace deepddm
