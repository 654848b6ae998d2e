#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepddm/adam.hpp"
#include "deepddm/geometry.hpp"
#include "deepddm/nn.hpp"
#include "deepddm/pinn.hpp"
#include "deepddm/problems.hpp"

namespace deepddm {

enum class DdmMode { one_level, two_level };

std::string_view mode_name(DdmMode m);
DdmMode mode_from_name(std::string_view name);

/// lambda_c(k) = initial * decay^k, or `initial` for every k when constant.
struct LambdaSchedule {
  double initial = 0.9;
  double decay = 0.8;
  bool constant = false;

  bool operator==(const LambdaSchedule&) const = default;

  double at(std::size_t outer_iteration) const;
};

/// Per-subdomain sample sizes (N_fs, N_gs, N_Gamma_s).
struct FineCounts {
  std::size_t interior = 144;
  std::size_t boundary = 3;       ///< split over the subdomain's constrained physical edges
  std::size_t interface = 3;      ///< per artificial edge
};

/// Coarse sample sizes (N_f,coarse, N_g,coarse).
struct CoarseCounts {
  std::size_t interior = 144;
  std::size_t boundary = 4;       ///< split over the constrained global edges
};

struct DdmConfig {
  DdmMode mode = DdmMode::one_level;
  std::size_t outer_max = 50;
  double outer_tol = 1e-2;
  bool convergence_tests = true;          ///< stop on network/interface convergence
  std::optional<double> stop_at_error;    ///< stop once the global error reaches this level
  LambdaSchedule lambda_c;
  double lambda_f = 0.05;
  TrainConfig fine;
  TrainConfig coarse;
  AdamConfig adam;
  std::vector<std::size_t> fine_hidden{20};
  std::vector<std::size_t> coarse_hidden{10};
  FineCounts fine_counts;
  CoarseCounts coarse_counts;
  std::uint64_t seed = 0;
  bool reset_adam_each_iteration = false;
  bool zero_initial_interfaces = false;
  bool normalize_inputs = true;  ///< map each network's rectangle onto [-1, 1]^2
  std::size_t workers = 0;  ///< 0: hardware concurrency

  void validate() const;
};

/// Test points and the reference solution at them.
struct ErrorReference {
  Points points{2};
  std::vector<double> truth;
};

ErrorReference analytic_reference(const PdeProblem& problem, std::size_t n_total);
ErrorReference fd_reference(const FdSolution& fd, std::size_t n_total);
/// The FD nodes themselves at every time level after t = 0 (nx * nt points).
ErrorReference fd_node_reference(const FdSolution& fd);

struct OuterRecord {
  std::size_t iteration = 0;  ///< 1-indexed
  double global_error = 0.0;
  std::vector<double> subdomain_errors;
  std::vector<LossBreakdown> subdomain_losses;
  std::vector<std::size_t> subdomain_epochs;
  std::optional<LossBreakdown> coarse_loss;
  std::size_t coarse_epochs = 0;
  std::optional<double> coarse_error;
  bool networks_converged = false;
  bool interfaces_converged = false;
  double lambda_c = 0.0;
  double wall_seconds = 0.0;
};

struct OuterTrace {
  std::string label;
  DdmMode mode = DdmMode::one_level;
  std::size_t subdomains = 0;
  std::string stop_reason;
  std::vector<OuterRecord> records;

  std::vector<double> global_errors() const;
  std::vector<double> subdomain_error_series(std::size_t s) const;

  /// One row per outer iteration. Deterministic (no timing columns).
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
};

/// Per-subdomain predictions at interior points and donor predictions at
/// every interface's points, taken between outer iterations.
struct Snapshot {
  std::vector<std::vector<double>> interior;
  std::vector<std::vector<double>> interface;
};

struct ConvergenceFlags {
  bool networks = false;
  bool interfaces = false;
};

/// ALL-quantified relative-change tests between two snapshots. With no
/// previous snapshot both flags are false.
ConvergenceFlags outer_convergence_tests(const Snapshot* previous, const Snapshot& current, double tol);

/// Relative L2 change of `next` against `prev`; 0 when both vanish.
double relative_change(std::span<const double> next, std::span<const double> prev);

/**
 * @brief One-level and two-level neural Schwarz iterations on a decomposition.
 *
 * Each outer iteration trains every subdomain network against interface
 * targets frozen before the iteration began (fork-join), then in two-level
 * mode glues the subdomain networks with the partition of unity at the
 * coarse interior points and trains the coarse network, and finally
 * recomputes W = lambda_c * h_coarse + (1 - lambda_c) * h_donor on every
 * interface. Corner points covered by several donors use the donor average.
 */
class DdmSolver {
 public:
  DdmSolver(Decomposition dec, PdeProblem problem, DdmConfig config, ErrorReference reference);

  OuterTrace run(const std::string& label = "");

  /// Recompute every interface target from the current networks.
  void update_interfaces(double lambda_c);
  Snapshot snapshot() const;

  const Decomposition& decomposition() const { return dec_; }
  const DdmConfig& config() const { return config_; }
  std::span<const Mlp> networks() const { return nets_; }
  std::span<Mlp> networks() { return nets_; }
  const Mlp* coarse_network() const { return coarse_ ? &coarse_->net : nullptr; }
  Mlp* coarse_network() { return coarse_ ? &coarse_->net : nullptr; }
  const TrainingSet& training_set(std::size_t s) const { return subs_.at(s).set; }
  const TrainingSet* coarse_training_set() const { return coarse_ ? &coarse_->set : nullptr; }

  /// W values of interface k, aligned with interface_points(k).
  std::span<const double> interface_values(std::size_t k) const;
  const Points& interface_points(std::size_t k) const { return ifaces_.at(k).points; }

  double global_error() const;
  std::vector<double> subdomain_errors() const;

  /// Every network with its optimizer state, coarse last under "coarse".
  nlohmann::json checkpoint() const;

 private:
  struct InterfaceState {
    std::size_t owner = 0;
    std::size_t offset = 0;  // first index in the owner's interface set
    Points points{2};
    std::vector<std::vector<std::size_t>> donors;  // per point
  };
  struct SubdomainState {
    TrainingSet set;
    AdamState adam;
  };
  struct CoarseState {
    Mlp net;
    AdamState adam;
    TrainingSet set;
    CompositeEvaluator fine_eval;
  };

  std::vector<double> donor_values(const InterfaceState& itf) const;
  OuterRecord iterate(std::size_t k);

  Decomposition dec_;
  PdeProblem problem_;
  DdmConfig config_;
  ErrorReference reference_;
  std::vector<Mlp> nets_;
  std::vector<SubdomainState> subs_;
  std::vector<InterfaceState> ifaces_;
  std::optional<CoarseState> coarse_;
  CompositeEvaluator global_eval_;
  std::vector<std::vector<std::size_t>> reference_subsets_;
};

/// Seeds for the independent random streams of one run.
enum class Stream : std::uint64_t { interior = 1, boundary, interface, init, train };
std::uint64_t stream_seed(std::uint64_t base, std::size_t owner, Stream stream, std::size_t extra = 0);
inline constexpr std::size_t kCoarseOwner = std::size_t{1} << 20;

/// Splits `total` over parts proportional to `weights` (largest remainder).
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights);

}  // namespace deepddm
