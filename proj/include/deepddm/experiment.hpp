#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepddm/ddm.hpp"

namespace deepddm {

enum class ExperimentKind {
  strong_poisson,
  weak_poisson,
  coarse_influence,
  heat_flow,
  heat_strong,
  single_pinn,
  custom,
};

std::string_view experiment_name(ExperimentKind k);
ExperimentKind experiment_from_name(std::string_view name);

/// Rejected configuration; raised before any compute starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DecompositionSpec {
  std::size_t nx = 1;
  std::size_t ny = 1;

  std::string label() const;  ///< "3x3"
  static DecompositionSpec parse(const std::string& text);
  bool operator==(const DecompositionSpec&) const = default;
};

/// Mini-batch size: a fixed count, or half the interior points of the network.
struct BatchSpec {
  std::size_t size = 64;
  bool half_interior = false;

  std::size_t resolve(std::size_t interior) const;
};

/// Fine sampling and training. Point counts are either totals over the
/// domain (N_f, N_g, N_Gamma) or per subdomain (N_fs, N_gs, N_Gamma_s);
/// exactly one group is set.
struct FineSettings {
  std::optional<std::size_t> n_f, n_g, n_gamma;
  std::optional<std::size_t> n_fs, n_gs, n_gamma_s;
  std::vector<std::size_t> hidden{20};
  double tol_m = 1e-3;
  std::size_t eta = 10;
  std::size_t max_epochs = 300;
  BatchSpec m_s;
  double lr0 = 1e-2;
  double lr_decay = 0.95;
  StopRule stop_rule = StopRule::absolute;
};

/// One two-level run of a coarse-influence sweep.
struct CoarseVariant {
  std::string label;
  double tol_m_coarse = 1e-3;
  LambdaSchedule lambda_c;
};

struct CoarseSettings {
  std::size_t n_f_coarse = 144;
  std::size_t n_g_coarse = 4;
  double tol_m_coarse = 1e-3;
  BatchSpec m_s_coarse{144, false};
  std::vector<std::size_t> hidden{10};
  std::size_t max_epochs = 300;
  LambdaSchedule lambda_c;
  double lambda_f = 0.05;
  std::vector<CoarseVariant> variants;
};

struct OuterSettings {
  std::size_t max_iterations = 50;
  double tol = 1e-2;
  bool convergence_tests = true;
  std::optional<double> stop_at_error;
};

struct HeatSettings {
  double alpha = 4.0;
  Gaussian initial;
  std::size_t fd_nx = 100;
  std::size_t fd_nt = 240;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::custom;
  bool paper_scale = false;
  std::string problem = "poisson_sin2x";
  std::vector<DecompositionSpec> decompositions;
  std::vector<DdmMode> modes;
  double delta = 0.2;
  FineSettings fine;
  CoarseSettings coarse;
  OuterSettings outer;
  AdamConfig adam;
  double error_target = 0.05;
  std::vector<std::uint64_t> seeds{1};
  std::size_t test_points = 10000;  ///< Poisson test grid; heat uses the FD nodes
  HeatSettings heat;
  std::string output_dir;
  std::size_t workers = 0;
  bool reset_adam_each_iteration = false;
  bool zero_initial_interfaces = false;
  bool normalize_inputs = true;

  void validate() const;
};

/// Defaults of `kind` for `problem` at desk or paper scale. An empty
/// problem selects the experiment's own problem.
ExperimentConfig experiment_defaults(ExperimentKind kind, bool paper_scale, const std::string& problem = "");

/**
 * @brief Resolves a user config against the defaults.
 *
 * "experiment" is required; "scale" ("desk" or "paper") and "problem" pick
 * the defaults, which the remaining keys then override (objects merge, arrays
 * and scalars replace, null removes an optional). Unknown keys are errors.
 * `paper_scale` overrides the file's "scale" when set.
 */
ExperimentConfig parse_experiment_config(const nlohmann::json& j, std::optional<bool> paper_scale = std::nullopt);
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<bool> paper_scale = std::nullopt);
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);

/// One solver run of an experiment.
struct RunSpec {
  std::string label;
  DecompositionSpec decomposition;
  DdmMode mode = DdmMode::one_level;
  std::string variant;  ///< coarse variant label, empty if none
  std::uint64_t seed = 0;
};

std::vector<RunSpec> plan_runs(const ExperimentConfig& c);

/// Solver settings of one run. Totals are split evenly over subdomains and
/// interface edges (rounded to nearest).
DdmConfig make_ddm_config(const ExperimentConfig& c, const RunSpec& run, const Decomposition& dec);
PdeProblem make_problem(const ExperimentConfig& c);
/// Analytic values on the test grid, or the FD nodes for heat problems.
ErrorReference make_reference(const ExperimentConfig& c, const PdeProblem& problem);
/// One solver run without writing artifacts.
OuterTrace run_single(const ExperimentConfig& c, const RunSpec& run, const PdeProblem& problem,
                      const ErrorReference& reference);

struct SummaryRow {
  std::string label;
  std::optional<std::size_t> iterations_to_target;  ///< 1-indexed
  double final_error = 0.0;
  std::size_t total_epochs = 0;
  double wall_seconds = 0.0;
};

/// One row per trace, input order preserved.
std::vector<SummaryRow> emit_summary(const std::vector<OuterTrace>& traces, double target);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
nlohmann::json summary_to_json(const std::vector<SummaryRow>& rows, double target);

/// Reads a trace written by OuterTrace::to_json (.json) or write_csv (.csv).
OuterTrace read_trace(const std::filesystem::path& path);
OuterTrace trace_from_json(const nlohmann::json& j);

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<OuterTrace> traces;
  std::vector<SummaryRow> summary;
};

/**
 * @brief Runs every planned run in order and writes the artifact bundle.
 *
 * Layout under the output directory: manifest.json (resolved config and
 * per-run status, rewritten after every run), traces/<label>.csv|json,
 * summary.csv, summary.json, plot_data/error_vs_iteration.csv and, for heat
 * problems, plot_data/subdomain_errors.csv and plot_data/fd_reference.csv.
 * A failing run is recorded in the manifest and raised as ExperimentError
 * after the completed runs' artifacts are written.
 */
ExperimentResult run_experiment(const ExperimentConfig& c);

/// Output directory: DEEPDDM_OUTPUT_DIR if set, else the config's, else "out/<experiment>".
std::filesystem::path resolve_output_dir(const ExperimentConfig& c);

}  // namespace deepddm
