#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "deepddm/csv.hpp"
#include "deepddm/experiment.hpp"

namespace {

int fail(const char* type, const std::string& message, int code) {
  nlohmann::json j;
  j["error"] = {{"type", type}, {"message", message}};
  std::cout << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural overlapping Schwarz experiments (one-level and coarse-space two-level)."};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment config and write its artifact bundle");
  std::string config_path;
  bool paper_scale = false;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  run->add_option("config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_flag("--paper-scale", paper_scale, "use the full-size hyperparameters");
  run->add_option("--out", out_dir, "output directory (overrides DEEPDDM_OUTPUT_DIR and the config)");
  run->add_option("--seed", seed, "run a single seed instead of the config's list");

  auto* show = app.add_subcommand("show-config", "Print the resolved config without running it");
  std::string show_path;
  bool show_paper = false;
  show->add_option("config", show_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  show->add_flag("--paper-scale", show_paper, "use the full-size hyperparameters");

  auto* summarize = app.add_subcommand("summarize", "Iterations-to-target table for trace files");
  std::vector<std::string> traces;
  double target = 0.05;
  summarize->add_option("traces", traces, "trace files (.csv or .json)")->required()->check(CLI::ExistingFile);
  summarize->add_option("--target", target, "error level")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), 2);
  }

  try {
    if (*run) {
      auto config = deepddm::load_experiment_config(config_path, paper_scale ? std::optional<bool>(true) : std::nullopt);
      if (seed) config.seeds = {*seed};
      if (!out_dir.empty()) {
        config.output_dir = out_dir;
        ::unsetenv("DEEPDDM_OUTPUT_DIR");
      }
      const auto result = deepddm::run_experiment(config);
      nlohmann::json j;
      j["status"] = "ok";
      j["output_dir"] = result.output_dir.string();
      j["summary"] = deepddm::summary_to_json(result.summary, config.error_target);
      std::cout << j.dump(2) << std::endl;
    } else if (*show) {
      const auto config = deepddm::load_experiment_config(show_path, show_paper ? std::optional<bool>(true) : std::nullopt);
      std::cout << deepddm::experiment_config_to_json(config).dump(2) << std::endl;
    } else if (*summarize) {
      std::vector<deepddm::OuterTrace> loaded;
      for (const auto& t : traces) loaded.push_back(deepddm::read_trace(t));
      const auto rows = deepddm::emit_summary(loaded, target);
      std::cout << "label,iterations_to_target,final_error,total_epochs\n";
      for (const auto& r : rows)
        std::cout << r.label << ','
                  << (r.iterations_to_target ? std::to_string(*r.iterations_to_target) : "not reached") << ','
                  << deepddm::format_double(r.final_error) << ',' << r.total_epochs << '\n';
    }
  } catch (const deepddm::ConfigError& e) {
    return fail("config_error", e.what(), 2);
  } catch (const deepddm::ExperimentError& e) {
    return fail("run_failed", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("error", e.what(), 1);
  }
  return 0;
}
