#include "deepddm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <type_traits>

#include "deepddm/csv.hpp"

namespace deepddm {

using nlohmann::json;

namespace {

constexpr std::string_view kExperimentNames[] = {"strong_poisson", "weak_poisson", "coarse_influence",
                                                 "heat_flow",      "heat_strong",  "single_pinn",
                                                 "custom"};

std::vector<DecompositionSpec> decomps(std::initializer_list<const char*> labels) {
  std::vector<DecompositionSpec> out;
  for (const char* l : labels) out.push_back(DecompositionSpec::parse(l));
  return out;
}

// Strict object reader: every key must be consumed, type errors name the key.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  template <class T>
  T get(const std::string& key) {
    if (!has(key)) throw ConfigError("missing key " + where(key));
    if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      check_count(obj_.at(key), key);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (obj_.at(key).is_array())
        for (const auto& v : obj_.at(key)) check_count(v, key);
    }
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("wrong type for " + where(key));
    }
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  const json& raw(const std::string& key) {
    if (!has(key)) throw ConfigError("missing key " + where(key));
    return obj_.at(key);
  }

  void check_count(const json& v, const std::string& key) const {
    // get<size_t> would silently wrap negatives and truncate fractions
    if (!v.is_number_unsigned() && (!v.is_number_integer() || v.get<std::int64_t>() < 0))
      throw ConfigError(where(key) + " must be a non-negative integer");
  }

  std::string where(const std::string& key = "") const {
    return path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + where(k));
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json batch_to_json(const BatchSpec& b, const char* half_name) {
  return b.half_interior ? json(half_name) : json(b.size);
}

BatchSpec batch_from_json(const json& v, const std::string& half_name, const std::string& key) {
  if (v.is_string()) {
    if (v.get<std::string>() != half_name) throw ConfigError(key + " must be an integer or \"" + half_name + "\"");
    return {0, true};
  }
  if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
    throw ConfigError(key + " must be a positive integer or \"" + half_name + "\"");
  return {v.get<std::size_t>(), false};
}

json schedule_to_json(const LambdaSchedule& s) {
  return {{"initial", s.initial}, {"decay", s.decay}, {"constant", s.constant}};
}

LambdaSchedule schedule_from_json(const json& v, const std::string& path) {
  Reader r(v, path);
  LambdaSchedule s;
  s.initial = r.get<double>("initial");
  s.decay = r.get<double>("decay");
  s.constant = r.get<bool>("constant");
  r.finish();
  return s;
}

std::string_view stop_rule_name(StopRule r) { return r == StopRule::absolute ? "absolute" : "as_printed"; }

StopRule stop_rule_from_name(const std::string& n) {
  if (n == "absolute") return StopRule::absolute;
  if (n == "as_printed") return StopRule::as_printed;
  throw ConfigError("fine.stop_rule must be \"absolute\" or \"as_printed\"");
}

std::size_t round_div(std::size_t total, std::size_t parts) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(total) / static_cast<double>(parts)));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_hidden(const std::vector<std::size_t>& h, const std::string& key) {
  require(!h.empty(), key + " needs at least one hidden layer");
  for (auto w : h) require(w >= 1, key + " widths must be >= 1");
}

void check_schedule(const LambdaSchedule& s, const std::string& key) {
  require(s.initial >= 0.0 && s.initial <= 1.0, key + ".initial must be in [0,1]");
  require(s.decay >= 0.0 && s.decay <= 1.0, key + ".decay must be in [0,1]");
}

LossBreakdown breakdown_from_json(const json& j) {
  LossBreakdown b;
  b.m_omega = j.value("m_omega", 0.0);
  b.m_boundary = j.value("m_boundary", 0.0);
  b.m_interface = j.value("m_interface", 0.0);
  b.m_fine = j.value("m_fine", 0.0);
  b.total = j.value("total", 0.0);
  b.epoch = j.value("epoch", std::size_t{0});
  return b;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

std::string_view experiment_name(ExperimentKind k) { return kExperimentNames[static_cast<std::size_t>(k)]; }

ExperimentKind experiment_from_name(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kExperimentNames); ++i)
    if (kExperimentNames[i] == name) return static_cast<ExperimentKind>(i);
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string DecompositionSpec::label() const { return std::to_string(nx) + "x" + std::to_string(ny); }

DecompositionSpec DecompositionSpec::parse(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos || x == 0 || x + 1 == text.size()) throw std::invalid_argument("");
    std::size_t used = 0;
    DecompositionSpec d;
    d.nx = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("");
    d.ny = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1 || d.nx == 0 || d.ny == 0) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("decomposition must look like \"3x3\", got \"" + text + "\"");
  }
}

std::size_t BatchSpec::resolve(std::size_t interior) const {
  return half_interior ? std::max<std::size_t>(1, interior / 2) : size;
}

ExperimentConfig experiment_defaults(ExperimentKind kind, bool paper, const std::string& problem_in) {
  ExperimentConfig c;
  c.experiment = kind;
  c.paper_scale = paper;
  c.test_points = paper ? 4'000'000 : 10'000;
  c.fine.max_epochs = paper ? 5000 : 300;
  c.coarse.max_epochs = paper ? 5000 : 300;
  c.outer.max_iterations = paper ? 100 : 50;
  c.fine.lr_decay = paper ? 0.99 : 0.97;
  // Scalability studies are read off error-vs-iteration curves.
  c.outer.convergence_tests = false;

  std::string problem = problem_in;
  switch (kind) {
    case ExperimentKind::strong_poisson:
    case ExperimentKind::custom:
      if (problem.empty()) problem = "poisson_sin2x";
      break;
    case ExperimentKind::single_pinn:
      if (problem.empty()) problem = "poisson_sin2x";
      break;
    case ExperimentKind::weak_poisson:
    case ExperimentKind::coarse_influence:
      if (problem.empty()) problem = "poisson_sin2pix";
      break;
    case ExperimentKind::heat_flow:
    case ExperimentKind::heat_strong:
      if (problem.empty()) problem = "heat";
      break;
  }
  c.problem = problem;
  const bool heat = problem == "heat";

  switch (kind) {
    case ExperimentKind::strong_poisson:
    case ExperimentKind::custom:
      if (problem == "poisson_sin2pix") {
        // Both methods on the 2pi problem with fixed totals.
        c.modes = {DdmMode::one_level, DdmMode::two_level};
        c.decompositions = paper ? decomps({"2x2", "3x3", "4x4", "5x5"}) : decomps({"2x2", "3x3", "4x4"});
        c.fine.n_f = paper ? 5000 : 1250;
        c.fine.n_g = paper ? 400 : 100;
        c.fine.n_gamma = paper ? 400 : 100;
        c.fine.m_s = {0, true};
        c.coarse.n_f_coarse = paper ? 400 : 100;
        c.coarse.n_g_coarse = 5;
        c.coarse.m_s_coarse = {paper ? std::size_t{400} : std::size_t{100}, false};
      } else {
        c.modes = {DdmMode::one_level};
        c.decompositions = paper ? decomps({"2x2", "3x3", "4x4", "5x5"}) : decomps({"2x2", "3x3", "4x4"});
        c.fine.n_f = paper ? 2500 : 1200;
        c.fine.n_g = paper ? 400 : 200;
        c.fine.n_gamma = paper ? 400 : 200;
        c.fine.hidden = paper ? std::vector<std::size_t>{20, 20, 20} : std::vector<std::size_t>{20};
      }
      break;
    case ExperimentKind::weak_poisson:
      c.modes = {DdmMode::one_level, DdmMode::two_level};
      c.decompositions = paper ? decomps({"3x3", "4x4", "5x5", "7x7"}) : decomps({"3x3", "4x4"});
      c.fine.n_fs = 144;
      c.fine.n_gs = 3;
      c.fine.n_gamma_s = 3;
      c.coarse.n_f_coarse = 144;
      c.coarse.n_g_coarse = 4;
      c.coarse.m_s_coarse = {144, false};
      break;
    case ExperimentKind::coarse_influence:
      c.modes = {DdmMode::one_level, DdmMode::two_level};
      c.decompositions = decomps({"4x4"});
      c.fine.n_f = 1000;
      c.fine.n_g = 80;
      c.fine.n_gamma = 80;
      c.coarse.n_f_coarse = 200;
      c.coarse.n_g_coarse = 10;
      c.coarse.m_s_coarse = {200, false};
      c.coarse.variants = {{"tol1e-3", 1e-3, {}}, {"tol1e-4", 1e-4, {}}, {"const0.5", 1e-3, {0.5, 1.0, true}}};
      break;
    case ExperimentKind::heat_flow:
    case ExperimentKind::heat_strong:
      c.modes = {DdmMode::one_level, DdmMode::two_level};
      c.decompositions = kind == ExperimentKind::heat_flow ? decomps({"1x3"})
                         : paper                           ? decomps({"1x2", "1x3", "1x4", "1x5"})
                                                           : decomps({"1x2", "1x3", "1x4"});
      c.delta = 0.05;
      c.fine.n_f = 1000;
      c.fine.n_g = 200;
      c.fine.n_gamma = 200;
      c.fine.m_s = {0, true};
      c.coarse.n_f_coarse = 60;
      c.coarse.n_g_coarse = 6;
      c.coarse.m_s_coarse = {60, false};
      c.fine.tol_m = 1e-3;
      c.fine.lr_decay = 0.99;
      c.coarse.max_epochs = paper ? 5000 : 1000;
      c.fine.max_epochs = paper ? 5000 : 1000;
      break;
    case ExperimentKind::single_pinn:
      c.modes = {DdmMode::one_level};
      c.decompositions = decomps({"1x1"});
      c.fine.n_f = 2500;
      c.fine.n_g = 400;
      c.fine.n_gamma = 0;
      c.fine.hidden = {20, 20, 20};
      c.fine.max_epochs = 5000;
      c.fine.lr_decay = 0.99;
      c.outer.max_iterations = 1;
      break;
  }
  if (heat) c.test_points = c.heat.fd_nx * c.heat.fd_nt;
  return c;
}

void ExperimentConfig::validate() const {
  require(problem == "poisson_sin2x" || problem == "poisson_sin2pix" || problem == "heat",
          "problem must be poisson_sin2x, poisson_sin2pix or heat");
  require(!decompositions.empty(), "decompositions must not be empty");
  require(!modes.empty(), "modes must not be empty");
  for (std::size_t i = 0; i < modes.size(); ++i)
    for (std::size_t j = i + 1; j < modes.size(); ++j) require(modes[i] != modes[j], "modes must be distinct");
  require(delta > 0.0 && std::isfinite(delta), "delta must be positive");

  const bool totals = fine.n_f || fine.n_g || fine.n_gamma;
  const bool per_sub = fine.n_fs || fine.n_gs || fine.n_gamma_s;
  require(totals != per_sub,
          "fine point counts: set either N_f/N_g/N_Gamma or N_fs/N_gs/N_Gamma_s (null out the other group)");
  if (totals) {
    require(fine.n_f && fine.n_g && fine.n_gamma, "fine: N_f, N_g and N_Gamma must all be set");
    require(*fine.n_f >= 1, "fine.N_f must be >= 1");
  } else {
    require(fine.n_fs && fine.n_gs && fine.n_gamma_s, "fine: N_fs, N_gs and N_Gamma_s must all be set");
    require(*fine.n_fs >= 1, "fine.N_fs must be >= 1");
  }
  check_hidden(fine.hidden, "fine.hidden");
  require(fine.tol_m > 0.0, "fine.tol_m must be positive");
  require(fine.eta >= 1, "fine.eta must be >= 1");
  require(fine.m_s.half_interior || fine.m_s.size >= 1, "fine.M_s must be >= 1");
  require(fine.lr0 > 0.0 && std::isfinite(fine.lr0), "fine.lr0 must be positive");
  require(fine.lr_decay > 0.0 && fine.lr_decay <= 1.0, "fine.lr_decay must be in (0,1]");

  const bool two_level = std::find(modes.begin(), modes.end(), DdmMode::two_level) != modes.end();
  if (two_level) {
    require(coarse.n_f_coarse >= 1, "coarse.N_f_coarse must be >= 1");
    check_hidden(coarse.hidden, "coarse.hidden");
  }
  require(coarse.tol_m_coarse > 0.0, "coarse.tol_m_coarse must be positive");
  require(coarse.m_s_coarse.half_interior || coarse.m_s_coarse.size >= 1, "coarse.M_s_coarse must be >= 1");
  check_schedule(coarse.lambda_c, "coarse.lambda_c");
  require(coarse.lambda_f >= 0.0 && std::isfinite(coarse.lambda_f), "coarse.lambda_f must be >= 0");
  std::set<std::string> labels;
  for (const auto& v : coarse.variants) {
    require(!v.label.empty() && labels.insert(v.label).second, "coarse.variants labels must be unique and non-empty");
    require(v.tol_m_coarse > 0.0, "coarse.variants tol_m_coarse must be positive");
    check_schedule(v.lambda_c, "coarse.variants.lambda_c");
  }

  require(outer.max_iterations >= 1, "outer.max_iterations must be >= 1");
  require(outer.tol > 0.0, "outer.tol must be positive");
  require(!outer.stop_at_error || *outer.stop_at_error > 0.0, "outer.stop_at_error must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
          "adam betas must be in [0,1)");
  require(adam.eps > 0.0, "adam.eps must be positive");
  require(error_target > 0.0, "error_target must be positive");
  require(!seeds.empty(), "seeds must not be empty");
  require(test_points >= 4, "test_points must be >= 4");
  require(heat.alpha > 0.0 && heat.initial.width > 0.0, "heat.alpha and heat.gaussian.width must be positive");
  require(heat.fd_nx >= 3 && heat.fd_nt >= 1, "heat.fd_nx >= 3 and heat.fd_nt >= 1 required");
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = experiment_name(c.experiment);
  j["scale"] = c.paper_scale ? "paper" : "desk";
  j["problem"] = c.problem;
  for (const auto& d : c.decompositions) j["decompositions"].push_back(d.label());
  for (auto m : c.modes) j["modes"].push_back(mode_name(m));
  j["delta"] = c.delta;

  json f;
  auto put = [&f](const char* k, const std::optional<std::size_t>& v) {
    if (v) f[k] = *v;
  };
  put("N_f", c.fine.n_f);
  put("N_g", c.fine.n_g);
  put("N_Gamma", c.fine.n_gamma);
  put("N_fs", c.fine.n_fs);
  put("N_gs", c.fine.n_gs);
  put("N_Gamma_s", c.fine.n_gamma_s);
  f["hidden"] = c.fine.hidden;
  f["tol_m"] = c.fine.tol_m;
  f["eta"] = c.fine.eta;
  f["max_epochs"] = c.fine.max_epochs;
  f["M_s"] = batch_to_json(c.fine.m_s, "N_fs/2");
  f["lr0"] = c.fine.lr0;
  f["lr_decay"] = c.fine.lr_decay;
  f["stop_rule"] = stop_rule_name(c.fine.stop_rule);
  j["fine"] = std::move(f);

  json co;
  co["N_f_coarse"] = c.coarse.n_f_coarse;
  co["N_g_coarse"] = c.coarse.n_g_coarse;
  co["tol_m_coarse"] = c.coarse.tol_m_coarse;
  co["M_s_coarse"] = batch_to_json(c.coarse.m_s_coarse, "N_f_coarse/2");
  co["hidden"] = c.coarse.hidden;
  co["max_epochs"] = c.coarse.max_epochs;
  co["lambda_c"] = schedule_to_json(c.coarse.lambda_c);
  co["lambda_f"] = c.coarse.lambda_f;
  co["variants"] = json::array();
  for (const auto& v : c.coarse.variants)
    co["variants"].push_back(
        {{"label", v.label}, {"tol_m_coarse", v.tol_m_coarse}, {"lambda_c", schedule_to_json(v.lambda_c)}});
  j["coarse"] = std::move(co);

  json o{{"max_iterations", c.outer.max_iterations},
         {"tol", c.outer.tol},
         {"convergence_tests", c.outer.convergence_tests}};
  if (c.outer.stop_at_error) o["stop_at_error"] = *c.outer.stop_at_error;
  j["outer"] = std::move(o);
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  j["error_target"] = c.error_target;
  j["seeds"] = c.seeds;
  j["test_points"] = c.test_points;
  j["heat"] = {{"alpha", c.heat.alpha},
               {"gaussian",
                {{"center", c.heat.initial.center},
                 {"width", c.heat.initial.width},
                 {"amplitude", c.heat.initial.amplitude}}},
               {"fd_nx", c.heat.fd_nx},
               {"fd_nt", c.heat.fd_nt}};
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["reset_adam_each_iteration"] = c.reset_adam_each_iteration;
  j["zero_initial_interfaces"] = c.zero_initial_interfaces;
  j["normalize_inputs"] = c.normalize_inputs;
  return j;
}

ExperimentConfig parse_experiment_config(const json& user, std::optional<bool> paper_scale) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  if (!user.contains("experiment") || !user.at("experiment").is_string())
    throw ConfigError("config needs a string \"experiment\"");
  const auto kind = experiment_from_name(user.at("experiment").get<std::string>());
  bool paper = false;
  if (user.contains("scale")) {
    if (!user.at("scale").is_string()) throw ConfigError("scale must be \"desk\" or \"paper\"");
    const auto s = user.at("scale").get<std::string>();
    if (s != "desk" && s != "paper") throw ConfigError("scale must be \"desk\" or \"paper\"");
    paper = s == "paper";
  }
  if (paper_scale) paper = *paper_scale;
  std::string problem;
  if (user.contains("problem")) {
    if (!user.at("problem").is_string()) throw ConfigError("problem must be a string");
    problem = user.at("problem").get<std::string>();
  }

  json merged = experiment_config_to_json(experiment_defaults(kind, paper, problem));
  merged.merge_patch(user);
  merged["scale"] = paper ? "paper" : "desk";

  ExperimentConfig c;
  Reader r(merged, "");
  c.experiment = experiment_from_name(r.get<std::string>("experiment"));
  c.paper_scale = r.get<std::string>("scale") == "paper";
  c.problem = r.get<std::string>("problem");
  c.decompositions.clear();
  for (const auto& d : r.get<std::vector<std::string>>("decompositions"))
    c.decompositions.push_back(DecompositionSpec::parse(d));
  c.modes.clear();
  for (const auto& m : r.get<std::vector<std::string>>("modes")) {
    try {
      c.modes.push_back(mode_from_name(m));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  c.delta = r.get<double>("delta");

  {
    Reader f(r.raw("fine"), "fine");
    c.fine.n_f = f.opt<std::size_t>("N_f");
    c.fine.n_g = f.opt<std::size_t>("N_g");
    c.fine.n_gamma = f.opt<std::size_t>("N_Gamma");
    c.fine.n_fs = f.opt<std::size_t>("N_fs");
    c.fine.n_gs = f.opt<std::size_t>("N_gs");
    c.fine.n_gamma_s = f.opt<std::size_t>("N_Gamma_s");
    c.fine.hidden = f.get<std::vector<std::size_t>>("hidden");
    c.fine.tol_m = f.get<double>("tol_m");
    c.fine.eta = f.get<std::size_t>("eta");
    c.fine.max_epochs = f.get<std::size_t>("max_epochs");
    c.fine.m_s = batch_from_json(f.raw("M_s"), "N_fs/2", "fine.M_s");
    c.fine.lr0 = f.get<double>("lr0");
    c.fine.lr_decay = f.get<double>("lr_decay");
    c.fine.stop_rule = stop_rule_from_name(f.get<std::string>("stop_rule"));
    f.finish();
  }
  {
    Reader co(r.raw("coarse"), "coarse");
    c.coarse.n_f_coarse = co.get<std::size_t>("N_f_coarse");
    c.coarse.n_g_coarse = co.get<std::size_t>("N_g_coarse");
    c.coarse.tol_m_coarse = co.get<double>("tol_m_coarse");
    c.coarse.m_s_coarse = batch_from_json(co.raw("M_s_coarse"), "N_f_coarse/2", "coarse.M_s_coarse");
    c.coarse.hidden = co.get<std::vector<std::size_t>>("hidden");
    c.coarse.max_epochs = co.get<std::size_t>("max_epochs");
    c.coarse.lambda_c = schedule_from_json(co.raw("lambda_c"), "coarse.lambda_c");
    c.coarse.lambda_f = co.get<double>("lambda_f");
    c.coarse.variants.clear();
    if (co.has("variants")) {
      const auto& arr = co.raw("variants");
      if (!arr.is_array()) throw ConfigError("coarse.variants must be an array");
      for (const auto& v : arr) {
        Reader vr(v, "coarse.variants[]");
        CoarseVariant cv;
        cv.label = vr.get<std::string>("label");
        cv.tol_m_coarse = vr.opt<double>("tol_m_coarse").value_or(c.coarse.tol_m_coarse);
        cv.lambda_c = vr.has("lambda_c") ? schedule_from_json(vr.raw("lambda_c"), "coarse.variants[].lambda_c")
                                         : c.coarse.lambda_c;
        vr.finish();
        c.coarse.variants.push_back(std::move(cv));
      }
    }
    co.finish();
  }
  {
    Reader o(r.raw("outer"), "outer");
    c.outer.max_iterations = o.get<std::size_t>("max_iterations");
    c.outer.tol = o.get<double>("tol");
    c.outer.convergence_tests = o.get<bool>("convergence_tests");
    c.outer.stop_at_error = o.opt<double>("stop_at_error");
    o.finish();
  }
  {
    Reader a(r.raw("adam"), "adam");
    c.adam.beta1 = a.get<double>("beta1");
    c.adam.beta2 = a.get<double>("beta2");
    c.adam.eps = a.get<double>("eps");
    a.finish();
  }
  c.error_target = r.get<double>("error_target");
  c.seeds = r.get<std::vector<std::uint64_t>>("seeds");
  c.test_points = r.get<std::size_t>("test_points");
  {
    Reader h(r.raw("heat"), "heat");
    c.heat.alpha = h.get<double>("alpha");
    Reader g(h.raw("gaussian"), "heat.gaussian");
    c.heat.initial.center = g.get<double>("center");
    c.heat.initial.width = g.get<double>("width");
    c.heat.initial.amplitude = g.get<double>("amplitude");
    g.finish();
    c.heat.fd_nx = h.get<std::size_t>("fd_nx");
    c.heat.fd_nt = h.get<std::size_t>("fd_nt");
    h.finish();
  }
  c.output_dir = r.get<std::string>("output_dir");
  c.workers = r.get<std::size_t>("workers");
  c.reset_adam_each_iteration = r.get<bool>("reset_adam_each_iteration");
  c.zero_initial_interfaces = r.get<bool>("zero_initial_interfaces");
  c.normalize_inputs = r.get<bool>("normalize_inputs");
  r.finish();

  c.adam.lr0 = c.fine.lr0;
  c.adam.lr_decay = c.fine.lr_decay;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::optional<bool> paper_scale) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j, paper_scale);
}

std::vector<RunSpec> plan_runs(const ExperimentConfig& c) {
  std::vector<RunSpec> runs;
  for (const auto& d : c.decompositions)
    for (auto seed : c.seeds)
      for (auto mode : c.modes) {
        const std::string base = std::string(experiment_name(c.experiment)) + "_" + d.label() + "_" +
                                 std::string(mode_name(mode));
        if (mode == DdmMode::two_level && !c.coarse.variants.empty()) {
          for (const auto& v : c.coarse.variants)
            runs.push_back({base + "_" + v.label + "_s" + std::to_string(seed), d, mode, v.label, seed});
        } else {
          runs.push_back({base + "_s" + std::to_string(seed), d, mode, "", seed});
        }
      }
  return runs;
}

PdeProblem make_problem(const ExperimentConfig& c) {
  if (c.problem == "heat") return heat_problem(c.heat.initial, c.heat.alpha);
  return problem_from_name(c.problem);
}

DdmConfig make_ddm_config(const ExperimentConfig& c, const RunSpec& run, const Decomposition& dec) {
  DdmConfig d;
  d.mode = run.mode;
  d.seed = run.seed;
  d.outer_max = c.outer.max_iterations;
  d.outer_tol = c.outer.tol;
  d.convergence_tests = c.outer.convergence_tests;
  d.stop_at_error = c.outer.stop_at_error;

  const std::size_t S = dec.size();
  const std::size_t edges = dec.interfaces().size();
  if (c.fine.n_fs) {
    d.fine_counts = {*c.fine.n_fs, *c.fine.n_gs, *c.fine.n_gamma_s};
  } else {
    d.fine_counts.interior = std::max<std::size_t>(1, round_div(*c.fine.n_f, S));
    d.fine_counts.boundary = round_div(*c.fine.n_g, S);
    d.fine_counts.interface =
        edges == 0 || *c.fine.n_gamma == 0 ? 0 : std::max<std::size_t>(1, round_div(*c.fine.n_gamma, edges));
  }
  d.coarse_counts = {c.coarse.n_f_coarse, c.coarse.n_g_coarse};
  d.fine_hidden = c.fine.hidden;
  d.coarse_hidden = c.coarse.hidden;

  TrainConfig fine;
  fine.tol_m = c.fine.tol_m;
  fine.eta = c.fine.eta;
  fine.max_epochs = c.fine.max_epochs;
  fine.batch_size = c.fine.m_s.resolve(d.fine_counts.interior);
  fine.lr0 = c.fine.lr0;
  fine.lr_decay = c.fine.lr_decay;
  fine.stop_rule = c.fine.stop_rule;
  d.fine = fine;

  TrainConfig coarse = fine;
  coarse.tol_m = c.coarse.tol_m_coarse;
  coarse.max_epochs = c.coarse.max_epochs;
  coarse.batch_size = c.coarse.m_s_coarse.resolve(c.coarse.n_f_coarse);
  d.lambda_c = c.coarse.lambda_c;
  for (const auto& v : c.coarse.variants)
    if (v.label == run.variant) {
      coarse.tol_m = v.tol_m_coarse;
      d.lambda_c = v.lambda_c;
    }
  d.coarse = coarse;
  d.lambda_f = c.coarse.lambda_f;
  d.adam = c.adam;
  d.adam.lr0 = c.fine.lr0;
  d.adam.lr_decay = c.fine.lr_decay;
  d.workers = c.workers;
  d.reset_adam_each_iteration = c.reset_adam_each_iteration;
  d.zero_initial_interfaces = c.zero_initial_interfaces;
  d.normalize_inputs = c.normalize_inputs;
  return d;
}

std::vector<SummaryRow> emit_summary(const std::vector<OuterTrace>& traces, double target) {
  std::vector<SummaryRow> rows;
  for (const auto& t : traces) {
    SummaryRow row;
    row.label = t.label;
    for (const auto& r : t.records) {
      if (!row.iterations_to_target && r.global_error <= target) row.iterations_to_target = r.iteration;
      for (auto e : r.subdomain_epochs) row.total_epochs += e;
      row.total_epochs += r.coarse_epochs;
      row.wall_seconds += r.wall_seconds;
    }
    row.final_error = t.records.empty() ? NAN : t.records.back().global_error;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  CsvWriter csv(path, {"label", "iterations_to_target", "final_error", "total_epochs"});
  for (const auto& r : rows)
    csv.row(r.label, r.iterations_to_target ? std::to_string(*r.iterations_to_target) : std::string("not reached"),
            r.final_error, r.total_epochs);
}

json summary_to_json(const std::vector<SummaryRow>& rows, double target) {
  json j;
  j["target"] = target;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    json e{{"label", r.label},
           {"final_error", r.final_error},
           {"total_epochs", r.total_epochs},
           {"wall_seconds", r.wall_seconds}};
    e["iterations_to_target"] = r.iterations_to_target ? json(*r.iterations_to_target) : json("not reached");
    j["rows"].push_back(std::move(e));
  }
  return j;
}

OuterTrace trace_from_json(const json& j) {
  OuterTrace t;
  t.label = j.value("label", "");
  t.mode = mode_from_name(j.value("mode", "one_level"));
  t.subdomains = j.value("subdomains", std::size_t{0});
  t.stop_reason = j.value("stop_reason", "");
  for (const auto& e : j.at("records")) {
    OuterRecord r;
    r.iteration = e.at("iteration").get<std::size_t>();
    r.global_error = e.at("global_error").get<double>();
    r.subdomain_errors = e.value("subdomain_errors", std::vector<double>{});
    r.subdomain_epochs = e.value("subdomain_epochs", std::vector<std::size_t>{});
    if (e.contains("subdomain_losses"))
      for (const auto& l : e.at("subdomain_losses")) r.subdomain_losses.push_back(breakdown_from_json(l));
    if (e.contains("coarse_loss")) r.coarse_loss = breakdown_from_json(e.at("coarse_loss"));
    if (e.contains("coarse_error")) r.coarse_error = e.at("coarse_error").get<double>();
    r.coarse_epochs = e.value("coarse_epochs", std::size_t{0});
    r.networks_converged = e.value("networks_converged", false);
    r.interfaces_converged = e.value("interfaces_converged", false);
    r.lambda_c = e.value("lambda_c", 0.0);
    r.wall_seconds = e.value("wall_seconds", 0.0);
    t.records.push_back(std::move(r));
  }
  return t;
}

OuterTrace read_trace(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace " + path.string());
    return trace_from_json(json::parse(in));
  }
  const CsvTable table = read_csv(path);
  OuterTrace t;
  t.label = path.stem().string();
  std::vector<std::size_t> error_cols;
  for (std::size_t i = 0; i < table.header.size(); ++i)
    if (table.header[i].rfind("error_s", 0) == 0) error_cols.push_back(i);
  t.subdomains = error_cols.size();
  const auto it = table.column("iteration");
  const auto ge = table.column("global_error");
  const auto fe = table.column("fine_epochs");
  const auto ce = table.column("coarse_epochs");
  const auto cerr = table.column("coarse_error");
  const auto lc = table.column("lambda_c");
  const auto nc = table.column("networks_converged");
  const auto ic = table.column("interfaces_converged");
  for (const auto& row : table.rows) {
    OuterRecord r;
    r.iteration = std::stoul(row.at(it));
    r.global_error = std::stod(row.at(ge));
    if (!row.at(cerr).empty()) r.coarse_error = std::stod(row.at(cerr));
    r.lambda_c = std::stod(row.at(lc));
    r.networks_converged = row.at(nc) == "1";
    r.interfaces_converged = row.at(ic) == "1";
    r.subdomain_epochs = {std::stoul(row.at(fe))};  // the CSV keeps only the sum
    r.coarse_epochs = std::stoul(row.at(ce));
    for (auto c : error_cols) r.subdomain_errors.push_back(std::stod(row.at(c)));
    t.records.push_back(std::move(r));
  }
  return t;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv("DEEPDDM_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  if (!c.output_dir.empty()) return c.output_dir;
  return std::filesystem::path("out") / std::string(experiment_name(c.experiment));
}

ErrorReference make_reference(const ExperimentConfig& c, const PdeProblem& problem) {
  if (c.problem == "heat") return fd_node_reference(fd_heat_solve(problem, c.heat.fd_nx, c.heat.fd_nt));
  return analytic_reference(problem, c.test_points);
}

OuterTrace run_single(const ExperimentConfig& c, const RunSpec& run, const PdeProblem& problem,
                      const ErrorReference& reference) {
  auto dec = Decomposition::build(problem.domain, run.decomposition.nx, run.decomposition.ny, c.delta);
  auto config = make_ddm_config(c, run, dec);
  DdmSolver solver(std::move(dec), problem, std::move(config), reference);
  return solver.run(run.label);
}

ExperimentResult run_experiment(const ExperimentConfig& c) {
  c.validate();
  const PdeProblem problem = make_problem(c);
  const auto runs = plan_runs(c);

  // Build every decomposition and solver config before any compute so a bad
  // combination (e.g. overlap too wide for a decomposition) fails early.
  std::vector<Decomposition> decs;
  for (const auto& run : runs) {
    try {
      decs.push_back(Decomposition::build(problem.domain, run.decomposition.nx, run.decomposition.ny, c.delta));
      make_ddm_config(c, run, decs.back()).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(run.label + ": " + e.what());
    }
  }

  ExperimentResult result;
  result.output_dir = resolve_output_dir(c);
  const auto& out = result.output_dir;
  std::filesystem::create_directories(out / "traces");
  std::filesystem::create_directories(out / "plot_data");

  const bool heat = c.problem == "heat";
  std::optional<FdSolution> fd;
  ErrorReference reference;
  if (heat) {
    fd = fd_heat_solve(problem, c.heat.fd_nx, c.heat.fd_nt);
    fd->write_csv(out / "plot_data" / "fd_reference.csv");
    reference = fd_node_reference(*fd);
  } else {
    reference = make_reference(c, problem);
  }

  json manifest;
  manifest["config"] = experiment_config_to_json(c);
  manifest["runs"] = json::array();
  for (const auto& run : runs)
    manifest["runs"].push_back({{"label", run.label},
                                {"decomposition", run.decomposition.label()},
                                {"mode", mode_name(run.mode)},
                                {"variant", run.variant},
                                {"seed", run.seed},
                                {"status", "pending"}});
  manifest["status"] = "running";
  write_json(out / "manifest.json", manifest);

  std::optional<std::string> failure;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    auto& entry = manifest["runs"][i];
    try {
      DdmSolver solver(decs[i], problem, make_ddm_config(c, run, decs[i]), reference);
      OuterTrace trace = solver.run(run.label);
      const auto csv_path = out / "traces" / (run.label + ".csv");
      const auto json_path = out / "traces" / (run.label + ".json");
      trace.write_csv(csv_path);
      write_json(json_path, trace.to_json());
      entry["status"] = "ok";
      entry["stop_reason"] = trace.stop_reason;
      entry["iterations"] = trace.records.size();
      entry["files"] = {std::filesystem::relative(csv_path, out).generic_string(),
                        std::filesystem::relative(json_path, out).generic_string()};
      result.traces.push_back(std::move(trace));
    } catch (const std::exception& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      failure = run.label + ": " + e.what();
    }
    write_json(out / "manifest.json", manifest);
    if (failure) break;
  }

  result.summary = emit_summary(result.traces, c.error_target);
  write_summary_csv(out / "summary.csv", result.summary);
  write_json(out / "summary.json", summary_to_json(result.summary, c.error_target));

  {
    CsvWriter curves(out / "plot_data" / "error_vs_iteration.csv", {"label", "iteration", "global_error"});
    for (const auto& t : result.traces)
      for (const auto& r : t.records) curves.row(t.label, r.iteration, r.global_error);
  }
  if (heat) {
    CsvWriter curves(out / "plot_data" / "subdomain_errors.csv", {"label", "iteration", "subdomain", "error"});
    for (const auto& t : result.traces)
      for (const auto& r : t.records)
        for (std::size_t s = 0; s < r.subdomain_errors.size(); ++s)
          curves.row(t.label, r.iteration, s, r.subdomain_errors[s]);
  }

  manifest["status"] = failure ? "failed" : "ok";
  write_json(out / "manifest.json", manifest);
  if (failure) throw ExperimentError(*failure);
  return result;
}

}  // namespace deepddm
