#include "deepddm/pinn.hpp"

#include <cmath>
#include <numeric>

#include "deepddm/csv.hpp"
#include "deepddm/rng.hpp"

namespace deepddm {

namespace {

enum TermKind { kOmega, kBoundary, kInterface, kFine, kKinds };

struct TermSource {
  TermKind kind;
  const Points* points;
  const std::vector<double>* targets;
  const JetOperator* op;
  double weight;
};

std::vector<TermSource> active_terms(const TrainingSet& set, bool include_zero_weight) {
  std::vector<TermSource> out;
  if (!set.interior.empty())
    out.push_back({kOmega, &set.interior, &set.interior_targets, &set.residual_op, 1.0});
  if (!set.boundary.empty())
    out.push_back({kBoundary, &set.boundary, &set.boundary_targets, &set.boundary_op, 1.0});
  if (!set.interface.empty())
    out.push_back({kInterface, &set.interface, &set.interface_targets, &set.transmission_op, 1.0});
  if (!set.fine.empty() && (include_zero_weight || set.lambda_f != 0.0))
    out.push_back({kFine, &set.fine, &set.fine_targets, &set.transmission_op, set.lambda_f});
  return out;
}

const char* term_name(TermKind k) {
  switch (k) {
    case kOmega: return "M_omega";
    case kBoundary: return "M_boundary";
    case kInterface: return "M_interface";
    case kFine: return "M_fine";
    default: return "?";
  }
}

LossBreakdown to_breakdown(const std::vector<TermSource>& sources, const LossValue& v) {
  LossBreakdown b;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    switch (sources[k].kind) {
      case kOmega: b.m_omega = v.terms[k]; break;
      case kBoundary: b.m_boundary = v.terms[k]; break;
      case kInterface: b.m_interface = v.terms[k]; break;
      case kFine: b.m_fine = v.terms[k]; break;
      default: break;
    }
  }
  b.total = v.total;
  return b;
}

std::vector<ResidualTerm> full_terms(const std::vector<TermSource>& sources) {
  std::vector<ResidualTerm> terms;
  for (const auto& s : sources)
    terms.push_back({term_name(s.kind), *s.op, s.points, *s.targets, s.weight});
  return terms;
}

LossBreakdown full_loss(const Mlp& net, const std::vector<TermSource>& sources) {
  const auto terms = full_terms(sources);
  try {
    return to_breakdown(sources, loss_value(net, terms));
  } catch (const std::domain_error& e) {
    throw TrainingError(e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(tol_m > 0.0)) throw std::invalid_argument("TrainConfig: tol_m must be positive");
  if (eta < 1) throw std::invalid_argument("TrainConfig: eta must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw std::invalid_argument("TrainConfig: lr0 must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("TrainConfig: lr_decay must be in (0,1]");
}

TrainingSet make_training_set(const PdeProblem& problem, Points interior, Points boundary,
                              const std::vector<Edge>& boundary_edges) {
  if (boundary_edges.size() != boundary.size())
    throw std::invalid_argument("make_training_set: one edge tag per boundary point");
  TrainingSet set;
  set.residual_op = problem.residual_op;
  set.boundary_op = problem.boundary_op;
  set.transmission_op = problem.transmission_op;
  set.interior = std::move(interior);
  set.boundary = std::move(boundary);
  set.interior_targets.reserve(set.interior.size());
  for (std::size_t i = 0; i < set.interior.size(); ++i)
    set.interior_targets.push_back(problem.source(set.interior.at2(i)));
  set.boundary_targets.reserve(set.boundary.size());
  for (std::size_t i = 0; i < set.boundary.size(); ++i)
    set.boundary_targets.push_back(problem.boundary_data(set.boundary.at2(i), boundary_edges[i]));
  return set;
}

LossBreakdown compute_losses(const Mlp& net, const TrainingSet& set) {
  const auto sources = active_terms(set, true);
  if (sources.empty()) throw std::invalid_argument("compute_losses: training set is empty");
  return full_loss(net, sources);
}

bool loss_stabilized(double now, double before, double tol, StopRule rule) {
  if (now == 0.0) return true;
  double diff = now - before;
  if (rule == StopRule::absolute) diff = std::abs(diff);
  return diff / now <= tol;
}

TrainResult train_network(Mlp& net, AdamState& adam, const TrainingSet& set,
                          const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (adam.size() != net.parameter_count())
    throw std::invalid_argument("train_network: optimizer state does not match the network");
  const auto sources = active_terms(set, false);
  const auto report = active_terms(set, true);
  if (sources.empty()) throw std::invalid_argument("train_network: training set is empty");

  TrainResult result;
  result.initial = full_loss(net, report);
  result.history.push_back(result.initial);
  result.final = result.initial;
  if (config.max_epochs == 0) return result;

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> order(sources.size());
  for (std::size_t k = 0; k < sources.size(); ++k) {
    order[k].resize(sources[k].points->size());
    std::iota(order[k].begin(), order[k].end(), std::size_t{0});
  }
  std::size_t lead = sources.front().points->size();
  for (const auto& s : sources)
    if (s.kind == kOmega) lead = s.points->size();
  const std::size_t batches = std::max<std::size_t>(1, (lead + config.batch_size - 1) / config.batch_size);

  std::vector<Points> batch_points(sources.size(), Points(net.input_dim()));
  std::vector<std::vector<double>> batch_targets(sources.size());
  std::vector<ResidualTerm> terms;
  terms.reserve(sources.size());

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = lr_schedule(config.lr0, config.lr_decay, epoch);
    for (auto& o : order) shuffle_in_place(o, rng);

    for (std::size_t b = 0; b < batches; ++b) {
      terms.clear();
      for (std::size_t k = 0; k < sources.size(); ++k) {
        const std::size_t n = order[k].size();
        const std::size_t lo = b * n / batches;
        const std::size_t hi = (b + 1) * n / batches;
        if (lo == hi) continue;
        auto& bp = batch_points[k];
        auto& bt = batch_targets[k];
        bp.clear();
        bt.clear();
        for (std::size_t i = lo; i < hi; ++i) {
          bp.push_back((*sources[k].points)[order[k][i]]);
          bt.push_back((*sources[k].targets)[order[k][i]]);
        }
        terms.push_back({term_name(sources[k].kind), *sources[k].op, &bp, bt, sources[k].weight});
      }
      LossValue lv;
      try {
        lv = loss_param_grad(net, terms);
      } catch (const std::domain_error& e) {
        throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
      }
      adam.step(net.parameters(), lv.grad, lr);
    }

    LossBreakdown now = full_loss(net, report);
    now.epoch = epoch + 1;
    result.history.push_back(now);
    result.final = now;
    result.epochs_run = epoch + 1;
    if (!std::isfinite(now.total)) throw TrainingError("train_network: non-finite total loss");
    const std::size_t i = epoch + 1;
    if (i >= config.eta &&
        loss_stabilized(now.total, result.history[i - config.eta].total, config.tol_m, config.stop_rule)) {
      result.stop_reason = StopReason::stabilized;
      return result;
    }
  }
  result.stop_reason = StopReason::max_epochs;
  return result;
}

void write_loss_history_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& history) {
  CsvWriter csv(path, {"epoch", "m_omega", "m_boundary", "m_interface", "m_fine", "total"});
  for (const auto& h : history) csv.row(h.epoch, h.m_omega, h.m_boundary, h.m_interface, h.m_fine, h.total);
}

nlohmann::json checkpoint_to_json(const Mlp& net, const AdamState& adam) {
  return {{"network", mlp_to_json(net)}, {"adam", adam.to_json()}};
}

void checkpoint_from_json(const nlohmann::json& j, Mlp& net, AdamState& adam) {
  Mlp n = mlp_from_json(j.at("network"));
  AdamState a = AdamState::from_json(j.at("adam"));
  if (a.size() != n.parameter_count()) throw std::invalid_argument("checkpoint: optimizer state does not match network");
  net = std::move(n);
  adam = std::move(a);
}

}  // namespace deepddm
