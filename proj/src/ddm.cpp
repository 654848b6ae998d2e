#include "deepddm/ddm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepddm/csv.hpp"
#include "deepddm/parallel.hpp"
#include "deepddm/rng.hpp"
#include "deepddm/sampling.hpp"

namespace deepddm {

namespace {

std::vector<std::size_t> layer_dims(std::size_t input, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> dims{input};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  return dims;
}

void map_to_unit_square(Mlp& net, const Rect& r) {
  net.set_input_affine({0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1)}, {2.0 / r.width(), 2.0 / r.height()});
}

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return {{"m_omega", b.m_omega},   {"m_boundary", b.m_boundary}, {"m_interface", b.m_interface},
          {"m_fine", b.m_fine},     {"total", b.total},           {"epoch", b.epoch}};
}

// Boundary points of `rect` on the given edges, `total` split by edge length.
void sample_boundary(const Rect& rect, const std::vector<Edge>& edges, std::size_t total,
                     std::uint64_t base, std::size_t owner, Points& out, std::vector<Edge>& tags) {
  if (edges.empty() || total == 0) return;
  std::vector<double> lengths;
  for (Edge e : edges) lengths.push_back(edge_segment(rect, e).length());
  const auto counts = apportion(total, lengths);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    if (counts[j] == 0) continue;
    const auto pts = segment_lhs(counts[j], edge_segment(rect, edges[j]),
                                 stream_seed(base, owner, Stream::boundary, static_cast<std::size_t>(edges[j])));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out.push_back(pts.at2(i));
      tags.push_back(edges[j]);
    }
  }
}

}  // namespace

std::string_view mode_name(DdmMode m) { return m == DdmMode::one_level ? "one_level" : "two_level"; }

DdmMode mode_from_name(std::string_view name) {
  if (name == "one_level") return DdmMode::one_level;
  if (name == "two_level") return DdmMode::two_level;
  throw std::invalid_argument("unknown ddm mode '" + std::string(name) + "'");
}

double LambdaSchedule::at(std::size_t k) const {
  return constant ? initial : initial * std::pow(decay, static_cast<double>(k));
}

std::uint64_t stream_seed(std::uint64_t base, std::size_t owner, Stream stream, std::size_t extra) {
  std::uint64_t s = derive_seed(base, owner);
  s = derive_seed(s, static_cast<std::uint64_t>(stream));
  return derive_seed(s, extra);
}

std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty()) return out;
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw std::invalid_argument("apportion: weights must have a positive sum");
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    used += out[i];
    rem.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; used < total; ++j, ++used) ++out[rem[j % rem.size()].second];
  return out;
}

void DdmConfig::validate() const {
  if (outer_max < 1) throw std::invalid_argument("DdmConfig: outer_max must be >= 1");
  if (!(outer_tol > 0.0)) throw std::invalid_argument("DdmConfig: outer_tol must be positive");
  if (!(lambda_f >= 0.0)) throw std::invalid_argument("DdmConfig: lambda_f must be >= 0");
  if (!(lambda_c.initial >= 0.0 && lambda_c.initial <= 1.0))
    throw std::invalid_argument("DdmConfig: lambda_c must be in [0,1]");
  if (!lambda_c.constant && !(lambda_c.decay >= 0.0 && lambda_c.decay <= 1.0))
    throw std::invalid_argument("DdmConfig: lambda_c decay must be in [0,1]");
  if (fine_counts.interior < 1) throw std::invalid_argument("DdmConfig: need interior points per subdomain");
  if (fine_hidden.empty() || (mode == DdmMode::two_level && coarse_hidden.empty()))
    throw std::invalid_argument("DdmConfig: networks need at least one hidden layer");
  fine.validate();
  if (mode == DdmMode::two_level) {
    coarse.validate();
    if (coarse_counts.interior < 1) throw std::invalid_argument("DdmConfig: need coarse interior points");
  }
}

ErrorReference analytic_reference(const PdeProblem& problem, std::size_t n_total) {
  if (!problem.has_analytic()) throw std::invalid_argument("analytic_reference: problem has no closed form");
  ErrorReference ref;
  ref.points = test_grid(problem.domain, n_total);
  ref.truth.reserve(ref.points.size());
  for (std::size_t i = 0; i < ref.points.size(); ++i) ref.truth.push_back(problem.analytic(ref.points.at2(i)));
  return ref;
}

ErrorReference fd_reference(const FdSolution& fd, std::size_t n_total) {
  ErrorReference ref;
  ref.points = test_grid(fd.domain, n_total);
  ref.truth.reserve(ref.points.size());
  for (std::size_t i = 0; i < ref.points.size(); ++i) {
    const Vec2 p = ref.points.at2(i);
    ref.truth.push_back(fd.interpolate(p.x, p.y));
  }
  return ref;
}

ErrorReference fd_node_reference(const FdSolution& fd) {
  ErrorReference ref;
  ref.points.reserve(fd.nx * fd.nt);
  for (std::size_t k = 1; k <= fd.nt; ++k)
    for (std::size_t i = 0; i < fd.nx; ++i) {
      ref.points.push_back(Vec2{fd.x(i), fd.t(k)});
      ref.truth.push_back(fd.at(k, i));
    }
  return ref;
}

double relative_change(std::span<const double> next, std::span<const double> prev) {
  if (next.size() != prev.size()) throw std::invalid_argument("relative_change: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) {
    num += (next[i] - prev[i]) * (next[i] - prev[i]);
    den += prev[i] * prev[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

ConvergenceFlags outer_convergence_tests(const Snapshot* previous, const Snapshot& current, double tol) {
  ConvergenceFlags flags;
  if (previous == nullptr) return flags;
  if (previous->interior.size() != current.interior.size() ||
      previous->interface.size() != current.interface.size())
    throw std::invalid_argument("outer_convergence_tests: snapshot shapes differ");
  flags.networks = true;
  for (std::size_t s = 0; s < current.interior.size(); ++s)
    if (!(relative_change(current.interior[s], previous->interior[s]) < tol)) flags.networks = false;
  // A decomposition without interfaces has nothing to exchange; report the
  // interfaces as unconverged so the network test alone decides.
  flags.interfaces = !current.interface.empty();
  for (std::size_t k = 0; k < current.interface.size(); ++k)
    if (!(relative_change(current.interface[k], previous->interface[k]) < tol)) flags.interfaces = false;
  return flags;
}

std::vector<double> OuterTrace::global_errors() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.global_error);
  return out;
}

std::vector<double> OuterTrace::subdomain_error_series(std::size_t s) const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.subdomain_errors.at(s));
  return out;
}

void OuterTrace::write_csv(const std::filesystem::path& path) const {
  std::vector<std::string> header{"iteration",         "global_error",     "coarse_error",
                                  "lambda_c",          "networks_converged", "interfaces_converged",
                                  "fine_epochs",       "coarse_epochs",    "coarse_loss"};
  for (std::size_t s = 0; s < subdomains; ++s) header.push_back("error_s" + std::to_string(s));
  for (std::size_t s = 0; s < subdomains; ++s) header.push_back("loss_s" + std::to_string(s));
  CsvWriter csv(path, header);
  for (const auto& r : records) {
    std::vector<std::string> row{std::to_string(r.iteration),
                                 format_double(r.global_error),
                                 r.coarse_error ? format_double(*r.coarse_error) : "",
                                 format_double(r.lambda_c),
                                 r.networks_converged ? "1" : "0",
                                 r.interfaces_converged ? "1" : "0",
                                 std::to_string(std::accumulate(r.subdomain_epochs.begin(),
                                                                r.subdomain_epochs.end(), std::size_t{0})),
                                 std::to_string(r.coarse_epochs),
                                 r.coarse_loss ? format_double(r.coarse_loss->total) : ""};
    for (double e : r.subdomain_errors) row.push_back(format_double(e));
    for (const auto& l : r.subdomain_losses) row.push_back(format_double(l.total));
    csv.write_row(row);
  }
}

nlohmann::json OuterTrace::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["mode"] = mode_name(mode);
  j["subdomains"] = subdomains;
  j["stop_reason"] = stop_reason;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json e;
    e["iteration"] = r.iteration;
    e["global_error"] = r.global_error;
    e["subdomain_errors"] = r.subdomain_errors;
    e["subdomain_epochs"] = r.subdomain_epochs;
    for (const auto& l : r.subdomain_losses) e["subdomain_losses"].push_back(breakdown_json(l));
    if (r.coarse_loss) e["coarse_loss"] = breakdown_json(*r.coarse_loss);
    if (r.coarse_error) e["coarse_error"] = *r.coarse_error;
    e["coarse_epochs"] = r.coarse_epochs;
    e["networks_converged"] = r.networks_converged;
    e["interfaces_converged"] = r.interfaces_converged;
    e["lambda_c"] = r.lambda_c;
    e["wall_seconds"] = r.wall_seconds;
    recs.push_back(std::move(e));
  }
  return j;
}

DdmSolver::DdmSolver(Decomposition dec, PdeProblem problem, DdmConfig config, ErrorReference reference)
    : dec_(std::move(dec)),
      problem_(std::move(problem)),
      config_(std::move(config)),
      reference_(std::move(reference)),
      global_eval_(dec_, reference_.points) {
  config_.validate();
  if (reference_.truth.size() != reference_.points.size())
    throw std::invalid_argument("DdmSolver: reference truth misaligned with points");
  const std::size_t S = dec_.size();
  const auto fine_dims = layer_dims(2, config_.fine_hidden);

  subs_.reserve(S);
  nets_.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    const Subdomain& sd = dec_.subdomain(s);
    auto interior = latin_hypercube(config_.fine_counts.interior, sd.bounds,
                                    stream_seed(config_.seed, s, Stream::interior));
    std::vector<Edge> edges;
    for (Edge e : sd.physical_edges)
      if (problem_.constrains(e)) edges.push_back(e);
    Points boundary(2);
    std::vector<Edge> tags;
    sample_boundary(sd.bounds, edges, config_.fine_counts.boundary, config_.seed, s, boundary, tags);
    SubdomainState st{make_training_set(problem_, std::move(interior), std::move(boundary), tags), {}};
    nets_.emplace_back(fine_dims, stream_seed(config_.seed, s, Stream::init));
    if (config_.normalize_inputs) map_to_unit_square(nets_.back(), sd.bounds);
    st.adam = AdamState(nets_.back().parameter_count(), config_.adam);
    subs_.push_back(std::move(st));
  }

  for (const auto& itf : dec_.interfaces()) {
    InterfaceState is;
    is.owner = itf.owner_id;
    if (config_.fine_counts.interface > 0) {
      is.points = segment_lhs(config_.fine_counts.interface, itf.segment,
                              stream_seed(config_.seed, itf.owner_id, Stream::interface,
                                          static_cast<std::size_t>(itf.side)));
    }
    auto& set = subs_[is.owner].set;
    is.offset = set.interface.size();
    for (std::size_t i = 0; i < is.points.size(); ++i) {
      const Vec2 p = is.points.at2(i);
      is.donors.push_back(dec_.donors_at(is.owner, p));
      set.interface.push_back(p);
      set.interface_targets.push_back(0.0);
    }
    ifaces_.push_back(std::move(is));
  }

  if (config_.mode == DdmMode::two_level) {
    const Rect& omega = dec_.bounds();
    auto interior = latin_hypercube(config_.coarse_counts.interior, omega,
                                    stream_seed(config_.seed, kCoarseOwner, Stream::interior));
    std::vector<Edge> edges;
    for (Edge e : kAllEdges)
      if (problem_.constrains(e)) edges.push_back(e);
    Points boundary(2);
    std::vector<Edge> tags;
    sample_boundary(omega, edges, config_.coarse_counts.boundary, config_.seed, kCoarseOwner, boundary, tags);
    Points fine_points = interior;
    CompositeEvaluator fine_eval(dec_, fine_points);
    auto set = make_training_set(problem_, std::move(interior), std::move(boundary), tags);
    set.fine = std::move(fine_points);
    set.fine_targets.assign(set.fine.size(), 0.0);
    set.lambda_f = config_.lambda_f;
    Mlp net(layer_dims(2, config_.coarse_hidden), stream_seed(config_.seed, kCoarseOwner, Stream::init));
    if (config_.normalize_inputs) map_to_unit_square(net, omega);
    AdamState adam(net.parameter_count(), config_.adam);
    coarse_.emplace(CoarseState{std::move(net), std::move(adam), std::move(set), std::move(fine_eval)});
  }

  for (std::size_t s = 0; s < S; ++s) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < reference_.points.size(); ++i)
      if (dec_.subdomain(s).bounds.contains(reference_.points.at2(i))) idx.push_back(i);
    reference_subsets_.push_back(std::move(idx));
  }

  if (!config_.zero_initial_interfaces) update_interfaces(0.0);
}

std::span<const double> DdmSolver::interface_values(std::size_t k) const {
  const auto& is = ifaces_.at(k);
  return std::span<const double>(subs_[is.owner].set.interface_targets).subspan(is.offset, is.points.size());
}

std::vector<double> DdmSolver::donor_values(const InterfaceState& itf) const {
  std::vector<double> out(itf.points.size(), 0.0);
  if (itf.points.empty()) return out;
  std::vector<std::size_t> involved;
  for (const auto& d : itf.donors) involved.insert(involved.end(), d.begin(), d.end());
  std::sort(involved.begin(), involved.end());
  involved.erase(std::unique(involved.begin(), involved.end()), involved.end());
  std::vector<std::vector<double>> values;
  for (std::size_t r : involved) values.push_back(nets_[r].eval_batch(itf.points));
  for (std::size_t i = 0; i < itf.points.size(); ++i) {
    double sum = 0.0;
    for (std::size_t r : itf.donors[i]) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(involved.begin(), involved.end(), r) - involved.begin());
      sum += values[pos][i];
    }
    out[i] = itf.donors[i].size() == 1 ? sum : sum / static_cast<double>(itf.donors[i].size());
  }
  return out;
}

void DdmSolver::update_interfaces(double lambda_c) {
  if (!(lambda_c >= 0.0 && lambda_c <= 1.0)) throw std::invalid_argument("update_interfaces: lambda_c out of [0,1]");
  if (lambda_c > 0.0 && !coarse_) throw std::invalid_argument("update_interfaces: lambda_c > 0 needs a coarse network");
  for (const auto& itf : ifaces_) {
    const auto donor = donor_values(itf);
    auto& targets = subs_[itf.owner].set.interface_targets;
    if (coarse_) {
      const auto coarse = coarse_->net.eval_batch(itf.points);
      for (std::size_t i = 0; i < donor.size(); ++i)
        targets[itf.offset + i] = lambda_c * coarse[i] + (1.0 - lambda_c) * donor[i];
    } else {
      for (std::size_t i = 0; i < donor.size(); ++i) targets[itf.offset + i] = donor[i];
    }
  }
}

Snapshot DdmSolver::snapshot() const {
  Snapshot snap;
  for (std::size_t s = 0; s < nets_.size(); ++s) snap.interior.push_back(nets_[s].eval_batch(subs_[s].set.interior));
  for (const auto& itf : ifaces_) snap.interface.push_back(donor_values(itf));
  return snap;
}

double DdmSolver::global_error() const {
  return relative_l2(global_eval_.evaluate(nets_), reference_.truth);
}

std::vector<double> DdmSolver::subdomain_errors() const {
  std::vector<double> out;
  for (std::size_t s = 0; s < nets_.size(); ++s) {
    const auto& idx = reference_subsets_[s];
    Points pts(2);
    std::vector<double> truth;
    for (std::size_t i : idx) {
      pts.push_back(reference_.points.at2(i));
      truth.push_back(reference_.truth[i]);
    }
    out.push_back(idx.empty() ? 0.0 : relative_l2(nets_[s].eval_batch(pts), truth));
  }
  return out;
}

nlohmann::json DdmSolver::checkpoint() const {
  nlohmann::json j;
  j["subdomains"] = nlohmann::json::array();
  for (std::size_t s = 0; s < nets_.size(); ++s) j["subdomains"].push_back(checkpoint_to_json(nets_[s], subs_[s].adam));
  if (coarse_) j["coarse"] = checkpoint_to_json(coarse_->net, coarse_->adam);
  return j;
}

OuterRecord DdmSolver::iterate(std::size_t k) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t S = nets_.size();
  OuterRecord rec;
  rec.iteration = k + 1;
  rec.lambda_c = config_.mode == DdmMode::two_level ? config_.lambda_c.at(k) : 0.0;
  rec.subdomain_losses.resize(S);
  rec.subdomain_epochs.resize(S);

  // Interface targets are read-only until every task has joined.
  parallel_for(S, config_.workers, [&](std::size_t s) {
    auto& st = subs_[s];
    if (config_.reset_adam_each_iteration) st.adam.reset();
    try {
      const auto res = train_network(nets_[s], st.adam, st.set, config_.fine,
                                     stream_seed(config_.seed, s, Stream::train, k));
      rec.subdomain_losses[s] = res.final;
      rec.subdomain_epochs[s] = res.epochs_run;
    } catch (const TrainingError& e) {
      throw TrainingError("subdomain " + std::to_string(s) + ": " + e.what());
    }
  });

  if (coarse_) {
    coarse_->set.fine_targets = coarse_->fine_eval.evaluate(nets_);
    if (config_.reset_adam_each_iteration) coarse_->adam.reset();
    try {
      const auto res = train_network(coarse_->net, coarse_->adam, coarse_->set, config_.coarse,
                                     stream_seed(config_.seed, kCoarseOwner, Stream::train, k));
      rec.coarse_loss = res.final;
      rec.coarse_epochs = res.epochs_run;
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("coarse network: ") + e.what());
    }
    rec.coarse_error = relative_l2(coarse_->net.eval_batch(reference_.points), reference_.truth);
  }

  update_interfaces(rec.lambda_c);

  rec.global_error = global_error();
  rec.subdomain_errors = subdomain_errors();
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

OuterTrace DdmSolver::run(const std::string& label) {
  OuterTrace trace;
  trace.label = label;
  trace.mode = config_.mode;
  trace.subdomains = nets_.size();
  trace.stop_reason = "outer_max";
  std::optional<Snapshot> previous;
  for (std::size_t k = 0; k < config_.outer_max; ++k) {
    OuterRecord rec = iterate(k);
    Snapshot snap = snapshot();
    const auto flags = outer_convergence_tests(previous ? &*previous : nullptr, snap, config_.outer_tol);
    rec.networks_converged = flags.networks;
    rec.interfaces_converged = flags.interfaces;
    previous = std::move(snap);
    trace.records.push_back(std::move(rec));
    const auto& last = trace.records.back();
    if (config_.stop_at_error && last.global_error <= *config_.stop_at_error) {
      trace.stop_reason = "target_error";
      break;
    }
    if (config_.convergence_tests && (flags.networks || flags.interfaces)) {
      trace.stop_reason = flags.networks ? "networks_converged" : "interfaces_converged";
      break;
    }
  }
  return trace;
}

}  // namespace deepddm
