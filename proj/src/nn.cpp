#include "deepddm/nn.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "deepddm/rng.hpp"

namespace deepddm {

namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

constexpr std::size_t kChunk = 256;

// Activations of one chunk of points. Channel c of point p lives in column
// c * P + p: c = 0 value, 1..d first derivatives, d+1..2d second derivatives.
struct Workspace {
  std::size_t channels = 1;
  std::size_t points = 0;
  std::vector<Mat> inputs;  // inputs[l] enters affine layer l
  std::vector<Mat> pre;     // pre-activations of hidden layers
  std::vector<Mat> tanh_v;  // tanh(value channel)
  std::vector<Mat> slope;   // 1 - tanh^2
  Mat output;               // 1 x C*P
};

void forward(const Mlp& net, const Points& pts, std::size_t begin, std::size_t count,
             std::size_t channels, Workspace& ws) {
  const auto& dims = net.layer_dims();
  const std::size_t d = dims.front();
  const std::size_t L = net.layer_count();
  const auto P = static_cast<Eigen::Index>(count);
  const auto CP = static_cast<Eigen::Index>(channels * count);
  ws.channels = channels;
  ws.points = count;
  ws.inputs.resize(L);
  ws.pre.resize(L);
  ws.tanh_v.resize(L);
  ws.slope.resize(L);

  const auto& shift = net.input_shift();
  const auto& scale = net.input_scale();
  Mat& a0 = ws.inputs[0];
  a0.setZero(static_cast<Eigen::Index>(d), CP);
  for (Eigen::Index p = 0; p < P; ++p) {
    auto x = pts[begin + static_cast<std::size_t>(p)];
    for (std::size_t i = 0; i < d; ++i) a0(static_cast<Eigen::Index>(i), p) = (x[i] - shift[i]) * scale[i];
  }
  if (channels > 1) {
    for (std::size_t i = 0; i < d; ++i) {
      a0.row(static_cast<Eigen::Index>(i))
          .segment(static_cast<Eigen::Index>(1 + i) * P, P)
          .setConstant(scale[i]);
    }
  }

  const auto params = net.parameters();
  for (std::size_t l = 0; l < L; ++l) {
    const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
    const auto cols = static_cast<Eigen::Index>(dims[l]);
    ConstRowMap w(params.data() + net.weight_offset(l), rows, cols);
    ConstVecMap b(params.data() + net.bias_offset(l), rows);

    Mat z = w * ws.inputs[l];
    z.leftCols(P).colwise() += b;

    if (l + 1 == L) {
      ws.output = std::move(z);
      break;
    }

    Mat& t = ws.tanh_v[l];
    Mat& s = ws.slope[l];
    t = z.leftCols(P).array().tanh().matrix();
    s = (1.0 - t.array().square()).matrix();

    Mat& next = ws.inputs[l + 1];
    next.resize(rows, CP);
    next.leftCols(P) = t;
    if (channels > 1) {
      const Eigen::ArrayXXd q = -2.0 * t.array() * s.array();
      for (std::size_t i = 0; i < d; ++i) {
        const auto g = static_cast<Eigen::Index>(1 + i) * P;
        const auto h = static_cast<Eigen::Index>(1 + d + i) * P;
        next.middleCols(g, P) = (s.array() * z.middleCols(g, P).array()).matrix();
        next.middleCols(h, P) = (s.array() * z.middleCols(h, P).array() +
                                 q * z.middleCols(g, P).array().square())
                                    .matrix();
      }
    }
    ws.pre[l] = std::move(z);
  }
}

// Reverse pass. `out_adj` is the adjoint of ws.output; gradient accumulated into grad.
void backward(const Mlp& net, Workspace& ws, Mat out_adj, std::span<double> grad) {
  const auto& dims = net.layer_dims();
  const std::size_t d = dims.front();
  const std::size_t L = net.layer_count();
  const auto P = static_cast<Eigen::Index>(ws.points);
  const auto params = net.parameters();

  Mat zbar = std::move(out_adj);
  for (std::size_t l = L; l-- > 0;) {
    const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
    const auto cols = static_cast<Eigen::Index>(dims[l]);
    RowMap gw(grad.data() + net.weight_offset(l), rows, cols);
    VecMap gb(grad.data() + net.bias_offset(l), rows);
    gw.noalias() += zbar * ws.inputs[l].transpose();
    gb += zbar.leftCols(P).rowwise().sum();
    if (l == 0) break;

    ConstRowMap w(params.data() + net.weight_offset(l), rows, cols);
    const Mat abar = w.transpose() * zbar;

    // Through the tanh jet of hidden layer l-1.
    const auto t = ws.tanh_v[l - 1].array();
    const auto s = ws.slope[l - 1].array();
    const Mat& z = ws.pre[l - 1];
    Mat next(abar.rows(), abar.cols());
    Eigen::ArrayXXd tbar = Eigen::ArrayXXd::Zero(abar.rows(), P);
    if (ws.channels > 1) {
      const Eigen::ArrayXXd q = -2.0 * t * s;
      Eigen::ArrayXXd sbar = Eigen::ArrayXXd::Zero(abar.rows(), P);
      Eigen::ArrayXXd qbar = Eigen::ArrayXXd::Zero(abar.rows(), P);
      for (std::size_t i = 0; i < d; ++i) {
        const auto g = static_cast<Eigen::Index>(1 + i) * P;
        const auto h = static_cast<Eigen::Index>(1 + d + i) * P;
        const auto ag = abar.middleCols(g, P).array();
        const auto ah = abar.middleCols(h, P).array();
        const auto zg = z.middleCols(g, P).array();
        const auto zh = z.middleCols(h, P).array();
        sbar += ag * zg + ah * zh;
        qbar += ah * zg.square();
        next.middleCols(g, P) = (ag * s + 2.0 * ah * q * zg).matrix();
        next.middleCols(h, P) = (ah * s).matrix();
      }
      tbar = -2.0 * t * sbar + (-2.0 * s + 4.0 * t.square()) * qbar;
    }
    next.leftCols(P) = ((abar.leftCols(P).array() + tbar) * s).matrix();
    zbar = std::move(next);
  }
}

void validate_terms(const Mlp& net, std::span<const ResidualTerm> terms) {
  if (terms.empty()) throw std::invalid_argument("loss: no residual terms");
  for (const auto& term : terms) {
    if (term.points == nullptr || term.points->empty())
      throw std::invalid_argument("loss: empty batch for term '" + term.name + "'");
    if (term.points->dim() != net.input_dim())
      throw std::invalid_argument("loss: point dimension mismatch for term '" + term.name + "'");
    if (term.targets.size() != term.points->size())
      throw std::invalid_argument("loss: targets misaligned for term '" + term.name + "'");
    if (term.op.needs_derivatives() && term.op.dim() != net.input_dim())
      throw std::invalid_argument("loss: operator dimension mismatch for term '" + term.name + "'");
  }
}

LossValue evaluate(const Mlp& net, std::span<const ResidualTerm> terms, bool with_grad) {
  validate_terms(net, terms);
  const std::size_t d = net.input_dim();
  LossValue out;
  out.terms.assign(terms.size(), 0.0);
  if (with_grad) out.grad.assign(net.parameter_count(), 0.0);

  Workspace ws;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto& term = terms[k];
    const bool deriv = term.op.needs_derivatives();
    const std::size_t channels = deriv ? 1 + 2 * d : 1;
    const std::size_t n = term.points->size();
    const double scale = 2.0 * term.weight / static_cast<double>(n);
    const bool backprop = with_grad && term.weight != 0.0;

    double sum_sq = 0.0;
    for (std::size_t begin = 0; begin < n; begin += kChunk) {
      const std::size_t count = std::min(kChunk, n - begin);
      const auto P = static_cast<Eigen::Index>(count);
      forward(net, *term.points, begin, count, channels, ws);
      const auto& y = ws.output;
      Mat adj;
      if (backprop) adj.setZero(1, y.cols());
      for (Eigen::Index p = 0; p < P; ++p) {
        double r = term.op.value_coef * y(0, p);
        if (deriv) {
          for (std::size_t i = 0; i < d; ++i) {
            r += term.op.grad_coef[i] * y(0, static_cast<Eigen::Index>(1 + i) * P + p);
            r += term.op.hess_coef[i] * y(0, static_cast<Eigen::Index>(1 + d + i) * P + p);
          }
        }
        r -= term.targets[begin + static_cast<std::size_t>(p)];
        if (!std::isfinite(r))
          throw std::domain_error("loss: non-finite residual in term '" + term.name + "'");
        sum_sq += r * r;
        if (backprop) {
          const double a = scale * r;
          adj(0, p) = a * term.op.value_coef;
          if (deriv) {
            for (std::size_t i = 0; i < d; ++i) {
              adj(0, static_cast<Eigen::Index>(1 + i) * P + p) = a * term.op.grad_coef[i];
              adj(0, static_cast<Eigen::Index>(1 + d + i) * P + p) = a * term.op.hess_coef[i];
            }
          }
        }
      }
      if (backprop) backward(net, ws, std::move(adj), out.grad);
    }
    out.terms[k] = sum_sq / static_cast<double>(n);
    out.total += term.weight * out.terms[k];
  }
  return out;
}

}  // namespace

JetOperator JetOperator::identity(std::size_t dim) {
  JetOperator op;
  op.value_coef = 1.0;
  op.grad_coef.assign(dim, 0.0);
  op.hess_coef.assign(dim, 0.0);
  return op;
}

double JetOperator::apply(const EvalJet& jet) const {
  double r = value_coef * jet.value;
  for (std::size_t i = 0; i < grad_coef.size() && i < jet.grad_x.size(); ++i)
    r += grad_coef[i] * jet.grad_x[i];
  for (std::size_t i = 0; i < hess_coef.size() && i < jet.hess_diag.size(); ++i)
    r += hess_coef[i] * jet.hess_diag[i];
  return r;
}

bool JetOperator::needs_derivatives() const {
  for (double c : grad_coef)
    if (c != 0.0) return true;
  for (double c : hess_coef)
    if (c != 0.0) return true;
  return false;
}

std::size_t parameter_count(std::span<const std::size_t> layer_dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l)
    n += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
  return n;
}

void Mlp::validate_and_layout() {
  if (dims_.size() < 3) throw std::invalid_argument("Mlp: need input, >=1 hidden layer, output");
  for (auto w : dims_)
    if (w == 0) throw std::invalid_argument("Mlp: layer widths must be >= 1");
  if (dims_.back() != 1) throw std::invalid_argument("Mlp: output dimension must be 1");
  offsets_.clear();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(off);
    off += dims_[l] * dims_[l + 1] + dims_[l + 1];
  }
  shift_.assign(dims_.front(), 0.0);
  scale_.assign(dims_.front(), 1.0);
}

void Mlp::set_input_affine(std::vector<double> shift, std::vector<double> scale) {
  if (shift.size() != input_dim() || scale.size() != input_dim())
    throw std::invalid_argument("Mlp::set_input_affine: dimension mismatch");
  for (std::size_t i = 0; i < scale.size(); ++i)
    if (!std::isfinite(shift[i]) || !std::isfinite(scale[i]) || scale[i] == 0.0)
      throw std::invalid_argument("Mlp::set_input_affine: scale must be finite and nonzero");
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, std::uint64_t seed)
    : dims_(std::move(layer_dims)), seed_(seed) {
  validate_and_layout();
  params_.assign(deepddm::parameter_count(dims_), 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(dims_[l] + dims_[l + 1]));
    for (double& w : weights(l)) w = uniform(rng, -limit, limit);
  }
}

Mlp Mlp::zeros(std::vector<std::size_t> layer_dims) {
  Mlp net;
  net.dims_ = std::move(layer_dims);
  net.validate_and_layout();
  net.params_.assign(deepddm::parameter_count(net.dims_), 0.0);
  return net;
}

Mlp Mlp::from_parameters(std::vector<std::size_t> layer_dims, std::vector<double> params,
                         std::uint64_t seed) {
  Mlp net;
  net.dims_ = std::move(layer_dims);
  net.validate_and_layout();
  if (params.size() != deepddm::parameter_count(net.dims_))
    throw std::invalid_argument("Mlp: parameter vector has wrong length");
  for (double p : params)
    if (!std::isfinite(p)) throw std::invalid_argument("Mlp: non-finite parameter");
  net.params_ = std::move(params);
  net.seed_ = seed;
  return net;
}

std::span<double> Mlp::weights(std::size_t layer) {
  return {params_.data() + weight_offset(layer), dims_[layer] * dims_[layer + 1]};
}
std::span<const double> Mlp::weights(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), dims_[layer] * dims_[layer + 1]};
}
std::span<double> Mlp::biases(std::size_t layer) {
  return {params_.data() + bias_offset(layer), dims_[layer + 1]};
}
std::span<const double> Mlp::biases(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), dims_[layer + 1]};
}

double Mlp::eval(std::span<const double> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("Mlp::eval: dimension mismatch");
  // Plain loops: cheaper than the batched path for a single point.
  std::vector<double> a(x.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (x[i] - shift_[i]) * scale_[i];
  std::vector<double> z;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const auto w = weights(l);
    const auto b = biases(l);
    const std::size_t in = dims_[l];
    z.assign(b.begin(), b.end());
    for (std::size_t r = 0; r < z.size(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < in; ++c) acc += w[r * in + c] * a[c];
      z[r] += acc;
    }
    if (l + 1 < layer_count())
      for (double& v : z) v = std::tanh(v);
    a.swap(z);
  }
  return a[0];
}

EvalJet Mlp::eval_jet(std::span<const double> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("Mlp::eval_jet: dimension mismatch");
  Points one(input_dim());
  one.push_back(x);
  return eval_jet_batch(one).front();
}

std::vector<double> Mlp::eval_batch(const Points& points) const {
  if (points.dim() != input_dim()) throw std::invalid_argument("Mlp::eval_batch: dimension mismatch");
  std::vector<double> out(points.size());
  Workspace ws;
  for (std::size_t begin = 0; begin < points.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, points.size() - begin);
    forward(*this, points, begin, count, 1, ws);
    for (std::size_t p = 0; p < count; ++p) out[begin + p] = ws.output(0, static_cast<Eigen::Index>(p));
  }
  return out;
}

std::vector<EvalJet> Mlp::eval_jet_batch(const Points& points) const {
  if (points.dim() != input_dim())
    throw std::invalid_argument("Mlp::eval_jet_batch: dimension mismatch");
  const std::size_t d = input_dim();
  std::vector<EvalJet> out(points.size());
  Workspace ws;
  for (std::size_t begin = 0; begin < points.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, points.size() - begin);
    const auto P = static_cast<Eigen::Index>(count);
    forward(*this, points, begin, count, 1 + 2 * d, ws);
    for (Eigen::Index p = 0; p < P; ++p) {
      EvalJet& j = out[begin + static_cast<std::size_t>(p)];
      j.value = ws.output(0, p);
      j.grad_x.resize(d);
      j.hess_diag.resize(d);
      for (std::size_t i = 0; i < d; ++i) {
        j.grad_x[i] = ws.output(0, static_cast<Eigen::Index>(1 + i) * P + p);
        j.hess_diag[i] = ws.output(0, static_cast<Eigen::Index>(1 + d + i) * P + p);
      }
    }
  }
  return out;
}

LossValue loss_param_grad(const Mlp& net, std::span<const ResidualTerm> terms) {
  return evaluate(net, terms, true);
}

LossValue loss_value(const Mlp& net, std::span<const ResidualTerm> terms) {
  return evaluate(net, terms, false);
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json j;
  j["layer_dims"] = net.layer_dims();
  j["seed"] = net.seed();
  auto& weights = j["weights"] = nlohmann::json::array();
  auto& biases = j["biases"] = nlohmann::json::array();
  const auto& dims = net.layer_dims();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto w = net.weights(l);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < dims[l + 1]; ++r)
      rows.push_back(std::vector<double>(w.begin() + static_cast<std::ptrdiff_t>(r * dims[l]),
                                         w.begin() + static_cast<std::ptrdiff_t>((r + 1) * dims[l])));
    weights.push_back(std::move(rows));
    const auto b = net.biases(l);
    biases.push_back(std::vector<double>(b.begin(), b.end()));
  }
  j["input_shift"] = net.input_shift();
  j["input_scale"] = net.input_scale();
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
  std::vector<double> params;
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() + 1 != dims.size() || biases.size() + 1 != dims.size())
    throw std::invalid_argument("mlp_from_json: layer count mismatch");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto& rows = weights[l];
    if (rows.size() != dims[l + 1]) throw std::invalid_argument("mlp_from_json: weight rows");
    for (const auto& row : rows) {
      auto v = row.get<std::vector<double>>();
      if (v.size() != dims[l]) throw std::invalid_argument("mlp_from_json: weight cols");
      params.insert(params.end(), v.begin(), v.end());
    }
    auto b = biases[l].get<std::vector<double>>();
    if (b.size() != dims[l + 1]) throw std::invalid_argument("mlp_from_json: bias length");
    params.insert(params.end(), b.begin(), b.end());
  }
  Mlp net = Mlp::from_parameters(std::move(dims), std::move(params), j.value("seed", std::uint64_t{0}));
  if (j.contains("input_shift"))
    net.set_input_affine(j.at("input_shift").get<std::vector<double>>(),
                         j.at("input_scale").get<std::vector<double>>());
  return net;
}

}  // namespace deepddm
