#pragma once

// Fully connected networks with hand-written reverse mode, plus the Adam
// optimizer and the tanh-squashed Gaussian policy head.
//
// Batches are column-major: one sample per column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pdsac/errors.hpp"
#include "pdsac/rng.hpp"

namespace pdsac {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Aligned storage keeps Eigen's vectorised reductions over mapped parameters
// in a fixed summation order, whatever address the allocator hands out.
using AlignedValues = std::vector<double, Eigen::aligned_allocator<double>>;

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  AlignedValues values;

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  bool operator==(const Tensor&) const = default;
};

// Ordered, named tensors for one network plus a version counter that the
// optimizer advances on each step. Shapes are fixed at construction.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<Tensor> tensors, std::uint64_t version = 0)
      : tensors_(std::move(tensors)), version_(version) {
    for (const Tensor& t : tensors_)
      if (t.values.size() != t.numel()) throw ShapeError("tensor " + t.name + ": payload does not match shape");
  }

  std::size_t tensor_count() const { return tensors_.size(); }
  const Tensor& tensor(std::size_t i) const { return tensors_.at(i); }
  std::span<double> values(std::size_t i) { return tensors_.at(i).values; }
  std::span<const double> values(std::size_t i) const { return tensors_.at(i).values; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) n += t.values.size();
    return n;
  }

  // Flat parameter access across tensors, in declaration order.
  double& flat(std::size_t k) {
    for (Tensor& t : tensors_) {
      if (k < t.values.size()) return t.values[k];
      k -= t.values.size();
    }
    throw std::out_of_range("ParamSet::flat");
  }
  double flat(std::size_t k) const { return const_cast<ParamSet*>(this)->flat(k); }

  std::uint64_t version() const { return version_; }
  void advance_version() { ++version_; }
  void set_version(std::uint64_t v) { version_ = v; }

  bool same_shapes(const ParamSet& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].name != other.tensors_[i].name || tensors_[i].shape != other.tensors_[i].shape) return false;
    return true;
  }

  ParamSet zeros_like() const {
    ParamSet z = *this;
    for (Tensor& t : z.tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
    z.version_ = 0;
    return z;
  }

  bool all_finite() const {
    for (const Tensor& t : tensors_)
      for (double v : t.values)
        if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<Tensor> tensors_;
  std::uint64_t version_ = 0;
};

// Activations recorded by a forward pass; consumed by Mlp::backward.
struct Tape {
  std::vector<Matrix> layer_inputs;  // input to each affine layer
  std::vector<Matrix> hidden_pre;    // pre-ReLU values of each hidden layer
};

// widths = {in, hidden..., out}. Hidden layers use ReLU, the output is linear.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ShapeError("Mlp needs at least input and output widths");
    for (std::size_t w : widths_)
      if (w == 0) throw ShapeError("Mlp widths must be positive");
  }

  // Recovers the topology from fc{i}.weight / fc{i}.bias tensors.
  static Mlp from_params(const ParamSet& p) {
    if (p.tensor_count() < 2 || p.tensor_count() % 2 != 0) throw ShapeError("not an Mlp parameter set");
    std::vector<std::size_t> widths;
    for (std::size_t l = 0; l < p.tensor_count() / 2; ++l) {
      const Tensor& w = p.tensor(2 * l);
      if (w.shape.size() != 2) throw ShapeError("weight tensor must be rank 2");
      if (l == 0) widths.push_back(w.shape[1]);
      widths.push_back(w.shape[0]);
    }
    Mlp m(widths);
    m.check(p);
    return m;
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_size() const { return widths_.front(); }
  std::size_t output_size() const { return widths_.back(); }
  std::size_t layer_count() const { return widths_.size() - 1; }

  ParamSet zeros() const {
    std::vector<Tensor> ts;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const std::size_t in = widths_[l], out = widths_[l + 1];
      ts.push_back({"fc" + std::to_string(l) + ".weight", {out, in}, AlignedValues(out * in, 0.0)});
      ts.push_back({"fc" + std::to_string(l) + ".bias", {out}, AlignedValues(out, 0.0)});
    }
    return ParamSet(std::move(ts));
  }

  // Uniform fan-in initialisation; the output layer is multiplied by output_scale.
  ParamSet init(Rng& rng, double output_scale = 1.0) const {
    ParamSet p = zeros();
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      const double scale = (l + 1 == layer_count()) ? output_scale : 1.0;
      for (std::size_t k = 0; k < 2; ++k)
        for (double& v : p.values(2 * l + k)) v = scale * rng.uniform(-bound, bound);
    }
    return p;
  }

  void check(const ParamSet& p) const {
    if (!p.same_shapes(zeros())) throw ShapeError("parameter set does not match network topology");
  }

  Matrix forward(const ParamSet& p, const Matrix& x) const { return run(p, x, nullptr); }
  Matrix forward(const ParamSet& p, const Matrix& x, Tape& tape) const { return run(p, x, &tape); }

  // Propagates dL/d(output) back through the recorded pass. Parameter
  // gradients are accumulated into *grads when non-null. Returns dL/d(input).
  Matrix backward(const ParamSet& p, const Tape& tape, const Matrix& grad_out, ParamSet* grads) const {
    if (tape.layer_inputs.size() != layer_count()) throw UsageError("tape does not belong to this network");
    if (static_cast<std::size_t>(grad_out.rows()) != output_size()) throw ShapeError("gradient has wrong width");
    Matrix g = grad_out;
    for (std::size_t li = layer_count(); li-- > 0;) {
      const std::size_t in = widths_[li], out = widths_[li + 1];
      if (li + 1 < layer_count()) g = g.cwiseProduct((tape.hidden_pre[li].array() > 0.0).cast<double>().matrix());
      if (grads) {
        RowMajorMap dw(grads->values(2 * li).data(), out, in);
        Eigen::Map<Vector> db(grads->values(2 * li + 1).data(), out);
        dw.noalias() += g * tape.layer_inputs[li].transpose();
        db.noalias() += g.rowwise().sum();
      }
      ConstRowMajorMap w(p.values(2 * li).data(), out, in);
      g = w.transpose() * g;
    }
    return g;
  }

 private:
  Matrix run(const ParamSet& p, const Matrix& x, Tape* tape) const {
    if (static_cast<std::size_t>(x.rows()) != input_size())
      throw ShapeError("input width " + std::to_string(x.rows()) + " != " + std::to_string(input_size()));
    if (p.tensor_count() != 2 * layer_count()) throw ShapeError("parameter set does not match network topology");
    if (tape) {
      tape->layer_inputs.clear();
      tape->hidden_pre.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const std::size_t in = widths_[l], out = widths_[l + 1];
      if (p.tensor(2 * l).shape != std::vector<std::size_t>{out, in})
        throw ShapeError("parameter set does not match network topology");
      ConstRowMajorMap w(p.values(2 * l).data(), out, in);
      Eigen::Map<const Vector> b(p.values(2 * l + 1).data(), out);
      Matrix z = w * h;
      z.colwise() += b;
      if (tape) tape->layer_inputs.push_back(std::move(h));
      if (l + 1 < layer_count()) {
        if (tape) tape->hidden_pre.push_back(z);
        h = z.cwiseMax(0.0);
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  std::vector<std::size_t> widths_;
};

// ---------------------------------------------------------------------------
// Optimiser and target updates

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t timestep = 0;

  static AdamState for_params(const ParamSet& p) {
    AdamState s;
    for (const Tensor& t : p.tensors()) {
      s.m.emplace_back(t.values.size(), 0.0);
      s.v.emplace_back(t.values.size(), 0.0);
    }
    return s;
  }

  bool operator==(const AdamState&) const = default;
};

inline void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg) {
  if (!params.same_shapes(grads)) throw ShapeError("adam_step: gradient shapes differ from parameters");
  if (state.m.size() != params.tensor_count()) throw ShapeError("adam_step: optimizer state shape mismatch");
  state.timestep += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.timestep));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.timestep));
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    std::span<double> w = params.values(i);
    std::span<const double> g = grads.values(i);
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    if (m.size() != w.size()) throw ShapeError("adam_step: optimizer state shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  params.advance_version();
}

// target <- tau * online + (1 - tau) * target
inline void soft_update(ParamSet& target, const ParamSet& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("soft_update: tau must lie in (0, 1]");
  if (!target.same_shapes(online)) throw ShapeError("soft_update: shape mismatch");
  for (std::size_t i = 0; i < target.tensor_count(); ++i) {
    std::span<double> t = target.values(i);
    std::span<const double> o = online.values(i);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = tau * o[k] + (1.0 - tau) * t[k];
  }
}

// ---------------------------------------------------------------------------
// Squashed Gaussian policy head: raw output rows [0, A) are means, [A, 2A) log stds.

struct LogStdBounds {
  double lo = -20.0;
  double hi = 2.0;
};

struct PolicyOutput {
  Matrix mean;     // A x B
  Matrix log_std;  // A x B, clamped
};

inline PolicyOutput split_policy_head(const Matrix& raw, LogStdBounds bounds = {}) {
  if (raw.rows() % 2 != 0) throw ShapeError("policy head must have an even number of outputs");
  const Eigen::Index a = raw.rows() / 2;
  return {raw.topRows(a), raw.bottomRows(a).cwiseMax(bounds.lo).cwiseMin(bounds.hi)};
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2) without cancellation for large |u|.
inline double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

struct SquashedSample {
  Matrix u;       // pre-squash Gaussian sample
  Matrix action;  // tanh(u), strictly inside (-1, 1)
  Vector log_prob;
};

// Reparameterised sample u = mean + exp(log_std) * noise, a = tanh(u).
inline SquashedSample squash_sample(const PolicyOutput& out, const Matrix& noise) {
  if (noise.rows() != out.mean.rows() || noise.cols() != out.mean.cols()) throw ShapeError("noise shape mismatch");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  SquashedSample s;
  s.u = out.mean + (out.log_std.array().exp() * noise.array()).matrix();
  s.action = s.u.array().tanh().matrix();
  // Keep actions representable as strictly interior points.
  constexpr double kEdge = 1.0 - 1e-12;
  s.action = s.action.cwiseMax(-kEdge).cwiseMin(kEdge);
  s.log_prob.resize(out.mean.cols());
  for (Eigen::Index j = 0; j < out.mean.cols(); ++j) {
    double lp = 0.0;
    for (Eigen::Index k = 0; k < out.mean.rows(); ++k) {
      const double e = noise(k, j);
      lp += -0.5 * e * e - out.log_std(k, j) - kHalfLog2Pi - log_one_minus_tanh_sq(s.u(k, j));
    }
    s.log_prob(j) = lp;
  }
  return s;
}

// Given dL/d(action) and dL/d(log_prob), returns dL/d(raw head output).
inline Matrix squash_backward(const Matrix& raw, const Matrix& noise, const SquashedSample& s,
                              const Matrix& d_action, const Vector& d_log_prob, LogStdBounds bounds = {}) {
  const Eigen::Index a = raw.rows() / 2, batch = raw.cols();
  Matrix d_raw = Matrix::Zero(raw.rows(), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (Eigen::Index k = 0; k < a; ++k) {
      const double t = std::tanh(s.u(k, j));
      const double du = d_action(k, j) * (1.0 - t * t) + d_log_prob(j) * 2.0 * t;
      d_raw(k, j) = du;
      const double ls_raw = raw(a + k, j);
      if (ls_raw >= bounds.lo && ls_raw <= bounds.hi) {
        const double sigma = std::exp(ls_raw);
        d_raw(a + k, j) = du * sigma * noise(k, j) - d_log_prob(j);
      }
    }
  }
  return d_raw;
}

// Single-state convenience wrapper for the head.
struct ActionSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

inline ActionSample policy_sample(std::span<const double> mean, std::span<const double> log_std,
                                  std::span<const double> noise, LogStdBounds bounds = {}) {
  const auto a = static_cast<Eigen::Index>(mean.size());
  if (log_std.size() != mean.size() || noise.size() != mean.size()) throw ShapeError("policy_sample: size mismatch");
  PolicyOutput out{Matrix(a, 1), Matrix(a, 1)};
  Matrix n(a, 1);
  for (Eigen::Index k = 0; k < a; ++k) {
    out.mean(k, 0) = mean[k];
    out.log_std(k, 0) = std::clamp(log_std[k], bounds.lo, bounds.hi);
    n(k, 0) = noise[k];
  }
  const SquashedSample s = squash_sample(out, n);
  ActionSample r;
  r.action.assign(s.action.data(), s.action.data() + a);
  r.log_prob = s.log_prob(0);
  return r;
}

}  // namespace pdsac
