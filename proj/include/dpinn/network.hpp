#pragma once

// Fully-connected tanh networks with input jets and reverse-mode parameter
// gradients.
//
// Every hidden layer propagates a truncated second-order Taylor jet in the
// network inputs: the value channel, one first-derivative channel per input
// and one diagonal second-derivative channel per input. The channels are
// stacked side by side so that each layer is a single dense product
//
//     [Z | dZ_1 .. dZ_d | d2Z_1 .. d2Z_d] = W * [A | dA_1 .. dA_d | d2A_1 .. d2A_d]
//
// with the bias added to the value block only. The reverse sweep pulls
// adjoints of (u, du, d2u) back through the same stacked products, so the
// gradient with respect to all weights and biases costs roughly two more
// forward passes.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpinn {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Raised when a network or likelihood evaluation produces a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { tanh };
enum class InitRule { xavier, unit_normal };

struct NetworkArch {
  int input_dim = 2;
  int hidden_layers = 5;
  int hidden_width = 64;
  Activation activation = Activation::tanh;

  void validate() const {
    if (input_dim != 2 && input_dim != 3)
      throw std::invalid_argument("NetworkArch: input_dim must be 2 or 3, got " +
                                  std::to_string(input_dim));
    if (hidden_layers < 1) throw std::invalid_argument("NetworkArch: hidden_layers must be >= 1");
    if (hidden_width < 1) throw std::invalid_argument("NetworkArch: hidden_width must be >= 1");
  }

  /// Dense layers including the linear output layer.
  int layer_count() const { return hidden_layers + 1; }
  int fan_in(int layer) const { return layer == 0 ? input_dim : hidden_width; }
  int fan_out(int layer) const { return layer == hidden_layers ? 1 : hidden_width; }

  /// Offset of layer `layer`'s weight block; its bias follows the weights.
  Eigen::Index layer_offset(int layer) const {
    Eigen::Index offset = 0;
    for (int l = 0; l < layer; ++l) offset += Eigen::Index(fan_in(l) + 1) * fan_out(l);
    return offset;
  }

  Eigen::Index parameter_count() const { return layer_offset(layer_count()); }

  bool operator==(const NetworkArch&) const = default;
};

/// Flat weights-and-biases vector. Layer l stores W_l (fan_out x fan_in,
/// column-major) followed by b_l.
using ParameterVector = Eigen::VectorXd;

/// Deterministic initialization. Xavier draws weights from
/// N(0, 2 / (fan_in + fan_out)) with zero biases; unit_normal draws every
/// entry from N(0, 1).
inline ParameterVector init_params(const NetworkArch& arch, std::uint64_t seed,
                                   InitRule rule = InitRule::xavier) {
  arch.validate();
  ParameterVector theta(arch.parameter_count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < arch.layer_count(); ++l) {
    const Eigen::Index off = arch.layer_offset(l);
    const Eigen::Index nw = Eigen::Index(arch.fan_in(l)) * arch.fan_out(l);
    const double scale =
        rule == InitRule::xavier ? std::sqrt(2.0 / (arch.fan_in(l) + arch.fan_out(l))) : 1.0;
    for (Eigen::Index i = 0; i < nw; ++i) theta[off + i] = scale * normal(rng);
    for (Eigen::Index i = 0; i < arch.fan_out(l); ++i)
      theta[off + nw + i] = rule == InitRule::xavier ? 0.0 : normal(rng);
  }
  return theta;
}

/// Network output and its input derivatives at a batch of points.
/// `u` is 1 x N; `du` and `d2u` are input_dim x N (rows: inputs, diagonal
/// second derivatives only). Channels above `order` are left empty.
template <typename Scalar>
struct JetBatch {
  int order = 0;
  RowVectorX<Scalar> u;
  MatrixX<Scalar> du;
  MatrixX<Scalar> d2u;

  Eigen::Index size() const { return u.size(); }

  static JetBatch zeros(int input_dim, Eigen::Index n, int order) {
    JetBatch j;
    j.order = order;
    j.u = RowVectorX<Scalar>::Zero(n);
    if (order >= 1) j.du = MatrixX<Scalar>::Zero(input_dim, n);
    if (order >= 2) j.d2u = MatrixX<Scalar>::Zero(input_dim, n);
    return j;
  }
};

/// Single-point jet.
template <typename Scalar>
struct JetOutput {
  Scalar u{};
  VectorX<Scalar> du;
  VectorX<Scalar> d2u_diag;
};

/// Activations cached by a forward sweep for the reverse sweep.
template <typename Scalar>
struct JetTape {
  int order = 0;
  Eigen::Index n_points = 0;
  // inputs[l]: stacked activations entering layer l (fan_in x channels*N).
  std::vector<MatrixX<Scalar>> inputs;
  // pre[l]: stacked pre-activations of hidden layer l.
  std::vector<MatrixX<Scalar>> pre;
};

namespace detail {

inline int channel_count(int input_dim, int order) {
  return 1 + (order >= 1 ? input_dim : 0) + (order >= 2 ? input_dim : 0);
}

template <typename Scalar>
void check_theta(const NetworkArch& arch, Eigen::Index size) {
  if (size != arch.parameter_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(size) +
                                " does not match architecture (" +
                                std::to_string(arch.parameter_count()) + ")");
}

}  // namespace detail

/// Forward sweep over a batch of points (input_dim x N). Pass a tape to
/// enable a later call to backward().
template <typename Scalar>
JetBatch<Scalar> forward_jet(const NetworkArch& arch,
                             const Eigen::Ref<const VectorX<Scalar>>& theta,
                             const Eigen::Ref<const MatrixX<Scalar>>& points, int order,
                             JetTape<Scalar>* tape = nullptr) {
  detail::check_theta<Scalar>(arch, theta.size());
  if (points.rows() != arch.input_dim)
    throw std::invalid_argument("point dimension " + std::to_string(points.rows()) +
                                " does not match input_dim " + std::to_string(arch.input_dim));
  if (order < 0 || order > 2) throw std::invalid_argument("jet order must be 0, 1 or 2");

  const int d = arch.input_dim;
  const Eigen::Index n = points.cols();
  const int channels = detail::channel_count(d, order);

  MatrixX<Scalar> act = MatrixX<Scalar>::Zero(d, channels * n);
  act.leftCols(n) = points;
  if (order >= 1)
    for (int i = 0; i < d; ++i) act.block(i, (1 + i) * n, 1, n).setOnes();

  if (tape) {
    tape->order = order;
    tape->n_points = n;
    tape->inputs.assign(arch.layer_count(), MatrixX<Scalar>());
    tape->pre.assign(arch.hidden_layers, MatrixX<Scalar>());
  }

  for (int l = 0; l < arch.hidden_layers; ++l) {
    const Eigen::Index off = arch.layer_offset(l);
    const int fi = arch.fan_in(l), fo = arch.fan_out(l);
    Eigen::Map<const MatrixX<Scalar>> w(theta.data() + off, fo, fi);
    Eigen::Map<const VectorX<Scalar>> b(theta.data() + off + Eigen::Index(fo) * fi, fo);

    MatrixX<Scalar> z = w * act;
    z.leftCols(n).colwise() += b;

    MatrixX<Scalar> out(fo, channels * n);
    auto a = out.leftCols(n);
    a = z.leftCols(n).array().tanh().matrix();
    if (order >= 1) {
      const auto s = (Scalar(1) - a.array().square()).eval();
      for (int i = 0; i < d; ++i)
        out.middleCols((1 + i) * n, n) = (s * z.middleCols((1 + i) * n, n).array()).matrix();
      if (order >= 2) {
        const auto q = (Scalar(-2) * a.array() * s).eval();
        for (int i = 0; i < d; ++i) {
          const auto dz = z.middleCols((1 + i) * n, n).array();
          out.middleCols((1 + d + i) * n, n) =
              (s * z.middleCols((1 + d + i) * n, n).array() + q * dz.square()).matrix();
        }
      }
    }
    if (tape) {
      tape->inputs[l] = std::move(act);
      tape->pre[l] = std::move(z);
    }
    act = std::move(out);
  }

  const int lo = arch.hidden_layers;
  const Eigen::Index off = arch.layer_offset(lo);
  Eigen::Map<const RowVectorX<Scalar>> w_out(theta.data() + off, arch.hidden_width);
  const Scalar b_out = theta[off + arch.hidden_width];
  const RowVectorX<Scalar> y = w_out * act;

  JetBatch<Scalar> jet;
  jet.order = order;
  jet.u = y.leftCols(n).array() + b_out;
  if (order >= 1) {
    jet.du.resize(d, n);
    for (int i = 0; i < d; ++i) jet.du.row(i) = y.middleCols((1 + i) * n, n);
  }
  if (order >= 2) {
    jet.d2u.resize(d, n);
    for (int i = 0; i < d; ++i) jet.d2u.row(i) = y.middleCols((1 + d + i) * n, n);
  }
  if (tape) tape->inputs[lo] = std::move(act);
  return jet;
}

/// Reverse sweep: accumulates d(functional)/d(theta) into `grad` given the
/// adjoints of every jet channel produced by the taped forward sweep.
template <typename Scalar>
void backward(const NetworkArch& arch, const Eigen::Ref<const VectorX<Scalar>>& theta,
              const JetTape<Scalar>& tape, const JetBatch<Scalar>& adjoint,
              Eigen::Ref<VectorX<Scalar>> grad) {
  detail::check_theta<Scalar>(arch, theta.size());
  detail::check_theta<Scalar>(arch, grad.size());
  const int d = arch.input_dim;
  const int order = tape.order;
  const Eigen::Index n = tape.n_points;
  if (adjoint.size() != n) throw std::invalid_argument("adjoint batch size mismatch");
  const int channels = detail::channel_count(d, order);

  RowVectorX<Scalar> ybar = RowVectorX<Scalar>::Zero(channels * n);
  ybar.leftCols(n) = adjoint.u;
  if (order >= 1 && adjoint.du.size() > 0)
    for (int i = 0; i < d; ++i) ybar.middleCols((1 + i) * n, n) = adjoint.du.row(i);
  if (order >= 2 && adjoint.d2u.size() > 0)
    for (int i = 0; i < d; ++i) ybar.middleCols((1 + d + i) * n, n) = adjoint.d2u.row(i);

  const int lo = arch.hidden_layers;
  Eigen::Index off = arch.layer_offset(lo);
  const int width = arch.hidden_width;
  grad.segment(off, width) += (ybar * tape.inputs[lo].transpose()).transpose();
  grad[off + width] += ybar.leftCols(n).sum();
  Eigen::Map<const RowVectorX<Scalar>> w_out(theta.data() + off, width);
  MatrixX<Scalar> abar = w_out.transpose() * ybar;

  for (int l = arch.hidden_layers - 1; l >= 0; --l) {
    off = arch.layer_offset(l);
    const int fi = arch.fan_in(l), fo = arch.fan_out(l);
    const MatrixX<Scalar>& z = tape.pre[l];
    const auto a = z.leftCols(n).array().tanh().eval();
    const auto s = (Scalar(1) - a.square()).eval();

    MatrixX<Scalar> zbar(fo, channels * n);
    auto atot = abar.leftCols(n).array().eval();
    if (order >= 1) {
      const auto q = (Scalar(-2) * a * s).eval();
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> sbar =
          Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(fo, n);
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> qbar =
          Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(fo, n);
      for (int i = 0; i < d; ++i) {
        const auto dz = z.middleCols((1 + i) * n, n).array();
        const auto da_bar = abar.middleCols((1 + i) * n, n).array();
        auto dz_bar = zbar.middleCols((1 + i) * n, n).array();
        dz_bar = s * da_bar;
        sbar += da_bar * dz;
        if (order >= 2) {
          const auto d2z = z.middleCols((1 + d + i) * n, n).array();
          const auto d2a_bar = abar.middleCols((1 + d + i) * n, n).array();
          zbar.middleCols((1 + d + i) * n, n).array() = s * d2a_bar;
          dz_bar += Scalar(2) * q * dz * d2a_bar;
          sbar += d2a_bar * d2z;
          qbar += d2a_bar * dz.square();
        }
      }
      atot += sbar * (Scalar(-2) * a);
      if (order >= 2) atot += qbar * (Scalar(-2) + Scalar(6) * a.square());
    }
    zbar.leftCols(n).array() = atot * s;

    const Eigen::Index nw = Eigen::Index(fo) * fi;
    Eigen::Map<VectorX<Scalar>> gw(grad.data() + off, nw);
    Eigen::Map<MatrixX<Scalar>>(gw.data(), fo, fi).noalias() +=
        zbar * tape.inputs[l].transpose();
    grad.segment(off + nw, fo) += zbar.leftCols(n).rowwise().sum();
    if (l > 0) {
      Eigen::Map<const MatrixX<Scalar>> w(theta.data() + off, fo, fi);
      abar = w.transpose() * zbar;
    }
  }
}

/// Network output at one point.
template <typename Scalar>
Scalar forward(const NetworkArch& arch, const Eigen::Ref<const VectorX<Scalar>>& theta,
               const Eigen::Ref<const VectorX<Scalar>>& point) {
  const MatrixX<Scalar> p = point;
  return forward_jet<Scalar>(arch, theta, p, 0).u[0];
}

/// Output, input gradient and diagonal input Hessian at one point.
template <typename Scalar>
JetOutput<Scalar> forward_jet(const NetworkArch& arch,
                              const Eigen::Ref<const VectorX<Scalar>>& theta,
                              const Eigen::Ref<const VectorX<Scalar>>& point) {
  const MatrixX<Scalar> p = point;
  const JetBatch<Scalar> b = forward_jet<Scalar>(arch, theta, p, 2);
  return {b.u[0], b.du.col(0), b.d2u.col(0)};
}

/// Points evaluated by a functional, with the jet order they need.
struct PointBatch {
  Eigen::MatrixXd points;
  int order = 0;
};

/// What a functional returns: its value, the adjoint of each input batch's
/// jets, and optionally a direct gradient in theta (for terms such as priors
/// that do not pass through the network).
struct FunctionalValue {
  double value = 0.0;
  std::vector<JetBatch<double>> adjoints;
  Eigen::VectorXd direct_gradient;
};

/// Value and parameter gradient of a scalar functional of network
/// evaluations. `functional(outputs, theta)` receives one JetBatch per entry
/// of `batches` and must return a FunctionalValue.
template <class Functional>
double grad_params(const NetworkArch& arch, const Eigen::Ref<const Eigen::VectorXd>& theta,
                   const std::vector<PointBatch>& batches, Functional&& functional,
                   Eigen::VectorXd& grad) {
  std::vector<JetTape<double>> tapes(batches.size());
  std::vector<JetBatch<double>> outputs;
  outputs.reserve(batches.size());
  for (std::size_t k = 0; k < batches.size(); ++k)
    outputs.push_back(
        forward_jet<double>(arch, theta, batches[k].points, batches[k].order, &tapes[k]));

  FunctionalValue fv = functional(static_cast<const std::vector<JetBatch<double>>&>(outputs),
                                  static_cast<const Eigen::VectorXd&>(theta));
  if (!std::isfinite(fv.value)) throw EvaluationError("functional evaluated to a non-finite value");
  if (fv.adjoints.size() != batches.size())
    throw std::invalid_argument("functional must return one adjoint per point batch");

  grad = Eigen::VectorXd::Zero(theta.size());
  for (std::size_t k = 0; k < batches.size(); ++k)
    backward<double>(arch, theta, tapes[k], fv.adjoints[k], grad);
  if (fv.direct_gradient.size() > 0) grad += fv.direct_gradient;
  if (!grad.allFinite()) throw EvaluationError("non-finite parameter gradient");
  return fv.value;
}

}  // namespace dpinn
