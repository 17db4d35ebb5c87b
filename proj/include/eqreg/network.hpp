#pragma once
// Bias-free dense networks x_{i+1} = sigma_{i+1}(A_i x_i), their losses, and
// reverse-mode gradients with respect to every layer.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace eqreg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { tanh, relu, identity };
enum class LossKind { cross_entropy, mse };

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "mse") return LossKind::mse;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

struct Architecture {
  std::vector<std::size_t> space_dims;     // dim X_0 ... dim X_L
  std::vector<Activation> nonlinearities;  // sigma_1 ... sigma_L
  LossKind loss = LossKind::mse;

  Architecture() = default;
  Architecture(std::vector<std::size_t> dims, std::vector<Activation> acts, LossKind l)
      : space_dims(std::move(dims)), nonlinearities(std::move(acts)), loss(l) {
    validate();
  }

  std::size_t num_layers() const { return nonlinearities.size(); }
  std::size_t input_dim() const { return space_dims.front(); }
  std::size_t output_dim() const { return space_dims.back(); }

  void validate() const {
    if (nonlinearities.empty()) throw std::invalid_argument("architecture needs at least one layer");
    if (space_dims.size() != nonlinearities.size() + 1)
      throw std::invalid_argument("architecture: need one more space than layers");
    for (auto d : space_dims)
      if (d == 0) throw std::invalid_argument("architecture: zero-dimensional space");
  }
};

/// A tuple of layer matrices with the Frobenius inner product summed over
/// layers. Arithmetic is layer-wise; shapes must agree.
class ParamPoint {
 public:
  ParamPoint() = default;
  explicit ParamPoint(std::vector<MatrixXd> layers) : layers_(std::move(layers)) {}

  static ParamPoint zeros(const Architecture& arch) {
    std::vector<MatrixXd> ls;
    for (std::size_t i = 0; i < arch.num_layers(); ++i)
      ls.push_back(MatrixXd::Zero(static_cast<Eigen::Index>(arch.space_dims[i + 1]),
                                  static_cast<Eigen::Index>(arch.space_dims[i])));
    return ParamPoint(std::move(ls));
  }

  ParamPoint zeros_like() const {
    std::vector<MatrixXd> ls;
    for (const auto& l : layers_) ls.push_back(MatrixXd::Zero(l.rows(), l.cols()));
    return ParamPoint(std::move(ls));
  }

  std::size_t num_layers() const { return layers_.size(); }
  MatrixXd& operator[](std::size_t i) { return layers_[i]; }
  const MatrixXd& operator[](std::size_t i) const { return layers_[i]; }
  const std::vector<MatrixXd>& layers() const { return layers_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.size());
    return n;
  }

  bool same_shape(const ParamPoint& o) const {
    if (o.layers_.size() != layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (o.layers_[i].rows() != layers_[i].rows() || o.layers_[i].cols() != layers_[i].cols()) return false;
    return true;
  }

  double dot(const ParamPoint& o) const {
    check_shape(o);
    double s = 0.0;
    for (std::size_t i = 0; i < layers_.size(); ++i) s += layers_[i].cwiseProduct(o.layers_[i]).sum();
    return s;
  }
  double squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers_) s += l.squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.allFinite()) return false;
    return true;
  }

  ParamPoint& operator+=(const ParamPoint& o) {
    check_shape(o);
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i] += o.layers_[i];
    return *this;
  }
  ParamPoint& operator-=(const ParamPoint& o) {
    check_shape(o);
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i] -= o.layers_[i];
    return *this;
  }
  ParamPoint& operator*=(double s) {
    for (auto& l : layers_) l *= s;
    return *this;
  }
  /// this += s * o
  ParamPoint& axpy(double s, const ParamPoint& o) {
    check_shape(o);
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i] += s * o.layers_[i];
    return *this;
  }

  friend ParamPoint operator+(ParamPoint a, const ParamPoint& b) { return a += b; }
  friend ParamPoint operator-(ParamPoint a, const ParamPoint& b) { return a -= b; }
  friend ParamPoint operator*(double s, ParamPoint a) { return a *= s; }
  friend ParamPoint operator*(ParamPoint a, double s) { return a *= s; }
  friend ParamPoint operator-(ParamPoint a) { return a *= -1.0; }

  /// Concatenation of the column-major vectorized layers.
  VectorXd flatten() const {
    VectorXd v(static_cast<Eigen::Index>(size()));
    Eigen::Index off = 0;
    for (const auto& l : layers_) {
      v.segment(off, l.size()) = l.reshaped();
      off += l.size();
    }
    return v;
  }

  /// Inverse of flatten() using this point's layer shapes.
  ParamPoint unflatten_like(const VectorXd& v) const {
    if (static_cast<std::size_t>(v.size()) != size()) throw std::invalid_argument("unflatten: size mismatch");
    std::vector<MatrixXd> ls;
    Eigen::Index off = 0;
    for (const auto& l : layers_) {
      ls.push_back(v.segment(off, l.size()).reshaped(l.rows(), l.cols()));
      off += l.size();
    }
    return ParamPoint(std::move(ls));
  }

 private:
  void check_shape(const ParamPoint& o) const {
    if (!same_shape(o)) throw std::invalid_argument("ParamPoint: shape mismatch");
  }

  std::vector<MatrixXd> layers_;
};

struct LabeledSample {
  VectorXd input;
  VectorXd target;
};

struct ForwardResult {
  VectorXd output;
  std::vector<VectorXd> activations;     // x_0 ... x_L
  std::vector<VectorXd> preactivations;  // z_1 ... z_L with x_i = sigma_i(z_i)
};

namespace detail {

inline VectorXd activate(Activation a, const VectorXd& z) {
  switch (a) {
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::identity: return z;
  }
  throw std::logic_error("bad activation");
}

// relu'(0) := 0
inline VectorXd activation_derivative(Activation a, const VectorXd& z, const VectorXd& x) {
  switch (a) {
    case Activation::tanh: return (1.0 - x.array().square()).matrix();
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::identity: return VectorXd::Ones(z.size());
  }
  throw std::logic_error("bad activation");
}

inline void check_params(const Architecture& arch, const ParamPoint& a) {
  if (a.num_layers() != arch.num_layers()) throw std::invalid_argument("parameter/architecture layer count mismatch");
  for (std::size_t i = 0; i < a.num_layers(); ++i)
    if (static_cast<std::size_t>(a[i].rows()) != arch.space_dims[i + 1] ||
        static_cast<std::size_t>(a[i].cols()) != arch.space_dims[i])
      throw std::invalid_argument("parameter/architecture layer shape mismatch");
}

inline VectorXd softmax(const VectorXd& logits) {
  VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace detail

inline ForwardResult forward(const Architecture& arch, const ParamPoint& a, const VectorXd& x) {
  detail::check_params(arch, a);
  if (static_cast<std::size_t>(x.size()) != arch.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
  ForwardResult res;
  res.activations.reserve(arch.num_layers() + 1);
  res.activations.push_back(x);
  for (std::size_t i = 0; i < arch.num_layers(); ++i) {
    VectorXd z = a[i] * res.activations.back();
    res.activations.push_back(detail::activate(arch.nonlinearities[i], z));
    res.preactivations.push_back(std::move(z));
  }
  res.output = res.activations.back();
  return res;
}

/// cross_entropy treats `output` as logits; mse is 1/2 |output - target|^2.
inline double loss(const Architecture& arch, const VectorXd& output, const VectorXd& target) {
  if (output.size() != target.size()) throw std::invalid_argument("loss: dimension mismatch");
  switch (arch.loss) {
    case LossKind::mse: return 0.5 * (output - target).squaredNorm();
    case LossKind::cross_entropy: {
      const double m = output.maxCoeff();
      const double lse = m + std::log((output.array() - m).exp().sum());
      return -(target.array() * (output.array() - lse)).sum();
    }
  }
  throw std::logic_error("bad loss");
}

inline VectorXd loss_gradient(const Architecture& arch, const VectorXd& output, const VectorXd& target) {
  switch (arch.loss) {
    case LossKind::mse: return output - target;
    case LossKind::cross_entropy: return detail::softmax(output) * target.sum() - target;
  }
  throw std::logic_error("bad loss");
}

inline double sample_loss(const Architecture& arch, const ParamPoint& a, const LabeledSample& s) {
  if (static_cast<std::size_t>(s.target.size()) != arch.output_dim()) throw std::invalid_argument("target dimension mismatch");
  return loss(arch, forward(arch, a, s.input).output, s.target);
}

/// d loss(Phi_A(x), y) / dA for every layer, by backpropagation.
inline ParamPoint grad_sample(const Architecture& arch, const ParamPoint& a, const LabeledSample& s) {
  if (static_cast<std::size_t>(s.target.size()) != arch.output_dim()) throw std::invalid_argument("target dimension mismatch");
  const ForwardResult fr = forward(arch, a, s.input);
  ParamPoint g = a.zeros_like();
  VectorXd upstream = loss_gradient(arch, fr.output, s.target);  // dl/dx_L
  for (std::size_t k = arch.num_layers(); k-- > 0;) {
    const VectorXd delta = upstream.cwiseProduct(
        detail::activation_derivative(arch.nonlinearities[k], fr.preactivations[k], fr.activations[k + 1]));
    g[k].noalias() = delta * fr.activations[k].transpose();
    if (k > 0) upstream = a[k].transpose() * delta;
  }
  return g;
}

}  // namespace eqreg
