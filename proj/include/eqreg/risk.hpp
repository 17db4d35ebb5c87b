#pragma once
// Nominal, augmented and regularized risks with their gradients and
// Hessian-vector products.

#include "eqreg/group.hpp"
#include "eqreg/network.hpp"
#include "eqreg/subspaces.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace eqreg {

/// A risk R and its augmented counterpart R^aug on the parameter tuples.
class RiskModel {
 public:
  virtual ~RiskModel() = default;
  virtual double nominal_risk(const ParamPoint& a) const = 0;
  virtual double augmented_risk(const ParamPoint& a) const = 0;
  virtual ParamPoint grad_nominal(const ParamPoint& a) const = 0;
  virtual ParamPoint grad_augmented(const ParamPoint& a) const = 0;
  /// Exact (R^aug)''(A) Y when the model knows its Hessian in closed form.
  virtual std::optional<ParamPoint> exact_hvp_augmented(const ParamPoint&, const ParamPoint&) const {
    return std::nullopt;
  }
  virtual std::optional<ParamPoint> exact_hvp_nominal(const ParamPoint&, const ParamPoint&) const {
    return std::nullopt;
  }
};

/// Empirical risk of a network over a finite dataset. Augmentation is the
/// exact uniform average over all group elements acting on inputs by rho_0
/// and on targets by rho_L.
class NetworkRisk : public RiskModel {
 public:
  NetworkRisk(Architecture arch, std::vector<LabeledSample> data, Representation rho_in, Representation rho_out)
      : arch_(std::move(arch)), data_(std::move(data)), rho_in_(std::move(rho_in)), rho_out_(std::move(rho_out)) {
    arch_.validate();
    if (data_.empty()) throw std::invalid_argument("risk: dataset must be non-empty");
    if (rho_in_.dim() != arch_.input_dim() || rho_out_.dim() != arch_.output_dim())
      throw std::invalid_argument("risk: representation dims do not match the architecture");
    if (rho_in_.group().order() != rho_out_.group().order())
      throw std::invalid_argument("risk: input and output representations of different groups");
    for (const auto& s : data_)
      if (static_cast<std::size_t>(s.input.size()) != arch_.input_dim() ||
          static_cast<std::size_t>(s.target.size()) != arch_.output_dim())
        throw std::invalid_argument("risk: sample dimension mismatch");
  }

  const Architecture& arch() const { return arch_; }
  const std::vector<LabeledSample>& data() const { return data_; }
  const Representation& rho_in() const { return rho_in_; }
  const Representation& rho_out() const { return rho_out_; }
  std::size_t group_order() const { return rho_in_.group().order(); }

  LabeledSample transformed(std::size_t g, const LabeledSample& s) const {
    return {rho_in_.apply(g, s.input), rho_out_.apply(g, s.target)};
  }

  double nominal_risk(const ParamPoint& a) const override {
    double acc = 0.0;
    for (const auto& s : data_) acc += sample_loss(arch_, a, s);
    return acc / static_cast<double>(data_.size());
  }

  double augmented_risk(const ParamPoint& a) const override {
    double acc = 0.0;
    for (std::size_t g = 0; g < group_order(); ++g)
      for (const auto& s : data_) acc += sample_loss(arch_, a, transformed(g, s));
    return acc / static_cast<double>(data_.size() * group_order());
  }

  ParamPoint grad_nominal(const ParamPoint& a) const override {
    ParamPoint acc = a.zeros_like();
    for (const auto& s : data_) acc += grad_sample(arch_, a, s);
    return acc *= 1.0 / static_cast<double>(data_.size());
  }

  ParamPoint grad_augmented(const ParamPoint& a) const override {
    ParamPoint acc = a.zeros_like();
    for (std::size_t g = 0; g < group_order(); ++g)
      for (const auto& s : data_) acc += grad_sample(arch_, a, transformed(g, s));
    return acc *= 1.0 / static_cast<double>(data_.size() * group_order());
  }

 private:
  Architecture arch_;
  std::vector<LabeledSample> data_;
  Representation rho_in_;
  Representation rho_out_;
};

/// Matrix of A -> rho_bar(g) A acting on flattened parameters.
inline MatrixXd parameter_action_matrix(const EquivariantStructure& s, std::size_t g) {
  const ParamPoint tmpl = s.zeros();
  const auto n = static_cast<Eigen::Index>(tmpl.size());
  MatrixXd t(n, n);
  for (Eigen::Index j = 0; j < n; ++j) t.col(j) = s.act(g, tmpl.unflatten_like(VectorXd::Unit(n, j))).flatten();
  return t;
}

/// R(A) = 1/2 <a, H a> - <b, a> + c on the flattened parameter vector a.
/// Augmentation acts on parameters: R^aug(A) = (1/|G|) sum_g R(rho_bar(g) A),
/// which agrees with data augmentation for networks with equivariant
/// nonlinearities and an invariant loss.
class QuadraticRisk : public RiskModel {
 public:
  QuadraticRisk(std::shared_ptr<const EquivariantStructure> structure, MatrixXd hessian, VectorXd linear, double constant)
      : structure_(std::move(structure)), h_(std::move(hessian)), b_(std::move(linear)), c_(constant) {
    template_ = structure_->zeros();
    const auto n = static_cast<Eigen::Index>(template_.size());
    if (h_.rows() != n || h_.cols() != n || b_.size() != n) throw std::invalid_argument("quadratic risk: dimension mismatch");
    if ((h_ - h_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + h_.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("quadratic risk: Hessian must be symmetric");
    // H_aug = avg_g T_g^T H T_g and b_aug = avg_g T_g^T b with T_g the flattened action.
    const auto& G = structure_->group();
    h_aug_ = MatrixXd::Zero(n, n);
    b_aug_ = VectorXd::Zero(n);
    for (std::size_t g = 0; g < G.order(); ++g) {
      const MatrixXd t = action_matrix(g);
      h_aug_ += t.transpose() * h_ * t;
      b_aug_ += t.transpose() * b_;
    }
    h_aug_ /= static_cast<double>(G.order());
    b_aug_ /= static_cast<double>(G.order());
    h_aug_ = 0.5 * (h_aug_ + h_aug_.transpose()).eval();
  }

  /// Minimizer-centred form R(A) = 1/2 <a - a*, H (a - a*)>.
  static QuadraticRisk centred(std::shared_ptr<const EquivariantStructure> s, const MatrixXd& h, const ParamPoint& center) {
    const VectorXd cs = center.flatten();
    return QuadraticRisk(std::move(s), h, h * cs, 0.5 * cs.dot(h * cs));
  }

  const MatrixXd& hessian() const { return h_; }
  const MatrixXd& augmented_hessian() const { return h_aug_; }
  const VectorXd& linear() const { return b_; }
  const VectorXd& augmented_linear() const { return b_aug_; }
  double constant() const { return c_; }

  MatrixXd action_matrix(std::size_t g) const { return parameter_action_matrix(*structure_, g); }

  double nominal_risk(const ParamPoint& a) const override { return value(h_, b_, a.flatten()); }
  double augmented_risk(const ParamPoint& a) const override { return value(h_aug_, b_aug_, a.flatten()); }
  ParamPoint grad_nominal(const ParamPoint& a) const override { return template_.unflatten_like(h_ * a.flatten() - b_); }
  ParamPoint grad_augmented(const ParamPoint& a) const override {
    return template_.unflatten_like(h_aug_ * a.flatten() - b_aug_);
  }
  std::optional<ParamPoint> exact_hvp_augmented(const ParamPoint&, const ParamPoint& y) const override {
    return template_.unflatten_like(h_aug_ * y.flatten());
  }
  std::optional<ParamPoint> exact_hvp_nominal(const ParamPoint&, const ParamPoint& y) const override {
    return template_.unflatten_like(h_ * y.flatten());
  }

 private:
  double value(const MatrixXd& h, const VectorXd& b, const VectorXd& a) const { return 0.5 * a.dot(h * a) - b.dot(a) + c_; }

  std::shared_ptr<const EquivariantStructure> structure_;
  MatrixXd h_;
  VectorXd b_;
  double c_;
  MatrixXd h_aug_;
  VectorXd b_aug_;
  ParamPoint template_;
};

/// Exact quadratic form of a one-layer linear network with mse loss:
/// H = (Sigma_xx kron I_out) on vec(A), b = vec(E[y x^T]), c = E|y|^2 / 2.
inline QuadraticRisk linear_mse_as_quadratic(std::shared_ptr<const EquivariantStructure> s, const NetworkRisk& net) {
  const auto& arch = net.arch();
  if (arch.num_layers() != 1 || arch.nonlinearities[0] != Activation::identity || arch.loss != LossKind::mse)
    throw std::invalid_argument("linear_mse_as_quadratic: need a one-layer identity network with mse");
  const auto in = static_cast<Eigen::Index>(arch.input_dim());
  const auto out = static_cast<Eigen::Index>(arch.output_dim());
  MatrixXd sxx = MatrixXd::Zero(in, in);
  MatrixXd syx = MatrixXd::Zero(out, in);
  double yy = 0.0;
  for (const auto& smp : net.data()) {
    sxx += smp.input * smp.input.transpose();
    syx += smp.target * smp.input.transpose();
    yy += smp.target.squaredNorm();
  }
  const double n = static_cast<double>(net.data().size());
  sxx /= n;
  syx /= n;
  // vec index of A(r, c) is c * out + r, so H = kron(Sigma_xx, I_out).
  MatrixXd h = MatrixXd::Zero(in * out, in * out);
  for (Eigen::Index c = 0; c < in; ++c)
    for (Eigen::Index c2 = 0; c2 < in; ++c2)
      for (Eigen::Index r = 0; r < out; ++r) h(c * out + r, c2 * out + r) = sxx(c, c2);
  VectorXd b = syx.reshaped();
  return QuadraticRisk(std::move(s), h, b, 0.5 * yy / n);
}

/// Risk model, structure and regularization strength gamma for the flows.
struct RiskContext {
  std::shared_ptr<const RiskModel> risk;
  std::shared_ptr<const EquivariantStructure> structure;
  double gamma = 0.0;

  RiskContext(std::shared_ptr<const RiskModel> r, std::shared_ptr<const EquivariantStructure> s, double g)
      : risk(std::move(r)), structure(std::move(s)), gamma(g) {
    if (!risk || !structure) throw std::invalid_argument("risk context: null model or structure");
    if (!(gamma >= 0.0)) throw std::invalid_argument("risk context: gamma must be non-negative");
  }

  RiskContext with_gamma(double g) const { return RiskContext(risk, structure, g); }
};

inline double nominal_risk(const RiskContext& ctx, const ParamPoint& a) { return ctx.risk->nominal_risk(a); }
inline double augmented_risk(const RiskContext& ctx, const ParamPoint& a) { return ctx.risk->augmented_risk(a); }
inline ParamPoint grad_nominal(const RiskContext& ctx, const ParamPoint& a) { return ctx.risk->grad_nominal(a); }
inline ParamPoint grad_augmented(const RiskContext& ctx, const ParamPoint& a) { return ctx.risk->grad_augmented(a); }

/// S_gamma(A) = R^aug(A) + gamma/2 |Pi_{E-perp} A|^2
inline double regularized_loss(const RiskContext& ctx, const ParamPoint& a) {
  const double d = ctx.structure->distance_to_E(a);
  return ctx.risk->augmented_risk(a) + 0.5 * ctx.gamma * d * d;
}

namespace detail {
inline double hvp_step(const ParamPoint& a, const ParamPoint& y) { return 1e-4 * (1.0 + a.norm()) / (1.0 + y.norm()); }

template <class Grad>
ParamPoint central_difference(const Grad& grad, const ParamPoint& a, const ParamPoint& y, double eps) {
  if (y.squared_norm() == 0.0) return a.zeros_like();
  ParamPoint plus = grad(a + eps * y);
  plus -= grad(a - eps * y);
  return plus *= 1.0 / (2.0 * eps);
}
}  // namespace detail

/// (R^aug)''(A) Y by central differences of grad_augmented.
inline ParamPoint hvp_augmented(const RiskContext& ctx, const ParamPoint& a, const ParamPoint& y, double eps = 0.0) {
  if (eps <= 0.0) eps = detail::hvp_step(a, y);
  return detail::central_difference([&](const ParamPoint& p) { return ctx.risk->grad_augmented(p); }, a, y, eps);
}

/// R''(A) Y by central differences of grad_nominal.
inline ParamPoint hvp_nominal(const RiskContext& ctx, const ParamPoint& a, const ParamPoint& y, double eps = 0.0) {
  if (eps <= 0.0) eps = detail::hvp_step(a, y);
  return detail::central_difference([&](const ParamPoint& p) { return ctx.risk->grad_nominal(p); }, a, y, eps);
}

}  // namespace eqreg
