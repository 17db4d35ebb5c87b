#pragma once
// Executable checks of the structural claims: Fact A, Fact B, invariance of
// E under augmented flow, agreement of stationary points, the sigma / C
// constants, exponential attraction under the E-perp penalty, and local
// convergence near strict equivariant minima.

#include "eqreg/dynamics.hpp"
#include "eqreg/risk.hpp"
#include "eqreg/subspaces.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace eqreg {

struct CheckReport {
  std::string name;
  bool passed = false;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string details;
};

inline CheckReport make_report(std::string name, double residual, double tolerance, std::string details = {}) {
  return {std::move(name), residual <= tolerance, residual, tolerance, std::move(details)};
}

struct DecayEstimate {
  double gamma = 0.0;
  double rate = 0.0;  // |Y(t)| ~ |Y0| exp(rate * t)
  double r_squared = 0.0;
  double sigma_hat = 0.0;
  double c_hat = 0.0;
  double alpha = 0.0;
  double threshold = 0.0;  // c_hat * sqrt(alpha) - sigma_hat
  bool above_threshold = false;
  bool diverged = false;
  std::vector<double> times;
  std::vector<double> distances;
};

enum class HessianKind { augmented, nominal };
enum class Block { E, E_perp };

namespace detail {

inline VectorXd concat(const std::vector<VectorXd>& parts) {
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  VectorXd v(n);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    v.segment(off, p.size()) = p;
    off += p.size();
  }
  return v;
}

inline std::vector<VectorXd> split_like(const VectorXd& v, const std::vector<VectorXd>& like) {
  std::vector<VectorXd> parts;
  Eigen::Index off = 0;
  for (const auto& p : like) {
    parts.push_back(v.segment(off, p.size()));
    off += p.size();
  }
  return parts;
}

/// Projection of concatenated L-coordinates onto the E or E-perp block.
inline VectorXd project_block(const EquivariantStructure& s, const VectorXd& c, Block b) {
  VectorXd out(c.size());
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < s.num_layers(); ++i) {
    const auto& q = s.e_basis(i);
    const Eigen::Index k = q.rows();
    const VectorXd part = c.segment(off, k);
    const VectorXd e = q * (q.transpose() * part);
    out.segment(off, k) = b == Block::E ? e : VectorXd(part - e);
    off += k;
  }
  return out;
}

inline std::size_t block_dim(const EquivariantStructure& s, Block b) { return b == Block::E ? s.dim_E() : s.dim_E_perp(); }

}  // namespace detail

/// Hessian-vector product used by the constant estimators: the model's
/// exact Hessian when it has one, central differences otherwise.
inline ParamPoint hvp(const RiskContext& ctx, HessianKind kind, const ParamPoint& a, const ParamPoint& y) {
  if (kind == HessianKind::augmented) {
    if (auto e = ctx.risk->exact_hvp_augmented(a, y)) return *e;
    return hvp_augmented(ctx, a, y);
  }
  if (auto e = ctx.risk->exact_hvp_nominal(a, y)) return *e;
  return hvp_nominal(ctx, a, y);
}

/// Smallest Rayleigh quotient of Y -> Pi_block Pi_L R''(A) Y on the block
/// (T E or T E-perp), by Lanczos with full reorthogonalization and a fixed
/// iteration budget. Exact once iters reaches the block dimension.
template <class Rng>
double min_rayleigh(const RiskContext& ctx, HessianKind kind, Block block, const ParamPoint& a, std::size_t iters, Rng& rng) {
  const auto& s = *ctx.structure;
  const std::size_t dim = detail::block_dim(s, block);
  if (dim == 0) return std::numeric_limits<double>::infinity();
  const auto like = s.l_coords(a);
  auto op = [&](const VectorXd& v) {
    const ParamPoint y = s.from_l_coords(detail::split_like(v, like));
    const ParamPoint hy = hvp(ctx, kind, a, y);
    return detail::project_block(s, detail::concat(s.l_coords(s.project_L(hy))), block);
  };
  std::normal_distribution<double> n01(0.0, 1.0);
  VectorXd v(static_cast<Eigen::Index>(s.dim_L()));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = n01(rng);
  v = detail::project_block(s, v, block);
  v.normalize();
  const std::size_t m = std::min(iters, dim);
  std::vector<VectorXd> basis{v};
  std::vector<double> alpha, beta;
  for (std::size_t j = 0; j < m; ++j) {
    VectorXd w = op(basis[j]);
    const double aj = basis[j].dot(w);
    alpha.push_back(aj);
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) w -= q.dot(w) * q;
    const double bj = w.norm();
    if (j + 1 == m || bj < 1e-10 * (1.0 + std::abs(aj))) break;
    beta.push_back(bj);
    basis.push_back(w / bj);
  }
  const auto n = static_cast<Eigen::Index>(alpha.size());
  MatrixXd t = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i, i) = alpha[static_cast<std::size_t>(i)];
    if (i + 1 < n) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(t, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// sigma-hat: minimum over sampled A in E of the smallest Rayleigh quotient
/// of the projected Hessian on T E-perp. A sampled estimate, not a uniform
/// bound, and possibly negative.
inline double estimate_sigma(const RiskContext& ctx, std::size_t samples_A, std::size_t iters, std::uint64_t seed,
                             HessianKind kind = HessianKind::augmented, double a_scale = 1.0) {
  std::mt19937_64 rng(seed);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < samples_A; ++k) {
    const ParamPoint a = a_scale * ctx.structure->random_in_E(rng);
    best = std::min(best, min_rayleigh(ctx, kind, Block::E_perp, a, iters, rng));
  }
  return best;
}

/// C-hat = max over probes of |hvp(A + eps Z, Y) - hvp(A, Y)| / (eps |Z| |Y|)
/// with A in E, Z in T L and Y in T E-perp of unit norm.
inline double estimate_c(const RiskContext& ctx, std::size_t probes, std::uint64_t seed, double a_scale = 1.0) {
  const auto& s = *ctx.structure;
  std::mt19937_64 rng(seed);
  double best = 0.0;
  for (std::size_t k = 0; k < probes; ++k) {
    const ParamPoint a = a_scale * s.random_in_E(rng);
    ParamPoint z = s.random_in_E(rng) + s.random_in_E_perp(rng);
    ParamPoint y = s.random_in_E_perp(rng);
    if (z.norm() == 0.0 || y.norm() == 0.0) continue;
    z *= 1.0 / z.norm();
    y *= 1.0 / y.norm();
    const double eps = 1e-3 * (1.0 + a.norm());
    const ParamPoint d = hvp(ctx, HessianKind::augmented, a + eps * z, y) - hvp(ctx, HessianKind::augmented, a, y);
    best = std::max(best, d.norm() / eps);
  }
  return best;
}

/// Pi_L grad R^aug(A) = Pi_E grad R(A) on random A in E.
inline CheckReport check_fact_a(const RiskContext& ctx, std::size_t trials, std::uint64_t seed, double tol = 1e-8) {
  const auto& s = *ctx.structure;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const ParamPoint a = s.random_in_E(rng);
    const ParamPoint gn = ctx.risk->grad_nominal(a);
    const ParamPoint lhs = s.project_L(ctx.risk->grad_augmented(a));
    const ParamPoint rhs = s.project_E(gn);
    worst = std::max(worst, (lhs - rhs).norm() / (1.0 + gn.norm()));
  }
  return make_report("fact_a", worst, tol, std::to_string(trials) + " random points of E");
}

/// Fact A residual evaluated at a given point (used for power checks off E).
inline double fact_a_residual(const RiskContext& ctx, const ParamPoint& a) {
  const auto& s = *ctx.structure;
  const ParamPoint gn = ctx.risk->grad_nominal(a);
  return (s.project_L(ctx.risk->grad_augmented(a)) - s.project_E(gn)).norm() / (1.0 + gn.norm());
}

/// Pi_L (R^aug)''(A) Y stays in T E-perp for A in E and unit Y in T E-perp.
/// `exact` uses the model's closed-form Hessian (and fails if it has none).
inline CheckReport check_fact_b(const RiskContext& ctx, std::size_t trials, std::uint64_t seed, bool exact = false,
                                std::optional<double> tol = std::nullopt) {
  const auto& s = *ctx.structure;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const ParamPoint a = s.random_in_E(rng);
    ParamPoint y = s.random_in_E_perp(rng);
    if (y.norm() > 0.0) y *= 1.0 / y.norm();
    ParamPoint h;
    if (exact) {
      auto e = ctx.risk->exact_hvp_augmented(a, y);
      if (!e) return make_report("fact_b_exact", std::numeric_limits<double>::infinity(), 0.0, "model has no exact Hessian");
      h = *e;
    } else {
      h = hvp_augmented(ctx, a, y);
    }
    worst = std::max(worst, s.project_E(s.project_L(h)).norm());
  }
  return make_report(exact ? "fact_b_exact" : "fact_b_fd", worst, tol.value_or(exact ? 1e-8 : 1e-5),
                     std::to_string(trials) + " (A, Y) pairs");
}

/// Runs the flow from A0 and reports max_t dist_E(A(t)) against 10 h |A0|.
inline CheckReport check_invariance_theorem1(const RiskContext& ctx, const DynamicsConfig& cfg, const ParamPoint& a0) {
  double worst = ctx.structure->distance_to_E(a0);
  const double bound = 10.0 * cfg.step_size * a0.norm();
  const Trajectory tr = integrate(ctx, cfg, a0);
  for (const auto& r : tr.records) worst = std::max(worst, r.dist_E);
  std::string det = to_string(cfg.mode) + " flow, " + std::to_string(cfg.num_steps) + " steps";
  if (tr.status == RunStatus::diverged) return make_report("theorem1_invariance", std::numeric_limits<double>::infinity(), bound, det + ", diverged");
  return make_report("theorem1_invariance", worst, bound, det);
}

/// Negative control: a nominal-mode run from A0 in E must leave E by at
/// least `factor` times the invariance bound. residual = factor * bound / drift.
inline CheckReport check_theorem1_negative_control(const RiskContext& ctx, DynamicsConfig cfg, const ParamPoint& a0,
                                                   double factor = 10.0) {
  cfg.mode = FlowMode::nominal;
  const double bound = 10.0 * cfg.step_size * a0.norm();
  const Trajectory tr = integrate(ctx, cfg, a0);
  double drift = 0.0;
  for (const auto& r : tr.records) drift = std::max(drift, r.dist_E);
  std::ostringstream os;
  os << "nominal drift " << drift << " vs invariance bound " << bound;
  return make_report("theorem1_negative_control", factor * bound / std::max(drift, 1e-300), 1.0, os.str());
}

/// Stationary points on E agree: |Pi_L grad R^aug(A*)| must not exceed
/// max(tol, 10 |Pi_E grad R(A*)|).
inline CheckReport check_stationarity_theorem2(const RiskContext& ctx, const ParamPoint& a_star, double tol) {
  const auto& s = *ctx.structure;
  const double aug = s.project_L(ctx.risk->grad_augmented(a_star)).norm();
  const double eq = s.project_E(ctx.risk->grad_nominal(a_star)).norm();
  const bool stationary = eq < 1e-8 * (1.0 + a_star.norm());
  std::ostringstream os;
  os << "|Pi_L grad R_aug| = " << aug << ", |Pi_E grad R| = " << eq << (stationary ? "; stationary" : "; agree, not stationary");
  return make_report("theorem2_stationarity", aug, std::max(tol, 10.0 * eq), os.str());
}

struct DecayFit {
  double slope = 0.0;
  double r_squared = 0.0;
};

/// Least squares fit of log(max(d, 1e-14)) against t over the final 80% of samples.
inline DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& d) {
  const std::size_t n = t.size();
  const std::size_t first = n / 5;
  const std::size_t m = n - first;
  if (m < 2) return {};
  double st = 0, sy = 0;
  std::vector<double> y(n);
  for (std::size_t k = first; k < n; ++k) {
    y[k] = std::log(std::max(d[k], 1e-14));
    st += t[k];
    sy += y[k];
  }
  const double mt = st / static_cast<double>(m), my = sy / static_cast<double>(m);
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t k = first; k < n; ++k) {
    stt += (t[k] - mt) * (t[k] - mt);
    sty += (t[k] - mt) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  DecayFit f;
  f.slope = stt > 0 ? sty / stt : 0.0;
  f.r_squared = (stt > 0 && syy > 0) ? std::clamp(sty * sty / (stt * syy), 0.0, 1.0) : 1.0;
  return f;
}

struct AttractorOptions {
  std::size_t steps = 2000;
  double target_log_decay = 15.0;  // horizon T = target / (sigma_hat + gamma) when that is positive
  double fallback_horizon = 30.0;
  Integrator integrator = Integrator::rk4;
  std::size_t sigma_samples = 3;
  std::size_t sigma_iters = 200;
  std::size_t c_probes = 5;
  std::uint64_t seed = 0;
  std::optional<ParamPoint> x0;  // point of E; random when absent
  double x0_scale = 1.0;
};

/// alpha = (2 / gamma) R^aug(A0) + |Y0|^2, with R^aug clamped at zero.
inline double attractor_alpha(double gamma, double aug_risk0, double y0_norm) {
  if (gamma <= 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 / gamma * std::max(aug_risk0, 0.0) + y0_norm * y0_norm;
}

/// Regularized augmented flow from A0 = X0 + Y0 with |Y0| = r0 for every
/// gamma; fits the decay rate of dist_E and reports the constants of the
/// Gronwall bound.
inline std::vector<DecayEstimate> check_attractor_theorem3(const RiskContext& ctx, const std::vector<double>& gammas,
                                                           double r0, const AttractorOptions& opt = {}) {
  const auto& s = *ctx.structure;
  const double sigma = estimate_sigma(ctx, opt.sigma_samples, opt.sigma_iters, opt.seed, HessianKind::augmented, opt.x0_scale);
  const double c_hat = estimate_c(ctx, opt.c_probes, opt.seed + 1, opt.x0_scale);
  std::mt19937_64 rng(opt.seed + 2);
  const ParamPoint x0 = opt.x0 ? *opt.x0 : opt.x0_scale * s.random_in_E(rng);
  ParamPoint y0 = s.random_in_E_perp(rng);
  y0 *= r0 / y0.norm();
  const ParamPoint a0 = x0 + y0;
  const double aug0 = ctx.risk->augmented_risk(a0);
  std::vector<DecayEstimate> out;
  for (double gamma : gammas) {
    const RiskContext g = ctx.with_gamma(gamma);
    DecayEstimate est;
    est.gamma = gamma;
    est.sigma_hat = sigma;
    est.c_hat = c_hat;
    est.alpha = attractor_alpha(gamma, aug0, r0);
    est.threshold = c_hat * std::sqrt(est.alpha) - sigma;
    est.above_threshold = gamma > est.threshold;
    const double k = sigma + gamma;
    const double horizon = k > 0.05 ? opt.target_log_decay / k : opt.fallback_horizon;
    DynamicsConfig cfg;
    cfg.mode = FlowMode::regularized_augmented;
    cfg.integrator = opt.integrator;
    cfg.num_steps = opt.steps;
    cfg.step_size = horizon / static_cast<double>(opt.steps);
    cfg.record_every = 1;
    const Trajectory tr = integrate(g, cfg, a0);
    est.diverged = tr.status == RunStatus::diverged;
    for (const auto& r : tr.records) {
      est.times.push_back(r.time);
      est.distances.push_back(r.dist_E);
    }
    const DecayFit fit = fit_decay_rate(est.times, est.distances);
    est.rate = fit.slope;
    est.r_squared = fit.r_squared;
    out.push_back(std::move(est));
  }
  return out;
}

/// Largest ratio d(t)^2 / (d(0)^2 exp(2 (C sqrt(alpha) - sigma - gamma) t)).
/// The Gronwall bound holds with slack s iff this is at most 1 + s.
inline double gronwall_ratio(const DecayEstimate& e) {
  if (e.distances.empty()) return 0.0;
  const double d0 = e.distances.front();
  const double k = e.c_hat * std::sqrt(e.alpha) - e.sigma_hat - e.gamma;
  double worst = 0.0;
  for (std::size_t i = 0; i < e.times.size(); ++i) {
    const double bound = d0 * d0 * std::exp(2.0 * k * e.times[i]);
    if (bound > 0.0) worst = std::max(worst, e.distances[i] * e.distances[i] / bound);
  }
  return worst;
}

struct LocalConvergenceOptions {
  double horizon = 10.0;
  std::size_t steps = 2000;
  std::size_t sigma_iters = 200;
  std::uint64_t seed = 0;
  std::optional<ParamPoint> direction;  // perturbation direction in T L; random when absent
};

/// Starts regularized augmented flow at X* + perturbation of norm
/// `perturb_scale` and requires |A(T) - X*| < 0.1 perturb_scale. X* must be
/// stationary for equivariant training with a positive Hessian on T E.
inline CheckReport check_remark2_local(const RiskContext& ctx, const ParamPoint& x_star, double perturb_scale,
                                       const LocalConvergenceOptions& opt = {}) {
  const auto& s = *ctx.structure;
  std::mt19937_64 rng(opt.seed);
  const double grad_e = s.project_E(ctx.risk->grad_nominal(x_star)).norm();
  if (!(grad_e < 1e-8 * (1.0 + x_star.norm())))
    return make_report("remark2_local", std::numeric_limits<double>::infinity(), 0.0,
                       "refused: X* is not stationary for equivariant training (|Pi_E grad R| = " + std::to_string(grad_e) + ")");
  const double curv = min_rayleigh(ctx, HessianKind::nominal, Block::E, x_star, opt.sigma_iters, rng);
  if (!(curv > 0.0))
    return make_report("remark2_local", std::numeric_limits<double>::infinity(), 0.0,
                       "refused: X* is not a strict minimum on E (min curvature " + std::to_string(curv) + ")");
  ParamPoint dir = opt.direction ? s.project_L(*opt.direction) : s.random_in_E(rng) + s.random_in_E_perp(rng);
  if (dir.norm() > 0.0) dir *= perturb_scale / dir.norm();
  DynamicsConfig cfg;
  cfg.mode = FlowMode::regularized_augmented;
  cfg.integrator = Integrator::rk4;
  cfg.num_steps = opt.steps;
  cfg.step_size = opt.horizon / static_cast<double>(opt.steps);
  cfg.record_every = opt.steps;
  const Trajectory tr = integrate(ctx, cfg, x_star + dir);
  const double dist = tr.status == RunStatus::diverged ? std::numeric_limits<double>::infinity() : (tr.final_point - x_star).norm();
  std::ostringstream os;
  os << "gamma " << ctx.gamma << ", T " << opt.horizon << ", curvature on E " << curv << ", terminal distance " << dist;
  return make_report("remark2_local", dist, 0.1 * perturb_scale, os.str());
}

/// Closed-form minimizer of a quadratic risk restricted to E.
inline ParamPoint quadratic_minimizer_on_E(const EquivariantStructure& s, const QuadraticRisk& q) {
  const auto n = static_cast<Eigen::Index>(s.dim_E());
  const ParamPoint tmpl = s.zeros();
  MatrixXd basis(static_cast<Eigen::Index>(tmpl.size()), n);
  for (Eigen::Index j = 0; j < n; ++j) basis.col(j) = s.e_basis_element(static_cast<std::size_t>(j)).flatten();
  const MatrixXd he = basis.transpose() * q.hessian() * basis;
  const VectorXd z = he.ldlt().solve(basis.transpose() * q.linear());
  return tmpl.unflatten_like(basis * z);
}

}  // namespace eqreg
