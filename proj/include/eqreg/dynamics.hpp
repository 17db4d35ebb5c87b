#pragma once
// Projected gradient flows (nominal, augmented, equivariant, regularized
// augmented), their time discretizations, and minibatch SGD with random
// augmentations.

#include "eqreg/network.hpp"
#include "eqreg/risk.hpp"
#include "eqreg/subspaces.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eqreg {

enum class FlowMode { nominal, augmented, equivariant, regularized_augmented };
enum class Integrator { euler, rk4 };

inline FlowMode parse_flow_mode(std::string_view s) {
  if (s == "nominal") return FlowMode::nominal;
  if (s == "augmented") return FlowMode::augmented;
  if (s == "equivariant") return FlowMode::equivariant;
  if (s == "regularized_augmented") return FlowMode::regularized_augmented;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

inline std::string to_string(FlowMode m) {
  switch (m) {
    case FlowMode::nominal: return "nominal";
    case FlowMode::augmented: return "augmented";
    case FlowMode::equivariant: return "equivariant";
    case FlowMode::regularized_augmented: return "regularized_augmented";
  }
  return "?";
}

inline Integrator parse_integrator(std::string_view s) {
  if (s == "euler") return Integrator::euler;
  if (s == "rk4") return Integrator::rk4;
  throw std::invalid_argument("unknown integrator '" + std::string(s) + "'");
}

struct DynamicsConfig {
  FlowMode mode = FlowMode::augmented;
  Integrator integrator = Integrator::euler;
  double step_size = 1e-2;
  std::size_t num_steps = 100;
  std::size_t record_every = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(step_size > 0.0)) throw std::invalid_argument("dynamics: step size must be positive");
    if (record_every < 1) throw std::invalid_argument("dynamics: record_every must be positive");
  }
};

struct TrajectoryRecord {
  std::size_t step = 0;
  double time = 0.0;
  double dist_E = 0.0;
  double risk = 0.0;
  double aug_risk = 0.0;
  double reg_loss = 0.0;
  double param_norm = 0.0;
};

enum class RunStatus { ok, diverged };

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  ParamPoint final_point;
  RunStatus status = RunStatus::ok;
};

inline constexpr double kDivergenceNorm = 1e12;

inline TrajectoryRecord make_record(const RiskContext& ctx, const ParamPoint& a, std::size_t step, double time) {
  TrajectoryRecord r;
  r.step = step;
  r.time = time;
  r.dist_E = ctx.structure->distance_to_E(a);
  r.risk = ctx.risk->nominal_risk(a);
  r.aug_risk = ctx.risk->augmented_risk(a);
  r.reg_loss = r.aug_risk + 0.5 * ctx.gamma * r.dist_E * r.dist_E;
  r.param_norm = a.norm();
  return r;
}

/// Right-hand side of the selected gradient flow at A.
inline ParamPoint flow_rhs(const RiskContext& ctx, FlowMode mode, const ParamPoint& a) {
  const auto& s = *ctx.structure;
  switch (mode) {
    case FlowMode::nominal: return -s.project_L(ctx.risk->grad_nominal(a));
    case FlowMode::augmented: return -s.project_L(ctx.risk->grad_augmented(a));
    case FlowMode::equivariant: return -s.project_E(ctx.risk->grad_nominal(a));
    case FlowMode::regularized_augmented: {
      ParamPoint r = -s.project_L(ctx.risk->grad_augmented(a));
      return r.axpy(-ctx.gamma, s.project_E_perp(a));
    }
  }
  throw std::invalid_argument("flow_rhs: unknown mode");
}

inline bool diverged(const ParamPoint& a) { return !a.all_finite() || a.norm() > kDivergenceNorm; }

/// Explicit Euler or classical RK4 on the flow; the initial state is
/// projected onto L once. Records step 0, every record_every steps and the
/// final step.
inline Trajectory integrate(const RiskContext& ctx, const DynamicsConfig& cfg, const ParamPoint& a0) {
  cfg.validate();
  Trajectory out;
  ParamPoint a = ctx.structure->project_L(a0);
  const double h = cfg.step_size;
  out.records.push_back(make_record(ctx, a, 0, 0.0));
  for (std::size_t step = 1; step <= cfg.num_steps; ++step) {
    if (cfg.integrator == Integrator::euler) {
      a.axpy(h, flow_rhs(ctx, cfg.mode, a));
    } else {
      const ParamPoint k1 = flow_rhs(ctx, cfg.mode, a);
      const ParamPoint k2 = flow_rhs(ctx, cfg.mode, a + (0.5 * h) * k1);
      const ParamPoint k3 = flow_rhs(ctx, cfg.mode, a + (0.5 * h) * k2);
      const ParamPoint k4 = flow_rhs(ctx, cfg.mode, a + h * k3);
      a.axpy(h / 6.0, k1).axpy(h / 3.0, k2).axpy(h / 3.0, k3).axpy(h / 6.0, k4);
    }
    if (diverged(a)) {
      out.status = RunStatus::diverged;
      break;
    }
    if (step % cfg.record_every == 0 || step == cfg.num_steps)
      out.records.push_back(make_record(ctx, a, step, static_cast<double>(step) * h));
  }
  out.final_point = std::move(a);
  return out;
}

struct SgdConfig {
  FlowMode mode = FlowMode::augmented;  // nominal, augmented or equivariant
  double lr = 1e-3;
  std::size_t batch_size = 10;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  /// Full risk telemetry every this many steps (0: first and last only);
  /// other rows carry NaN in the risk columns.
  std::size_t metrics_every = 0;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("sgd: learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("sgd: batch size must be positive");
    if (mode == FlowMode::regularized_augmented)
      throw std::invalid_argument("sgd: use mode=augmented; the gamma penalty is always applied");
  }
};

/// Minibatch SGD on S_gamma. In augmented mode every sample of every batch
/// is transformed by one uniformly drawn group element. The gradient is
/// projected onto T L (onto T E in equivariant mode, which carries no
/// penalty) and gamma * Pi_{E-perp} A is added. Shuffling and augmentation
/// use independent streams derived from the seed.
inline Trajectory sgd_train(const NetworkRisk& net, const RiskContext& ctx, const SgdConfig& cfg, const ParamPoint& a0) {
  cfg.validate();
  const auto& s = *ctx.structure;
  const auto& data = net.data();
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::seed_seq aug_seq{cfg.seed, std::uint64_t{0x9e3779b97f4a7c15ULL}};
  std::mt19937_64 aug_rng(aug_seq);
  std::uniform_int_distribution<std::size_t> draw(0, net.group_order() - 1);

  auto cheap_record = [&](const ParamPoint& a, std::size_t step) {
    TrajectoryRecord r;
    r.step = step;
    r.time = static_cast<double>(step) * cfg.lr;
    r.dist_E = s.distance_to_E(a);
    r.risk = r.aug_risk = r.reg_loss = std::numeric_limits<double>::quiet_NaN();
    r.param_norm = a.norm();
    return r;
  };

  Trajectory out;
  ParamPoint a = s.project_L(a0);
  out.records.push_back(make_record(ctx, a, 0, 0.0));
  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = steps_per_epoch * cfg.epochs;
  for (std::size_t epoch = 0; epoch < cfg.epochs && out.status == RunStatus::ok; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ParamPoint g = a.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        const auto& smp = data[order[k]];
        if (cfg.mode == FlowMode::augmented)
          g += grad_sample(net.arch(), a, net.transformed(draw(aug_rng), smp));
        else
          g += grad_sample(net.arch(), a, smp);
      }
      g *= 1.0 / static_cast<double>(end - start);
      ParamPoint dir = cfg.mode == FlowMode::equivariant ? s.project_E(g) : s.project_L(g).axpy(ctx.gamma, s.project_E_perp(a));
      a.axpy(-cfg.lr, dir);
      ++step;
      if (diverged(a)) {
        out.status = RunStatus::diverged;
        break;
      }
      const bool full = step == total || (cfg.metrics_every > 0 && step % cfg.metrics_every == 0);
      out.records.push_back(full ? make_record(ctx, a, step, static_cast<double>(step) * cfg.lr) : cheap_record(a, step));
    }
  }
  out.final_point = std::move(a);
  return out;
}

}  // namespace eqreg
