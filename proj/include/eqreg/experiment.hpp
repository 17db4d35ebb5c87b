#pragma once
// Builds networks, symmetry structures and datasets from a RunConfig, and
// drives initialization, SGD sweeps and the verification suite.

#include "eqreg/config.hpp"
#include "eqreg/data.hpp"
#include "eqreg/dynamics.hpp"
#include "eqreg/group.hpp"
#include "eqreg/network.hpp"
#include "eqreg/risk.hpp"
#include "eqreg/subspaces.hpp"
#include "eqreg/toys.hpp"
#include "eqreg/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace eqreg {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// "full3x3", "cross", or an explicit list "dr,dc;dr,dc;...".
inline std::vector<Tap> parse_support(const std::string& s) {
  if (s == "full3x3") return full3x3_support();
  if (s == "cross") return cross_support();
  std::vector<Tap> taps;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ';')) {
    std::istringstream it(item);
    Tap t;
    char comma = 0;
    if (!(it >> t.dr >> comma >> t.dc) || comma != ',' || !(it >> std::ws).eof())
      throw std::invalid_argument("cannot parse support tap '" + item + "'");
    taps.push_back(t);
  }
  if (taps.empty()) throw std::invalid_argument("empty support");
  return taps;
}

struct Task {
  Dataset data;
  Architecture arch;
  std::shared_ptr<const EquivariantStructure> structure;
  std::shared_ptr<const NetworkRisk> risk;

  RiskContext context(double gamma = 0.0) const { return RiskContext(risk, structure, gamma); }
};

inline Dataset load_dataset(const RunConfig& c) {
  if (c.dataset == "synth_inv") return synth_invariant_task(c.n_samples, c.image_size, c.data_seed);
  if (c.dataset == "synth_asym") return synth_asymmetric_task(c.n_samples, c.image_size, c.data_seed);
  if (c.dataset == "idx") {
    if (c.idx_images.empty() || c.idx_labels.empty()) throw std::invalid_argument("dataset = idx needs idx_images and idx_labels");
    return read_idx(c.idx_images, c.idx_labels, c.limit);
  }
  throw std::invalid_argument("unknown dataset '" + c.dataset + "'");
}

inline Representation space_rep(const RunConfig& c, const GroupPtr& g, std::size_t h, std::size_t ch) {
  if (c.action == "rotate90") return rotation_rep_on_grid(g, h, h, ch);
  if (c.action == "trivial") return trivial_rep(g, h * h * ch);
  if (c.action == "permutation") {
    // Per-channel cyclic shift of the flattened pixel index by h*h/|G|.
    const std::size_t hw = h * h, n = g->order();
    if (hw % n != 0) throw std::invalid_argument("permutation action needs |G| to divide the pixel count");
    Representation::Permutation gen(hw * ch);
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t p = 0; p < hw; ++p) gen[k * hw + p] = k * hw + (p + hw / n) % hw;
    return cyclic_permutation_rep(g, gen);
  }
  throw std::invalid_argument("unknown action '" + c.action + "'");
}

/// Convolutional layers over config.channels followed by a dense read-out
/// to the classes; the group acts on every image space and trivially on
/// the output.
inline Task build_task(const RunConfig& c, Dataset data) {
  if (data.size() == 0) throw std::invalid_argument("dataset must be non-empty");
  if (data.height != data.width) throw std::invalid_argument("images must be square");
  if (c.channels.empty() || c.channels.front() != data.channels)
    throw std::invalid_argument("channels must start with the image channel count (" + std::to_string(data.channels) + ")");
  const std::size_t h = data.height, hw = h * h;
  GroupPtr g = cyclic_group(c.group_order);
  const Activation act = parse_activation(c.activation);
  std::vector<std::size_t> dims;
  std::vector<Activation> acts;
  std::vector<Representation> reps;
  std::vector<LayerSubspace> layers;
  const auto support = parse_support(c.support);
  for (std::size_t k = 0; k < c.channels.size(); ++k) {
    dims.push_back(c.channels[k] * hw);
    reps.push_back(space_rep(c, g, h, c.channels[k]));
    if (k + 1 < c.channels.size()) {
      acts.push_back(act);
      if (c.subspace == "conv") layers.push_back(conv_layer_subspace(h, h, c.channels[k], c.channels[k + 1], support));
      else if (c.subspace == "dense") layers.push_back(dense_layer_subspace(c.channels[k + 1] * hw, c.channels[k] * hw));
      else throw std::invalid_argument("unknown subspace '" + c.subspace + "'");
    }
  }
  dims.push_back(data.num_classes);
  acts.push_back(Activation::identity);
  reps.push_back(trivial_rep(g, data.num_classes));
  layers.push_back(dense_layer_subspace(data.num_classes, c.channels.back() * hw));

  Task t;
  t.arch = Architecture(dims, acts, parse_loss(c.loss));
  auto sub = std::make_shared<const AffineSubspace>(std::move(layers));
  t.structure = std::make_shared<const EquivariantStructure>(reps, sub);
  t.risk = std::make_shared<const NetworkRisk>(t.arch, data.samples, reps.front(), reps.back());
  t.data = std::move(data);
  return t;
}

inline Task build_task(const RunConfig& c) { return build_task(c, load_dataset(c)); }

inline std::vector<double> fan_in_scales(const EquivariantStructure& s, double scale) {
  std::vector<double> v;
  for (std::size_t i = 0; i < s.num_layers(); ++i) v.push_back(scale / std::sqrt(static_cast<double>(s.parent().layer(i).cols)));
  return v;
}

/// Equivariant initialization: T E coefficients ~ N(0, 1 / fan_in).
inline ParamPoint equivariant_init(const EquivariantStructure& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return s.random_in_E(rng, fan_in_scales(s, 1.0));
}

/// Gaussian noise in T E-perp with per-coordinate scale perturb_scale / sqrt(fan_in).
inline ParamPoint perp_perturbation(const EquivariantStructure& s, std::uint64_t seed, std::uint64_t stream, double perturb_scale) {
  std::seed_seq seq{seed, stream, std::uint64_t{0x51ed2701}};
  std::mt19937_64 rng(seq);
  return s.random_in_E_perp(rng, fan_in_scales(s, perturb_scale));
}

struct SweepRun {
  double gamma = 0.0;
  FlowMode mode = FlowMode::augmented;
  std::uint64_t seed = 0;
  Trajectory trajectory;
};

struct SweepMedian {
  double gamma = 0.0;
  FlowMode mode = FlowMode::augmented;
  std::vector<double> median_dist;  // per step
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepMedian> medians;

  const SweepMedian& median(double gamma, FlowMode mode) const {
    for (const auto& m : medians)
      if (m.gamma == gamma && m.mode == mode) return m;
    throw std::out_of_range("no such sweep median");
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// For every seed one equivariant initialization and one E-perp perturbation
/// are drawn and shared by all data modes and gammas.
/// Runs are distributed over `jobs` threads and stored in a fixed order.
inline SweepResult run_sweep(const Task& task, const std::vector<double>& gammas, const std::vector<std::uint64_t>& seeds,
                             const std::vector<FlowMode>& modes, const SgdConfig& base, double perturb_scale,
                             std::size_t jobs = 1) {
  SweepResult res;
  for (double g : gammas)
    for (auto m : modes)
      for (auto s : seeds) res.runs.push_back({g, m, s, {}});
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < res.runs.size(); k = next++) {
      auto& run = res.runs[k];
      const auto& s = *task.structure;
      ParamPoint a0 = equivariant_init(s, run.seed);
      if (run.mode != FlowMode::equivariant) a0 += perp_perturbation(s, run.seed, 1, perturb_scale);
      SgdConfig cfg = base;
      cfg.mode = run.mode;
      cfg.seed = run.seed;
      run.trajectory = sgd_train(*task.risk, task.context(run.gamma), cfg, a0);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::max<std::size_t>(jobs, 1); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (double g : gammas)
    for (auto m : modes) {
      SweepMedian med{g, m, {}};
      std::size_t len = std::numeric_limits<std::size_t>::max();
      std::vector<const Trajectory*> trs;
      for (const auto& r : res.runs)
        if (r.gamma == g && r.mode == m) {
          trs.push_back(&r.trajectory);
          len = std::min(len, r.trajectory.records.size());
        }
      for (std::size_t k = 0; k < len; ++k) {
        std::vector<double> v;
        for (auto* t : trs) v.push_back(t->records[k].dist_E);
        med.median_dist.push_back(median_of(std::move(v)));
      }
      res.medians.push_back(std::move(med));
    }
  return res;
}

/// Runs the full certification suite on the configured task plus the
/// closed-form quadratic problems. Checks after a failed compatibility
/// test are reported as failed without running.
inline std::vector<CheckReport> run_verification_suite(const RunConfig& c) {
  std::vector<CheckReport> out;
  const Task task = build_task(c);
  const auto& s = *task.structure;
  const CompatibilityReport comp = check_compatibility(s);
  out.push_back(make_report("compatibility", comp.commutator_norm, EquivariantStructure::kCompatibilityTol,
                            "dim T L " + std::to_string(s.dim_L()) + ", dim T E " + std::to_string(s.dim_E())));
  if (!comp.ok) {
    for (const char* n : {"fact_a", "fact_b_fd", "theorem1_invariance", "theorem1_negative_control", "theorem2_stationarity",
                          "sigma_ordering", "theorem3_attractor"})
      out.push_back({n, false, std::numeric_limits<double>::infinity(), 0.0, "skipped: compatibility condition fails"});
    return out;
  }
  const RiskContext ctx = task.context(0.0);
  const std::uint64_t seed = c.verify_seed;
  out.push_back(check_fact_a(ctx, c.trials, seed));
  {
    std::mt19937_64 rng(seed + 11);
    ParamPoint a = s.random_in_E(rng);
    ParamPoint y = s.random_in_E_perp(rng);
    const double r = fact_a_residual(ctx, a + (0.1 / y.norm()) * y);
    out.push_back(make_report("fact_a_power", 1e-5 / r, 1.0, "Fact A residual off E: " + format_double(r)));
  }
  out.push_back(check_fact_b(ctx, c.trials, seed + 1));

  DynamicsConfig dyn;
  dyn.mode = FlowMode::augmented;
  dyn.integrator = parse_integrator(c.integrator);
  dyn.step_size = c.step_size;
  dyn.num_steps = c.num_steps;
  dyn.record_every = c.record_every;
  std::mt19937_64 rng(seed + 2);
  const ParamPoint a0 = s.random_in_E(rng);
  out.push_back(check_invariance_theorem1(ctx, dyn, a0));
  {
    // One convolution plus the read-out: deeper stacks near zero barely
    // move off E within the horizon.
    RunConfig asym = c;
    asym.dataset = "synth_asym";
    if (asym.channels.size() > 2) asym.channels.resize(2);
    asym.n_samples = std::min<std::size_t>(asym.n_samples, 200);
    const Task t2 = build_task(asym);
    const ParamPoint b0 = equivariant_init(*t2.structure, seed + 3);
    out.push_back(check_theorem1_negative_control(t2.context(0.0), dyn, b0));
  }
  out.push_back(check_stationarity_theorem2(ctx, s.random_in_E(rng), 1e-8));
  {
    const double sig_aug = estimate_sigma(ctx, 2, 400, seed + 4, HessianKind::augmented);
    const double sig_nom = estimate_sigma(ctx, 2, 400, seed + 4, HessianKind::nominal);
    out.push_back(make_report("sigma_ordering", std::max(0.0, sig_nom - sig_aug), 1e-6,
                              "sigma_aug " + format_double(sig_aug) + ", sigma_nom " + format_double(sig_nom)));
  }
  {
    const double gamma = *std::max_element(c.gamma_list.begin(), c.gamma_list.end());
    DynamicsConfig reg;
    reg.mode = FlowMode::regularized_augmented;
    reg.step_size = gamma > 0 ? std::min(c.step_size, 0.1 / gamma) : c.step_size;
    reg.num_steps = 100;
    reg.record_every = 100;
    ParamPoint start = equivariant_init(s, seed) + perp_perturbation(s, seed, 1, c.perturb_scale);
    const Trajectory tr = integrate(task.context(gamma), reg, start);
    const double ratio = tr.records.back().dist_E / tr.records.front().dist_E;
    out.push_back(make_report("theorem3_attractor", ratio, 1e-3, "gamma " + format_double(gamma) + ", final/initial dist_E"));
  }

  // Closed-form quadratic problems.
  {
    const QuadraticToy toy = circulant_toy(1.0, 0.5, 40.0, 1.0, 0.3, seed);
    const RiskContext q(toy.risk, toy.structure, 0.0);
    out.push_back(check_fact_b(q, c.trials, seed + 5, true));
    AttractorOptions opt;
    opt.seed = seed + 6;
    opt.x0 = toy.minimizer;
    const auto est = check_attractor_theorem3(q, {1.0}, 0.5, opt);
    const double expected = -(toy.lambda_perp_min + 1.0);
    out.push_back(make_report("toy_decay_rate", std::abs(est[0].rate - expected) / std::abs(expected), 0.02,
                              "fitted " + format_double(est[0].rate) + " vs " + format_double(expected)));
    const RiskContext qg = q.with_gamma(2.0);
    LocalConvergenceOptions lo;
    lo.seed = seed + 7;
    out.push_back(check_remark2_local(qg, toy.minimizer, 0.1, lo));
  }
  return out;
}

}  // namespace eqreg
