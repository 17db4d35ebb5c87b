// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "eqreg/experiment.hpp"
#include "eqreg/toys.hpp"
#include "eqreg/verify.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

using namespace eqreg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, bool ok, const std::string& what) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string g6(double x) { return format_double(x); }

RunConfig conv_config(std::vector<std::size_t> channels, std::size_t n = 100) {
  RunConfig c;
  c.channels = std::move(channels);
  c.n_samples = n;
  return c;
}

// linear layer over 4x4 images: conv to rotated feature maps, or a dense invariant read-out
RiskContext linear_ctx(bool conv, std::uint64_t seed) {
  auto g = cyclic_group(4);
  const auto in = rotation_rep_on_grid(g, 4, 4, 1);
  const auto out = conv ? rotation_rep_on_grid(g, 4, 4, 2) : trivial_rep(g, 3);
  const std::size_t od = conv ? 32 : 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<LabeledSample> data;
  for (int k = 0; k < 20; ++k) {
    VectorXd x(16), y(od);
    for (auto& v : x) v = n01(rng);
    for (auto& v : y) v = n01(rng);
    data.push_back({x, y});
  }
  Architecture arch({16, od}, {Activation::identity}, LossKind::mse);
  NetworkRisk net(arch, data, in, out);
  auto sub = std::make_shared<const AffineSubspace>(std::vector<LayerSubspace>{
      conv ? conv_layer_subspace(4, 4, 1, 2, full3x3_support()) : dense_layer_subspace(3, 16)});
  auto s = std::make_shared<const EquivariantStructure>(std::vector<Representation>{in, out}, sub);
  auto q = std::make_shared<const QuadraticRisk>(linear_mse_as_quadratic(s, net));
  return RiskContext(q, s, 0.0);
}

// relative error of the analytic gradient against central differences
double fd_relative_error(const std::function<double(const ParamPoint&)>& f, const ParamPoint& grad, const ParamPoint& a) {
  const double eps = 1e-6;
  VectorXd x = a.flatten(), fd(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + eps;
    const double fp = f(a.unflatten_like(x));
    x[k] = keep - eps;
    const double fm = f(a.unflatten_like(x));
    x[k] = keep;
    fd[k] = (fp - fm) / (2 * eps);
  }
  return (grad.flatten() - fd).norm() / std::max(fd.norm(), 1e-12);
}

ParamPoint random_point(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 0.5);
  ParamPoint a = ParamPoint::zeros(arch);
  for (std::size_t i = 0; i < arch.num_layers(); ++i)
    for (Eigen::Index k = 0; k < a[i].size(); ++k) a[i].data()[k] = n01(rng);
  return a;
}

void criterion1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::ostringstream widths;
  for (std::size_t w : {1u, 2u, 4u}) {
    const Task t = build_task(conv_config({1, w, w}));
    const auto rep = check_fact_a(t.context(0.0), 10, 100 + w);
    worst = std::max(worst, rep.residual);
    widths << (widths.tellp() > 0 ? "," : "") << w;
  }
  const double secs = seconds_since(t0);
  verdict(1, worst < 1e-8 && secs < 60.0,
          "Fact A max residual " + g6(worst) + " (< 1e-8) over widths {" + widths.str() + "}, 10 points each, " + g6(secs) + " s");
}

void criterion2() {
  double fd = 0.0, exact = 0.0;
  for (std::size_t w : {1u, 2u}) {
    const Task t = build_task(conv_config({1, w, w}, 60));
    fd = std::max(fd, check_fact_b(t.context(0.0), 10, 200 + w).residual);
  }
  for (bool conv : {false, true}) exact = std::max(exact, check_fact_b(linear_ctx(conv, 210 + conv), 10, 220, true).residual);
  const QuadraticToy toy = circulant_toy(1.0, 2.0, 3.0, 1.0, 0.4, 230);
  exact = std::max(exact, check_fact_b(RiskContext(toy.risk, toy.structure, 0.0), 10, 231, true).residual);
  verdict(2, fd < 1e-5 && exact < 1e-8, "Fact B FD residual " + g6(fd) + " (< 1e-5, tanh), exact " + g6(exact) + " (< 1e-8, linear)");
}

void criterion3() {
  const RunConfig c = conv_config({1, 2}, 200);
  DynamicsConfig dyn;
  dyn.mode = FlowMode::augmented;
  dyn.step_size = 1e-2;
  dyn.num_steps = 500;
  const Task t = build_task(c);
  std::mt19937_64 rng(300);
  const auto pos = check_invariance_theorem1(t.context(0.0), dyn, t.structure->random_in_E(rng));

  RunConfig asym = c;
  asym.dataset = "synth_asym";
  const Task ta = build_task(asym);
  const auto neg = check_theorem1_negative_control(ta.context(0.0), dyn, equivariant_init(*ta.structure, 301));
  verdict(3, pos.passed && neg.passed,
          "augmented drift " + g6(pos.residual) + " vs bound " + g6(pos.tolerance) + "; negative control: " + neg.details +
              " (needs >= 10x)");
}

void criterion4() {
  const auto t0 = Clock::now();
  const QuadraticToy toy = circulant_toy(1.0, 0.5, 3.0, 1.0, 0.3, 400);
  AttractorOptions opt;
  opt.x0 = toy.minimizer;
  opt.seed = 401;
  const auto est = check_attractor_theorem3(RiskContext(toy.risk, toy.structure, 0.0), {0.1, 1.0, 10.0}, 0.5, opt);
  bool ok = true;
  std::ostringstream os;
  for (const auto& e : est) {
    const double want = -(toy.lambda_perp_min + e.gamma);
    const double rel = std::abs(e.rate - want) / std::abs(want);
    const double gr = gronwall_ratio(e);
    ok &= rel < 0.02 && !e.diverged;
    if (e.above_threshold) ok &= gr <= 1.05;
    os << "gamma " << g6(e.gamma) << ": rate " << g6(e.rate) << " vs " << g6(want) << ", gronwall " << g6(gr)
       << (e.above_threshold ? "" : " (below threshold)") << "; ";
  }
  const double secs = seconds_since(t0);
  ok &= secs < 60.0;
  os << g6(secs) << " s";
  verdict(4, ok, os.str());
}

SweepResult desk_sweep(double perturb_scale, const RunConfig& c, const Task& t) {
  SgdConfig base;
  base.lr = c.lr;
  base.batch_size = c.batch_size;
  base.epochs = c.epochs;
  return run_sweep(t, c.gamma_list, c.seeds, {FlowMode::augmented, FlowMode::nominal}, base, perturb_scale);
}

void criterion5() {
  const auto t0 = Clock::now();
  RunConfig c;
  c.channels = {1, 4, 4};
  c.n_samples = 500;
  c.epochs = 2;
  c.lr = 1e-3;
  c.batch_size = 10;
  c.seeds = {0, 1, 2, 3, 4};
  c.gamma_list = {1e-4, 1e-2, 1e0, 1e2};
  const Task t = build_task(c);
  const double ps = 1e-4;
  const SweepResult r = desk_sweep(ps, c, t);
  auto fin = [&](double g, FlowMode m) { return r.median(g, m).median_dist.back(); };
  const double init = r.median(1e-4, FlowMode::augmented).median_dist.front();

  bool a = true;
  for (std::size_t k = 1; k < c.gamma_list.size(); ++k)
    a &= fin(c.gamma_list[k], FlowMode::augmented) <= fin(c.gamma_list[k - 1], FlowMode::augmented);
  const bool b = fin(1e2, FlowMode::augmented) < 0.05 * init && fin(1e2, FlowMode::nominal) < 0.05 * init;
  const bool cc = fin(1e0, FlowMode::augmented) < fin(1e0, FlowMode::nominal);
  const bool d = fin(1e-4, FlowMode::augmented) > 0.5 * init;
  const double secs = seconds_since(t0);

  std::ostringstream os;
  os << "synth_inv, perturb " << g6(ps) << ", initial " << g6(init) << "; augmented finals";
  for (double g : c.gamma_list) os << ' ' << g6(fin(g, FlowMode::augmented));
  os << ", nominal finals";
  for (double g : c.gamma_list) os << ' ' << g6(fin(g, FlowMode::nominal));
  os << "; (a) " << (a ? "ok" : "no") << " (b) " << (b ? "ok" : "no") << " (c) " << (cc ? "ok" : "no") << " (d) "
     << (d ? "ok" : "no") << ", " << g6(secs) << " s";
  verdict(5, a && b && cc && d && secs < 1800.0, os.str());

  // same sweep at the default offset, reported only
  const SweepResult r0 = desk_sweep(0.1, c, t);
  std::printf("  info: at perturb 0.1, gamma 1e0 augmented %s vs nominal %s; gamma 1e2 augmented %s of initial %s\n",
              g6(r0.median(1e0, FlowMode::augmented).median_dist.back()).c_str(),
              g6(r0.median(1e0, FlowMode::nominal).median_dist.back()).c_str(),
              g6(r0.median(1e2, FlowMode::augmented).median_dist.back()).c_str(),
              g6(r0.median(1e2, FlowMode::augmented).median_dist.front()).c_str());
}

void criterion6() {
  const Task t = build_task(conv_config({1, 2, 2}, 100));
  const RiskContext ctx = t.context(0.0);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; k < 5; ++k) {
    const double iters = static_cast<double>(t.structure->dim_E_perp());
    const double aug = estimate_sigma(ctx, 1, static_cast<std::size_t>(iters), 600 + k, HessianKind::augmented);
    const double nom = estimate_sigma(ctx, 1, static_cast<std::size_t>(iters), 600 + k, HessianKind::nominal);
    worst = std::max(worst, nom - aug);
  }
  verdict(6, worst <= 1e-6, "max sigma_nom - sigma_aug over 5 points of E: " + g6(worst) + " (<= 1e-6)");
}

void criterion7() {
  const QuadraticToy toy = circulant_toy(1.0, 0.5, 3.0, 1.0, 0.3, 700);
  const RiskContext q(toy.risk, toy.structure, 0.0);
  const double gamma = 1.0;
  AttractorOptions ao;
  ao.x0 = toy.minimizer;
  ao.seed = 701;
  const auto est = check_attractor_theorem3(q, {gamma}, 0.1, ao);
  LocalConvergenceOptions lo;
  lo.seed = 702;
  const auto pos = check_remark2_local(q.with_gamma(gamma), toy.minimizer, 0.1, lo);

  const QuadraticToy bad = circulant_toy(1.0, 0.5, -0.5);
  const auto neg = check_remark2_local(RiskContext(bad.risk, bad.structure, 0.0), bad.minimizer, 0.1, lo);
  const bool ok = est[0].above_threshold && pos.residual < 0.01 && neg.residual > 0.05;
  verdict(7, ok,
          "gamma " + g6(gamma) + " vs threshold " + g6(est[0].threshold) + ", terminal distance " + g6(pos.residual) +
              " (< 0.01); negative-sigma toy at gamma 0: " + g6(neg.residual) + " (> 0.05)");
}

void criterion8() {
  // gradients: plain architectures, then network risks on the conv task
  double fd = 0.0;
  struct Case {
    std::vector<std::size_t> dims;
    std::vector<Activation> acts;
    LossKind loss;
  };
  const std::vector<Case> cases{
      {{3, 3, 2}, {Activation::tanh, Activation::identity}, LossKind::cross_entropy},
      {{3, 3, 2}, {Activation::tanh, Activation::tanh}, LossKind::mse},
      {{9, 8, 4}, {Activation::tanh, Activation::identity}, LossKind::cross_entropy},
      {{4, 5, 5, 3}, {Activation::relu, Activation::tanh, Activation::identity}, LossKind::mse},
      {{6, 2}, {Activation::identity}, LossKind::mse},
  };
  std::uint64_t seed = 800;
  for (const auto& c : cases) {
    Architecture arch(c.dims, c.acts, c.loss);
    const ParamPoint a = random_point(arch, seed++);
    std::mt19937_64 rng(seed++);
    std::normal_distribution<double> n01;
    LabeledSample s{VectorXd(static_cast<Eigen::Index>(c.dims.front())), VectorXd::Zero(static_cast<Eigen::Index>(c.dims.back()))};
    for (auto& v : s.input) v = n01(rng);
    s.target[0] = 1.0;
    fd = std::max(fd, fd_relative_error([&](const ParamPoint& p) { return sample_loss(arch, p, s); }, grad_sample(arch, a, s), a));
  }
  {
    const Task t = build_task(conv_config({1, 2}, 10));
    const ParamPoint a = random_point(t.arch, seed++);
    fd = std::max(fd, fd_relative_error([&](const ParamPoint& p) { return t.risk->nominal_risk(p); }, t.risk->grad_nominal(a), a));
    fd = std::max(fd,
                  fd_relative_error([&](const ParamPoint& p) { return t.risk->augmented_risk(p); }, t.risk->grad_augmented(a), a));
  }

  // Reynolds operator on the conv + C4 structure
  const Task t = build_task(conv_config({1, 2, 2}, 10));
  const auto& s = *t.structure;
  const ParamPoint a = random_point(t.arch, seed++), b = random_point(t.arch, seed++);
  const ParamPoint ra = s.reynolds(a);
  const double rey = std::max((s.reynolds(ra) - ra).norm(), std::abs(ra.dot(b) - a.dot(s.reynolds(b))));

  // compatibility: symmetric supports against the 2-tap control
  double sym = 0.0;
  for (const char* sup : {"full3x3", "cross"}) {
    RunConfig c = conv_config({1, 2, 2}, 10);
    c.support = sup;
    sym = std::max(sym, build_task(c).structure->commutator_norm());
  }
  RunConfig two = conv_config({1, 1}, 10);
  two.support = "0,0;0,1";
  const double asym = build_task(two).structure->commutator_norm();

  // reruns with fixed seeds
  bool same = true;
  {
    const Task tr = build_task(conv_config({1, 2}, 40));
    SgdConfig sc;
    sc.mode = FlowMode::augmented;
    sc.seed = 5;
    const ParamPoint a0 = equivariant_init(*tr.structure, 5) + perp_perturbation(*tr.structure, 5, 1, 0.1);
    const auto x = sgd_train(*tr.risk, tr.context(1.0), sc, a0), y = sgd_train(*tr.risk, tr.context(1.0), sc, a0);
    same &= x.final_point.flatten() == y.final_point.flatten();
    DynamicsConfig dc;
    dc.mode = FlowMode::regularized_augmented;
    dc.num_steps = 50;
    same &= integrate(tr.context(1.0), dc, a0).final_point.flatten() == integrate(tr.context(1.0), dc, a0).final_point.flatten();
    same &= a0.flatten() == (equivariant_init(*tr.structure, 5) + perp_perturbation(*tr.structure, 5, 1, 0.1)).flatten();
  }

  const bool ok = fd < 1e-5 && rey < 1e-12 && sym < 1e-10 && asym > 0.1 && same;
  verdict(8, ok,
          "FD gradient rel. error " + g6(fd) + " (< 1e-5); Reynolds " + g6(rey) + " (< 1e-12); commutator symmetric " + g6(sym) +
              " (< 1e-10), 2-tap " + g6(asym) + " (> 0.1); reruns " + (same ? "bit-identical" : "DIFFER"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 8 criteria failed, %s s total\n", failures, g6(seconds_since(t0)).c_str());
  return failures == 0 ? 0 : 1;
}
