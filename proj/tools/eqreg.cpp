// eqreg: verify / flow / sgd / sweep / basis over a plain-text run config.
// Exit codes: 0 ok, 1 failed check, 2 usage or config error, 3 divergence.

#include "eqreg/config.hpp"
#include "eqreg/csv.hpp"
#include "eqreg/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace eqreg;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kDiverged = 3 };

struct Globals {
  std::string config_path;
  std::string output;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
};

std::string gamma_tag(double g) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", g);
  return buf;
}

std::string run_name(const std::string& prefix, FlowMode m, double g, std::uint64_t s) {
  return prefix + "_" + to_string(m) + "_g" + gamma_tag(g) + "_s" + std::to_string(s) + ".csv";
}

fs::path out_dir(const RunConfig& c) {
  fs::path p(c.output_dir);
  fs::create_directories(p);
  return p;
}

void write_csv(const fs::path& p, const Trajectory& tr) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  write_trajectory_csv(f, tr);
}

void warn_stiff(double h, const std::vector<double>& gammas) {
  for (double g : gammas)
    if (h * g >= 1.0)
      std::cerr << "warning: step " << h << " times gamma " << g << " is >= 1; explicit integration may oscillate or diverge\n";
}

int cmd_verify(const RunConfig& c) {
  const auto reports = run_verification_suite(c);
  std::ofstream csv(out_dir(c) / "checks.csv");
  csv << "name,passed,residual,tolerance\n";
  std::cout << "name,passed,residual,tolerance\n";
  std::size_t failed = 0;
  for (const auto& r : reports) {
    const std::string line = r.name + "," + (r.passed ? "1" : "0") + "," + format_e12(r.residual) + "," + format_e12(r.tolerance);
    csv << line << '\n';
    std::cout << line << '\n';
    if (!r.passed) ++failed;
  }
  std::cout << '\n';
  for (const auto& r : reports)
    std::cout << (r.passed ? "  PASS  " : "  FAIL  ") << r.name << "  (" << r.details << ")\n";
  std::cout << reports.size() - failed << "/" << reports.size() << " checks passed\n";
  return failed ? kCheckFailed : kOk;
}

int cmd_flow(const RunConfig& c) {
  const Task task = build_task(c);
  task.structure->require_compatible();
  const auto& s = *task.structure;
  DynamicsConfig dyn;
  dyn.integrator = parse_integrator(c.integrator);
  dyn.step_size = c.step_size;
  dyn.num_steps = c.num_steps;
  dyn.record_every = c.record_every;
  warn_stiff(c.step_size, c.gamma_list);
  const fs::path dir = out_dir(c);
  bool diverged = false;
  for (const auto& mname : c.modes) {
    dyn.mode = parse_flow_mode(mname);
    for (double g : c.gamma_list)
      for (auto seed : c.seeds) {
        dyn.seed = seed;
        ParamPoint a0 = equivariant_init(s, seed);
        if (dyn.mode != FlowMode::equivariant && c.perturb_scale > 0.0) a0 += perp_perturbation(s, seed, 1, c.perturb_scale);
        const Trajectory tr = integrate(task.context(g), dyn, a0);
        const auto name = run_name("flow", dyn.mode, g, seed);
        write_csv(dir / name, tr);
        const auto& last = tr.records.back();
        std::cout << name << ": dist_E " << format_double(tr.records.front().dist_E) << " -> " << format_double(last.dist_E)
                  << (tr.status == RunStatus::diverged ? "  DIVERGED" : "") << '\n';
        diverged |= tr.status == RunStatus::diverged;
      }
  }
  return diverged ? kDiverged : kOk;
}

SgdConfig sgd_base(const RunConfig& c) {
  SgdConfig cfg;
  cfg.lr = c.lr;
  cfg.batch_size = c.batch_size;
  cfg.epochs = c.epochs;
  cfg.metrics_every = c.metrics_every;
  return cfg;
}

int cmd_sgd(const RunConfig& c, std::size_t jobs) {
  const Task task = build_task(c);
  task.structure->require_compatible();
  std::vector<FlowMode> modes;
  for (const auto& m : c.modes) modes.push_back(parse_flow_mode(m));
  warn_stiff(c.lr, c.gamma_list);
  const auto res = run_sweep(task, c.gamma_list, c.seeds, modes, sgd_base(c), c.perturb_scale, jobs);
  const fs::path dir = out_dir(c);
  bool diverged = false;
  for (const auto& r : res.runs) {
    const auto name = run_name("sgd", r.mode, r.gamma, r.seed);
    write_csv(dir / name, r.trajectory);
    std::cout << name << ": dist_E " << format_double(r.trajectory.records.front().dist_E) << " -> "
              << format_double(r.trajectory.records.back().dist_E) << '\n';
    diverged |= r.trajectory.status == RunStatus::diverged;
  }
  return diverged ? kDiverged : kOk;
}

int cmd_sweep(const RunConfig& c, std::size_t jobs) {
  const Task task = build_task(c);
  task.structure->require_compatible();
  warn_stiff(c.lr, c.gamma_list);
  const std::vector<FlowMode> modes{FlowMode::augmented, FlowMode::nominal};
  const auto res = run_sweep(task, c.gamma_list, c.seeds, modes, sgd_base(c), c.perturb_scale, jobs);
  const fs::path dir = out_dir(c);
  bool diverged = false;
  for (const auto& r : res.runs) {
    write_csv(dir / run_name("sweep", r.mode, r.gamma, r.seed), r.trajectory);
    diverged |= r.trajectory.status == RunStatus::diverged;
  }
  std::ofstream med(dir / "medians.csv");
  med << "gamma,mode,step,median_dist_E\n";
  for (const auto& m : res.medians) {
    for (std::size_t k = 0; k < m.median_dist.size(); ++k)
      med << format_e12(m.gamma) << ',' << to_string(m.mode) << ',' << k << ',' << format_e12(m.median_dist[k]) << '\n';
    if (!m.median_dist.empty())
      std::cout << to_string(m.mode) << " gamma " << gamma_tag(m.gamma) << ": median dist_E " << format_double(m.median_dist.front())
                << " -> " << format_double(m.median_dist.back()) << '\n';
  }
  return diverged ? kDiverged : kOk;
}

int cmd_basis(const RunConfig& c) {
  const Task task = build_task(c);
  const auto& s = *task.structure;
  std::cout << "dim T L      " << s.dim_L() << '\n'
            << "dim T E      " << s.dim_E() << '\n'
            << "dim T E_perp " << s.dim_E_perp() << '\n'
            << "commutator   " << format_e12(s.commutator_norm()) << '\n';
  return s.compatible() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariance regularization experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "run configuration file");
  app.add_option("--output", g.output, "output directory (overrides output_dir)");
  app.add_option("--jobs", g.jobs, "concurrent runs")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "single seed (overrides seeds and verify_seed)");
  auto* verify = app.add_subcommand("verify", "run the check suite, write checks.csv");
  auto* flow = app.add_subcommand("flow", "integrate the gradient flows");
  auto* sgd = app.add_subcommand("sgd", "SGD runs for the configured modes");
  auto* sweep = app.add_subcommand("sweep", "gamma sweep, augmented and nominal data");
  auto* basis = app.add_subcommand("basis", "print subspace dimensions");
  for (auto* sub : {verify, flow, sgd, sweep, basis}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  RunConfig c;
  try {
    if (!g.config_path.empty()) {
      if (!fs::exists(g.config_path)) {
        std::cerr << "error: config file '" << g.config_path << "' not found\n";
        return kUsage;
      }
      c = load_config(g.config_path);
    }
    if (!g.output.empty()) c.output_dir = g.output;
    if (g.seed) {
      c.seeds = {*g.seed};
      c.verify_seed = *g.seed;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*verify) return cmd_verify(c);
    if (*flow) return cmd_flow(c);
    if (*sgd) return cmd_sgd(c, g.jobs);
    if (*sweep) return cmd_sweep(c, g.jobs);
    if (*basis) return cmd_basis(c);
  } catch (const CompatibilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kUsage;
}
