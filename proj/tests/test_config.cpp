#include "eqreg/config.hpp"
#include "eqreg/csv.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace eqreg;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.line;
  }
  return 0;
}

}  // namespace

TEST(Config, DefaultsFollowTheExperimentProtocol) {
  const RunConfig c = parse("");
  EXPECT_EQ(c.gamma_list, (std::vector<double>{1e-4, 1e-2, 1e0, 1e2}));
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.batch_size, 10u);
  EXPECT_EQ(c.perturb_scale, 0.1);
  EXPECT_EQ(c.action, "rotate90");
}

TEST(Config, SectionsListsQuotesAndComments) {
  const RunConfig c = parse(R"(# a comment
[group]
group = "cyclic"
group_order = 4
action = "rotate90"   # trailing comment

[model]
subspace = conv
support = "0,0;0,1"
channels = [1, 4, 4]

[dynamics]
mode = augmented, nominal
step_size = 5e-3

[train]
gamma = 0.5
seeds = [3, 4]

[output]
output_dir = "runs/a b"
)");
  EXPECT_EQ(c.support, "0,0;0,1");
  EXPECT_EQ(c.channels, (std::vector<std::size_t>{1, 4, 4}));
  EXPECT_EQ(c.modes, (std::vector<std::string>{"augmented", "nominal"}));
  EXPECT_EQ(c.step_size, 5e-3);
  EXPECT_EQ(c.gamma_list, (std::vector<double>{0.5}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 4}));
  EXPECT_EQ(c.output_dir, "runs/a b");
}

TEST(Config, TopLevelKeysAllowed) {
  EXPECT_EQ(parse("lr = 0.01\nepochs = 3\n").epochs, 3u);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("lr = 1\n\nbogus = 2\n"), 3u);
  EXPECT_EQ(error_line("[model]\nlr = 1\n"), 2u);                 // misplaced
  EXPECT_EQ(error_line("[train]\nlr = 1\nlr = 2\n"), 3u);         // duplicate
  EXPECT_EQ(error_line("[train]\nbatch_size = ten\n"), 2u);       // malformed
  EXPECT_EQ(error_line("[train]\nbatch_size = -1\n"), 2u);        // negative count
  EXPECT_EQ(error_line("[nope]\n"), 1u);
  EXPECT_EQ(error_line("[train\n"), 1u);
  EXPECT_EQ(error_line("x\n"), 1u);
  EXPECT_EQ(error_line("[train]\ngamma = 1\ngamma_list = 1, 2\n"), 3u);
  EXPECT_EQ(error_line("[train]\ngamma = -1\n"), 2u);
  EXPECT_EQ(error_line("[model]\npadding = \"zero\"\n"), 2u);
}

TEST(Config, MissingFileThrows) { EXPECT_THROW(load_config("/nonexistent/eqreg.cfg"), std::runtime_error); }

TEST(TrajectoryCsv, RoundTripsAtTwelveDigits) {
  Trajectory tr;
  for (std::size_t k = 0; k < 5; ++k) {
    TrajectoryRecord r;
    r.step = k;
    r.time = 0.01 * static_cast<double>(k);
    r.dist_E = std::exp(-static_cast<double>(k)) / 3.0;
    r.risk = k == 2 ? std::numeric_limits<double>::quiet_NaN() : 0.6931471805599453 + k;
    r.aug_risk = 1.0 / 7.0;
    r.reg_loss = 1e-300;
    r.param_norm = 12345.678901234567;
    tr.records.push_back(r);
  }
  tr.status = RunStatus::diverged;
  std::stringstream ss;
  write_trajectory_csv(ss, tr);
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("status=diverged\n"), text.size() - 16);
  const ParsedTrajectory back = read_trajectory_csv(ss);
  ASSERT_EQ(back.records.size(), 5u);
  EXPECT_EQ(back.status, RunStatus::diverged);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto &a = tr.records[k], &b = back.records[k];
    EXPECT_EQ(a.step, b.step);
    for (auto [x, y] : {std::pair{a.time, b.time}, {a.dist_E, b.dist_E}, {a.aug_risk, b.aug_risk}, {a.reg_loss, b.reg_loss},
                        {a.param_norm, b.param_norm}})
      EXPECT_LE(std::abs(x - y), 1e-12 * std::abs(x));
    if (k == 2) EXPECT_TRUE(std::isnan(b.risk));
    else EXPECT_LE(std::abs(a.risk - b.risk), 1e-12 * a.risk);
  }
}

TEST(TrajectoryCsv, RejectsBadHeader) {
  std::istringstream is("step,time\n0,0\n");
  EXPECT_THROW(read_trajectory_csv(is), std::runtime_error);
}
