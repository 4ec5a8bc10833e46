#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dpfedrep/config.hpp"
#include "dpfedrep/experiment.hpp"
#include "dpfedrep/report.hpp"

using namespace dpfedrep;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    return e.detail();
  }
  return {};
}

ExperimentConfig tiny_config() {
  return parse(
      "problem.d = 6\nproblem.k = 2\nproblem.n = 40\nproblem.m = 10\n"
      "fedrep.T = 2\nfedrep.eta = 1.0\nfedrep.psi = 5\nfedrep.nonprivate_eta = 1.0\nfedrep.nonprivate_psi = 5\n"
      "privacy.epsilons = 2, 8\nlocal_gd.steps = 50\n"
      "methods = private_fedrep, nonprivate_fedrep, local_gd\nseeds = 0, 1\n");
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto cfg = parse("# comment\n\nproblem.d = 12\nprivacy.epsilons = 0.5, 3\nthreads = 2\n");
  EXPECT_EQ(cfg.problem.d, 12);
  EXPECT_EQ(cfg.problem.k, 2);
  EXPECT_EQ(cfg.privacy.epsilons, (std::vector<double>{0.5, 3}));
  EXPECT_EQ(cfg.threads, 2);
}

TEST(Config, UnknownKeyNamesLine) {
  const auto msg = config_error("problem.d = 5\nproblem.bogus = 1\n");
  EXPECT_NE(msg.find("test.cfg:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("problem.bogus"), std::string::npos) << msg;
}

TEST(Config, MissingEqualsNamesLine) {
  const auto msg = config_error("\n\nproblem.d 5\n");
  EXPECT_NE(msg.find("test.cfg:3"), std::string::npos) << msg;
}

TEST(Config, BadValueNamesLine) {
  const auto msg = config_error("problem.n = many\n");
  EXPECT_NE(msg.find("test.cfg:1"), std::string::npos) << msg;
}

TEST(Config, CrossFieldValidation) {
  EXPECT_NE(config_error("problem.k = 3\nproblem.d = 2\n").find("problem.k"), std::string::npos);
  EXPECT_NE(config_error("methods = nope\n"), "");
}

TEST(Config, SchemaListsEveryKey) {
  std::ostringstream os;
  describe_config_schema(os);
  for (const char* key : {"problem.noise_R", "fedrep.nonprivate_psi", "privacy.accountant", "classify.gamma_cover"})
    EXPECT_NE(os.str().find(key), std::string::npos) << key;
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::PrivateFedRep, Method::NonPrivateFedRep, Method::LocalGd, Method::JlClassify})
    EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_FALSE(parse_method("bogus").has_value());
  EXPECT_TRUE(method_is_private(Method::JlClassify));
  EXPECT_FALSE(method_is_private(Method::LocalGd));
}

TEST(Csv, HeaderOnlyForEmptyResult) {
  std::ostringstream os;
  write_csv(ExperimentResult{}, os);
  EXPECT_EQ(os.str(), std::string(kCsvHeader) + "\r\n");
  std::istringstream in(os.str());
  EXPECT_TRUE(read_csv(in).rows.empty());
}

TEST(Csv, RoundTripPreservesValuesAndNa) {
  ExperimentResult r;
  ResultRow a;
  a.method = Method::PrivateFedRep;
  a.epsilon = 2.0;
  a.seed = 3;
  a.excess_mse = 0.1 + 1e-17;
  a.dist_to_ustar = 1.0 / 3.0;
  a.clip_rate = 0.25;
  ResultRow b;
  b.method = Method::LocalGd;
  b.seed = 18446744073709551615ull;
  b.excess_mse = 1.5;
  r.rows = {a, b};
  std::ostringstream os;
  write_csv(r, os);
  EXPECT_NE(os.str().find(",inf,"), std::string::npos);
  EXPECT_NE(os.str().find(",NA,"), std::string::npos);
  std::istringstream in(os.str());
  const auto back = read_csv(in);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0], a);
  EXPECT_EQ(back.rows[1], b);
  EXPECT_TRUE(std::isinf(back.rows[1].epsilon));
}

TEST(Csv, RejectsWrongHeader) {
  std::istringstream in("method,epsilon\r\n");
  EXPECT_THROW(read_csv(in), Error);
}

TEST(Plot, ProducesSvg) {
  ExperimentResult r;
  for (double eps : {1.0, 4.0}) {
    ResultRow row;
    row.epsilon = eps;
    row.excess_mse = 1.0 / eps;
    r.rows.push_back(row);
  }
  std::ostringstream os;
  write_plot(r, os);
  EXPECT_EQ(os.str().rfind("<svg", 0), 0u);
  EXPECT_NE(os.str().find("private_fedrep"), std::string::npos);
  EXPECT_NE(os.str().find("</svg>"), std::string::npos);
}

TEST(Experiment, RowsSortedWithExpectedCells) {
  const auto res = run_experiment(tiny_config());
  // every method: 2 eps x 2 seeds; baselines are repeated per epsilon
  ASSERT_EQ(res.rows.size(), 12u);
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    const auto& p = res.rows[i - 1];
    const auto& q = res.rows[i];
    EXPECT_LE(std::tuple(int(p.method), p.epsilon, p.seed), std::tuple(int(q.method), q.epsilon, q.seed));
  }
  for (std::size_t i = 4; i < res.rows.size(); i += 4) {
    // baseline rows for eps=2 and eps=8 share the same run
    if (res.rows[i].method == Method::PrivateFedRep) continue;
    EXPECT_EQ(res.rows[i].excess_mse, res.rows[i + 2].excess_mse);
  }
  for (const auto& row : res.rows) {
    ASSERT_TRUE(row.excess_mse.has_value());
    EXPECT_FALSE(row.zero_one_loss.has_value());
    EXPECT_FALSE(row.wall_time_ms.has_value());
    EXPECT_TRUE(std::isfinite(row.epsilon));
    if (row.method == Method::PrivateFedRep) EXPECT_TRUE(row.dist_to_ustar.has_value());
    if (row.method == Method::LocalGd) {
      EXPECT_FALSE(row.dist_to_ustar.has_value());
      EXPECT_FALSE(row.clip_rate.has_value());
    }
  }
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
  auto cfg = tiny_config();
  cfg.threads = 1;
  const auto a = run_experiment(cfg);
  cfg.threads = 3;
  const auto b = run_experiment(cfg);
  std::ostringstream sa, sb;
  write_csv(a, sa);
  write_csv(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Experiment, MakeFedRepConfigBaseline) {
  const auto cfg = tiny_config();
  const auto problem = make_regression_problem(cfg, 0);
  const auto priv = make_fedrep_config(cfg, problem, 2.0, 1.0);
  const auto base = make_fedrep_config(cfg, problem, std::nullopt, 1.0);
  EXPECT_GT(priv.noise.sigma_hat, 0.0);
  EXPECT_EQ(base.noise.sigma_hat, 0.0);
  EXPECT_EQ(base.clip_psi, 5.0);
  EXPECT_EQ(problem.clients.size(), 40u);
}
