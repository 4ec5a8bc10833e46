#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpfedrep/dp_core.hpp"
#include "dpfedrep/fedrep.hpp"
#include "dpfedrep/metrics.hpp"
#include "oracles.hpp"

using namespace dpfedrep;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Problem {
  GroundTruthModel model;
  std::vector<ClientDataset> clients;
};

Problem make_problem(Eigen::Index d, Eigen::Index k, Eigen::Index n, Eigen::Index m, double R, int rounds,
                     Eigen::Index b, std::uint64_t seed, BatchPool pool = BatchPool::FirstHalf) {
  Problem p;
  p.model = gen_ground_truth(d, k, n, HeadStyle::GaussianHeads, R, seed);
  p.clients = sample_all_clients(p.model, {FeatureKind::StandardGaussian, d}, m, rounds, b, seed, pool);
  return p;
}

// Basis at a prescribed principal distance from `target`.
Basis perturbed(const Basis& target, double dist, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const MatrixXd& u = target.matrix();
  MatrixXd w = oracle::random_matrix(u.rows(), u.cols(), gen);
  w -= u * (u.transpose() * w);
  w = oracle::gram_schmidt(w);
  const double s = dist, c = std::sqrt(1 - s * s);
  return Basis(oracle::gram_schmidt(c * u + s * w));
}

double batch_loss(const MatrixXd& u, const VectorXd& v, const MatrixXd& x, const VectorXd& y) {
  return (x * u * v - y).squaredNorm() / double(x.rows());
}

}  // namespace

TEST(HeadSolve, ExactInterpolation) {
  const Eigen::Index d = 5, k = 2;
  const MatrixXd u = MatrixXd::Identity(d, k);
  MatrixXd x(6, d);
  for (int r = 0; r < 6; ++r) x.row(r) = MatrixXd::Identity(d, d).row(r % d);
  const VectorXd v_star = Eigen::Vector2d(0.7, -1.3);
  const VectorXd y = x * u * v_star;
  const auto head = local_head_solve(u, x, y);
  EXPECT_LE((head.v - v_star).norm(), 1e-12);
  EXPECT_FALSE(head.used_pseudoinverse);
}

TEST(HeadSolve, ZeroLabels) {
  const MatrixXd x = MatrixXd::Random(8, 4);
  EXPECT_EQ(local_head_solve(MatrixXd::Identity(4, 2), x, VectorXd::Zero(8)).v, VectorXd::Zero(2));
}

TEST(HeadSolve, MatchesDenseInverseOracle) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd u = oracle::random_orthonormal(6, 3, gen);
    const MatrixXd x = oracle::random_matrix(30, 6, gen);
    const VectorXd y = oracle::random_matrix(30, 1, gen);
    const auto head = local_head_solve(u, x, y, HeadSolvePolicy::Strict);
    EXPECT_LE((head.v - oracle::normal_equations(u, x, y)).norm(), 1e-9);
    const VectorXd residual_grad = (x * u).transpose() * (x * u * head.v - y);
    EXPECT_LE(residual_grad.norm(), 1e-8);
  }
}

TEST(HeadSolve, UnderdeterminedFallsBackOrThrows) {
  const MatrixXd u = MatrixXd::Identity(4, 2);
  const MatrixXd x = MatrixXd::Random(1, 4);
  const VectorXd y = VectorXd::Constant(1, 2.0);
  try {
    local_head_solve(u, x, y, HeadSolvePolicy::Strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IllConditioned);
  }
  const auto head = local_head_solve(u, x, y, HeadSolvePolicy::PseudoinverseFallback);
  EXPECT_TRUE(head.used_pseudoinverse);
  // Minimum-norm interpolant: v = a y / ||a||^2 with a = U^T x.
  const VectorXd a = u.transpose() * x.row(0).transpose();
  EXPECT_LE((head.v - a * (2.0 / a.squaredNorm())).norm(), 1e-12);
}

TEST(Gradient, ZeroResidual) {
  const auto p = make_problem(6, 2, 3, 10, 0.0, 1, 2, 1);
  const auto& c = p.clients[1];
  const MatrixXd g = embedding_gradient(p.model.u_star.matrix(), p.model.v_star.row(1).transpose(), c.features,
                                        c.labels);
  EXPECT_LE(g.norm(), 1e-12);
}

TEST(Gradient, SingleTermExpansion) {
  const Eigen::Index d = 4;
  MatrixXd u = MatrixXd::Zero(d, 2);
  u(0, 0) = 1;
  u(1, 1) = 1;
  const VectorXd v = Eigen::Vector2d(1.5, -0.5);
  const MatrixXd x = MatrixXd::Identity(d, d).topRows(1);
  const double c = (x * u * v)(0);
  const MatrixXd expected = 2 * c * VectorXd::Unit(d, 0) * v.transpose();
  EXPECT_LE((embedding_gradient(u, v, x, VectorXd::Zero(1)) - expected).norm(), 1e-15);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd u = oracle::random_matrix(7, 2, gen);
    const VectorXd v = oracle::random_matrix(2, 1, gen);
    const MatrixXd x = oracle::random_matrix(5, 7, gen);
    const VectorXd y = oracle::random_matrix(5, 1, gen);
    const MatrixXd analytic = embedding_gradient(u, v, x, y);
    const MatrixXd numeric =
        oracle::finite_difference([&](const MatrixXd& uu) { return batch_loss(uu, v, x, y); }, u, 1e-5);
    EXPECT_LE((analytic - numeric).norm() / analytic.norm(), 1e-6);
  }
}

TEST(PairwiseSum, MatchesPlainSum) {
  std::vector<MatrixXd> terms;
  MatrixXd plain = MatrixXd::Zero(2, 2);
  for (int i = 0; i < 13; ++i) {
    terms.push_back(MatrixXd::Constant(2, 2, double(i)));
    plain += terms.back();
  }
  EXPECT_EQ(pairwise_sum(terms), plain);
}

TEST(ServerRound, ZeroGradientsFixedPoint) {
  FedRepConfig cfg;
  cfg.rank = 2;
  const EmbeddingState s{Basis::canonical(5, 2), 0, {}};
  const std::vector<MatrixXd> grads(3, MatrixXd::Zero(5, 2));
  const auto out = server_round(s, grads, cfg, RngKey{});
  EXPECT_EQ(out.state.round, 1);
  EXPECT_NEAR(principal_dist(out.state.basis, s.basis), 0.0, 1e-15);
}

TEST(ServerRound, SingleClientStepNorm) {
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.eta = 1e-6;
  cfg.clip_psi = 0.5;
  const EmbeddingState s{Basis::canonical(5, 2), 0, {}};
  const std::vector<MatrixXd> grads{MatrixXd::Random(5, 2) * 3.0};
  const auto out = server_round(s, grads, cfg, RngKey{});
  // U_hat = Q R; recover it to compare against the one-term update.
  const MatrixXd u_hat = out.state.basis.matrix() * out.state.r_factor.matrix();
  EXPECT_NEAR((u_hat - s.basis.matrix()).norm(), cfg.eta * 0.5, 1e-15);
  EXPECT_EQ(out.stats.clip_fraction, 1.0);
}

TEST(ServerRound, NoiseIsKeyedByRound) {
  FedRepConfig cfg;
  cfg.rank = 1;
  cfg.noise = NoiseScale{0.1, NoiseMode::ZcdpExact};
  const EmbeddingState s{Basis::canonical(4, 1), 0, {}};
  const std::vector<MatrixXd> grads(2, MatrixXd::Zero(4, 1));
  const auto a = server_round(s, grads, cfg, RngKey{1, 0, 0, Purpose::ServerNoise});
  const auto b = server_round(s, grads, cfg, RngKey{1, 0, 0, Purpose::ServerNoise});
  const auto c = server_round(s, grads, cfg, RngKey{1, 0, 1, Purpose::ServerNoise});
  EXPECT_EQ(a.state.basis.matrix(), b.state.basis.matrix());
  EXPECT_NE(a.state.basis.matrix(), c.state.basis.matrix());
}

TEST(ServerRound, ShapeMismatch) {
  FedRepConfig cfg;
  const EmbeddingState s{Basis::canonical(4, 1), 0, {}};
  const std::vector<MatrixXd> grads{MatrixXd::Zero(3, 1)};
  EXPECT_THROW(server_round(s, grads, cfg, RngKey{}), Error);
}

TEST(Config, Validation) {
  FedRepConfig cfg;
  cfg.eta = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.eta = 1;
  cfg.lambda_bound = 2;
  cfg.Lambda_bound = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.Lambda_bound = 3;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(default_learning_rate(2.0), 0.125);
  EXPECT_GT(suggest_rounds(2.0, 1.0, 100), 0);
}

TEST(Train, ZeroRoundsKeepsInit) {
  const auto p = make_problem(6, 2, 10, 20, 0.01, 0, 0, 2);
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 0;
  const Basis init = perturbed(p.model.u_star, 0.3, 2);
  cfg.init = ProvidedInit{init};
  const auto r = train(p.clients, cfg, 2, &p.model);
  EXPECT_EQ(r.state.basis.matrix(), init.matrix());
  EXPECT_TRUE(r.trace.empty());
  ASSERT_EQ(r.heads.size(), 10u);
  const auto& c = p.clients[3];
  const auto ref = local_head_solve(init.matrix(), c.features.bottomRows(10), c.labels.tail(10));
  EXPECT_EQ(r.heads[3].v, ref.v);
}

TEST(Train, FigureConfigurationEmitsTrace) {
  const auto p = make_problem(50, 2, 2000, 10, 0.01, 5, 1, 0, BatchPool::WholeDataset);
  PrivacySpec spec;
  spec.epsilon = 1;
  spec.clip_psi = 10;
  spec.rounds = 5;
  spec.n_users = 2000;
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 5;
  cfg.batch_size = 1;
  cfg.eta = 2.5;
  cfg.clip_psi = 10;
  cfg.noise = calibrate_training_noise(spec, NoiseMode::PaperExperiment);
  cfg.init = RandomOrthonormalInit{};
  const auto r = train(p.clients, cfg, 0, &p.model);
  ASSERT_EQ(r.trace.size(), 5u);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(r.trace[std::size_t(t)].round, t + 1);
    EXPECT_TRUE(r.trace[std::size_t(t)].dist_to_ustar.has_value());
  }
  EXPECT_GT(r.pseudoinverse_heads, 0);
  const MatrixXd& u = r.state.basis.matrix();
  EXPECT_LE((u.transpose() * u - MatrixXd::Identity(2, 2)).norm(), 1e-10);
}

TEST(Train, NoiselessGeometricConvergence) {
  const auto p = make_problem(20, 2, 100, 400, 0.0, 20, 5, 5);
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 20;
  cfg.batch_size = 5;
  cfg.eta = default_learning_rate(p.model.sigma_max_star);
  cfg.init = ProvidedInit{perturbed(p.model.u_star, 0.5, 5)};
  const auto r = train(p.clients, cfg, 5, &p.model);
  const double d0 = principal_dist(r.initial_basis, p.model.u_star);
  const double mid = *r.trace[9].dist_to_ustar;
  const double last = *r.trace.back().dist_to_ustar;
  EXPECT_LT(mid, d0);
  EXPECT_LT(last, mid);
  EXPECT_LE(last, 0.1 * d0);
}

TEST(Train, NoiseOffUnclippedMatchesHandWrittenLoop) {
  const auto p = make_problem(8, 2, 30, 40, 0.05, 3, 3, 6);
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 3;
  cfg.batch_size = 3;
  cfg.eta = 0.3;
  const Basis init = perturbed(p.model.u_star, 0.4, 6);
  cfg.init = ProvidedInit{init};
  const auto r = train(p.clients, cfg, 6);

  MatrixXd u = init.matrix();
  for (int t = 0; t < 3; ++t) {
    std::vector<MatrixXd> grads;
    for (const auto& c : p.clients) {
      const MatrixXd xh = c.batch_features(std::size_t(2 * t)), xg = c.batch_features(std::size_t(2 * t + 1));
      const VectorXd yh = c.batch_labels(std::size_t(2 * t)), yg = c.batch_labels(std::size_t(2 * t + 1));
      const MatrixXd a = xh * u;
      const VectorXd v = (a.transpose() * a).ldlt().solve(a.transpose() * yh);
      grads.push_back((2.0 / double(xg.rows())) * xg.transpose() * (xg * u * v - yg) * v.transpose());
    }
    const MatrixXd step = pairwise_sum(grads) / double(grads.size());
    u = qr_orthonormalize(MatrixXd(u - cfg.eta * step)).q.matrix();
  }
  EXPECT_LE((r.state.basis.matrix() - u).norm(), 1e-12);
}

TEST(Train, LargeClipIsBitIdenticalToUnclipped) {
  const auto p = make_problem(8, 2, 30, 40, 0.05, 3, 3, 7);
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 3;
  cfg.batch_size = 3;
  cfg.eta = 0.3;
  cfg.init = ProvidedInit{perturbed(p.model.u_star, 0.4, 7)};
  const auto unclipped = train(p.clients, cfg, 7);
  double max_norm = 0;
  for (const auto& row : unclipped.trace) max_norm = std::max(max_norm, row.max_grad_norm);
  cfg.clip_psi = max_norm * 1.0001;
  const auto clipped = train(p.clients, cfg, 7);
  EXPECT_EQ(clipped.state.basis.matrix(), unclipped.state.basis.matrix());
  EXPECT_EQ(clipped.head_matrix(), unclipped.head_matrix());
  for (const auto& row : clipped.trace) EXPECT_EQ(row.clip_fraction, 0.0);
}

TEST(Train, ThreadCountDoesNotChangeResults) {
  const auto p = make_problem(10, 2, 50, 20, 0.1, 2, 2, 8);
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 2;
  cfg.batch_size = 2;
  cfg.eta = 1.0;
  cfg.clip_psi = 2.0;
  cfg.noise = NoiseScale{0.01, NoiseMode::ZcdpExact};
  cfg.init = PrivateInitSpec{5.0, NoiseScale{0.001, NoiseMode::PaperExperiment}};
  cfg.verbose_trace = true;
  cfg.threads = 1;
  const auto a = train(p.clients, cfg, 8, &p.model);
  cfg.threads = 4;
  const auto b = train(p.clients, cfg, 8, &p.model);
  EXPECT_EQ(a.state.basis.matrix(), b.state.basis.matrix());
  EXPECT_EQ(a.head_matrix(), b.head_matrix());
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t t = 0; t < a.trace.size(); ++t) {
    EXPECT_EQ(a.trace[t].dist_to_ustar, b.trace[t].dist_to_ustar);
    EXPECT_EQ(a.trace[t].client_grad_norms, b.trace[t].client_grad_norms);
    EXPECT_EQ(a.trace[t].client_grad_norms.size(), 50u);
  }
}

TEST(Train, TooFewBatchesThrows) {
  const auto p = make_problem(6, 2, 5, 20, 0.0, 1, 2, 9);
  FedRepConfig cfg;
  cfg.rank = 2;
  cfg.rounds = 3;
  try {
    train(p.clients, cfg, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BatchBudgetExceeded);
  }
}

TEST(Onboard, HeadInRecoveredSpan) {
  const auto model = gen_ground_truth(10, 2, 5, HeadStyle::GaussianHeads, 0.0, 10);
  const Basis u_priv = perturbed(model.u_star, 0.2, 10);
  const ClientDataset c = sample_client_data(model, {FeatureKind::StandardGaussian, 10}, 4000, 0, 0, 4, 10);
  const auto head = onboard_new_client(u_priv, c);
  EXPECT_LE((head.v - oracle::normal_equations(u_priv.matrix(), c.features, c.labels)).norm(), 1e-9);
  // Population optimum in span(U) leaves ||(I - U U^T) w*||^2 <= ||v*||^2 dist^2.
  const double risk = (u_priv.matrix() * head.v - model.regressor(4)).squaredNorm();
  const double gamma = model.v_star.row(4).norm();
  const double dist = principal_dist(u_priv, model.u_star);
  EXPECT_LE(risk, 1.05 * gamma * gamma * dist * dist);
}

TEST(Onboard, ExactlyKSamplesInterpolate) {
  const auto model = gen_ground_truth(6, 2, 3, HeadStyle::GaussianHeads, 0.0, 11);
  const ClientDataset c = sample_client_data(model, {FeatureKind::StandardGaussian, 6}, 2, 0, 0, 1, 11);
  const auto head = onboard_new_client(model.u_star, c, HeadSolvePolicy::Strict);
  EXPECT_LE((c.features * model.u_star.matrix() * head.v - c.labels).norm(), 1e-10);
}

TEST(Onboard, EmptyDatasetThrows) {
  ClientDataset empty;
  empty.features.resize(0, 4);
  try {
    onboard_new_client(Basis::canonical(4, 1), empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
}
