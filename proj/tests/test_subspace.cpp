#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpfedrep/subspace.hpp"
#include "oracles.hpp"

using namespace dpfedrep;
using Eigen::MatrixXd;

TEST(QrOrthonormalize, IdentityColumnsAreFixed) {
  const auto f = qr_orthonormalize(MatrixXd::Identity(3, 2));
  EXPECT_TRUE(f.q.matrix().isApprox(MatrixXd::Identity(3, 2)));
  EXPECT_TRUE(f.r.matrix().isApprox(MatrixXd::Identity(2, 2)));
}

TEST(QrOrthonormalize, PositiveDiagonalConvention) {
  const auto f = qr_orthonormalize(2.0 * MatrixXd::Identity(3, 2));
  EXPECT_TRUE(f.q.matrix().isApprox(MatrixXd::Identity(3, 2)));
  EXPECT_TRUE(f.r.matrix().isApprox(2.0 * MatrixXd::Identity(2, 2)));
  const auto g = qr_orthonormalize(-1.0 * MatrixXd::Identity(3, 2));
  EXPECT_GE(g.r.matrix().diagonal().minCoeff(), 0.0);
}

TEST(QrOrthonormalize, MatchesGramSchmidtOracle) {
  std::mt19937_64 gen(7);
  int tested = 0;
  while (tested < 20) {
    const MatrixXd m = oracle::random_matrix(6, 3, gen);
    const auto sv = oracle::singular_values(m);
    if (sv(0) / sv(2) >= 10) continue;
    ++tested;
    const auto f = qr_orthonormalize(m);
    const MatrixXd& q = f.q.matrix();
    EXPECT_LE((q.transpose() * q - MatrixXd::Identity(3, 3)).norm(), 1e-10);
    EXPECT_LE((q * f.r.matrix() - m).norm(), 1e-9 * m.norm());
    EXPECT_LE((q - oracle::gram_schmidt(m)).norm(), 1e-9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < i; ++j) EXPECT_EQ(f.r.matrix()(i, j), 0.0);
  }
}

TEST(QrOrthonormalize, RankDeficientInputsThrow) {
  MatrixXd m = MatrixXd::Zero(4, 2);
  EXPECT_THROW(qr_orthonormalize(m), Error);
  m.col(0) = Eigen::VectorXd::Ones(4);
  m.col(1) = 2.0 * Eigen::VectorXd::Ones(4);
  try {
    qr_orthonormalize(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
}

TEST(OrthonormalBasis, RejectsNonOrthonormalColumns) {
  EXPECT_THROW(Basis(MatrixXd::Ones(3, 2)), Error);
  EXPECT_THROW(Basis(MatrixXd::Identity(2, 3)), Error);
  EXPECT_NO_THROW(Basis::canonical(5, 5));
}

TEST(OrthonormalBasis, FloatScalarWorks) {
  const Eigen::MatrixXf m = Eigen::MatrixXf::Random(5, 2);
  const auto f = qr_orthonormalize(m);
  EXPECT_LE((f.q.matrix().transpose() * f.q.matrix() - Eigen::MatrixXf::Identity(2, 2)).norm(), 1e-5f);
}

TEST(TopKEigvecs, DiagonalCase) {
  const MatrixXd z = Eigen::Vector3d(3, 2, 1).asDiagonal();
  const auto e = top_k_eigvecs(z, 2);
  EXPECT_NEAR(principal_dist(e.basis, Basis::canonical(3, 2)), 0.0, 1e-12);
  EXPECT_NEAR(e.values(0), 3.0, 1e-12);
  EXPECT_NEAR(e.values(1), 2.0, 1e-12);
  EXPECT_FALSE(e.degenerate_gap);
}

TEST(TopKEigvecs, RankOneGivesPositiveW) {
  Eigen::Vector3d w(-0.2, -0.9, 0.3);
  w.normalize();
  const auto e = top_k_eigvecs(MatrixXd(w * w.transpose()), 1);
  // Largest-magnitude entry positive, so the result is -w here.
  EXPECT_LE((e.basis.matrix().col(0) + w).norm(), 1e-12);
}

TEST(TopKEigvecs, MatchesJacobiOracle) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd a = oracle::random_matrix(8, 8, gen);
    const MatrixXd z = a + a.transpose();
    const auto e = top_k_eigvecs(z, 3);
    const auto [vals, vecs] = oracle::jacobi_eig(z);
    const MatrixXd ref = vecs.leftCols(3);
    EXPECT_LE(oracle::principal_dist(ref, e.basis.matrix()), 1e-8);
    EXPECT_LE((e.values - vals.head(3)).norm(), 1e-9 * z.norm());
    const MatrixXd& q = e.basis.matrix();
    EXPECT_LE((z * q - q * (q.transpose() * z * q)).norm(), 1e-8 * z.norm());
  }
}

TEST(TopKEigvecs, FlagsDegenerateGap) {
  const auto e = top_k_eigvecs(MatrixXd(MatrixXd::Identity(3, 3)), 1);
  EXPECT_TRUE(e.degenerate_gap);
}

TEST(TopKEigvecs, RejectsAsymmetricInput) {
  MatrixXd z = MatrixXd::Identity(3, 3);
  z(0, 1) = 1.0;
  EXPECT_THROW(top_k_eigvecs(z, 1), Error);
}

TEST(PrincipalDist, Examples) {
  EXPECT_NEAR(principal_dist(Basis::canonical(4, 2), Basis::canonical(4, 2)), 0.0, 1e-15);
  const Basis e1(MatrixXd(Eigen::Vector2d(1, 0)));
  const Basis e2(MatrixXd(Eigen::Vector2d(0, 1)));
  EXPECT_NEAR(principal_dist(e1, e2), 1.0, 1e-15);
  const double theta = 0.3;
  const Basis rot(MatrixXd(Eigen::Vector2d(std::cos(theta), std::sin(theta))));
  EXPECT_NEAR(principal_dist(e1, rot), std::abs(std::sin(theta)), 1e-12);
  EXPECT_NEAR(principal_dist(e1, rot), 0.29552020666133955, 1e-12);
}

TEST(PrincipalDist, DimensionMismatchThrows) {
  try {
    principal_dist(Basis::canonical(3, 1), Basis::canonical(4, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(principal_dist(Basis::canonical(4, 1), Basis::canonical(4, 2)), Error);
}

TEST(PrincipalDist, RangeSymmetryAndSpanInvariance) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Basis a(oracle::random_orthonormal(7, 3, gen));
    const Basis b(oracle::random_orthonormal(7, 3, gen));
    const MatrixXd rot = oracle::random_orthonormal(3, 3, gen);
    const double dab = principal_dist(a, b);
    EXPECT_GE(dab, 0.0);
    EXPECT_LE(dab, 1.0);
    EXPECT_NEAR(dab, principal_dist(b, a), 1e-9);
    EXPECT_NEAR(dab, oracle::principal_dist(a.matrix(), b.matrix()), 1e-9);
    EXPECT_NEAR(dab, principal_dist(Basis(a.matrix() * rot), b), 1e-9);
    EXPECT_NEAR(dab, principal_dist(a, Basis(b.matrix() * rot)), 1e-9);
    EXPECT_NEAR(principal_dist(a, a), 0.0, 1e-12);
  }
}

TEST(SpectralNorm, Examples) {
  EXPECT_EQ(spectral_norm(MatrixXd::Zero(3, 4)), 0.0);
  EXPECT_NEAR(spectral_norm(MatrixXd(Eigen::Vector3d(1, 5, 2).asDiagonal())), 5.0, 1e-12);
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd m = oracle::random_matrix(5, 3, gen);
    const double ref = oracle::spectral_norm(m);
    EXPECT_NEAR(spectral_norm(m), ref, 1e-9 * ref);
  }
}
