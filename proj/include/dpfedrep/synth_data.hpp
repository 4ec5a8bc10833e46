#pragma once

// Planted low-rank regression/classification problems and per-user datasets.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dpfedrep/rng.hpp"
#include "dpfedrep/subspace.hpp"

namespace dpfedrep {

enum class HeadStyle { GaussianHeads, UnitScaledHeads };

/// Isotropic feature laws: each has identity covariance and is 1-sub-Gaussian.
enum class FeatureKind { StandardGaussian, ScaledRademacher, UniformSphereScaled };

struct FeatureDistribution {
  FeatureKind kind = FeatureKind::StandardGaussian;
  Eigen::Index dim = 0;

  Eigen::VectorXd sample(KeyedStream& stream) const;
};

struct GroundTruthModel {
  Basis u_star;             ///< d x k
  Eigen::MatrixXd v_star;   ///< n x k, row i is user i's head
  double noise_R = 0.0;     ///< label-noise standard deviation
  double gamma_head = 0.0;  ///< max_i ||v*_i||
  double sigma_min_star = 0.0;  ///< k-th singular value of V*/sqrt(n)
  double sigma_max_star = 0.0;  ///< largest singular value of V*/sqrt(n)

  Eigen::Index d() const { return u_star.ambient_dim(); }
  Eigen::Index k() const { return u_star.rank(); }
  Eigen::Index n() const { return v_star.rows(); }
  double condition_number() const { return sigma_max_star / sigma_min_star; }
  /// U* v*_i
  Eigen::VectorXd regressor(Eigen::Index user) const { return u_star.matrix() * v_star.row(user).transpose(); }
};

/// Fills the derived spectral fields of a model from u_star and v_star.
/// Throws RankDeficient when V* has rank < k.
void refresh_spectral_fields(GroundTruthModel& model);

GroundTruthModel gen_ground_truth(Eigen::Index d, Eigen::Index k, Eigen::Index n, HeadStyle head_style,
                                  double noise_R, std::uint64_t seed);

/// Which samples the per-round batches are drawn from. FirstHalf keeps the
/// S0/S1 separation strict (2Tb <= m/2). WholeDataset allows 2Tb <= m, which
/// small-m configurations such as m=10, T=5, b=1 need.
enum class BatchPool { FirstHalf, WholeDataset };

struct ClientDataset {
  std::int64_t client_id = 0;
  Eigen::MatrixXd features;  ///< m x d
  Eigen::VectorXd labels;    ///< m
  Eigen::Index split_index = 0;  ///< rows [0, split) are S0, the rest S1
  std::vector<std::vector<Eigen::Index>> batch_schedule;  ///< 2T disjoint index sets

  Eigen::Index m() const { return features.rows(); }
  Eigen::Index d() const { return features.cols(); }
  Eigen::Index first_half_size() const { return split_index; }
  Eigen::Index second_half_size() const { return m() - split_index; }

  /// Rows of a batch as (X, y).
  Eigen::MatrixXd batch_features(std::size_t batch) const;
  Eigen::VectorXd batch_labels(std::size_t batch) const;
};

/// Seeded partition of the batch pool into 2T disjoint batches of size b.
std::vector<std::vector<Eigen::Index>> make_batch_schedule(Eigen::Index m, int rounds, Eigen::Index batch_size,
                                                            BatchPool pool, const RngKey& key);

ClientDataset sample_client_data(const GroundTruthModel& model, const FeatureDistribution& dist, Eigen::Index m,
                                 int rounds, Eigen::Index batch_size, std::int64_t client_id, std::uint64_t seed,
                                 BatchPool pool = BatchPool::FirstHalf);

/// All n users of a model, in client-id order.
std::vector<ClientDataset> sample_all_clients(const GroundTruthModel& model, const FeatureDistribution& dist,
                                              Eigen::Index m, int rounds, Eigen::Index batch_size,
                                              std::uint64_t seed, BatchPool pool = BatchPool::FirstHalf,
                                              int threads = 1);

// ---------------------------------------------------------------------------
// Classification

struct MarginStyle {
  /// Minimum |<x, U* v*_i>| of every emitted sample; nullopt means no rejection.
  std::optional<double> enforce_margin;

  static MarginStyle none() { return {}; }
  static MarginStyle enforce(double rho) { return {rho}; }
};

struct BoundedClassDataset {
  std::int64_t client_id = 0;
  Eigen::MatrixXd features;  ///< m x d, every row has norm <= radius
  Eigen::VectorXd labels;    ///< entries in {-1, +1}
  Eigen::Index split_index = 0;
  double radius = 1.0;

  Eigen::Index m() const { return features.rows(); }
  Eigen::Index d() const { return features.cols(); }
};

struct ClassModel {
  Basis u_star;
  Eigen::MatrixXd v_star;
  double radius = 1.0;
  MarginStyle margin;

  Eigen::Index n() const { return v_star.rows(); }
  Eigen::VectorXd regressor(Eigen::Index user) const { return u_star.matrix() * v_star.row(user).transpose(); }
};

/// Uniform draw from the radius-r Euclidean ball in R^d.
Eigen::VectorXd sample_ball(Eigen::Index d, double radius, KeyedStream& stream);

/// One labeled sample for `user`, honoring the margin rejection rule. Throws
/// MarginInfeasible once more than 99.9% of 1e5 attempts have been rejected.
std::pair<Eigen::VectorXd, double> sample_class_point(const ClassModel& model, Eigen::Index user,
                                                      KeyedStream& stream);

std::vector<BoundedClassDataset> sample_class_data(const ClassModel& model, Eigen::Index m, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Debug dumps: one CSV per client, columns x_1..x_d,y.

void write_client_csv(const std::filesystem::path& path, const Eigen::MatrixXd& features,
                      const Eigen::VectorXd& labels);
std::pair<Eigen::MatrixXd, Eigen::VectorXd> read_client_csv(const std::filesystem::path& path);

}  // namespace dpfedrep
