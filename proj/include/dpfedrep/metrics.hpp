#pragma once

// Risk evaluation against a planted model, and the local-GD baseline.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpfedrep/rng.hpp"
#include "dpfedrep/synth_data.hpp"

namespace dpfedrep {

/// (1/n) sum_i ||U v_i - U* v*_i||^2: the exact excess population risk of
/// the squared loss under identity feature covariance. U may be any d x k'
/// matrix; heads is n x k'.
double excess_population_risk(const Eigen::MatrixXd& u, const Eigen::MatrixXd& heads, const GroundTruthModel& model);

/// Monte-Carlo estimate of the same quantity: mean of (y - <x, U v_i>)^2 - R^2
/// over `samples_per_user` fresh draws per user, averaged over users.
double monte_carlo_risk(const Eigen::MatrixXd& u, const Eigen::MatrixXd& heads, const GroundTruthModel& model,
                        const FeatureDistribution& dist, long samples_per_user, const RngKey& key);

/// Monte-Carlo 0-1 loss 1[y <x, U v_i> <= 0] on fresh draws from the class
/// model (a zero score counts as an error).
double classification_population_loss(const Eigen::MatrixXd& u, const Eigen::MatrixXd& heads,
                                      const ClassModel& model, long samples_per_user, const RngKey& key);

struct LocalGdOptions {
  int steps = 500;
  /// Step size; <= 0 picks 1 / (2 lambda_max(X^T X / m)) per client.
  double lr = 0.0;
};

struct LocalGdResult {
  Eigen::MatrixXd weights;  ///< n x d, row i is client i's regressor
  double excess_risk = 0.0;
};

/// Full-batch gradient descent from w = 0 on each client's own
/// (1/m) ||X w - y||^2. Throws Diverged after 5 consecutive loss increases.
Eigen::VectorXd local_gd_fit(const ClientDataset& client, const LocalGdOptions& options);

LocalGdResult local_gd_baseline(std::span<const ClientDataset> clients, const LocalGdOptions& options,
                                const GroundTruthModel& model, int threads = 1);

}  // namespace dpfedrep
