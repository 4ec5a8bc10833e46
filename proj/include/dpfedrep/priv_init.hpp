#pragma once

// Private spectral initialization of the shared embedding.

#include <span>

#include <Eigen/Dense>

#include "dpfedrep/dp_core.hpp"
#include "dpfedrep/subspace.hpp"
#include "dpfedrep/synth_data.hpp"

namespace dpfedrep {

/// Cross-term statistic over the first half S0 of size m':
///   Z = 1/(m'(m'-1)) * sum_{j1 != j2} y_j1 y_j2 x_j1 x_j2^T
/// evaluated as (s s^T - sum_j y_j^2 x_j x_j^T) / (m'(m'-1)), s = sum_j y_j x_j.
/// Its expectation is w w^T for w = U* v*_i.
Eigen::MatrixXd client_init_statistic(const ClientDataset& dataset);

struct InitResult {
  Basis basis;
  Eigen::VectorXd eigenvalues;  ///< top-k eigenvalues of the noised aggregate
  double clip_fraction = 0.0;   ///< share of clients whose statistic was clipped
  bool degenerate_gap = false;
};

/// Clips each client statistic to psi_init in Frobenius norm, averages them
/// in client order, adds a d x d Gaussian draw at noise.sigma_hat, symmetrizes
/// and returns the top-k eigenvectors.
InitResult private_init(std::span<const ClientDataset> clients, Eigen::Index k, double psi_init,
                        const NoiseScale& noise, const RngKey& key, int threads = 1);

/// Same, with the noise calibrated from the privacy spec.
InitResult private_init(std::span<const ClientDataset> clients, Eigen::Index k, const PrivacySpec& spec,
                        const RngKey& key, int threads = 1);

}  // namespace dpfedrep
