#pragma once

// Private FedRep for linear regression: per-client least-squares heads,
// embedding gradients, clipped and noised server aggregation followed by QR.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dpfedrep/dp_core.hpp"
#include "dpfedrep/subspace.hpp"
#include "dpfedrep/synth_data.hpp"

namespace dpfedrep {

/// Start from a caller-supplied basis.
struct ProvidedInit {
  Basis basis;
};
/// Run the private spectral initializer on the clients' first halves.
struct PrivateInitSpec {
  double psi_init = 1.0;
  NoiseScale noise;
};
/// QR of a seeded Gaussian d x k draw.
struct RandomOrthonormalInit {};

using InitMode = std::variant<ProvidedInit, PrivateInitSpec, RandomOrthonormalInit>;

enum class HeadSolvePolicy {
  Strict,                 ///< IllConditioned is fatal
  PseudoinverseFallback,  ///< minimum-norm least squares, flagged in the result
};

struct FedRepConfig {
  double eta = 0.1;
  int rounds = 1;
  Eigen::Index batch_size = 1;
  Eigen::Index rank = 1;
  double clip_psi = std::numeric_limits<double>::infinity();  ///< infinity disables clipping
  NoiseScale noise;
  std::optional<double> lambda_bound;  ///< lower bound on sigma_min of V*/sqrt(n)
  std::optional<double> Lambda_bound;  ///< upper bound on sigma_max of V*/sqrt(n)
  InitMode init = RandomOrthonormalInit{};
  HeadSolvePolicy head_policy = HeadSolvePolicy::PseudoinverseFallback;
  int threads = 1;
  bool verbose_trace = false;  ///< keep per-client gradient norms in the trace

  void validate() const;
};

/// 1 / (2 Lambda^2).
double default_learning_rate(double Lambda_bound);
/// (Lambda^2 / lambda^2) * log(n^3) with unit constant. Advisory only: the
/// result is logged to stderr and never applied automatically.
int suggest_rounds(double Lambda_bound, double lambda_bound, std::int64_t n_users);

struct EmbeddingState {
  Basis basis;
  int round = 0;
  UpperTriangularFactor<double> r_factor;
};

struct LocalHead {
  Eigen::VectorXd v;
  std::int64_t client_id = 0;
  bool used_pseudoinverse = false;
};

/// Exact minimizer of (1/b) sum (y_j - <x_j, U v>)^2 via the normal equations.
LocalHead local_head_solve(const Eigen::MatrixXd& u, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           HeadSolvePolicy policy = HeadSolvePolicy::PseudoinverseFallback,
                           std::int64_t client_id = 0);

/// (2/b) X^T (X U v - y) v^T, the U-gradient of the batch-average squared loss.
Eigen::MatrixXd embedding_gradient(const Eigen::MatrixXd& u, const Eigen::VectorXd& v, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& y);

/// Sum of matrices over a fixed-shape pairwise tree (left half + right half),
/// so the floating-point result only depends on the input order.
Eigen::MatrixXd pairwise_sum(std::span<const Eigen::MatrixXd> terms);

struct RoundStats {
  double max_grad_norm = 0.0;
  double clip_fraction = 0.0;
};

struct RoundOutcome {
  EmbeddingState state;
  RoundStats stats;
};

/// Clip, average in client order, add one noise draw, step, re-orthonormalize.
RoundOutcome server_round(const EmbeddingState& state, std::span<const Eigen::MatrixXd> client_grads,
                          const FedRepConfig& cfg, const RngKey& noise_key);

struct TraceRow {
  int round = 0;
  std::optional<double> dist_to_ustar;
  double max_grad_norm = 0.0;
  double clip_fraction = 0.0;
  std::vector<double> client_grad_norms;  ///< only with verbose_trace
};

struct TrainResult {
  EmbeddingState state;
  std::vector<LocalHead> heads;
  std::vector<TraceRow> trace;
  Basis initial_basis;
  double init_clip_fraction = 0.0;
  int pseudoinverse_heads = 0;  ///< head solves that needed the fallback, all phases

  Eigen::MatrixXd head_matrix() const;  ///< n x k
};

TrainResult train(std::span<const ClientDataset> clients, const FedRepConfig& cfg, std::uint64_t seed,
                  const GroundTruthModel* ground_truth = nullptr);

/// Least-squares head for a client that did not take part in training.
LocalHead onboard_new_client(const Basis& u_priv, const ClientDataset& dataset,
                             HeadSolvePolicy policy = HeadSolvePolicy::PseudoinverseFallback);

}  // namespace dpfedrep
