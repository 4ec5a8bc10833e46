#pragma once

// Private representation learning for personalized classification: a random
// sign JL sketch, a Frobenius gamma-cover of the sqrt(2k) ball in sketch
// space, margin-loss scoring and exponential-mechanism selection.

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dpfedrep/rng.hpp"
#include "dpfedrep/synth_data.hpp"

namespace dpfedrep {

/// k' x d matrix with every entry exactly +-1/sqrt(k').
struct JLSketch {
  Eigen::MatrixXd matrix;

  Eigen::Index target_dim() const { return matrix.rows(); }
  Eigen::Index source_dim() const { return matrix.cols(); }
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& features) const { return features * matrix.transpose(); }
};

JLSketch sample_jl(Eigen::Index d, Eigen::Index k_prime, const RngKey& key);

/// ceil(c * r^2 Gamma^2 ln(n m / beta) / rho^2), at least 1.
Eigen::Index jl_target_dim(double r, double Gamma, double rho, std::int64_t n, std::int64_t m, double beta = 0.05,
                           double constant = 8.0);

struct MarginParams {
  double rho = 0.1;
  double Gamma = 1.0;  ///< head-norm bound
  double r = 1.0;      ///< feature radius

  void validate() const;
};

/// Samples as (features, labels). Features may be sketched (m x k') or raw (m x d).
struct LabeledView {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
};

/// Fraction of samples with y * <x, U v> <= rho.
double margin_empirical_loss(const Eigen::MatrixXd& u_eff, const Eigen::VectorXd& v, const LabeledView& data,
                             double rho);

struct Exact1D {};
struct GridSearch {
  int points_per_axis = 101;
};
using HeadSolver = std::variant<Exact1D, GridSearch>;

struct HeadFit {
  Eigen::VectorXd v;
  double loss = 1.0;
  bool resolution_too_coarse = false;  ///< grid spacing > rho / (2 r sqrt(k))
};

/// Minimizes margin_empirical_loss over ||v|| <= Gamma. Exact1D (k = 1 only)
/// enumerates one representative per sign-pattern cell; GridSearch scans a
/// uniform grid on [-Gamma, Gamma]^k restricted to the ball. Ties go to the
/// smallest ||v||, then lexicographically smallest v.
HeadFit best_head_margin(const Eigen::MatrixXd& u_eff, const LabeledView& data, double rho, double Gamma,
                         const HeadSolver& solver, double feature_radius = 1.0);

struct LatticeCover {};
struct RandomNetCover {
  std::size_t count = 1000;
};

struct CoverSpec {
  double gamma_cover = 1.0;
  Eigen::Index k_prime = 1;
  Eigen::Index k = 1;
  std::variant<LatticeCover, RandomNetCover> kind = LatticeCover{};
  std::size_t max_cardinality = 1'000'000;
  std::uint64_t seed = 0;  ///< RandomNet only

  double ball_radius() const;
  void validate() const;
};

struct Cover {
  std::vector<Eigen::MatrixXd> elements;  ///< k' x k each
  bool heuristic = false;  ///< RandomNet: no covering guarantee
};

/// Number of lattice points the Lattice kind would emit, saturated at cap + 1.
std::size_t lattice_cardinality(const CoverSpec& spec);

/// Lattice: grid with spacing gamma / sqrt(k' k) through the origin,
/// intersected with the sqrt(2k) Frobenius ball. Every ball point is then
/// within gamma of a member. Throws CoverTooLarge beyond the cap.
Cover build_cover(const CoverSpec& spec);

/// User term of the score: min over ||v|| <= Gamma of the margin loss.
double user_min_margin_loss(const Eigen::MatrixXd& u_eff, const LabeledView& sketched, const MarginParams& params,
                            const HeadSolver& solver);

/// f(U') = -(1/n) sum_i user_min_margin_loss. Range [-1, 0], sensitivity 1/n.
double cover_score(const Eigen::MatrixXd& u_eff, std::span<const LabeledView> sketched_users,
                   const MarginParams& params, const HeadSolver& solver);

/// First-half samples of each user, sketched.
std::vector<LabeledView> sketch_first_halves(const JLSketch& sketch, std::span<const BoundedClassDataset> datasets);

struct ClassifyOptions {
  Eigen::Index k_prime = 1;
  HeadSolver solver = Exact1D{};
  double head_rho = 0.0;  ///< margin used for the final per-user head fit
  int threads = 1;
};

struct ClassifyReport {
  std::size_t cover_size = 0;
  bool heuristic_cover = false;
  double score_min = 0.0;
  double score_max = 0.0;
  double selected_score = 0.0;
  std::size_t selected_index = 0;
  std::size_t selected_rank = 0;  ///< 0 = best-scoring element
};

struct ClassifyResult {
  Eigen::MatrixXd u_priv;  ///< d x k, M^T U~; not orthonormal in general
  Eigen::MatrixXd u_tilde;  ///< selected k' x k cover element
  JLSketch sketch;
  std::vector<Eigen::VectorXd> heads;
  ClassifyReport report;

  Eigen::MatrixXd head_matrix() const;
};

ClassifyResult private_classify(std::span<const BoundedClassDataset> datasets, const MarginParams& params,
                                double epsilon, const CoverSpec& cover, const ClassifyOptions& options,
                                const RngKey& key);

}  // namespace dpfedrep
