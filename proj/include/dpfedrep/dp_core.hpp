#pragma once

// User-level DP building blocks: Frobenius clipping, Gaussian noise
// calibration with zCDP accounting, and the exponential mechanism.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dpfedrep/error.hpp"
#include "dpfedrep/rng.hpp"

namespace dpfedrep {

struct PrivacySpec {
  double epsilon = 1.0;
  double delta = 1e-6;
  double clip_psi = 1.0;       ///< training clip bound
  double clip_psi_init = 1.0;  ///< initialization clip bound
  int rounds = 1;
  std::int64_t n_users = 1;

  /// Throws InfeasibleBudget / InvalidArgument on bad fields.
  void validate() const;
};

enum class NoiseMode {
  ZcdpExact,        ///< tight zCDP composition, converted with rho + 2 sqrt(rho ln(1/delta))
  PaperExperiment,  ///< psi sqrt(T) sqrt(16 ln(1.25/delta)) / (n eps)
  Off,
};

struct NoiseScale {
  double sigma_hat = 0.0;  ///< per-entry standard deviation
  NoiseMode mode = NoiseMode::Off;

  static NoiseScale off() { return {}; }
};

/// M * min(1, tau / ||M||_F). The zero matrix passes through.
template <typename Derived>
auto clip_frobenius(const Eigen::MatrixBase<Derived>& m, double tau) {
  using Scalar = typename Derived::Scalar;
  using Out = Eigen::Matrix<Scalar, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime>;
  if (!(tau > 0)) throw Error(ErrorCode::InvalidArgument, "clip bound must be positive");
  const Scalar norm = m.norm();
  if (!(norm > Scalar(tau))) return Out(m);
  return Out(m * (Scalar(tau) / norm));
}

/// True when clip_frobenius would rescale `m`.
template <typename Derived>
bool clip_active(const Eigen::MatrixBase<Derived>& m, double tau) {
  return m.norm() > tau;
}

/// (epsilon, delta) implied by total zCDP rho.
double zcdp_to_epsilon(double rho, double delta);
/// Largest rho whose conversion gives at most epsilon (closed form).
double epsilon_to_zcdp(double epsilon, double delta);

/// Running zCDP spend. A value type: copy it to fork an accounting branch.
class ZcdpAccountant {
 public:
  /// Gaussian mechanism with L2 sensitivity `sensitivity` and per-entry std `sigma`.
  void add_gaussian(double sensitivity, double sigma);
  void add_rho(double rho) { rho_ += rho; }

  double rho() const noexcept { return rho_; }
  double epsilon(double delta) const { return zcdp_to_epsilon(rho_, delta); }

 private:
  double rho_ = 0.0;
};

/// Per-round L2 sensitivity of the averaged clipped gradient: psi / n.
inline double training_sensitivity(const PrivacySpec& spec) { return spec.clip_psi / double(spec.n_users); }

NoiseScale calibrate_training_noise(const PrivacySpec& spec, NoiseMode mode);
NoiseScale calibrate_init_noise(const PrivacySpec& spec);

/// rows x cols matrix of i.i.d. N(0, sigma_hat^2) draws.
Eigen::MatrixXd gaussian_noise_matrix(Eigen::Index rows, Eigen::Index cols, const NoiseScale& scale,
                                      const RngKey& key);

/// Selection probabilities exp(eps * s_i / (2 * sensitivity)), normalized,
/// computed after subtracting the max score.
std::vector<double> exponential_weights(std::span<const double> scores, double epsilon, double sensitivity);

/// Index drawn from exponential_weights via inverse-CDF on one uniform.
std::size_t exponential_mechanism(std::span<const double> scores, double epsilon, double sensitivity,
                                  const RngKey& key);

template <typename Candidate>
const Candidate& exponential_mechanism(std::span<const Candidate> candidates, std::span<const double> scores,
                                       double epsilon, double sensitivity, const RngKey& key) {
  if (candidates.size() != scores.size())
    throw Error(ErrorCode::DimensionMismatch, "candidate and score lists differ in length");
  return candidates[exponential_mechanism(scores, epsilon, sensitivity, key)];
}

}  // namespace dpfedrep
