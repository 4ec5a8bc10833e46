#include "dpfedrep/dp_core.hpp"

#include <algorithm>
#include <string>

namespace dpfedrep {

void PrivacySpec::validate() const {
  if (!(epsilon > 0)) throw Error(ErrorCode::InfeasibleBudget, "epsilon must be > 0");
  if (!(delta > 0 && delta < 1)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
  if (!(clip_psi > 0)) throw Error(ErrorCode::InvalidArgument, "clip_psi must be > 0");
  if (!(clip_psi_init > 0)) throw Error(ErrorCode::InvalidArgument, "clip_psi_init must be > 0");
  if (rounds < 1) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 1");
  if (n_users < 1) throw Error(ErrorCode::InvalidArgument, "n_users must be >= 1");
}

double zcdp_to_epsilon(double rho, double delta) {
  return rho + 2.0 * std::sqrt(rho * std::log(1.0 / delta));
}

double epsilon_to_zcdp(double epsilon, double delta) {
  // Solve (sqrt(rho))^2 + 2 sqrt(L) sqrt(rho) - eps = 0 for the positive root.
  const double log_term = std::log(1.0 / delta);
  const double root = std::sqrt(log_term + epsilon) - std::sqrt(log_term);
  return root * root;
}

void ZcdpAccountant::add_gaussian(double sensitivity, double sigma) {
  if (!(sigma > 0)) {
    rho_ = std::numeric_limits<double>::infinity();
    return;
  }
  rho_ += sensitivity * sensitivity / (2.0 * sigma * sigma);
}

NoiseScale calibrate_training_noise(const PrivacySpec& spec, NoiseMode mode) {
  if (mode == NoiseMode::Off) return NoiseScale::off();
  spec.validate();
  const double n = double(spec.n_users);
  const double T = double(spec.rounds);
  switch (mode) {
    case NoiseMode::ZcdpExact: {
      // T rounds at rho_round = s^2 / (2 sigma^2) must total rho_budget.
      const double rho_budget = epsilon_to_zcdp(spec.epsilon, spec.delta);
      const double s = training_sensitivity(spec);
      return {s * std::sqrt(T / (2.0 * rho_budget)), NoiseMode::ZcdpExact};
    }
    case NoiseMode::PaperExperiment:
      return {spec.clip_psi * std::sqrt(T) * std::sqrt(16.0 * std::log(1.25 / spec.delta)) / (n * spec.epsilon),
              NoiseMode::PaperExperiment};
    case NoiseMode::Off:
      break;
  }
  return NoiseScale::off();
}

NoiseScale calibrate_init_noise(const PrivacySpec& spec) {
  spec.validate();
  return {spec.clip_psi_init * std::sqrt(2.0 * std::log(1.25 / spec.delta)) / (double(spec.n_users) * spec.epsilon),
          NoiseMode::PaperExperiment};
}

Eigen::MatrixXd gaussian_noise_matrix(Eigen::Index rows, Eigen::Index cols, const NoiseScale& scale,
                                      const RngKey& key) {
  if (!(scale.sigma_hat >= 0)) throw Error(ErrorCode::InvalidArgument, "negative noise scale");
  if (scale.sigma_hat == 0.0) return Eigen::MatrixXd::Zero(rows, cols);
  KeyedStream stream(key);
  return gaussian_matrix(rows, cols, scale.sigma_hat, stream);
}

std::vector<double> exponential_weights(std::span<const double> scores, double epsilon, double sensitivity) {
  if (scores.empty()) throw Error(ErrorCode::EmptyCandidateSet, "exponential mechanism over no candidates");
  if (!(sensitivity > 0)) throw Error(ErrorCode::InvalidArgument, "sensitivity must be positive");
  if (!(epsilon > 0)) throw Error(ErrorCode::InfeasibleBudget, "epsilon must be > 0");
  const double top = *std::max_element(scores.begin(), scores.end());
  const double scale = epsilon / (2.0 * sensitivity);
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp(scale * (scores[i] - top));
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

std::size_t exponential_mechanism(std::span<const double> scores, double epsilon, double sensitivity,
                                  const RngKey& key) {
  const auto w = exponential_weights(scores, epsilon, sensitivity);
  KeyedStream stream(key);
  const double u = stream.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  // Rounding left the cumulative sum just under 1: take the last positive weight.
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0) return i;
  return 0;
}

}  // namespace dpfedrep
