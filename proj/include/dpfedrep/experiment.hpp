#pragma once

// Config-driven experiment runner: epsilon sweeps over seeds and methods.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpfedrep/config.hpp"
#include "dpfedrep/fedrep.hpp"
#include "dpfedrep/jl_classify.hpp"
#include "dpfedrep/synth_data.hpp"

namespace dpfedrep {

/// Epsilon recorded for rows of non-private methods when no epsilon is swept.
inline constexpr double kEpsilonNonPrivate = std::numeric_limits<double>::infinity();

struct ResultRow {
  Method method = Method::PrivateFedRep;
  double epsilon = kEpsilonNonPrivate;
  std::uint64_t seed = 0;
  std::optional<double> excess_mse;
  std::optional<double> zero_one_loss;
  std::optional<double> dist_to_ustar;
  std::optional<double> wall_time_ms;
  std::optional<double> clip_rate;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;  ///< sorted by (method, epsilon, seed)
};

/// Everything a single seed's regression problem needs.
struct RegressionProblem {
  GroundTruthModel model;
  std::vector<ClientDataset> clients;
  Eigen::Index batch_size = 0;
};

RegressionProblem make_regression_problem(const ExperimentConfig& cfg, std::uint64_t seed, int threads = 1);

/// Quantile of ||Z_i||_F over a disposable draw from the same generator
/// (different seed stream), used when privacy.psi_init = auto.
double estimate_psi_init(const ExperimentConfig& cfg, std::uint64_t seed, int threads = 1);

/// FedRep configuration for one run. epsilon = nullopt is the non-private
/// baseline: noise off, noiseless spectral init, fedrep.nonprivate_psi and
/// fedrep.nonprivate_eta in place of the private clip bound and step.
FedRepConfig make_fedrep_config(const ExperimentConfig& cfg, const RegressionProblem& problem,
                                std::optional<double> epsilon, double psi_init, int threads = 1);

ClassModel make_class_model(const ExperimentConfig& cfg, std::uint64_t seed);
ClassifyOptions make_classify_options(const ExperimentConfig& cfg, int threads = 1);
CoverSpec make_cover_spec(const ExperimentConfig& cfg, std::uint64_t seed);
MarginParams make_margin_params(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

}  // namespace dpfedrep
