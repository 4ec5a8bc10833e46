#pragma once

// Flat key=value experiment configuration.
//
//   # comment
//   problem.d = 50
//   privacy.epsilons = 1, 2, 4, 8
//
// Keys are dotted paths; the full schema (with defaults) is printed by
// `describe_config_schema` and the `describe-config` CLI subcommand.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dpfedrep/dp_core.hpp"
#include "dpfedrep/jl_classify.hpp"
#include "dpfedrep/synth_data.hpp"

namespace dpfedrep {

enum class Method { PrivateFedRep, NonPrivateFedRep, LocalGd, JlClassify };

const char* method_name(Method m);
std::optional<Method> parse_method(const std::string& name);
bool method_is_private(Method m);

enum class InitKind { Private, Random };

struct ProblemConfig {
  Eigen::Index d = 50;
  Eigen::Index k = 2;
  Eigen::Index n = 20000;
  Eigen::Index m = 10;
  double noise_R = 0.01;
  FeatureKind features = FeatureKind::StandardGaussian;
  HeadStyle heads = HeadStyle::GaussianHeads;
};

struct FedRepSection {
  int rounds = 5;
  std::optional<double> eta = 2.5;  ///< nullopt: 1/(2 Lambda^2)
  std::optional<double> nonprivate_eta;  ///< step of the non-private baseline; nullopt: 1/(2 Lambda^2)
  double nonprivate_psi = std::numeric_limits<double>::infinity();
  Eigen::Index batch_size = 0;      ///< 0: floor(pool / 2T)
  double psi = 10.0;
  InitKind init = InitKind::Private;
  BatchPool batch_pool = BatchPool::WholeDataset;
  /// Assumption bounds; nullopt with *_oracle set means "use the planted value".
  std::optional<double> Lambda_bound;
  std::optional<double> lambda_bound;
  bool bounds_from_oracle = true;
};

struct PrivacySection {
  std::vector<double> epsilons{1, 2, 4, 8};
  double delta = 1e-6;
  NoiseMode accountant = NoiseMode::PaperExperiment;
  std::optional<double> psi_init;  ///< nullopt: estimated quantile of ||Z_i||_F
  double psi_init_quantile = 0.999;
};

struct LocalGdSection {
  int steps = 500;
  double lr = 0.0;  ///< 0: per-client 1/(2 lambda_max)
};

struct ClassifySection {
  Eigen::Index d = 10;
  Eigen::Index k = 1;
  Eigen::Index n = 50;
  Eigen::Index m = 40;
  double rho = 0.3;
  double Gamma = 1.0;
  double r = 0.5;
  Eigen::Index k_prime = 0;  ///< 0: computed from jl_target_dim
  double jl_constant = 8.0;
  double beta = 0.05;
  double gamma_cover = 0.5;
  std::size_t random_net = 0;  ///< 0: lattice cover, otherwise a random net of this size
  std::size_t max_cover = 1'000'000;
  int grid_points = 0;  ///< 0: Exact1D (k = 1), otherwise GridSearch per axis
  bool enforce_margin = true;
  double head_rho = 0.0;
  long eval_samples = 20000;
};

struct ExperimentConfig {
  ProblemConfig problem;
  FedRepSection fedrep;
  PrivacySection privacy;
  LocalGdSection local_gd;
  ClassifySection classify;
  std::vector<Method> methods{Method::PrivateFedRep, Method::NonPrivateFedRep, Method::LocalGd};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "out";
  int threads = 1;
  bool record_wall_time = false;
  std::size_t synth_max_clients = 0;  ///< 0: dump every client

  /// Cross-field checks. Errors name the offending key path.
  void validate() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source_name = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Writes every recognized key with its default and a one-line description.
void describe_config_schema(std::ostream& os);

}  // namespace dpfedrep
