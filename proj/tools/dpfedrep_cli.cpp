// Command-line front end: synth, train, init-only, classify, sweep, describe-config.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dpfedrep/error.hpp"
#include "dpfedrep/experiment.hpp"
#include "dpfedrep/metrics.hpp"
#include "dpfedrep/priv_init.hpp"
#include "dpfedrep/report.hpp"

namespace fs = std::filesystem;
using namespace dpfedrep;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<double> epsilon;
  bool non_private = false;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.threads) cfg.threads = *o.threads;
  if (o.out) cfg.output_dir = *o.out;
  cfg.validate();
  return cfg;
}

std::uint64_t first_seed(const ExperimentConfig& cfg) { return cfg.seeds.empty() ? 0 : cfg.seeds.front(); }

// nullopt = non-private run.
std::optional<double> run_epsilon(const ExperimentConfig& cfg, const CommonOptions& o) {
  if (o.non_private) return std::nullopt;
  if (o.epsilon) return o.epsilon;
  if (cfg.privacy.epsilons.empty()) return std::nullopt;
  return cfg.privacy.epsilons.front();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

int cmd_synth(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto seed = first_seed(cfg);
  const auto problem = make_regression_problem(cfg, seed, cfg.threads);
  const fs::path dir = cfg.output_dir / "synth";
  ensure_dir(dir);
  std::size_t count = problem.clients.size();
  if (cfg.synth_max_clients > 0) count = std::min(count, cfg.synth_max_clients);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = problem.clients[i];
    char name[32];
    std::snprintf(name, sizeof name, "client_%06zu.csv", i);
    write_client_csv(dir / name, c.features, c.labels);
  }
  std::ofstream truth(dir / "u_star.csv");
  truth << std::setprecision(17);
  const auto& u = problem.model.u_star.matrix();
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    for (Eigen::Index c = 0; c < u.cols(); ++c) truth << (c ? "," : "") << u(r, c);
    truth << '\n';
  }
  std::cout << "wrote " << count << " client files and u_star.csv to " << dir.string() << '\n'
            << "sigma_min*=" << problem.model.sigma_min_star << " sigma_max*=" << problem.model.sigma_max_star
            << " batch_size=" << problem.batch_size << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto seed = first_seed(cfg);
  const auto eps = run_epsilon(cfg, o);
  const auto problem = make_regression_problem(cfg, seed, cfg.threads);
  const double psi_init = eps ? cfg.privacy.psi_init.value_or(estimate_psi_init(cfg, seed, cfg.threads))
                              : std::numeric_limits<double>::infinity();
  const auto fcfg = make_fedrep_config(cfg, problem, eps, psi_init, cfg.threads);
  std::cout << "seed=" << seed << " epsilon=" << (eps ? std::to_string(*eps) : std::string("inf"))
            << " eta=" << fcfg.eta << " b=" << fcfg.batch_size << " sigma_hat=" << fcfg.noise.sigma_hat << '\n';
  const auto result = train(problem.clients, fcfg, seed, &problem.model);
  std::cout << "init dist_to_ustar=" << principal_dist(result.initial_basis, problem.model.u_star)
            << " init_clip_fraction=" << result.init_clip_fraction << '\n';
  std::cout << "round,dist_to_ustar,max_grad_norm,clip_fraction\n";
  for (const auto& row : result.trace) {
    std::cout << row.round << ',' << row.dist_to_ustar.value_or(std::nan("")) << ',' << row.max_grad_norm << ','
              << row.clip_fraction << '\n';
  }
  std::cout << "excess_mse="
            << excess_population_risk(result.state.basis.matrix(), result.head_matrix(), problem.model)
            << " pseudoinverse_heads=" << result.pseudoinverse_heads << '\n';
  return 0;
}

int cmd_init_only(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto seed = first_seed(cfg);
  const auto eps = run_epsilon(cfg, o);
  const auto problem = make_regression_problem(cfg, seed, cfg.threads);
  double psi_init = std::numeric_limits<double>::infinity();
  NoiseScale noise = NoiseScale::off();
  if (eps) {
    psi_init = cfg.privacy.psi_init.value_or(estimate_psi_init(cfg, seed, cfg.threads));
    PrivacySpec spec;
    spec.epsilon = *eps;
    spec.delta = cfg.privacy.delta;
    spec.clip_psi = cfg.fedrep.psi;
    spec.clip_psi_init = psi_init;
    spec.rounds = std::max(cfg.fedrep.rounds, 1);
    spec.n_users = cfg.problem.n;
    noise = calibrate_init_noise(spec);
  }
  const auto init = private_init(problem.clients, cfg.problem.k, psi_init, noise,
                                 RngKey{seed, 0, 0, Purpose::InitNoise}, cfg.threads);
  std::cout << "seed=" << seed << " epsilon=" << (eps ? std::to_string(*eps) : std::string("inf"))
            << " psi_init=" << psi_init << " sigma_hat=" << noise.sigma_hat << '\n'
            << "dist_to_ustar=" << principal_dist(init.basis, problem.model.u_star)
            << " clip_fraction=" << init.clip_fraction << " degenerate_gap=" << (init.degenerate_gap ? 1 : 0)
            << "\neigenvalues=" << init.eigenvalues.transpose() << '\n';
  return 0;
}

int cmd_classify(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto seed = first_seed(cfg);
  const double eps = o.epsilon ? *o.epsilon
                               : (cfg.privacy.epsilons.empty() ? 1.0 : cfg.privacy.epsilons.front());
  const auto model = make_class_model(cfg, seed);
  const auto data = sample_class_data(model, cfg.classify.m, seed);
  const auto options = make_classify_options(cfg, cfg.threads);
  const auto result = private_classify(data, make_margin_params(cfg), eps, make_cover_spec(cfg, seed), options,
                                       RngKey{seed, 0, 0, Purpose::Generic});
  const auto& rep = result.report;
  std::cout << "seed=" << seed << " epsilon=" << eps << " k_prime=" << options.k_prime << '\n'
            << "cover_size=" << rep.cover_size << (rep.heuristic_cover ? " (heuristic)" : "") << '\n'
            << "score_range=[" << rep.score_min << ", " << rep.score_max << "] selected_score=" << rep.selected_score
            << " selected_rank=" << rep.selected_rank << '\n'
            << "population_zero_one_loss="
            << classification_population_loss(result.u_priv, result.head_matrix(), model, cfg.classify.eval_samples,
                                              RngKey{seed, 0, 1, Purpose::MonteCarlo})
            << '\n';
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  const auto cfg = resolve_config(o);
  const auto result = run_experiment(cfg, &std::cerr);
  ensure_dir(cfg.output_dir);
  emit_csv(result, cfg.output_dir / "results.csv");
  emit_plot(result, cfg.output_dir / "results.svg");
  std::cout << "wrote " << result.rows.size() << " rows to " << (cfg.output_dir / "results.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private federated representation learning experiments"};
  app.require_subcommand(1);
  CommonOptions opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Override the seed list with a single seed");
    sub->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opts.out, "Output directory");
  };
  auto add_epsilon = [&](CLI::App* sub, bool with_non_private) {
    sub->add_option("--epsilon", opts.epsilon, "Privacy budget (default: first configured epsilon)")
        ->check(CLI::PositiveNumber);
    if (with_non_private) sub->add_flag("--non-private", opts.non_private, "Non-private baseline: no noise, fedrep.nonprivate_eta and fedrep.nonprivate_psi");
  };

  auto* synth = app.add_subcommand("synth", "Dump synthetic client datasets as CSV");
  auto* train_cmd = app.add_subcommand("train", "Run FedRep once and print the per-round trace");
  auto* init = app.add_subcommand("init-only", "Run the private spectral initialization alone");
  auto* classify = app.add_subcommand("classify", "Run the JL + exponential-mechanism classifier");
  auto* sweep = app.add_subcommand("sweep", "Run the full epsilon sweep and write CSV and SVG");
  auto* describe = app.add_subcommand("describe-config", "Print every configuration key with its default");
  for (auto* sub : {synth, train_cmd, init, classify, sweep}) add_common(sub);
  add_epsilon(train_cmd, true);
  add_epsilon(init, true);
  add_epsilon(classify, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*describe) {
      describe_config_schema(std::cout);
      return 0;
    }
    if (*synth) return cmd_synth(opts);
    if (*train_cmd) return cmd_train(opts);
    if (*init) return cmd_init_only(opts);
    if (*classify) return cmd_classify(opts);
    if (*sweep) return cmd_sweep(opts);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_config_error() ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
