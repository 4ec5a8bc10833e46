#include "dpfedrep/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <ostream>

#include "dpfedrep/metrics.hpp"
#include "dpfedrep/parallel.hpp"
#include "dpfedrep/priv_init.hpp"

namespace dpfedrep {

namespace {

// Seed stream for the disposable psi_init calibration draw.
constexpr std::uint64_t kCalibrationSalt = 0x5eed0ca11b7a7e00ULL;
constexpr Eigen::Index kCalibrationUsers = 5000;

Eigen::Index resolve_batch_size(const ExperimentConfig& cfg) {
  if (cfg.fedrep.batch_size > 0) return cfg.fedrep.batch_size;
  if (cfg.fedrep.rounds == 0) return 0;
  const Eigen::Index pool = cfg.fedrep.batch_pool == BatchPool::FirstHalf ? cfg.problem.m / 2 : cfg.problem.m;
  return pool / (2 * cfg.fedrep.rounds);
}

FeatureDistribution feature_distribution(const ExperimentConfig& cfg) {
  return {cfg.problem.features, cfg.problem.d};
}

}  // namespace

RegressionProblem make_regression_problem(const ExperimentConfig& cfg, std::uint64_t seed, int threads) {
  RegressionProblem p;
  const auto& pr = cfg.problem;
  p.model = gen_ground_truth(pr.d, pr.k, pr.n, pr.heads, pr.noise_R, seed);
  p.batch_size = resolve_batch_size(cfg);
  p.clients = sample_all_clients(p.model, feature_distribution(cfg), pr.m, cfg.fedrep.rounds, p.batch_size, seed,
                                 cfg.fedrep.batch_pool, threads);
  return p;
}

double estimate_psi_init(const ExperimentConfig& cfg, std::uint64_t seed, int threads) {
  const auto& pr = cfg.problem;
  const std::uint64_t draw_seed = seed ^ kCalibrationSalt;
  const Eigen::Index users = std::min(pr.n, kCalibrationUsers);
  const GroundTruthModel model = gen_ground_truth(pr.d, pr.k, std::max(users, pr.k), pr.heads, pr.noise_R, draw_seed);
  std::vector<double> norms(static_cast<std::size_t>(model.n()));
  parallel_for(norms.size(), threads, [&](std::size_t i) {
    const auto data =
        sample_client_data(model, feature_distribution(cfg), pr.m, 0, 0, std::int64_t(i), draw_seed);
    norms[i] = client_init_statistic(data).norm();
  });
  std::sort(norms.begin(), norms.end());
  const double q = cfg.privacy.psi_init_quantile;
  const auto idx = std::min(norms.size() - 1, std::size_t(std::max(0.0, std::ceil(q * double(norms.size())) - 1)));
  return std::max(norms[idx], std::numeric_limits<double>::min());
}

FedRepConfig make_fedrep_config(const ExperimentConfig& cfg, const RegressionProblem& problem,
                                std::optional<double> epsilon, double psi_init, int threads) {
  const auto& fr = cfg.fedrep;
  FedRepConfig out;
  out.rounds = fr.rounds;
  out.batch_size = std::max<Eigen::Index>(problem.batch_size, 1);
  out.rank = cfg.problem.k;
  out.threads = threads;
  out.head_policy = HeadSolvePolicy::PseudoinverseFallback;
  out.Lambda_bound = fr.Lambda_bound;
  out.lambda_bound = fr.lambda_bound;
  if (fr.bounds_from_oracle) {
    if (!out.Lambda_bound) out.Lambda_bound = problem.model.sigma_max_star;
    if (!out.lambda_bound) out.lambda_bound = problem.model.sigma_min_star;
  }
  const auto& eta = epsilon ? fr.eta : fr.nonprivate_eta;
  if (eta) {
    out.eta = *eta;
  } else {
    if (!out.Lambda_bound) throw Error(ErrorCode::Config, "fedrep.eta: 'auto' needs a Lambda bound");
    out.eta = default_learning_rate(*out.Lambda_bound);
  }

  if (!epsilon) {
    out.clip_psi = fr.nonprivate_psi;
    out.noise = NoiseScale::off();
    if (fr.init == InitKind::Private)
      out.init = PrivateInitSpec{std::numeric_limits<double>::infinity(), NoiseScale::off()};
    else
      out.init = RandomOrthonormalInit{};
    return out;
  }

  PrivacySpec spec;
  spec.epsilon = *epsilon;
  spec.delta = cfg.privacy.delta;
  spec.clip_psi = fr.psi;
  spec.clip_psi_init = psi_init;
  spec.rounds = std::max(fr.rounds, 1);
  spec.n_users = cfg.problem.n;
  out.clip_psi = fr.psi;
  out.noise = fr.rounds > 0 ? calibrate_training_noise(spec, cfg.privacy.accountant) : NoiseScale::off();
  if (fr.init == InitKind::Private)
    out.init = PrivateInitSpec{psi_init, calibrate_init_noise(spec)};
  else
    out.init = RandomOrthonormalInit{};
  return out;
}

ClassModel make_class_model(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& c = cfg.classify;
  const GroundTruthModel planted = gen_ground_truth(c.d, c.k, c.n, HeadStyle::UnitScaledHeads, 0.0, seed);
  ClassModel model;
  model.u_star = planted.u_star;
  model.v_star = planted.v_star;
  model.radius = c.r;
  model.margin = c.enforce_margin ? MarginStyle::enforce(c.rho) : MarginStyle::none();
  return model;
}

MarginParams make_margin_params(const ExperimentConfig& cfg) {
  return {cfg.classify.rho, cfg.classify.Gamma, cfg.classify.r};
}

ClassifyOptions make_classify_options(const ExperimentConfig& cfg, int threads) {
  const auto& c = cfg.classify;
  ClassifyOptions opt;
  opt.k_prime = c.k_prime > 0 ? c.k_prime : jl_target_dim(c.r, c.Gamma, c.rho, c.n, c.m, c.beta, c.jl_constant);
  if (c.grid_points > 0) opt.solver = GridSearch{c.grid_points};
  else opt.solver = Exact1D{};
  opt.head_rho = c.head_rho;
  opt.threads = threads;
  return opt;
}

CoverSpec make_cover_spec(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& c = cfg.classify;
  CoverSpec spec;
  spec.gamma_cover = c.gamma_cover;
  spec.k = c.k;
  spec.k_prime = make_classify_options(cfg).k_prime;
  spec.max_cardinality = c.max_cover;
  spec.seed = seed;
  if (c.random_net > 0) spec.kind = RandomNetCover{c.random_net};
  return spec;
}

namespace {

struct Task {
  Method method;
  std::optional<double> epsilon;
  std::uint64_t seed;
};

double mean_clip_rate(const TrainResult& r) {
  if (r.trace.empty()) return 0.0;
  double total = 0.0;
  for (const auto& row : r.trace) total += row.clip_fraction;
  return total / double(r.trace.size());
}

ResultRow run_task(const ExperimentConfig& cfg, const Task& task) {
  ResultRow row;
  row.method = task.method;
  row.epsilon = task.epsilon.value_or(kEpsilonNonPrivate);
  row.seed = task.seed;

  switch (task.method) {
    case Method::PrivateFedRep:
    case Method::NonPrivateFedRep: {
      const RegressionProblem problem = make_regression_problem(cfg, task.seed);
      const double psi_init = task.epsilon ? cfg.privacy.psi_init.value_or(estimate_psi_init(cfg, task.seed))
                                           : std::numeric_limits<double>::infinity();
      const FedRepConfig fcfg = make_fedrep_config(cfg, problem, task.epsilon, psi_init);
      const TrainResult trained = train(problem.clients, fcfg, task.seed, &problem.model);
      row.excess_mse = excess_population_risk(trained.state.basis.matrix(), trained.head_matrix(), problem.model);
      row.dist_to_ustar = principal_dist(trained.state.basis, problem.model.u_star);
      if (task.method == Method::PrivateFedRep) row.clip_rate = mean_clip_rate(trained);
      break;
    }
    case Method::LocalGd: {
      const RegressionProblem problem = make_regression_problem(cfg, task.seed);
      const LocalGdOptions opt{cfg.local_gd.steps, cfg.local_gd.lr};
      row.excess_mse = local_gd_baseline(problem.clients, opt, problem.model).excess_risk;
      break;
    }
    case Method::JlClassify: {
      const ClassModel model = make_class_model(cfg, task.seed);
      const auto datasets = sample_class_data(model, cfg.classify.m, task.seed);
      const auto result = private_classify(datasets, make_margin_params(cfg), *task.epsilon,
                                           make_cover_spec(cfg, task.seed), make_classify_options(cfg),
                                           RngKey{task.seed, 0, 0, Purpose::Generic});
      row.zero_one_loss = classification_population_loss(result.u_priv, result.head_matrix(), model,
                                                         cfg.classify.eval_samples,
                                                         RngKey{task.seed, 0, 1, Purpose::MonteCarlo});
      break;
    }
  }
  return row;
}

bool row_less(const ResultRow& a, const ResultRow& b) {
  if (a.method != b.method) return int(a.method) < int(b.method);
  if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
  return a.seed < b.seed;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress) {
  cfg.validate();
  std::vector<Task> tasks;
  for (std::uint64_t seed : cfg.seeds) {
    for (Method m : cfg.methods) {
      if (method_is_private(m)) {
        for (double eps : cfg.privacy.epsilons) tasks.push_back({m, eps, seed});
      } else {
        tasks.push_back({m, std::nullopt, seed});
      }
    }
  }

  std::vector<ResultRow> rows(tasks.size());
  std::mutex log_mutex;
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto start = std::chrono::steady_clock::now();
    try {
      rows[i] = run_task(cfg, task);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(method_name(task.method)) + " (epsilon=" +
                                (task.epsilon ? std::to_string(*task.epsilon) : std::string("inf")) +
                                ", seed=" + std::to_string(task.seed) + "): " + e.detail());
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (cfg.record_wall_time) rows[i].wall_time_ms = ms;
    if (progress) {
      std::lock_guard lock(log_mutex);
      *progress << "done " << method_name(task.method) << " eps="
                << (task.epsilon ? std::to_string(*task.epsilon) : std::string("inf")) << " seed=" << task.seed
                << " (" << long(ms) << " ms)\n";
    }
  });

  ExperimentResult result;
  for (const auto& row : rows) {
    if (method_is_private(row.method) || cfg.privacy.epsilons.empty()) {
      result.rows.push_back(row);
      continue;
    }
    // Non-private methods ran once per seed; replicate across the sweep for plotting.
    for (double eps : cfg.privacy.epsilons) {
      ResultRow copy = row;
      copy.epsilon = eps;
      result.rows.push_back(copy);
    }
  }
  std::sort(result.rows.begin(), result.rows.end(), row_less);
  return result;
}

}  // namespace dpfedrep
