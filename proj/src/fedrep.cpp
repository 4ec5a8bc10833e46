#include "dpfedrep/fedrep.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "dpfedrep/parallel.hpp"
#include "dpfedrep/priv_init.hpp"

namespace dpfedrep {

namespace {
constexpr double kMaxGramCondition = 1e12;
}

void FedRepConfig::validate() const {
  if (!(eta > 0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  if (rounds < 0) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 0");
  if (batch_size < 1 && rounds > 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (rank < 1) throw Error(ErrorCode::InvalidArgument, "rank must be >= 1");
  if (!(clip_psi > 0)) throw Error(ErrorCode::InvalidArgument, "clip_psi must be positive");
  if (!(noise.sigma_hat >= 0)) throw Error(ErrorCode::InvalidArgument, "noise scale must be >= 0");
  if (lambda_bound && !(*lambda_bound > 0)) throw Error(ErrorCode::InvalidArgument, "lambda bound must be > 0");
  if (lambda_bound && Lambda_bound && !(*Lambda_bound >= *lambda_bound))
    throw Error(ErrorCode::InvalidArgument, "Lambda bound must be >= lambda bound");
  if (const auto* p = std::get_if<ProvidedInit>(&init); p && p->basis.rank() != rank)
    throw Error(ErrorCode::DimensionMismatch, "provided basis rank differs from cfg.rank");
}

double default_learning_rate(double Lambda_bound) {
  if (!(Lambda_bound > 0)) throw Error(ErrorCode::InvalidArgument, "Lambda bound must be positive");
  return 1.0 / (2.0 * Lambda_bound * Lambda_bound);
}

int suggest_rounds(double Lambda_bound, double lambda_bound, std::int64_t n_users) {
  if (!(lambda_bound > 0) || !(Lambda_bound >= lambda_bound) || n_users < 1)
    throw Error(ErrorCode::InvalidArgument, "need Lambda >= lambda > 0 and n >= 1");
  const double ratio = Lambda_bound / lambda_bound;
  const int suggestion = int(std::ceil(ratio * ratio * 3.0 * std::log(double(n_users))));
  std::cerr << "suggested rounds (unit constant): " << suggestion << '\n';
  return suggestion;
}

LocalHead local_head_solve(const Eigen::MatrixXd& u, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           HeadSolvePolicy policy, std::int64_t client_id) {
  if (x.rows() != y.size() || x.cols() != u.rows())
    throw Error(ErrorCode::DimensionMismatch, "head solve shape mismatch");
  if (x.rows() == 0) throw Error(ErrorCode::IllConditioned, "head solve on an empty batch");
  const Eigen::MatrixXd proj = x * u;  // b x k
  const Eigen::MatrixXd gram = proj.transpose() * proj;
  const Eigen::VectorXd rhs = proj.transpose() * y;

  LocalHead head;
  head.client_id = client_id;
  bool well_posed = proj.rows() >= proj.cols();
  if (well_posed) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double hi = es.eigenvalues()(gram.rows() - 1);
    well_posed = lo > 0 && hi / lo < kMaxGramCondition;
  }
  if (well_posed) {
    head.v = gram.ldlt().solve(rhs);
    return head;
  }
  if (policy == HeadSolvePolicy::Strict)
    throw Error(ErrorCode::IllConditioned, "projected Gram matrix is singular or has condition >= 1e12 (b=" +
                                               std::to_string(x.rows()) + ", k=" + std::to_string(u.cols()) + ")");
  head.v = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(proj).solve(y);
  head.used_pseudoinverse = true;
  return head;
}

Eigen::MatrixXd embedding_gradient(const Eigen::MatrixXd& u, const Eigen::VectorXd& v, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& y) {
  if (x.rows() != y.size() || x.cols() != u.rows() || u.cols() != v.size())
    throw Error(ErrorCode::DimensionMismatch, "gradient shape mismatch");
  const Eigen::VectorXd residual = x * (u * v) - y;
  return (2.0 / double(x.rows())) * (x.transpose() * residual) * v.transpose();
}

Eigen::MatrixXd pairwise_sum(std::span<const Eigen::MatrixXd> terms) {
  if (terms.empty()) throw Error(ErrorCode::InvalidArgument, "pairwise_sum of nothing");
  if (terms.size() == 1) return terms.front();
  const std::size_t half = terms.size() / 2;
  Eigen::MatrixXd left = pairwise_sum(terms.first(half));
  left += pairwise_sum(terms.subspan(half));
  return left;
}

RoundOutcome server_round(const EmbeddingState& state, std::span<const Eigen::MatrixXd> client_grads,
                          const FedRepConfig& cfg, const RngKey& noise_key) {
  if (client_grads.empty()) throw Error(ErrorCode::InvalidArgument, "server round without clients");
  const Eigen::MatrixXd& u = state.basis.matrix();
  const bool clipping = std::isfinite(cfg.clip_psi);

  RoundStats stats;
  std::vector<Eigen::MatrixXd> clipped;
  clipped.reserve(client_grads.size());
  std::size_t active = 0;
  for (const auto& g : client_grads) {
    if (g.rows() != u.rows() || g.cols() != u.cols())
      throw Error(ErrorCode::DimensionMismatch, "client gradient shape differs from the embedding");
    const double norm = g.norm();
    stats.max_grad_norm = std::max(stats.max_grad_norm, norm);
    if (clipping && norm > cfg.clip_psi) {
      ++active;
      clipped.push_back(g * (cfg.clip_psi / norm));
    } else {
      clipped.push_back(g);
    }
  }
  stats.clip_fraction = double(active) / double(client_grads.size());

  Eigen::MatrixXd step = pairwise_sum(clipped) / double(client_grads.size());
  step += gaussian_noise_matrix(u.rows(), u.cols(), cfg.noise, noise_key);
  const Eigen::MatrixXd u_hat = u - cfg.eta * step;

  auto qr = qr_orthonormalize(u_hat);
  return {EmbeddingState{std::move(qr.q), state.round + 1, std::move(qr.r)}, stats};
}

Eigen::MatrixXd TrainResult::head_matrix() const {
  const Eigen::Index k = state.basis.rank();
  Eigen::MatrixXd out(Eigen::Index(heads.size()), k);
  for (std::size_t i = 0; i < heads.size(); ++i) out.row(Eigen::Index(i)) = heads[i].v.transpose();
  return out;
}

namespace {

Basis initial_basis(std::span<const ClientDataset> clients, const FedRepConfig& cfg, std::uint64_t seed,
                    double& init_clip_fraction) {
  const Eigen::Index d = clients.front().d();
  if (const auto* provided = std::get_if<ProvidedInit>(&cfg.init)) {
    if (provided->basis.ambient_dim() != d)
      throw Error(ErrorCode::DimensionMismatch, "provided basis dim differs from feature dim");
    return provided->basis;
  }
  if (const auto* spec = std::get_if<PrivateInitSpec>(&cfg.init)) {
    auto res = private_init(clients, cfg.rank, spec->psi_init, spec->noise, RngKey{seed, 0, 0, Purpose::InitNoise},
                            cfg.threads);
    init_clip_fraction = res.clip_fraction;
    return std::move(res.basis);
  }
  KeyedStream stream(RngKey{seed, 0, 0, Purpose::RandomInit});
  return qr_orthonormalize(gaussian_matrix(d, cfg.rank, 1.0, stream)).q;
}

}  // namespace

TrainResult train(std::span<const ClientDataset> clients, const FedRepConfig& cfg, std::uint64_t seed,
                  const GroundTruthModel* ground_truth) {
  cfg.validate();
  if (clients.empty()) throw Error(ErrorCode::InvalidArgument, "train needs at least one client");
  const Eigen::Index d = clients.front().d();
  for (const auto& c : clients) {
    if (c.d() != d) throw Error(ErrorCode::DimensionMismatch, "clients disagree on feature dim");
    if (std::ssize(c.batch_schedule) < 2 * cfg.rounds)
      throw Error(ErrorCode::BatchBudgetExceeded,
                  "client " + std::to_string(c.client_id) + " has fewer than 2T batches");
  }

  TrainResult result;
  result.initial_basis = initial_basis(clients, cfg, seed, result.init_clip_fraction);
  result.state = EmbeddingState{result.initial_basis, 0, UpperTriangularFactor<double>(
                                                             Eigen::MatrixXd::Identity(cfg.rank, cfg.rank))};

  std::vector<Eigen::MatrixXd> grads(clients.size());
  std::vector<char> fallback(clients.size(), 0);
  for (int t = 0; t < cfg.rounds; ++t) {
    const Eigen::MatrixXd u = result.state.basis.matrix();
    parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
      const auto& c = clients[i];
      const auto head_batch = std::size_t(2 * t);
      const auto grad_batch = std::size_t(2 * t + 1);
      const LocalHead head = local_head_solve(u, c.batch_features(head_batch), c.batch_labels(head_batch),
                                              cfg.head_policy, c.client_id);
      fallback[i] = head.used_pseudoinverse;
      grads[i] = embedding_gradient(u, head.v, c.batch_features(grad_batch), c.batch_labels(grad_batch));
    });
    for (char f : fallback) result.pseudoinverse_heads += f ? 1 : 0;

    auto outcome = server_round(result.state, grads, cfg, RngKey{seed, 0, std::uint64_t(t), Purpose::ServerNoise});
    result.state = std::move(outcome.state);

    TraceRow row;
    row.round = result.state.round;
    row.max_grad_norm = outcome.stats.max_grad_norm;
    row.clip_fraction = outcome.stats.clip_fraction;
    if (ground_truth) row.dist_to_ustar = principal_dist(result.state.basis, ground_truth->u_star);
    if (cfg.verbose_trace) {
      row.client_grad_norms.reserve(grads.size());
      for (const auto& g : grads) row.client_grad_norms.push_back(g.norm());
    }
    result.trace.push_back(std::move(row));
  }

  const Eigen::MatrixXd u = result.state.basis.matrix();
  result.heads.resize(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t i) {
    const auto& c = clients[i];
    const Eigen::Index tail = c.second_half_size();
    result.heads[i] = local_head_solve(u, c.features.bottomRows(tail), c.labels.tail(tail), cfg.head_policy,
                                       c.client_id);
    fallback[i] = result.heads[i].used_pseudoinverse;
  });
  for (char f : fallback) result.pseudoinverse_heads += f ? 1 : 0;
  return result;
}

LocalHead onboard_new_client(const Basis& u_priv, const ClientDataset& dataset, HeadSolvePolicy policy) {
  if (dataset.m() == 0) throw Error(ErrorCode::TooFewSamples, "new client has an empty dataset");
  return local_head_solve(u_priv.matrix(), dataset.features, dataset.labels, policy, dataset.client_id);
}

}  // namespace dpfedrep
