#include "dpfedrep/metrics.hpp"

#include <cmath>
#include <string>

#include "dpfedrep/error.hpp"
#include "dpfedrep/fedrep.hpp"
#include "dpfedrep/parallel.hpp"

namespace dpfedrep {

double excess_population_risk(const Eigen::MatrixXd& u, const Eigen::MatrixXd& heads, const GroundTruthModel& model) {
  if (u.rows() != model.d() || heads.cols() != u.cols() || heads.rows() != model.n())
    throw Error(ErrorCode::DimensionMismatch, "excess risk shape mismatch");
  const Eigen::MatrixXd learned = heads * u.transpose();                          // n x d
  const Eigen::MatrixXd planted = model.v_star * model.u_star.matrix().transpose();  // n x d
  return (learned - planted).rowwise().squaredNorm().mean();
}

double monte_carlo_risk(const Eigen::MatrixXd& u, const Eigen::MatrixXd& heads, const GroundTruthModel& model,
                        const FeatureDistribution& dist, long samples_per_user, const RngKey& key) {
  if (samples_per_user < 1) throw Error(ErrorCode::InvalidArgument, "need at least one sample");
  if (u.rows() != model.d() || heads.cols() != u.cols() || heads.rows() != model.n())
    throw Error(ErrorCode::DimensionMismatch, "monte carlo risk shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    KeyedStream stream(key.with_client(std::uint64_t(i)).with_purpose(Purpose::MonteCarlo));
    const Eigen::VectorXd w_star = model.regressor(i);
    const Eigen::VectorXd w = u * heads.row(i).transpose();
    double acc = 0.0;
    for (long s = 0; s < samples_per_user; ++s) {
      const Eigen::VectorXd x = dist.sample(stream);
      const double y = x.dot(w_star) + model.noise_R * stream.normal();
      const double r = y - x.dot(w);
      acc += r * r;
    }
    total += acc / double(samples_per_user) - model.noise_R * model.noise_R;
  }
  return total / double(model.n());
}

double classification_population_loss(const Eigen::MatrixXd& u, const Eigen::MatrixXd& heads,
                                      const ClassModel& model, long samples_per_user, const RngKey& key) {
  if (samples_per_user < 1) throw Error(ErrorCode::InvalidArgument, "need at least one sample");
  if (u.rows() != model.u_star.ambient_dim() || heads.cols() != u.cols() || heads.rows() != model.n())
    throw Error(ErrorCode::DimensionMismatch, "classification loss shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    KeyedStream stream(key.with_client(std::uint64_t(i)).with_purpose(Purpose::MonteCarlo));
    const Eigen::VectorXd w = u * heads.row(i).transpose();
    long errors = 0;
    for (long s = 0; s < samples_per_user; ++s) {
      const auto [x, y] = sample_class_point(model, i, stream);
      if (y * x.dot(w) <= 0) ++errors;
    }
    total += double(errors) / double(samples_per_user);
  }
  return total / double(model.n());
}

Eigen::VectorXd local_gd_fit(const ClientDataset& client, const LocalGdOptions& options) {
  const auto& x = client.features;
  const auto& y = client.labels;
  const double m = double(x.rows());
  if (x.rows() == 0) throw Error(ErrorCode::TooFewSamples, "local GD on an empty dataset");
  double lr = options.lr;
  if (!(lr > 0)) {
    const Eigen::MatrixXd gram = x.transpose() * x / m;
    const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    lr = top > 0 ? 1.0 / (2.0 * top) : 1.0;
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double last_loss = y.squaredNorm() / m;
  // increases below this are rounding noise once the fit interpolates (m < d)
  const double floor = 1e-12 * std::max(last_loss, std::numeric_limits<double>::min());
  int rising = 0;
  for (int step = 0; step < options.steps; ++step) {
    const Eigen::VectorXd residual = x * w - y;
    w -= lr * (2.0 / m) * (x.transpose() * residual);
    const double loss = (x * w - y).squaredNorm() / m;
    rising = loss > last_loss + floor ? rising + 1 : 0;
    if (rising >= 5 || !std::isfinite(loss))
      throw Error(ErrorCode::Diverged, "local GD loss increased 5 steps in a row for client " +
                                           std::to_string(client.client_id));
    last_loss = loss;
  }
  return w;
}

LocalGdResult local_gd_baseline(std::span<const ClientDataset> clients, const LocalGdOptions& options,
                                const GroundTruthModel& model, int threads) {
  if (std::ssize(clients) != model.n()) throw Error(ErrorCode::DimensionMismatch, "one dataset per user expected");
  LocalGdResult out;
  out.weights.resize(model.n(), model.d());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    out.weights.row(Eigen::Index(i)) = local_gd_fit(clients[i], options).transpose();
  });
  out.excess_risk = excess_population_risk(Eigen::MatrixXd::Identity(model.d(), model.d()), out.weights, model);
  return out;
}

}  // namespace dpfedrep
