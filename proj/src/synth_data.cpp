#include "dpfedrep/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "dpfedrep/error.hpp"
#include "dpfedrep/parallel.hpp"

namespace dpfedrep {

Eigen::VectorXd FeatureDistribution::sample(KeyedStream& stream) const {
  Eigen::VectorXd x(dim);
  switch (kind) {
    case FeatureKind::StandardGaussian:
      for (Eigen::Index i = 0; i < dim; ++i) x(i) = stream.normal();
      break;
    case FeatureKind::ScaledRademacher:
      for (Eigen::Index i = 0; i < dim; ++i) x(i) = stream.coin() ? 1.0 : -1.0;
      break;
    case FeatureKind::UniformSphereScaled: {
      // Uniform on the sphere of radius sqrt(d): covariance is exactly I.
      for (Eigen::Index i = 0; i < dim; ++i) x(i) = stream.normal();
      const double norm = x.norm();
      x *= std::sqrt(double(dim)) / (norm > 0 ? norm : 1.0);
      break;
    }
  }
  return x;
}

void refresh_spectral_fields(GroundTruthModel& model) {
  const auto& v = model.v_star;
  const Eigen::Index k = v.cols();
  model.gamma_head = v.rowwise().norm().maxCoeff();
  // Singular values of V/sqrt(n) from the k x k Gram matrix.
  const Eigen::MatrixXd gram = v.transpose() * v / double(v.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();
  model.sigma_max_star = std::sqrt(std::max(0.0, ev(k - 1)));
  model.sigma_min_star = std::sqrt(std::max(0.0, ev(0)));
  if (!(model.sigma_min_star > 1e-12 * std::max(1.0, model.sigma_max_star)))
    throw Error(ErrorCode::RankDeficient, "head matrix V* has rank < k");
}

GroundTruthModel gen_ground_truth(Eigen::Index d, Eigen::Index k, Eigen::Index n, HeadStyle head_style,
                                  double noise_R, std::uint64_t seed) {
  if (k < 1 || k > d || k > n)
    throw Error(ErrorCode::InvalidArgument, "need 1 <= k <= min(d, n)");
  if (!(noise_R >= 0)) throw Error(ErrorCode::InvalidArgument, "noise_R must be >= 0");

  KeyedStream basis_stream(RngKey{seed, 0, 0, Purpose::GroundTruthBasis});
  GroundTruthModel model;
  model.noise_R = noise_R;
  model.u_star = qr_orthonormalize(gaussian_matrix(d, k, 1.0, basis_stream)).q;

  for (int attempt = 0; attempt < 10; ++attempt) {
    KeyedStream head_stream(RngKey{seed, 0, std::uint64_t(attempt), Purpose::GroundTruthHeads});
    model.v_star = gaussian_matrix(n, k, 1.0, head_stream);
    if (head_style == HeadStyle::UnitScaledHeads) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = model.v_star.row(i).norm();
        if (norm > 0) model.v_star.row(i) /= norm;
      }
    }
    try {
      refresh_spectral_fields(model);
      return model;
    } catch (const Error&) {
      // resample
    }
  }
  throw Error(ErrorCode::RankDeficient, "sampled V* rank < k after 10 attempts");
}

Eigen::MatrixXd ClientDataset::batch_features(std::size_t batch) const {
  const auto& idx = batch_schedule.at(batch);
  Eigen::MatrixXd out(Eigen::Index(idx.size()), d());
  for (std::size_t j = 0; j < idx.size(); ++j) out.row(Eigen::Index(j)) = features.row(idx[j]);
  return out;
}

Eigen::VectorXd ClientDataset::batch_labels(std::size_t batch) const {
  const auto& idx = batch_schedule.at(batch);
  Eigen::VectorXd out(Eigen::Index(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(Eigen::Index(j)) = labels(idx[j]);
  return out;
}

std::vector<std::vector<Eigen::Index>> make_batch_schedule(Eigen::Index m, int rounds, Eigen::Index batch_size,
                                                            BatchPool pool, const RngKey& key) {
  if (rounds < 0 || batch_size < 0) throw Error(ErrorCode::InvalidArgument, "negative rounds or batch size");
  const Eigen::Index pool_size = pool == BatchPool::FirstHalf ? m / 2 : m;
  const Eigen::Index needed = 2 * Eigen::Index(rounds) * batch_size;
  if (needed > pool_size)
    throw Error(ErrorCode::BatchBudgetExceeded, "2*T*b = " + std::to_string(needed) + " exceeds the batch pool of " +
                                                    std::to_string(pool_size) + " samples");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(pool_size));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  KeyedStream stream(key);
  // Fisher-Yates with our own bounded draws; std::shuffle is not portable.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[stream.below(i)]);

  std::vector<std::vector<Eigen::Index>> schedule(static_cast<std::size_t>(2 * rounds));
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    auto first = order.begin() + std::ptrdiff_t(t) * batch_size;
    schedule[t].assign(first, first + batch_size);
  }
  return schedule;
}

ClientDataset sample_client_data(const GroundTruthModel& model, const FeatureDistribution& dist, Eigen::Index m,
                                 int rounds, Eigen::Index batch_size, std::int64_t client_id, std::uint64_t seed,
                                 BatchPool pool) {
  if (client_id < 0 || client_id >= model.n())
    throw Error(ErrorCode::InvalidArgument, "client id out of range");
  if (dist.dim != model.d()) throw Error(ErrorCode::DimensionMismatch, "feature dim differs from model dim");
  const auto cid = std::uint64_t(client_id);

  ClientDataset data;
  data.client_id = client_id;
  data.split_index = m / 2;
  data.batch_schedule = make_batch_schedule(m, rounds, batch_size, pool, RngKey{seed, cid, 0, Purpose::BatchShuffle});

  KeyedStream feature_stream(RngKey{seed, cid, 0, Purpose::ClientFeatures});
  KeyedStream noise_stream(RngKey{seed, cid, 0, Purpose::ClientLabelNoise});
  data.features.resize(m, model.d());
  for (Eigen::Index j = 0; j < m; ++j) data.features.row(j) = dist.sample(feature_stream).transpose();
  data.labels = data.features * model.regressor(client_id);
  if (model.noise_R > 0)
    for (Eigen::Index j = 0; j < m; ++j) data.labels(j) += model.noise_R * noise_stream.normal();
  return data;
}

std::vector<ClientDataset> sample_all_clients(const GroundTruthModel& model, const FeatureDistribution& dist,
                                              Eigen::Index m, int rounds, Eigen::Index batch_size,
                                              std::uint64_t seed, BatchPool pool, int threads) {
  std::vector<ClientDataset> out(static_cast<std::size_t>(model.n()));
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i] = sample_client_data(model, dist, m, rounds, batch_size, std::int64_t(i), seed, pool);
  });
  return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd sample_ball(Eigen::Index d, double radius, KeyedStream& stream) {
  Eigen::VectorXd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x(i) = stream.normal();
  const double norm = x.norm();
  const double r = radius * std::pow(stream.uniform(), 1.0 / double(d));
  return x * (r / (norm > 0 ? norm : 1.0));
}

namespace {
constexpr int kMarginAttempts = 100000;
constexpr double kMaxRejectionRate = 0.999;

double sign_label(double score) { return score > 0 ? 1.0 : -1.0; }
}  // namespace

std::pair<Eigen::VectorXd, double> sample_class_point(const ClassModel& model, Eigen::Index user,
                                                      KeyedStream& stream) {
  const Eigen::VectorXd w = model.regressor(user);
  for (int attempt = 0; attempt < kMarginAttempts; ++attempt) {
    Eigen::VectorXd x = sample_ball(w.size(), model.radius, stream);
    const double score = x.dot(w);
    if (model.margin.enforce_margin && std::abs(score) < *model.margin.enforce_margin) continue;
    return {std::move(x), sign_label(score)};
  }
  throw Error(ErrorCode::MarginInfeasible, "no sample met the margin in " + std::to_string(kMarginAttempts) +
                                               " attempts");
}

std::vector<BoundedClassDataset> sample_class_data(const ClassModel& model, Eigen::Index m, std::uint64_t seed) {
  if (!(model.radius > 0)) throw Error(ErrorCode::InvalidArgument, "feature radius must be positive");
  const Eigen::Index d = model.u_star.ambient_dim();
  std::vector<BoundedClassDataset> out;
  out.reserve(static_cast<std::size_t>(model.n()));
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    KeyedStream stream(RngKey{seed, std::uint64_t(i), 0, Purpose::ClassFeatures});
    const Eigen::VectorXd w = model.regressor(i);
    BoundedClassDataset data;
    data.client_id = i;
    data.radius = model.radius;
    data.split_index = m / 2;
    data.features.resize(m, d);
    data.labels.resize(m);
    long attempts = 0;
    for (Eigen::Index j = 0; j < m;) {
      Eigen::VectorXd x = sample_ball(d, model.radius, stream);
      ++attempts;
      const double score = x.dot(w);
      if (model.margin.enforce_margin && std::abs(score) < *model.margin.enforce_margin) {
        if (attempts >= kMarginAttempts && double(j) / double(attempts) < 1.0 - kMaxRejectionRate)
          throw Error(ErrorCode::MarginInfeasible,
                      "margin rejection rate above 99.9% for user " + std::to_string(i));
        continue;
      }
      data.features.row(j) = x.transpose();
      data.labels(j) = sign_label(score);
      ++j;
    }
    out.push_back(std::move(data));
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_client_csv(const std::filesystem::path& path, const Eigen::MatrixXd& features,
                      const Eigen::VectorXd& labels) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
  for (Eigen::Index c = 0; c < features.cols(); ++c) os << "x_" << (c + 1) << ',';
  os << "y\n";
  char buf[32];
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", features(r, c));
      os << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", labels(r));
    os << buf << '\n';
  }
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> read_client_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  const auto cols = std::count(line.begin(), line.end(), ',');
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (std::ssize(row) != cols + 1) throw Error(ErrorCode::Io, "ragged row in " + path.string());
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd x(Eigen::Index(rows.size()), cols);
  Eigen::VectorXd y(Eigen::Index(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) x(Eigen::Index(r), c) = rows[r][std::size_t(c)];
    y(Eigen::Index(r)) = rows[r].back();
  }
  return {x, y};
}

}  // namespace dpfedrep
