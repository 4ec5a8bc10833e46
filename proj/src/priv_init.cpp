#include "dpfedrep/priv_init.hpp"

#include <vector>

#include "dpfedrep/fedrep.hpp"
#include "dpfedrep/parallel.hpp"

namespace dpfedrep {

Eigen::MatrixXd client_init_statistic(const ClientDataset& dataset) {
  const Eigen::Index half = dataset.first_half_size();
  if (half < 2) throw Error(ErrorCode::TooFewSamples, "need at least 2 samples in the first half");
  const auto x = dataset.features.topRows(half);
  const auto y = dataset.labels.head(half);
  const Eigen::VectorXd s = x.transpose() * y;
  const Eigen::MatrixXd weighted = x.transpose() * y.cwiseAbs2().asDiagonal() * x;
  const double pairs = double(half) * double(half - 1);
  return (s * s.transpose() - weighted) / pairs;
}

InitResult private_init(std::span<const ClientDataset> clients, Eigen::Index k, double psi_init,
                        const NoiseScale& noise, const RngKey& key, int threads) {
  if (clients.empty()) throw Error(ErrorCode::InvalidArgument, "private_init needs at least one client");
  if (!(psi_init > 0)) throw Error(ErrorCode::InvalidArgument, "psi_init must be positive");
  const Eigen::Index d = clients.front().d();

  std::vector<Eigen::MatrixXd> clipped(clients.size());
  std::vector<char> was_clipped(clients.size(), 0);
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    if (clients[i].d() != d) throw Error(ErrorCode::DimensionMismatch, "clients disagree on feature dim");
    Eigen::MatrixXd z = client_init_statistic(clients[i]);
    was_clipped[i] = clip_active(z, psi_init);
    clipped[i] = clip_frobenius(z, psi_init);
  });

  Eigen::MatrixXd z_hat = pairwise_sum(clipped) / double(clients.size());
  z_hat += gaussian_noise_matrix(d, d, noise, key);
  z_hat = (0.5 * (z_hat + z_hat.transpose())).eval();

  auto eig = top_k_eigvecs(z_hat, k);
  InitResult out{std::move(eig.basis), std::move(eig.values), 0.0, eig.degenerate_gap};
  std::size_t active = 0;
  for (char c : was_clipped) active += c ? 1 : 0;
  out.clip_fraction = double(active) / double(clients.size());
  return out;
}

InitResult private_init(std::span<const ClientDataset> clients, Eigen::Index k, const PrivacySpec& spec,
                        const RngKey& key, int threads) {
  return private_init(clients, k, spec.clip_psi_init, calibrate_init_noise(spec), key, threads);
}

}  // namespace dpfedrep
