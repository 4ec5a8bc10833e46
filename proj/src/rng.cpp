#include "dpfedrep/rng.hpp"

#include <cmath>
#include <numbers>

namespace dpfedrep {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t absorb(std::uint64_t state, std::uint64_t word) {
  return mix64(state ^ (word + kGolden + (state << 6) + (state >> 2)));
}

}  // namespace

KeyedStream::KeyedStream(const RngKey& key) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  h = absorb(h, key.seed);
  h = absorb(h, key.client);
  h = absorb(h, key.round);
  h = absorb(h, static_cast<std::uint64_t>(key.purpose));
  digest_ = h;
}

std::uint64_t KeyedStream::next_u64() {
  ++counter_;
  return mix64(digest_ + counter_ * kGolden);
}

double KeyedStream::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double KeyedStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t KeyedStream::below(std::uint64_t bound) {
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, KeyedStream& stream) {
  Eigen::MatrixXd out(rows, cols);
  // Row-major fill order is part of the determinism contract.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = stddev * stream.normal();
  return out;
}

}  // namespace dpfedrep
