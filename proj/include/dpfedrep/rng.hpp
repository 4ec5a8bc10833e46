#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace dpfedrep {

/// What a random stream is used for. Part of the substream key so that two
/// consumers in the same round never share draws.
enum class Purpose : std::uint32_t {
  GroundTruthBasis = 1,
  GroundTruthHeads = 2,
  ClientFeatures = 3,
  ClientLabelNoise = 4,
  BatchShuffle = 5,
  ServerNoise = 6,
  InitNoise = 7,
  RandomInit = 8,
  JlSketch = 9,
  ExpMechanism = 10,
  CoverNet = 11,
  MonteCarlo = 12,
  ClassFeatures = 13,
  Generic = 99,
};

/// Substream key. Every random draw in the library is a pure function of
/// (seed, client, round, purpose) and a position counter.
struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t client = 0;
  std::uint64_t round = 0;
  Purpose purpose = Purpose::Generic;

  RngKey with_client(std::uint64_t c) const { return {seed, c, round, purpose}; }
  RngKey with_round(std::uint64_t r) const { return {seed, client, r, purpose}; }
  RngKey with_purpose(Purpose p) const { return {seed, client, round, p}; }
};

/// Counter-based generator: output i is a keyed SplitMix64 finalizer of
/// (key digest + i). Streams never depend on scheduling order.
class KeyedStream {
 public:
  explicit KeyedStream(const RngKey& key);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  bool coin() { return (next_u64() >> 63) != 0; }

  /// UniformRandomBitGenerator surface, for std::shuffle and friends.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next_u64(); }

 private:
  std::uint64_t digest_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, KeyedStream& stream);

}  // namespace dpfedrep
