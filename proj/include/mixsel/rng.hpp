#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace mixsel {

// Counter-based generator (Philox 4x32-10). A stream is fully determined by
// (seed, stream_id): the seed keys the permutation, the stream id occupies the
// high counter words, and draws advance the low counter words. Output is
// therefore bit-identical across platforms and streams never overlap.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();

  // Uniform on the open interval (0,1).
  double uniform();

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  // Gamma(shape, rate) by Marsaglia-Tsang, boosted for shape < 1.
  double gamma(double shape, double rate);

  double chi_square(double dof) { return gamma(0.5 * dof, 0.5); }

  Eigen::VectorXd normal_vector(int n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint32_t key_[2];
  std::uint64_t block_ = 0;
  std::uint32_t buf_[4];
  int buf_pos_ = 4;  // consumed
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace mixsel
