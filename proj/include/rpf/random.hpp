#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace rpf {

// Seeded, stream-indexed random source.
//
// Two sources built from the same (seed, stream) pair produce the same draw
// sequence. Child streams obtained through derive() are statistically
// independent of their parent and of each other, which lets per-particle work
// run in any order without changing results.
//
// The engine is xoshiro256** seeded through splitmix64; it satisfies
// UniformRandomBitGenerator so it can drive <random> distributions.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Independent source for a sub-stream (e.g. a particle index or timestep).
  RandomSource derive(std::uint64_t child) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  // Uniform on [0, 1).
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  // Gaussian truncated below at `lower` by rejection; falls back to `lower`
  // if the acceptance region is practically unreachable.
  double truncated_normal(double mean, double stddev, double lower = 0.0);
  std::uint64_t binomial(std::uint64_t trials, double p);
  bool bernoulli(double p);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::array<std::uint64_t, 4> state_{};
};

// Named top-level streams used by the experiment pipeline.
namespace streams {
inline constexpr std::uint64_t truth = 1;
inline constexpr std::uint64_t loop_noise = 2;
inline constexpr std::uint64_t gnss = 3;
inline constexpr std::uint64_t faults = 4;
inline constexpr std::uint64_t filter = 5;
}  // namespace streams

}  // namespace rpf
