#include "rpf/random.hpp"

#include <random>

namespace rpf {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t mix_stream(std::uint64_t parent, std::uint64_t child) {
  std::uint64_t x = parent * 0xD1B54A32D192ED03ULL + child;
  std::uint64_t a = splitmix64(x);
  std::uint64_t b = splitmix64(x);
  return a ^ rotl(b, 17);
}

}  // namespace

RandomSource::RandomSource(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::uint64_t x = seed ^ rotl(stream * 0x9E3779B97F4A7C15ULL, 29);
  for (auto& s : state_) s = splitmix64(x);
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
}

RandomSource RandomSource::derive(std::uint64_t child) const {
  return RandomSource(seed_, mix_stream(stream_, child));
}

RandomSource::result_type RandomSource::operator()() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RandomSource::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double RandomSource::normal(double mean, double stddev) {
  if (stddev <= 0.0) return mean;
  std::normal_distribution<double> dist(mean, stddev);
  return dist(*this);
}

double RandomSource::truncated_normal(double mean, double stddev, double lower) {
  if (stddev <= 0.0) return mean < lower ? lower : mean;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double v = normal(mean, stddev);
    if (v >= lower) return v;
  }
  return lower;
}

std::uint64_t RandomSource::binomial(std::uint64_t trials, double p) {
  if (trials == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<std::uint64_t> dist(trials, p);
  return dist(*this);
}

bool RandomSource::bernoulli(double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return uniform() < p;
}

}  // namespace rpf
