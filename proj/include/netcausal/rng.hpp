#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace netcausal {

/// SplitMix64 finalizer. Used to derive well-separated seeds for
/// independent streams from a (seed, stream id...) tuple.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. Every stochastic routine in the library takes an
/// explicit `Rng&`; parallel replications each own a stream derived with
/// `Rng::stream(seed, id...)`, which makes results independent of
/// scheduling.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 0);

  /// Stream keyed by a base seed and a path of ids, e.g. (seed, replication,
  /// estimator). Distinct paths give statistically independent streams.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  /// Child stream; advances this stream by one draw.
  Rng split();

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);    // [lo, hi)
  double normal();                         // N(0, 1)
  bool bernoulli(double p);
  std::size_t index(std::size_t n);        // uniform on {0, ..., n-1}

  std::uint64_t seed() const noexcept { return seed_; }
  engine_type& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace netcausal
