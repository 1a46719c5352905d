#include "netcausal/rng.hpp"

#include <array>

namespace netcausal {

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed) {
  std::array<std::uint32_t, 8> words{};
  std::uint64_t state = seed;
  for (std::size_t k = 0; k < words.size(); k += 2) {
    state = splitmix64(state);
    words[k] = static_cast<std::uint32_t>(state);
    words[k + 1] = static_cast<std::uint32_t>(state >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seeded_engine(seed)) {}

Rng Rng::stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t key = splitmix64(seed);
  for (std::uint64_t id : path) key = splitmix64(key ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return Rng(key);
}

Rng Rng::split() { return Rng(splitmix64(engine_())); }

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal() { return normal_(engine_); }

bool Rng::bernoulli(double p) { return uniform() < p; }

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

}  // namespace netcausal
