#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace wsdec {

// Stateless 64-bit mixer used to derive independent seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

// FNV-1a over bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// Seeded generator with portable transforms: the standard distributions are
// implementation-defined, these are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace wsdec
