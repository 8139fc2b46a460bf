#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cnav {

std::uint64_t splitmix64(std::uint64_t x);

// Seed for a named sub-stream of the master seed. Every component draws from
// its own stream ("scene-gen", "episode-gen", "init", "batching", "kmeans", ...)
// so that re-seeding one never perturbs the others.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                             std::uint64_t index = 0);

// Thin wrapper over mt19937_64 with distribution code written out explicitly,
// so results do not depend on the standard library's distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0)
      : engine_(substream_seed(master, stream, index)) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  std::size_t below(std::size_t n);          // [0, n)
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cnav
