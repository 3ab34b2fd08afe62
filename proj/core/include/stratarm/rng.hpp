#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "stratarm/data.hpp"

namespace stratarm {

// Seedable generator with fully specified output. std::mt19937_64's sequence
// is fixed by the standard; the distribution transforms below are written out
// so draws do not depend on the standard library in use.
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64-splitmix/v1";

  explicit Rng(std::uint64_t seed);

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer on [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double prob) { return uniform() < prob; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // `count` distinct positions out of [0, size), uniformly over subsets.
  std::vector<Index> choose(Index size, Index count);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Seed for stream `stream` of a master seed; distinct streams are decorrelated.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace stratarm
