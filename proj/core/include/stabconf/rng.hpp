#pragma once

#include <cstdint>
#include <random>

namespace stabconf::rng {

// Counter-based stream derivation: every (base seed, trial, role) tuple maps
// to one independent engine, so results do not depend on which worker thread
// runs which trial.

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class Role : std::uint64_t {
  TrainData = 1,
  TestData = 2,
  AuxData = 3,
  Directions = 4,
  Reference = 5,
  Experiment = 6,
};

inline constexpr std::uint64_t derive(std::uint64_t base_seed,
                                      std::uint64_t trial,
                                      Role role) {
  std::uint64_t s = splitmix64(base_seed);
  s = splitmix64(s ^ trial);
  return splitmix64(s ^ static_cast<std::uint64_t>(role));
}

inline std::mt19937_64 engine(std::uint64_t derived_seed) {
  return std::mt19937_64(splitmix64(derived_seed));
}

inline std::mt19937_64 engine(std::uint64_t base_seed, std::uint64_t trial,
                              Role role) {
  return engine(derive(base_seed, trial, role));
}

}  // namespace stabconf::rng
