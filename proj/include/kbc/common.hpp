#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace kbc {

// Base error for everything the library throws on contract violations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All stochastic components draw from this engine so that a seed fully
// determines a run.
using Rng = std::mt19937_64;

// Derives an independent, reproducible sub-seed for a named component.
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& component) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace kbc
