#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hk {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

// Invalid arguments, malformed files, mismatched spaces.
class invalid_input : public std::runtime_error {
public:
  explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

// A dual candidate that violates its feasibility constraints.
class infeasible_error : public std::runtime_error {
public:
  explicit infeasible_error(const std::string& what) : std::runtime_error(what) {}
};

// Tuple budget exceeded in the multimarginal solver (CLI maps this to exit 3).
class budget_exceeded : public std::runtime_error {
public:
  explicit budget_exceeded(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic RNG. Uniform doubles are produced from the raw 64-bit stream
// directly so results do not depend on the standard library's distribution
// implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

private:
  std::uint64_t state_;
};

inline unsigned thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("HK_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && static_cast<unsigned>(v) < hw) hw = static_cast<unsigned>(v);
  }
  return hw;
}

// Static slicing over [0, n); bodies must write disjoint slots.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  unsigned threads = thread_budget();
  if (threads <= 1 || n < 1024) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = lo + chunk < n ? lo + chunk : n;
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace hk
