#pragma once

// Shared primitives: error types, 3-vectors, deterministic RNG streams,
// and a bounded worker pool for data-parallel voxel loops.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vasq {

// Library version, recorded in every run manifest.
inline constexpr const char* kVersion = "0.1.0";

// Precondition / input-validation failure. The CLI maps this to exit code 1;
// every other exception maps to exit code 2.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    if (n == 0) throw validation_error("cannot normalize zero vector");
    return *this / n;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

using Index3 = std::array<int, 3>;

// --- deterministic RNG ------------------------------------------------------

// SplitMix64: tiny counter-friendly generator. Used wherever a per-element
// stream is needed (e.g. one stream per voxel) so results are independent of
// iteration order and thread count. Satisfies UniformRandomBitGenerator.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ull; }

  result_type operator()() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

// Mixes a base seed with a stream index (e.g. voxel linear index) into an
// independent-looking 64-bit stream seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (stream + 0x9E3779B97F4A7C15ull) * 0xD1B54A32D192ED03ull);
  return g();
}

// --- worker pool ------------------------------------------------------------

// Thread budget: VASQ_THREADS if set (≥1), else hardware concurrency.
inline unsigned thread_budget() {
  static const unsigned n = [] {
    if (const char* env = std::getenv("VASQ_THREADS")) {
      long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1u;
  }();
  return n;
}

// Runs fn(begin, end) over a partition of [0, n). Deterministic outputs are
// the caller's responsibility (callers write disjoint ranges). Exceptions
// from workers are rethrown on the calling thread.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  unsigned workers = thread_budget();
  if (workers <= 1 || n < 4096) {
    fn(0, n);
    return;
  }
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    if (lo >= n) break;
    std::size_t hi = std::min(n, lo + chunk);
    pool.emplace_back([&, lo, hi, w] {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vasq
