#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace genis {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. All randomized operations in the library draw through
// this wrapper so results do not depend on the standard library's
// distribution implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Mixes a base seed with stream tags (tree index, fold index, row index, ...)
// so independent units of work get independent, schedule-invariant streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  h = splitmix64(h ^ splitmix64(a));
  h = splitmix64(h ^ splitmix64(b ^ 0x510e527fade682d1ULL));
  h = splitmix64(h ^ splitmix64(c ^ 0x9b05688c2b3e6c1fULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x2545f4914f6cdd1dULL)) {
    if (state_ == 0) state_ = 0x9e3779b97f4a7c15ULL;
  }

  std::uint64_t next_u64() {
    // xorshift64* with splitmix-initialized state
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // uniform in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) fail("Rng::next_below: n must be positive");
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  double normal() {
    // Box-Muller, one value per call (cached pair member kept out on purpose:
    // call pattern stays reproducible under refactors)
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Marsaglia-Tsang
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = std::max(next_double(), 1e-300);
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

  // k distinct values from [0, n), in draw order
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) fail("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(pool[i], pool[i + next_below(n - i)]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles.
// ---------------------------------------------------------------------------

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const { return rows == 0 || cols == 0; }

  bool operator==(const Matrix& other) const = default;
};

// ---------------------------------------------------------------------------
// Thread budget + deterministic parallel loop.
//
// Work items are independent by construction (per-tree / per-row / per-fold
// seeds are derived from indices), so scheduling never affects results.
// ---------------------------------------------------------------------------

inline std::size_t& max_threads_ref() {
  static std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return n;
}

inline void set_max_threads(std::size_t n) { max_threads_ref() = std::max<std::size_t>(1, n); }
inline std::size_t max_threads() { return max_threads_ref(); }

inline void parallel_for(std::size_t begin, std::size_t end,
                         const std::function<void(std::size_t)>& body) {
  const std::size_t n = end > begin ? end - begin : 0;
  const std::size_t workers = std::min(max_threads(), n);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= end) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Wall-clock timing (monotonic).
// ---------------------------------------------------------------------------

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace genis
