#ifndef GPEPI_CORE_HPP
#define GPEPI_CORE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace gpepi {

/// Time value used for "never happened" (infection or culling). All
/// comparisons and minima treat it as +infinity.
inline constexpr double kNever = std::numeric_limits<double>::infinity();

inline bool happened(double t) { return t < kNever; }

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using FarmId = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input files, configs or arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Factorization or other numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An augmented epidemic state that violates its structural invariants.
class StateError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

/// Independent stream for (master seed, index...). Used for replicates,
/// chains and predictive draws so results do not depend on scheduling.
template <typename... Ix>
Rng make_stream(std::uint64_t master, Ix... index) {
  std::vector<std::uint32_t> words;
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  (push(static_cast<std::uint64_t>(index)), ...);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double std_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Gamma draw with shape/rate parameterisation.
inline double gamma_draw(double shape, double rate, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double exponential_draw(double rate, Rng& rng) {
  return std::exponential_distribution<double>(rate)(rng);
}

inline std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Log-space Metropolis-Hastings decision. A ratio of -inf never accepts.
inline bool mh_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  if (log_ratio == kNegInf) return false;
  return std::log(uniform01(rng)) < log_ratio;
}

inline unsigned default_workers() {
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work items are
/// claimed dynamically; callers write results into slot i so the outcome
/// is independent of scheduling. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned workers,
                         const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  unsigned count = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  for (unsigned w = 0; w < count; ++w) pool.emplace_back(body);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

/// Warning sink; the CLI routes it to stderr, tests usually ignore it.
using WarningSink = std::function<void(std::string_view)>;

}  // namespace gpepi

#endif  // GPEPI_CORE_HPP
