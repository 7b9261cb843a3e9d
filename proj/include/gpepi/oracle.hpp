#ifndef GPEPI_ORACLE_HPP
#define GPEPI_ORACLE_HPP

// Slow reference implementations used by the test suites and the `validate`
// command. Nothing here shares code with the optimised likelihood: the
// sets are enumerated explicitly and the incomplete gamma function is
// computed locally.

#include <cmath>
#include <limits>
#include <vector>

#include "gpepi/core.hpp"

namespace gpepi::oracle {

enum class Set { A, B, C, D };

/// Small explicit outbreak: per-farm set, times and a full beta matrix.
struct Instance {
  std::vector<Set> set;
  std::vector<double> i;  // infection times (meaningless for A and D)
  std::vector<double> r;  // removal times (meaningless for A)
  std::vector<std::vector<double>> beta;
  std::size_t omega = 0;
  double shape = 4.0;
  double rate = 0.8;

  std::size_t size() const { return set.size(); }
  bool infected(std::size_t j) const { return set[j] == Set::B || set[j] == Set::C; }
};

/// Regularised upper incomplete gamma Q(a, x): series below a + 1,
/// Lentz continued fraction above.
inline double upper_gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  const double log_front = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term, ap = a;
    for (int n = 0; n < 10000; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-17) break;
    }
    return 1.0 - sum * std::exp(log_front);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int n = 1; n < 10000; ++n) {
    double an = -n * (n - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(log_front) * h;
}

inline double log_gamma_density(double x, double shape, double rate) {
  return shape * std::log(rate) + (shape - 1.0) * std::log(x) - rate * x - std::lgamma(shape);
}

/// Direct transcription of the augmented likelihood with explicit set
/// branching. Returns -inf for zero-density states.
inline double naive_log_likelihood(const Instance& s) {
  const std::size_t n = s.size();
  for (std::size_t j = 0; j < n; ++j)
    if (s.infected(j) && !(s.i[j] < s.r[j])) return -std::numeric_limits<double>::infinity();

  double psi = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!s.infected(j)) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      double span = 0.0;
      switch (s.set[k]) {
        case Set::A:
          span = s.r[j] - s.i[j];
          break;
        case Set::B:
        case Set::C:
          span = std::min(s.r[j], s.i[k]) - std::min(s.i[j], s.i[k]);
          break;
        case Set::D:
          span = std::min(s.r[j], s.r[k]) - std::min(s.i[j], s.r[k]);
          break;
      }
      psi += s.beta[j][k] * span;
    }
  }

  double log_phi = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!s.infected(j) || j == s.omega) continue;
    double phi = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != j && s.infected(k) && s.i[k] < s.i[j] && s.i[j] < s.r[k]) phi += s.beta[k][j];
    if (phi <= 0.0) return -std::numeric_limits<double>::infinity();
    log_phi += std::log(phi);
  }

  double removal = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (s.set[j] == Set::B) removal += log_gamma_density(s.r[j] - s.i[j], s.shape, s.rate);
    if (s.set[j] == Set::C) removal += std::log(upper_gamma_q(s.shape, s.rate * (s.r[j] - s.i[j])));
  }
  return -psi + log_phi + removal;
}

/// Random valid instance with at most `max_farms` farms and at most
/// `max_infected` infected ones. With probability `scramble` the
/// infection times ignore the transmission tree, which often produces
/// zero-density states.
inline Instance random_instance(Rng& rng, std::size_t max_farms = 6, std::size_t max_infected = 4,
                                double scramble = 0.2) {
  Instance s;
  const std::size_t n = 2 + uniform_index(max_farms - 1, rng);
  const std::size_t n_inf = 1 + uniform_index(std::min(max_infected, n), rng);
  s.set.assign(n, Set::A);
  s.i.assign(n, std::numeric_limits<double>::infinity());
  s.r.assign(n, std::numeric_limits<double>::infinity());
  s.shape = 0.5 + 4.0 * uniform01(rng);
  s.rate = 0.2 + 1.5 * uniform01(rng);
  s.beta.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = j + 1; k < n; ++k)
      s.beta[j][k] = s.beta[k][j] = std::exp(-1.0 + std::normal_distribution<double>(0.0, 1.0)(rng));

  const bool scrambled = uniform01(rng) < scramble;
  s.omega = 0;
  s.i[0] = -5.0 * uniform01(rng);
  s.r[0] = s.i[0] + 0.5 + 6.0 * uniform01(rng);
  for (std::size_t j = 1; j < n_inf; ++j) {
    if (scrambled) {
      s.i[j] = s.i[0] + 10.0 * uniform01(rng);
    } else {
      std::size_t parent = uniform_index(j, rng);
      s.i[j] = s.i[parent] + (s.r[parent] - s.i[parent]) * uniform01(rng);
    }
    s.r[j] = s.i[j] + 0.5 + 6.0 * uniform01(rng);
  }
  for (std::size_t j = 0; j < n_inf; ++j) s.set[j] = (j == 0 || uniform01(rng) < 0.6) ? Set::B : Set::C;
  for (std::size_t j = n_inf; j < n; ++j) {
    if (uniform01(rng) < 0.5) {
      s.set[j] = Set::D;
      s.r[j] = s.i[0] + 12.0 * uniform01(rng);
    }
  }
  return s;
}

}  // namespace gpepi::oracle

#endif  // GPEPI_ORACLE_HPP
