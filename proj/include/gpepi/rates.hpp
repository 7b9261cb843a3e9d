#ifndef GPEPI_RATES_HPP
#define GPEPI_RATES_HPP

// Pairwise infection rates beta(d): the parametric distance kernels and
// the GP-projected log-rate field, both materialised into a dense table.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/gp.hpp"

namespace gpepi {

/// Kernels 1-5 are the published parametric alternatives; `exponential`
/// (b0 exp(-b1 d)) is the form used to generate synthetic outbreaks.
enum class ParametricKernel : int {
  constant = 1,
  inverse_linear = 2,
  inverse_square = 3,
  power = 4,
  scaled_power = 5,
  exponential = 6,
};

struct ParametricRate {
  ParametricKernel kernel = ParametricKernel::constant;
  double b0 = 0.0;
  double b1 = 0.0;
  double b2 = 1.0;

  void validate() const {
    if (!(b0 >= 0.0)) throw InputError("rate coefficient b0 must be >= 0");
    if (kernel == ParametricKernel::power || kernel == ParametricKernel::scaled_power)
      if (!(b1 > 0.0)) throw InputError("rate coefficient b1 must be > 0");
    if (kernel == ParametricKernel::scaled_power && !(b2 > 0.0))
      throw InputError("rate coefficient b2 must be > 0");
    if (kernel == ParametricKernel::exponential && !(b1 >= 0.0))
      throw InputError("exponential decay b1 must be >= 0");
  }

  double operator()(double d) const {
    switch (kernel) {
      case ParametricKernel::constant: return b0;
      case ParametricKernel::inverse_linear: return b0 / (1.0 + d);
      case ParametricKernel::inverse_square: return b0 / (1.0 + d * d);
      case ParametricKernel::power: return b0 / (1.0 + std::pow(d, b1));
      case ParametricKernel::scaled_power: return b0 / (1.0 + std::pow(d / b2, b1));
      case ParametricKernel::exponential: return b0 * std::exp(-b1 * d);
    }
    return 0.0;
  }
};

inline ParametricKernel parametric_kernel_from_id(int id) {
  if (id < 1 || id > 6) throw InputError("unknown rate kernel id " + std::to_string(id));
  return static_cast<ParametricKernel>(id);
}

inline double parametric_rate(int kernel_id, double b0, double b1, double b2, double d) {
  ParametricRate r{parametric_kernel_from_id(kernel_id), b0, b1, b2};
  return r(d);
}

/// Dense symmetric table of beta over farm pairs; the diagonal is zero.
/// Entries of pairs that are never needed may be left at zero.
class RateTable {
 public:
  RateTable() = default;
  explicit RateTable(std::size_t n) : n_(n), beta_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t j, std::size_t k) const { return beta_[j * n_ + k]; }
  void set(std::size_t j, std::size_t k, double v) {
    beta_[j * n_ + k] = v;
    beta_[k * n_ + j] = v;
  }
  std::span<const double> row(std::size_t j) const { return {beta_.data() + j * n_, n_}; }

  template <typename RateFn>
  static RateTable from_function(const DistanceIndex& dist, RateFn&& rate,
                                 std::optional<double> truncation = std::nullopt) {
    RateTable t(dist.size());
    for (std::size_t j = 0; j < t.n_; ++j)
      for (std::size_t k = j + 1; k < t.n_; ++k) {
        double d = dist(j, k);
        t.set(j, k, (truncation && d > *truncation) ? 0.0 : rate(d));
      }
    return t;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> beta_;
};

/// Farm pairs whose rate matters, mapped onto their distinct distances so a
/// projected GP field is evaluated once per distance.
class PairDistances {
 public:
  PairDistances() = default;

  /// Pairs (j < k) with involved[j] or involved[k]. Pairs further apart
  /// than `truncation` are dropped (their rate is zero).
  PairDistances(const DistanceIndex& dist, const std::vector<bool>& involved,
                std::optional<double> truncation = std::nullopt)
      : n_(dist.size()) {
    std::vector<double> raw;
    for (std::size_t j = 0; j < n_; ++j)
      for (std::size_t k = j + 1; k < n_; ++k) {
        if (!involved[j] && !involved[k]) continue;
        double d = dist(j, k);
        if (truncation && d > *truncation) continue;
        first_.push_back(static_cast<std::uint32_t>(j));
        second_.push_back(static_cast<std::uint32_t>(k));
        raw.push_back(d);
      }
    unique_ = raw;
    std::sort(unique_.begin(), unique_.end());
    unique_.erase(std::unique(unique_.begin(), unique_.end()), unique_.end());
    slot_.resize(raw.size());
    for (std::size_t p = 0; p < raw.size(); ++p)
      slot_[p] = static_cast<std::uint32_t>(
          std::lower_bound(unique_.begin(), unique_.end(), raw[p]) - unique_.begin());
  }

  static PairDistances all(const DistanceIndex& dist, std::optional<double> truncation = std::nullopt) {
    return PairDistances(dist, std::vector<bool>(dist.size(), true), truncation);
  }

  std::size_t farm_count() const { return n_; }
  std::size_t pair_count() const { return first_.size(); }
  const std::vector<double>& unique_distances() const { return unique_; }

  /// beta = exp(log_rate[slot]) for every tracked pair.
  void fill(const Eigen::VectorXd& log_rate, RateTable& out) const {
    if (out.size() != n_) out = RateTable(n_);
    for (std::size_t p = 0; p < first_.size(); ++p)
      out.set(first_[p], second_[p], std::exp(log_rate[slot_[p]]));
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint32_t> first_, second_, slot_;
  std::vector<double> unique_;
};

/// Rate table for a GP grid field: project onto the tracked distances and
/// exponentiate.
inline RateTable gp_rate_table(const PairDistances& pairs, const Projector& projector,
                               const Eigen::VectorXd& g_bar) {
  RateTable t(pairs.farm_count());
  pairs.fill(projector.project(g_bar), t);
  return t;
}

}  // namespace gpepi

#endif  // GPEPI_RATES_HPP
