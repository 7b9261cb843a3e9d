#ifndef GPEPI_GP_HPP
#define GPEPI_GP_HPP

// Squared-exponential Gaussian-process machinery over the distance domain.
//
// The prior lives on a pseudo grid of distances. Values at any other set of
// distances are obtained through the conditional-mean projector
//   f = K(d, grid) K(grid)^-1 f_grid,
// which for this kernel does not depend on the variance scale alpha. The
// projector is therefore stored at unit scale and reused across alpha.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "gpepi/core.hpp"

namespace gpepi {

struct KernelParams {
  double alpha = 1.0;         // standard-deviation scale of the log-rate
  double length_scale = 1.0;  // km

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("kernel alpha must be > 0");
    if (!(length_scale > 0.0) || !std::isfinite(length_scale))
      throw InputError("kernel length scale must be > 0");
  }
};

/// alpha^2 exp(-(a - b)^2 / l^2)
inline double sq_exp_kernel(double a, double b, const KernelParams& p) {
  double r = (a - b) / p.length_scale;
  return p.alpha * p.alpha * std::exp(-r * r);
}

/// Diagonal inflation schedule, relative to alpha^2. The first attempt
/// uses no jitter at all.
struct JitterPolicy {
  double start = 1e-10;
  double factor = 10.0;
  double cap = 1e-4;
  // A factor whose smallest squared pivot falls below this (relative to
  // alpha^2) is treated as failed: whitening through it loses too many digits.
  double min_pivot = 1e-7;
};

/// Kernel matrix over a distance vector together with its lower Cholesky
/// factor. Immutable once built.
class CovarianceMatrix {
 public:
  static CovarianceMatrix build(std::span<const double> distances, const KernelParams& params,
                                const JitterPolicy& policy = {}) {
    params.validate();
    const auto n = static_cast<Eigen::Index>(distances.size());
    if (n == 0) throw InputError("covariance over an empty distance vector");
    for (double d : distances)
      if (!std::isfinite(d)) throw InputError("covariance distances must be finite");

    CovarianceMatrix out;
    out.params_ = params;
    out.distances_.assign(distances.begin(), distances.end());
    Eigen::MatrixXd base(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        base(i, j) = base(j, i) = sq_exp_kernel(distances[i], distances[j], params);

    const double scale = params.alpha * params.alpha;
    double rel = 0.0;
    for (;;) {
      out.attempted_.push_back(rel * scale);
      out.matrix_ = base;
      if (rel > 0.0) out.matrix_.diagonal().array() += rel * scale;
      Eigen::LLT<Eigen::MatrixXd> llt(out.matrix_);
      if (llt.info() == Eigen::Success &&
          (rel >= policy.cap || llt.matrixLLT().diagonal().array().square().minCoeff() >= policy.min_pivot * scale)) {
        out.lower_ = llt.matrixL();
        out.jitter_ = rel * scale;
        return out;
      }
      rel = rel == 0.0 ? policy.start : rel * policy.factor;
      if (rel > policy.cap * (1.0 + 1e-9)) break;
    }
    std::ostringstream msg;
    msg << "covariance factorization failed (alpha=" << params.alpha
        << ", l=" << params.length_scale << ", n=" << n << "); jitter tried:";
    for (double j : out.attempted_) msg << ' ' << j;
    throw NumericalError(msg.str());
  }

  Eigen::Index size() const { return matrix_.rows(); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const Eigen::MatrixXd& lower() const { return lower_; }
  double jitter() const { return jitter_; }
  const std::vector<double>& attempted_jitter() const { return attempted_; }
  const KernelParams& params() const { return params_; }
  const std::vector<double>& distances() const { return distances_; }

  /// L^-1 v
  Eigen::VectorXd whiten(const Eigen::VectorXd& v) const {
    return lower_.triangularView<Eigen::Lower>().solve(v);
  }

  /// Sigma^-1 v through the stored factor.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    Eigen::VectorXd y = whiten(v);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  double log_determinant() const { return 2.0 * lower_.diagonal().array().log().sum(); }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd lower_;
  double jitter_ = 0.0;
  std::vector<double> attempted_;
  KernelParams params_;
  std::vector<double> distances_;
};

/// Zero-mean draw with covariance Sigma: L z with z standard normal.
inline Eigen::VectorXd sample_prior(const CovarianceMatrix& cov, Rng& rng) {
  Eigen::VectorXd z(cov.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
  return cov.lower() * z;
}

/// Multivariate normal log-density N(values; 0, Sigma).
inline double log_density(const Eigen::VectorXd& values, const CovarianceMatrix& cov) {
  if (values.size() != cov.size())
    throw InputError("log_density: length " + std::to_string(values.size()) +
                     " does not match covariance size " + std::to_string(cov.size()));
  const double n = static_cast<double>(values.size());
  Eigen::VectorXd w = cov.whiten(values);
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * cov.log_determinant() -
         0.5 * w.squaredNorm();
}

/// Linear map from grid values to values at arbitrary target distances.
/// Kept in factored form: a unit-scale cross-kernel matrix and the
/// unit-scale grid factor. The jitter of the grid covariance is treated as
/// a nugget of the kernel, so a target that coincides with a knot carries
/// the same nugget and is reproduced exactly.
class Projector {
 public:
  Projector() = default;

  static Projector build(std::span<const double> targets, const CovarianceMatrix& grid_cov) {
    Projector p;
    const double scale = grid_cov.params().alpha * grid_cov.params().alpha;
    const double nugget = grid_cov.jitter() / scale;
    const KernelParams unit{1.0, grid_cov.params().length_scale};
    const auto& knots = grid_cov.distances();
    const auto m = static_cast<Eigen::Index>(targets.size());
    const auto k = static_cast<Eigen::Index>(knots.size());
    p.cross_.resize(m, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index r = 0; r < m; ++r) {
        double v = sq_exp_kernel(targets[r], knots[c], unit);
        if (targets[r] == knots[c]) v += nugget;
        p.cross_(r, c) = v;
      }
    }
    p.grid_lower_ = grid_cov.lower() / grid_cov.params().alpha;
    p.length_scale_ = grid_cov.params().length_scale;
    p.knots_ = knots;
    return p;
  }

  Eigen::Index rows() const { return cross_.rows(); }
  Eigen::Index cols() const { return cross_.cols(); }
  double length_scale() const { return length_scale_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Grid-space weights K(grid)^-1 g_bar at unit scale.
  Eigen::VectorXd weights(const Eigen::VectorXd& g_bar) const {
    if (g_bar.size() != cols()) throw InputError("projector: grid vector has wrong length");
    Eigen::VectorXd y = grid_lower_.triangularView<Eigen::Lower>().solve(g_bar);
    return grid_lower_.transpose().triangularView<Eigen::Upper>().solve(y);
  }

  void project_into(const Eigen::VectorXd& g_bar, Eigen::VectorXd& out) const {
    out.noalias() = cross_ * weights(g_bar);
  }

  Eigen::VectorXd project(const Eigen::VectorXd& g_bar) const {
    Eigen::VectorXd out(rows());
    project_into(g_bar, out);
    return out;
  }

  /// Explicit |targets| x |grid| matrix K(d, grid) K(grid)^-1.
  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd t = grid_lower_.triangularView<Eigen::Lower>().solve(cross_.transpose());
    Eigen::MatrixXd s = grid_lower_.transpose().triangularView<Eigen::Upper>().solve(t);
    return s.transpose();
  }

 private:
  Eigen::MatrixXd cross_;
  Eigen::MatrixXd grid_lower_;
  double length_scale_ = 0.0;
  std::vector<double> knots_;
};

inline Projector build_projector(std::span<const double> targets, std::span<const double> grid,
                                 const KernelParams& params, const JitterPolicy& policy = {}) {
  return Projector::build(targets, CovarianceMatrix::build(grid, params, policy));
}

/// g' = sqrt(1 - delta^2) g + delta nu, nu ~ GP(0, Sigma).
inline Eigen::VectorXd underrelaxed_propose(const Eigen::VectorXd& g_bar, double delta,
                                            const CovarianceMatrix& cov, Rng& rng) {
  if (!(delta > 0.0 && delta <= 1.0))
    throw InputError("underrelaxation delta must lie in (0, 1]");
  if (g_bar.size() != cov.size()) throw InputError("underrelaxed_propose: length mismatch");
  Eigen::VectorXd nu = sample_prior(cov, rng);
  return std::sqrt(1.0 - delta * delta) * g_bar + delta * nu;
}

struct LogRatioPair {
  double lhs = 0.0;  // log q(g | g') - log q(g' | g)
  double rhs = 0.0;  // log N(g; 0, Sigma) - log N(g'; 0, Sigma)
};

/// Both sides of the identity that lets the underrelaxed g-update accept on
/// the likelihood ratio alone. The proposal densities are evaluated as
/// N(x; sqrt(1 - delta^2) y, delta^2 Sigma).
inline LogRatioPair proposal_log_ratio_identity(const Eigen::VectorXd& g, const Eigen::VectorXd& g_prime,
                                                double delta, const CovarianceMatrix& cov) {
  if (g.size() != g_prime.size() || g.size() != cov.size())
    throw InputError("proposal_log_ratio_identity: length mismatch");
  if (!(delta > 0.0 && delta <= 1.0)) throw InputError("delta must lie in (0, 1]");
  const double n = static_cast<double>(g.size());
  const double shrink = std::sqrt(1.0 - delta * delta);
  auto log_q = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& given) {
    Eigen::VectorXd w = cov.whiten(x - shrink * given);
    return -0.5 * n * std::log(2.0 * std::numbers::pi) - n * std::log(delta) -
           0.5 * cov.log_determinant() - 0.5 * w.squaredNorm() / (delta * delta);
  };
  return {log_q(g, g_prime) - log_q(g_prime, g), log_density(g, cov) - log_density(g_prime, cov)};
}

}  // namespace gpepi

#endif  // GPEPI_GP_HPP
