#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "gpepi/gp.hpp"

using namespace gpepi;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

// Dense reference in extended precision: explicit inverse and determinant,
// no Cholesky.
double naive_log_density(const Eigen::VectorXd& x, const Eigen::MatrixXd& S) {
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  MatL s = S.cast<long double>();
  VecL v = x.cast<long double>();
  Eigen::FullPivLU<MatL> lu(s);
  const long double n = static_cast<long double>(x.size());
  const long double quad = v.dot(lu.inverse() * v);
  return static_cast<double>(-0.5L * n * std::log(2.0L * std::numbers::pi_v<long double>) -
                             0.5L * std::log(lu.determinant()) - 0.5L * quad);
}

}  // namespace

TEST(Kernel, ZeroSeparationIsAlphaSquared) {
  EXPECT_DOUBLE_EQ(sq_exp_kernel(2.5, 2.5, {3.0, 1.0}), 9.0);
}

TEST(Kernel, AtOneLengthScale) {
  const double k = sq_exp_kernel(0.0, 3.0, {9.0, 3.0});
  EXPECT_NEAR(k, 81.0 * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(k, 29.79823, 1e-5);
}

TEST(Kernel, DecaysMonotonicallyToZero) {
  KernelParams p{2.0, 1.5};
  double prev = sq_exp_kernel(0.0, 0.0, p);
  for (double d = 0.25; d < 30.0; d += 0.25) {
    double k = sq_exp_kernel(0.0, d, p);
    EXPECT_LT(k, prev);
    prev = k;
  }
  EXPECT_LT(prev, 1e-100);
}

TEST(Kernel, SymmetricAndBounded) {
  Rng rng = make_stream(1);
  for (int i = 0; i < 1000; ++i) {
    KernelParams p{0.1 + 10 * uniform01(rng), 0.1 + 10 * uniform01(rng)};
    double a = 20 * uniform01(rng), b = 20 * uniform01(rng);
    double k = sq_exp_kernel(a, b, p);
    EXPECT_EQ(k, sq_exp_kernel(b, a, p));
    EXPECT_LE(k, p.alpha * p.alpha);
    if (std::fabs(a - b) < 5 * p.length_scale) {
      EXPECT_GT(k, 0.0);
    }
  }
}

TEST(KernelParams, RejectsNonPositive) {
  EXPECT_THROW(CovarianceMatrix::build(std::vector<double>{0.0}, {0.0, 1.0}), InputError);
  EXPECT_THROW(CovarianceMatrix::build(std::vector<double>{0.0}, {1.0, -1.0}), InputError);
}

TEST(Covariance, SingleDistance) {
  auto c = CovarianceMatrix::build(std::vector<double>{4.0}, {3.0, 2.0});
  ASSERT_EQ(c.size(), 1);
  EXPECT_DOUBLE_EQ(c.matrix()(0, 0), 9.0 + c.jitter());
}

TEST(Covariance, DuplicateDistancesNeedJitter) {
  auto c = CovarianceMatrix::build(std::vector<double>{0.0, 1.0, 1.0, 2.0}, {1.0, 1.0});
  EXPECT_GT(c.jitter(), 0.0);
  EXPECT_LE(c.jitter(), 1e-4);
  EXPECT_EQ(c.attempted_jitter().front(), 0.0);
}

TEST(Covariance, WellSeparatedNeedsNoJitter) {
  auto c = CovarianceMatrix::build(std::vector<double>{0.0, 5.0, 10.0}, {1.0, 1.0});
  EXPECT_EQ(c.jitter(), 0.0);
}

TEST(Covariance, FailureReportsAttemptedJitter) {
  JitterPolicy policy{1e-30, 10.0, 1e-29};
  try {
    CovarianceMatrix::build(std::vector<double>{1.0, 1.0, 1.0}, {1.0, 1.0}, policy);
    FAIL() << "expected a factorization failure";
  } catch (const NumericalError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("jitter tried: 0 1e-30 1e-29"), std::string::npos) << msg;
  }
}

TEST(Covariance, FineGridFactorisationResidual) {
  const KernelParams p{9.0, 3.0};
  auto c = CovarianceMatrix::build(linspace(0.0, 60.0, 256), p);
  Eigen::MatrixXd r = c.lower() * c.lower().transpose() - c.matrix();
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-8 * p.alpha * p.alpha);
  // the stored matrix is the kernel plus the recorded diagonal jitter only
  for (Eigen::Index i = 0; i < c.size(); ++i)
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      double k = sq_exp_kernel(c.distances()[i], c.distances()[j], p) + (i == j ? c.jitter() : 0.0);
      ASSERT_DOUBLE_EQ(c.matrix()(i, j), k);
    }
}

TEST(SamplePrior, MeanAndCovarianceMatchKernel) {
  const KernelParams p{2.0, 1.5};
  auto c = CovarianceMatrix::build(std::vector<double>{0.0, 1.0, 3.0}, p);
  Rng rng = make_stream(7);
  const int n = 10000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd g = sample_prior(c, rng);
    sum += g;
    outer += g * g.transpose();
  }
  Eigen::Vector3d mean = sum / n;
  Eigen::Matrix3d cov = outer / n - mean * mean.transpose();
  for (int i = 0; i < 3; ++i) EXPECT_LT(std::fabs(mean[i]), 4.0 * p.alpha / std::sqrt(n));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double kij = c.matrix()(i, j);
      const double se = std::sqrt((c.matrix()(i, i) * c.matrix()(j, j) + kij * kij) / n);
      EXPECT_NEAR(cov(i, j), kij, 5.0 * se) << i << "," << j;
    }
}

TEST(SamplePrior, FixedSeedIsDeterministic) {
  auto c = CovarianceMatrix::build(linspace(0, 10, 8), {1.0, 2.0});
  Rng a = make_stream(5), b = make_stream(5);
  EXPECT_EQ(sample_prior(c, a), sample_prior(c, b));
}

TEST(LogDensity, Scalar) {
  auto c = CovarianceMatrix::build(std::vector<double>{0.0}, {1.7, 1.0});
  const double v = c.matrix()(0, 0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(log_density(x, c), -0.5 * std::log(2 * std::numbers::pi * v), 1e-14);
}

TEST(LogDensity, MatchesDenseReference) {
  Rng rng = make_stream(11);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + uniform_index(10, rng);
    KernelParams p{0.5 + 3 * uniform01(rng), 0.3 + 2 * uniform01(rng)};
    // knots at least half a length scale apart keep the reference inverse accurate
    std::vector<double> d(n);
    for (std::size_t i = 1; i < n; ++i) d[i] = d[i - 1] + p.length_scale * (0.5 + 1.5 * uniform01(rng));
    auto c = CovarianceMatrix::build(d, p);
    Eigen::VectorXd x = sample_prior(c, rng);
    const double a = log_density(x, c);
    EXPECT_NEAR(a, naive_log_density(x, c.matrix()), 1e-9 * std::max(1.0, std::fabs(a)));
    EXPECT_NEAR(a, log_density(-x, c), 1e-12 * std::max(1.0, std::fabs(a)));
  }
}

TEST(LogDensity, LengthMismatchThrows) {
  auto c = CovarianceMatrix::build(std::vector<double>{0.0, 3.0}, {1.0, 1.0});
  EXPECT_THROW(log_density(Eigen::VectorXd::Zero(3), c), InputError);
}

TEST(Projector, SelfProjectionIsIdentity) {
  auto grid = linspace(0.0, 30.0, 31);
  auto proj = build_projector(grid, grid, {9.0, 3.0});
  Eigen::MatrixXd m = proj.matrix();
  EXPECT_LE((m - Eigen::MatrixXd::Identity(31, 31)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Projector, SelfProjectionOfPriorDrawsOnAJitteredGrid) {
  auto grid = linspace(0.0, 30.0, 100);
  auto cov = CovarianceMatrix::build(grid, {9.0, 3.0});
  EXPECT_GT(cov.jitter(), 0.0);
  auto proj = Projector::build(grid, cov);
  Rng rng = make_stream(12);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd g = sample_prior(cov, rng);
    EXPECT_LE((proj.project(g) - g).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Projector, TargetOnKnotReproducesKnotValue) {
  auto grid = linspace(0.0, 20.0, 41);
  auto cov = CovarianceMatrix::build(grid, {9.0, 3.0});
  Rng rng = make_stream(2);
  Eigen::VectorXd g = sample_prior(cov, rng);
  std::vector<double> targets{0.0, 0.25, 7.5, 7.6, 20.0};
  auto out = Projector::build(targets, cov).project(g);
  EXPECT_NEAR(out[0], g[0], 1e-6);
  EXPECT_NEAR(out[2], g[15], 1e-6);
  EXPECT_NEAR(out[4], g[40], 1e-6);
}

TEST(Projector, LongLengthScaleKeepsConstants) {
  auto grid = linspace(0.0, 5.0, 6);
  auto cov = CovarianceMatrix::build(grid, {1.0, 500.0});
  Eigen::VectorXd g = Eigen::VectorXd::Constant(6, -2.5);
  auto out = Projector::build(std::vector<double>{0.3, 1.7, 4.9}, cov).project(g);
  for (Eigen::Index i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], -2.5, 1e-3);
}

TEST(Projector, IndependentOfAlpha) {
  auto grid = linspace(0.0, 12.0, 13);
  std::vector<double> targets{0.1, 2.2, 5.55, 11.9};
  auto a = build_projector(targets, grid, {1.0, 2.0}).matrix();
  auto b = build_projector(targets, grid, {9.0, 2.0}).matrix();
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Projector, AgreesWithExplicitConditionalMean) {
  auto grid = linspace(0.0, 10.0, 6);
  const KernelParams p{2.0, 2.5};
  auto cov = CovarianceMatrix::build(grid, p);
  std::vector<double> targets{0.7, 3.3, 9.1};
  Eigen::MatrixXd cross(3, 6);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c) cross(r, c) = sq_exp_kernel(targets[r], grid[c], p);
  Eigen::MatrixXd ref = cross * cov.matrix().inverse();
  EXPECT_LE((Projector::build(targets, cov).matrix() - ref).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Underrelaxed, DeltaOneIgnoresCurrentValue) {
  auto cov = CovarianceMatrix::build(linspace(0, 10, 5), {1.0, 2.0});
  Rng a = make_stream(4), b = make_stream(4);
  Eigen::VectorXd g1 = Eigen::VectorXd::Constant(5, 3.0), g2 = Eigen::VectorXd::Constant(5, -8.0);
  EXPECT_EQ(underrelaxed_propose(g1, 1.0, cov, a), underrelaxed_propose(g2, 1.0, cov, b));
}

TEST(Underrelaxed, SmallDeltaStaysClose) {
  auto cov = CovarianceMatrix::build(linspace(0, 10, 5), {1.0, 2.0});
  Rng rng = make_stream(4);
  Eigen::VectorXd g = sample_prior(cov, rng);
  Eigen::VectorXd gp = underrelaxed_propose(g, 1e-6, cov, rng);
  EXPECT_LE((gp - g).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Underrelaxed, RejectsDeltaOutsideUnitInterval) {
  auto cov = CovarianceMatrix::build(std::vector<double>{0.0}, {1.0, 1.0});
  Rng rng = make_stream(1);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(underrelaxed_propose(g, 0.0, cov, rng), InputError);
  EXPECT_THROW(underrelaxed_propose(g, 1.5, cov, rng), InputError);
}

TEST(Underrelaxed, AlwaysAcceptChainKeepsPriorVariance) {
  const KernelParams p{3.0, 2.0};
  auto cov = CovarianceMatrix::build(linspace(0, 18, 10), p);
  Rng rng = make_stream(8);
  Eigen::VectorXd g = sample_prior(cov, rng);
  const int n = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(10), sq = Eigen::VectorXd::Zero(10);
  for (int i = 0; i < n; ++i) {
    g = underrelaxed_propose(g, 0.8, cov, rng);
    sum += g;
    sq += g.cwiseProduct(g);
  }
  Eigen::VectorXd var = sq / n - (sum / n).cwiseProduct(sum / n);
  EXPECT_NEAR(var.mean(), p.alpha * p.alpha, 0.1 * p.alpha * p.alpha);
}

TEST(ProposalIdentity, RandomTuples) {
  Rng rng = make_stream(21);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + uniform_index(20, rng);
    std::vector<double> d(n);
    for (auto& v : d) v = 20.0 * uniform01(rng);
    std::sort(d.begin(), d.end());
    auto cov = CovarianceMatrix::build(d, {0.5 + 9.0 * uniform01(rng), 0.5 + 5.0 * uniform01(rng)});
    const double delta = 1.0 - uniform01(rng);
    Eigen::VectorXd g = sample_prior(cov, rng);
    Eigen::VectorXd gp = underrelaxed_propose(g, delta, cov, rng);
    auto pr = proposal_log_ratio_identity(g, gp, delta, cov);
    worst = std::max(worst, std::fabs(pr.lhs - pr.rhs));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(ProposalIdentity, EqualArgumentsGiveZero) {
  auto cov = CovarianceMatrix::build(linspace(0, 5, 4), {1.0, 1.0});
  Rng rng = make_stream(3);
  Eigen::VectorXd g = sample_prior(cov, rng);
  auto pr = proposal_log_ratio_identity(g, g, 0.3, cov);
  EXPECT_EQ(pr.lhs, 0.0);
  EXPECT_EQ(pr.rhs, 0.0);
}

TEST(ProposalIdentity, ScalarClosedForm) {
  const double a = 1.3, delta = 0.6, g = 0.8, gp = -1.1;
  auto cov = CovarianceMatrix::build(std::vector<double>{0.0}, {a, 1.0});
  const double v = a * a, s = std::sqrt(1 - delta * delta);
  // q(x | y) = N(x; s y, delta^2 v)
  const double lhs = (-(g - s * gp) * (g - s * gp) + (gp - s * g) * (gp - s * g)) / (2 * delta * delta * v);
  const double rhs = (-g * g + gp * gp) / (2 * v);
  EXPECT_NEAR(lhs, rhs, 1e-14);
  auto pr = proposal_log_ratio_identity(Eigen::VectorXd::Constant(1, g), Eigen::VectorXd::Constant(1, gp), delta, cov);
  EXPECT_NEAR(pr.lhs, lhs, 1e-13);
  EXPECT_NEAR(pr.rhs, rhs, 1e-13);
}

TEST(ProposalIdentity, LengthMismatchThrows) {
  auto cov = CovarianceMatrix::build(std::vector<double>{0.0, 2.0}, {1.0, 1.0});
  EXPECT_THROW(proposal_log_ratio_identity(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), 0.5, cov),
               InputError);
}
