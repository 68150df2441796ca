#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <vector>

#include "kdmd/edmd.hpp"
#include "kdmd/koopman.hpp"

using namespace kdmd;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(gen);
  return m;
}

SnapshotSet linear_system_data(const Eigen::MatrixXd& a, Eigen::Index m, uint32_t seed,
                               double amplitude = 1.0) {
  SnapshotSet s;
  s.x = amplitude * random_matrix(m, a.rows(), seed);
  s.y = s.x * a.transpose();
  s.dt = 1.0;
  return s;
}

// Spec'd cross-checks every fitted decomposition must satisfy.
void expect_decomposition_invariants(const KoopmanDecomposition& d, double tol = 1e-8) {
  // Reconstruction identity: phi_x * modes projects the training states onto
  // the leading kernel principal components.
  const Eigen::MatrixXd projection = d.basis.q * (d.basis.q.transpose() * d.x_train);
  const Eigen::MatrixXcd prod = d.phi_x * d.modes;
  EXPECT_LT((prod.real() - projection).norm(), tol * d.x_train.norm());
  EXPECT_LT(prod.imag().norm(), tol * d.x_train.norm());

  // Eigenfunction consistency at the training points.
  double worst = 0.0;
  for (Eigen::Index m = 0; m < d.snapshot_count(); ++m) {
    const Eigen::VectorXcd phi = eigenfunction_at(d, d.x_train.row(m) / d.scale);
    worst = std::max(worst, (phi.transpose() - d.phi_x.row(m)).norm());
  }
  EXPECT_LT(worst, tol * d.phi_x.norm());

  // Conjugate-pair closure of (eigenvalue, mode, eigenfunction values).
  for (int k = 0; k < d.rank(); ++k) {
    if (d.mu[k].imag() == 0.0) continue;
    bool found = false;
    for (int j = 0; j < d.rank(); ++j) {
      if (std::abs(d.mu[j] - std::conj(d.mu[k])) > 1e-12 * std::abs(d.mu[k])) continue;
      if ((d.modes.row(j) - d.modes.row(k).conjugate()).norm() >
          1e-8 * std::max(1.0, d.modes.row(k).norm()))
        continue;
      if ((d.phi_x.col(j) - d.phi_x.col(k).conjugate()).norm() >
          1e-8 * std::max(1.0, d.phi_x.col(k).norm()))
        continue;
      found = true;
      break;
    }
    EXPECT_TRUE(found) << "no conjugate partner for eigenvalue " << d.mu[k];
  }
}

}  // namespace

TEST(Fit, ScalarGeometricDecay) {
  // x_{n+1} = 0.5 x_n: the rank-1 regression is exact, so 0.5 must appear.
  SnapshotSet s;
  s.x.resize(3, 1);
  s.x << 1.0, 0.5, 0.25;
  s.y.resize(3, 1);
  s.y << 0.5, 0.25, 0.125;
  s.dt = 1.0;

  // Hand-computed dual-form oracle: Ghat = x x^T has the single nonzero
  // eigenvalue ||x||^2, and Khat collapses to (x^T y)/(x^T x) = 0.5.
  const double expected = s.x.col(0).dot(s.y.col(0)) / s.x.col(0).squaredNorm();
  ASSERT_DOUBLE_EQ(expected, 0.5);

  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-12),
          /*normalize=*/false);
  EXPECT_NEAR(std::abs(d.mu[0] - 0.5), 0.0, 1e-12);
  for (int k = 1; k < d.rank(); ++k) EXPECT_LT(std::abs(d.mu[k]), 1e-6);
  // The mode spans the (one-dimensional) state axis.
  EXPECT_GT(std::abs(d.modes(0, 0)), 0.0);
  expect_decomposition_invariants(d);
}

TEST(Fit, TwoStateLinearSystemRecoversSpectrumAndModes) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a.diagonal() << 0.9, 0.5;
  const SnapshotSet s = linear_system_data(a, 20, 123);

  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-6),
          /*normalize=*/false);
  ASSERT_EQ(d.rank(), 2);
  EXPECT_NEAR(std::abs(d.mu[0] - 0.9), 0.0, 1e-10);
  EXPECT_NEAR(std::abs(d.mu[1] - 0.5), 0.0, 1e-10);

  // Modes parallel to the coordinate axes.
  const Eigen::MatrixXcd modes = d.physical_modes();
  EXPECT_GT(std::abs(modes(0, 0)) / modes.row(0).norm(), 1.0 - 1e-8);
  EXPECT_GT(std::abs(modes(1, 1)) / modes.row(1).norm(), 1.0 - 1e-8);

  // Continuous-time eigenvalues via the principal log.
  EXPECT_NEAR(d.lambda[0].real(), std::log(0.9), 1e-10);
  EXPECT_NEAR(d.lambda[0].imag(), 0.0, 1e-12);
  expect_decomposition_invariants(d);
}

TEST(Fit, DmdEquivalenceWithIdentityDictionary) {
  // Linear kernel vs psi(x) = x under identical rank truncation.
  for (uint32_t seed : {31u, 32u}) {
    SnapshotSet s;
    s.x = random_matrix(20, 3, seed);
    s.y = random_matrix(20, 3, seed + 50);

    const KoopmanDecomposition kd = fit(s, KernelSpec::linear(),
                                        TruncationPolicy::fixed_rank(3),
                                        /*normalize=*/false);
    const EdmdResult dmd =
        edmd_fit(s, ExplicitDictionary::identity(3), TruncationPolicy::fixed_rank(3));

    const SpectrumMatch m = match_spectra(kd.mu, dmd.eigenvalues, 1e-8);
    EXPECT_TRUE(m.all_matched());
    EXPECT_LT(m.max_distance, 1e-8);
  }
}

TEST(Fit, NormalizationReportsScaleAndKeepsPhysicalUnits) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a.diagonal() << 0.9, 0.5;
  const SnapshotSet s = linear_system_data(a, 25, 9, /*amplitude=*/100.0);

  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-6),
          /*normalize=*/true);
  const double mean_norm = s.x.rowwise().norm().mean();
  EXPECT_NEAR(d.scale * mean_norm, 1.0, 1e-12);
  EXPECT_NEAR((d.x_train.rowwise().norm()).mean(), 1.0, 1e-12);

  Eigen::Vector2d x(3.0, -2.0);
  const Eigen::VectorXd y = predict(d, x);
  EXPECT_LT((y - a * x).norm(), 1e-8 * (a * x).norm());
  expect_decomposition_invariants(d);
}

TEST(Fit, PropagatesValidationErrors) {
  SnapshotSet s;
  s.x = Eigen::MatrixXd::Zero(3, 2);
  s.y = Eigen::MatrixXd::Zero(4, 2);
  EXPECT_THROW(fit(s, KernelSpec::linear(), TruncationPolicy::fixed_rank(1)),
               DimensionMismatch);
  s.y = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_THROW(fit(s, KernelSpec::linear(), TruncationPolicy::fixed_rank(1), false),
               RankZero);
}

TEST(EigenfunctionAt, LinearFunctionalsOfTheState) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a.diagonal() << 0.9, 0.5;
  const SnapshotSet s = linear_system_data(a, 20, 321);
  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-6), false);

  // For a diagonal system the eigenfunctions are the dual coordinates:
  // phi_1 picks out x_1, phi_2 picks out x_2.
  const Eigen::VectorXcd at_e1 = eigenfunction_at(d, Eigen::Vector2d(1.0, 0.0));
  EXPECT_GT(std::abs(at_e1[0]), 1e-3);
  EXPECT_LT(std::abs(at_e1[1]), 1e-8 * std::abs(at_e1[0]));

  // Linear kernel eigenfunctions are linear in x.
  const Eigen::VectorXcd at_2e1 = eigenfunction_at(d, Eigen::Vector2d(2.0, 0.0));
  EXPECT_LT(std::abs(at_2e1[0] - 2.0 * at_e1[0]), 1e-10 * std::abs(at_e1[0]));
}

TEST(EigenfunctionAt, ZeroStateWithPolynomialKernel) {
  SnapshotSet s;
  s.x = random_matrix(12, 2, 55);
  s.y = random_matrix(12, 2, 56);
  const KoopmanDecomposition d =
      fit(s, KernelSpec::polynomial(3), TruncationPolicy::relative_threshold(1e-8), false);

  // f(0, x_j) = 1 for the inhomogeneous polynomial kernel, so the evaluation
  // reduces to the all-ones row through Q Sigma^+ Vhat.
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  const Eigen::RowVectorXd row = kernel_row(d.kernel, zero, d.x_train);
  EXPECT_LT((row.array() - 1.0).abs().maxCoeff(), 1e-14);

  const Eigen::VectorXcd expected =
      (Eigen::RowVectorXd::Ones(d.snapshot_count()).cast<std::complex<double>>() *
       d.efun_coeff)
          .transpose();
  EXPECT_LT((eigenfunction_at(d, zero) - expected).norm(), 1e-12 * expected.norm());
}

TEST(EigenfunctionAt, RejectsWrongDimension) {
  SnapshotSet s;
  s.x = random_matrix(8, 2, 71);
  s.y = random_matrix(8, 2, 72);
  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::fixed_rank(2), false);
  EXPECT_THROW(eigenfunction_at(d, Eigen::VectorXd::Zero(5)), DimensionMismatch);
}

TEST(Predict, LinearSystemIsExact) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a.diagonal() << 0.9, 0.5;
  const SnapshotSet s = linear_system_data(a, 20, 17);
  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-6), false);
  const Eigen::Vector2d x(1.0, 1.0);
  const Eigen::VectorXd y = predict(d, x);
  EXPECT_NEAR(y[0], 0.9, 1e-8);
  EXPECT_NEAR(y[1], 0.5, 1e-8);
}

TEST(Predict, ScalarSystem) {
  SnapshotSet s;
  s.x.resize(3, 1);
  s.x << 1.0, 0.5, 0.25;
  s.y = 0.5 * s.x;
  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-12), false);
  Eigen::VectorXd one(1);
  one << 1.0;
  EXPECT_NEAR(predict(d, one)[0], 0.5, 1e-8);
}

TEST(Predict, DetectsBrokenConjugatePairs) {
  // A rotation produces a complex pair; wrecking one mode row breaks the
  // cancellation of imaginary parts.
  Eigen::Matrix2d rot;
  const double angle = 0.7;
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  const SnapshotSet s = linear_system_data(rot, 20, 99);
  KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::relative_threshold(1e-6), false);
  ASSERT_EQ(d.rank(), 2);
  EXPECT_NO_THROW(predict(d, Eigen::Vector2d(1.0, 0.5)));
  d.modes.row(1).setZero();
  EXPECT_THROW(predict(d, Eigen::Vector2d(1.0, 0.5)), ConjugateImbalance);
}

TEST(Reconstruct, FullRankIsLossless) {
  SnapshotSet s;
  s.x = random_matrix(8, 8, 207);
  s.y = random_matrix(8, 8, 208);
  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::fixed_rank(8), false);
  ASSERT_EQ(d.rank(), 8);
  const Reconstruction rec = reconstruct(d);
  EXPECT_LE(rec.residual, 1e-8);
  EXPECT_LT((rec.xhat - s.x).norm(), 1e-8 * s.x.norm());
}

TEST(Reconstruct, RankOneTruncationMatchesDirectProjection) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a.diagonal() << 0.9, 0.5;
  const SnapshotSet s = linear_system_data(a, 20, 300);
  const KoopmanDecomposition d =
      fit(s, KernelSpec::linear(), TruncationPolicy::fixed_rank(1), false);
  ASSERT_EQ(d.rank(), 1);
  const Reconstruction rec = reconstruct(d);
  const Eigen::MatrixXd projected = d.basis.q * (d.basis.q.transpose() * d.x_train);
  const double expected = (d.x_train - projected).norm() / d.x_train.norm();
  EXPECT_NEAR(rec.residual, expected, 1e-8);
}

TEST(SelectTuples, OrdersByDecayRate) {
  KoopmanDecomposition d;
  d.mu.resize(3);
  d.mu << std::complex<double>(0.5, 0.0), std::complex<double>(1.0, 0.0),
      0.9 * std::exp(std::complex<double>(0.0, 0.1));
  d.has_dt = true;
  d.dt = 1.0;
  d.lambda.resize(3);
  for (int k = 0; k < 3; ++k) d.lambda[k] = std::log(d.mu[k]);

  const std::vector<int> slowest = select_tuples(d, SelectionCriterion::slowest_decay());
  ASSERT_EQ(slowest.size(), 3u);
  EXPECT_EQ(slowest[0], 1);
  EXPECT_EQ(slowest[1], 2);
  EXPECT_EQ(slowest[2], 0);

  const std::vector<int> top2 = select_tuples(d, SelectionCriterion::top_n(2));
  ASSERT_EQ(top2.size(), 2u);
  EXPECT_EQ(top2[0], 1);
  EXPECT_EQ(top2[1], 2);

  const std::vector<int> mag = select_tuples(d, SelectionCriterion::largest_magnitude());
  ASSERT_EQ(mag.size(), 3u);
  EXPECT_EQ(mag[0], 1);
  EXPECT_EQ(mag[1], 2);
  EXPECT_EQ(mag[2], 0);
}

TEST(SelectTuples, ExcludesZeroEigenvalues) {
  KoopmanDecomposition d;
  d.mu.resize(2);
  d.mu << std::complex<double>(1.0, 0.0), std::complex<double>(0.0, 0.0);
  d.has_dt = false;
  const std::vector<int> slowest = select_tuples(d, SelectionCriterion::slowest_decay());
  ASSERT_EQ(slowest.size(), 1u);
  EXPECT_EQ(slowest[0], 0);
}

TEST(Fit, RowPermutationInvariance) {
  const Eigen::Index m = 15;
  SnapshotSet s;
  s.x = random_matrix(m, 2, 404);
  s.y = random_matrix(m, 2, 405);

  std::vector<Eigen::Index> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 gen(7);
  std::shuffle(perm.begin(), perm.end(), gen);
  SnapshotSet shuffled;
  shuffled.x.resize(m, 2);
  shuffled.y.resize(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    shuffled.x.row(i) = s.x.row(perm[static_cast<size_t>(i)]);
    shuffled.y.row(i) = s.y.row(perm[static_cast<size_t>(i)]);
  }

  const TruncationPolicy policy = TruncationPolicy::relative_threshold(1e-6);
  const KernelSpec kernel = KernelSpec::polynomial(2);
  const KoopmanDecomposition d1 = fit(s, kernel, policy, false);
  const KoopmanDecomposition d2 = fit(shuffled, kernel, policy, false);

  ASSERT_EQ(d1.rank(), d2.rank());
  const SpectrumMatch match = match_spectra(d1.mu, d2.mu, 1e-8);
  EXPECT_TRUE(match.all_matched());
}

TEST(Fit, PolynomialKernelInvariantsOnRandomData) {
  for (uint32_t seed : {61u, 62u}) {
    SnapshotSet s;
    s.x = random_matrix(15, 2, seed);
    s.y = random_matrix(15, 2, seed + 10);
    const KoopmanDecomposition d =
        fit(s, KernelSpec::polynomial(2), TruncationPolicy::relative_threshold(1e-6), false);
    expect_decomposition_invariants(d);
  }
}
