#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <random>

#include "kdmd/fhn.hpp"

using namespace kdmd;
using namespace kdmd::fhn;

namespace {

FhnConfig small_config() {
  FhnConfig cfg;
  cfg.n_modes = 48;
  cfg.n_snapshots = 30;
  cfg.perturb_period = 5.0;
  cfg.n_trajectories = 2;
  cfg.rng_seed = 7;
  return cfg;
}

}  // namespace

TEST(FhnConfig, DefaultsMatchReferenceExperiment) {
  const FhnConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.c0, -0.03);
  EXPECT_DOUBLE_EQ(cfg.c1, 2.0);
  EXPECT_DOUBLE_EQ(cfg.delta, 4.0);
  EXPECT_DOUBLE_EQ(cfg.epsilon, 0.02);
  EXPECT_DOUBLE_EQ(cfg.domain_length, 20.0);
  EXPECT_EQ(cfg.n_modes, 128);
  EXPECT_EQ(cfg.state_dim(), 256);
  EXPECT_DOUBLE_EQ(cfg.dt_sample, 1.0);
  EXPECT_DOUBLE_EQ(cfg.perturb_period, 25.0);
  EXPECT_DOUBLE_EQ(cfg.forcing_centers[0], 7.5);
  EXPECT_DOUBLE_EQ(cfg.forcing_centers[1], 10.0);
  EXPECT_DOUBLE_EQ(cfg.forcing_centers[2], 12.5);
  EXPECT_DOUBLE_EQ(cfg.forcing_stddev, 0.1);
  EXPECT_EQ(cfg.n_snapshots, 2500);
  EXPECT_EQ(cfg.n_trajectories, 5);
  EXPECT_DOUBLE_EQ(cfg.dt_internal, 0.01);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(FhnConfig, RejectsNonDivisibleSteps) {
  FhnConfig cfg;
  cfg.dt_internal = 0.3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = FhnConfig{};
  cfg.perturb_period = 25.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(CosineBasis, AnalysisInvertsSynthesis) {
  const CosineBasis basis(32, 20.0);
  const Eigen::MatrixXd eye = basis.analysis * basis.synth;
  EXPECT_LT((eye - Eigen::MatrixXd::Identity(32, 32)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CosineBasis, DerivativeVanishesAtBoundaries) {
  const CosineBasis basis(64, 20.0);
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::VectorXd coeff(64);
  for (int k = 0; k < 64; ++k) coeff[k] = dist(gen) / (1.0 + k * k);
  EXPECT_LT(std::abs(basis.derivative_at(coeff, 0.0)), 1e-8);
  EXPECT_LT(std::abs(basis.derivative_at(coeff, 20.0)), 1e-8);
  // Interior derivative agrees with a central difference of the series.
  const double x = 7.3, h = 1e-5;
  const double fd = (basis.value_at(coeff, x + h) - basis.value_at(coeff, x - h)) / (2 * h);
  EXPECT_NEAR(basis.derivative_at(coeff, x), fd, 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST(FhnRhs, ZeroState) {
  FhnConfig cfg;
  cfg.n_modes = 32;
  FieldState s{Eigen::VectorXd::Zero(32), Eigen::VectorXd::Zero(32)};
  const FieldState d = fhn_rhs(s, cfg);
  EXPECT_LT(d.v.cwiseAbs().maxCoeff(), 1e-15);
  // dw is the uniform field -eps*c0 = 0.0006: constant mode only.
  EXPECT_NEAR(d.w[0], 0.0006, 1e-15);
  EXPECT_LT(d.w.tail(31).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FhnRhs, SpatiallyConstantFields) {
  FhnConfig cfg;
  cfg.n_modes = 32;
  const double a = 0.4, b = -0.2;
  FieldState s{Eigen::VectorXd::Zero(32), Eigen::VectorXd::Zero(32)};
  s.v[0] = a;
  s.w[0] = b;
  const FieldState d = fhn_rhs(s, cfg);
  EXPECT_NEAR(d.v[0], a - b - a * a * a, 1e-13);
  EXPECT_NEAR(d.w[0], cfg.epsilon * (a - cfg.c1 * b - cfg.c0), 1e-13);
  // Constants kill the diffusion terms: no other mode is excited.
  EXPECT_LT(d.v.tail(31).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT(d.w.tail(31).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(FhnRhs, SingleModeDiffusionEigenvalue) {
  FhnConfig cfg;
  cfg.n_modes = 32;
  const int k = 5;
  const double freq = k * std::numbers::pi / cfg.domain_length;
  // Tiny amplitude makes the cubic negligible; the linear response of mode k
  // is (-(k pi / L)^2 + 1) v_k.
  const double amp = 1e-7;
  FieldState s{Eigen::VectorXd::Zero(32), Eigen::VectorXd::Zero(32)};
  s.v[k] = amp;
  const FieldState d = fhn_rhs(s, cfg);
  EXPECT_NEAR(d.v[k] / amp, -freq * freq + 1.0, 1e-6);
  const CosineBasis basis(32, cfg.domain_length);
  EXPECT_NEAR(basis.diffusion[k], -freq * freq, 1e-12);
}

TEST(FhnRhs, PhysicalAndSpectralFormsAgree) {
  FhnConfig cfg;
  cfg.n_modes = 48;
  const FhnSystem system(cfg);
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  Eigen::VectorXd u(96);
  for (int i = 0; i < 96; ++i) u[i] = dist(gen) / (1.0 + (i % 48) * (i % 48));
  const Eigen::VectorXd z = system.physical_state(u);
  const Eigen::VectorXd via_spectral = system.physical_state(system.rhs(u));
  const Eigen::VectorXd via_physical = system.rhs_physical(z);
  EXPECT_LT((via_spectral - via_physical).norm(), 1e-10 * via_physical.norm());
}

TEST(FindEquilibrium, ResidualAndFrontShape) {
  const FhnConfig cfg;
  const FieldState eq = find_equilibrium(cfg);
  const FhnSystem system(cfg);
  EXPECT_LT(system.rhs(system.stack(eq)).cwiseAbs().maxCoeff(), 1e-10);

  const Eigen::VectorXd z = system.physical_state(system.stack(eq));
  const Eigen::VectorXd v = z.head(cfg.n_modes);
  // Standing front: ends saturated with opposite signs, one zero crossing.
  EXPECT_GT(std::abs(v[0]), 0.5);
  EXPECT_GT(std::abs(v[cfg.n_modes - 1]), 0.5);
  EXPECT_LT(v[0] * v[cfg.n_modes - 1], 0.0);
  int crossings = 0;
  for (int j = 1; j < cfg.n_modes; ++j)
    if (v[j - 1] * v[j] < 0.0) ++crossings;
  EXPECT_EQ(crossings, 1);
}

TEST(FindEquilibrium, InvariantUnderIntegration) {
  const FhnConfig cfg;
  const FieldState eq = find_equilibrium(cfg);
  const auto traj = integrate(cfg, eq, 100.0);
  const FhnSystem system(cfg);
  const double drift = (system.stack(traj.back()) - system.stack(eq)).norm() /
                       system.stack(eq).norm();
  EXPECT_LT(drift, 1e-6);
}

TEST(Integrate, StepHalvingConvergence) {
  FhnConfig cfg;
  const FieldState eq = find_equilibrium(cfg);
  const FieldState start = perturb(eq, Eigen::Vector3d(0.1, -0.05, 0.08), cfg);
  const auto coarse = integrate(cfg, start, 100.0);
  FhnConfig half = cfg;
  half.dt_internal = 0.005;
  const auto fine = integrate(half, start, 100.0);
  const FhnSystem system(cfg);
  ASSERT_EQ(coarse.size(), fine.size());
  double worst = 0.0;
  for (size_t i = 0; i < coarse.size(); ++i) {
    const Eigen::VectorXd a = system.stack(coarse[i]);
    const Eigen::VectorXd b = system.stack(fine[i]);
    worst = std::max(worst, (a - b).norm() / b.norm());
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Integrate, PerturbationDecaysAtLinearizedRate) {
  const FhnConfig cfg;
  const FieldState eq = find_equilibrium(cfg);
  const Linearization lin = linearization_oracle(cfg, eq);
  const std::complex<double> lambda = lin.values[0];
  ASSERT_GT(lambda.imag(), 0.0);

  const FhnSystem system(cfg);
  const Eigen::VectorXd z_eq = system.physical_state(system.stack(eq));
  const Eigen::VectorXd direction = lin.vectors.col(0).real().normalized();
  const double amp = 1e-3;

  FieldState start = system.unstack(system.spectral_state(z_eq + amp * direction));
  const auto traj = integrate(cfg, start, 50.0);

  // Complex amplitude along the leading eigenplane via the adjoint row.
  const Eigen::MatrixXcd left = lin.vectors.partialPivLu().solve(
      Eigen::MatrixXcd::Identity(z_eq.size(), z_eq.size()));
  std::vector<std::complex<double>> c;
  for (const FieldState& s : traj) {
    const Eigen::VectorXd dz = system.physical_state(system.stack(s)) - z_eq;
    c.push_back((left.row(0) * dz.cast<std::complex<double>>())(0, 0));
  }

  // Least-squares slope of log|c| gives Re(lambda); mean phase increment
  // gives Im(lambda).
  const int n = static_cast<int>(c.size());
  double tbar = 0, lbar = 0;
  for (int i = 0; i < n; ++i) {
    tbar += i;
    lbar += std::log(std::abs(c[static_cast<size_t>(i)]));
  }
  tbar /= n;
  lbar /= n;
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    num += (i - tbar) * (std::log(std::abs(c[static_cast<size_t>(i)])) - lbar);
    den += (i - tbar) * (i - tbar);
  }
  const double decay = num / den / cfg.dt_sample;
  EXPECT_NEAR(decay, lambda.real(), 0.05 * std::abs(lambda.real()));

  double phase_sum = 0;
  for (int i = 1; i < n; ++i)
    phase_sum += std::arg(c[static_cast<size_t>(i)] / c[static_cast<size_t>(i - 1)]);
  const double freq = phase_sum / (n - 1) / cfg.dt_sample;
  EXPECT_NEAR(freq, lambda.imag(), 0.05 * lambda.imag());
}

TEST(Integrate, BlowUpGuard) {
  FhnConfig cfg;
  cfg.n_modes = 32;
  FieldState s{Eigen::VectorXd::Zero(32), Eigen::VectorXd::Zero(32)};
  s.v[0] = 5e5;  // cubic reaction explodes immediately
  EXPECT_THROW(integrate(cfg, s, 1.0), Instability);
}

TEST(Perturb, ZeroAmplitudeIsIdentity) {
  FhnConfig cfg;
  cfg.n_modes = 32;
  FieldState s{Eigen::VectorXd::Random(32), Eigen::VectorXd::Random(32)};
  const FieldState p = perturb(s, Eigen::Vector3d::Zero(), cfg);
  EXPECT_LT((p.v - s.v).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((p.w - s.w).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Perturb, AddsGaussianBumpToActivatorOnly) {
  const FhnConfig cfg;
  const CosineBasis basis(cfg.n_modes, cfg.domain_length);
  FieldState s{Eigen::VectorXd::Zero(cfg.n_modes), Eigen::VectorXd::Zero(cfg.n_modes)};
  const FieldState p = perturb(s, Eigen::Vector3d(1.0, 0.0, 0.0), cfg);

  // w untouched, bitwise.
  EXPECT_EQ(p.w, s.w);

  const Eigen::VectorXd bump = basis.to_physical(p.v);
  Eigen::Index argmax = 0;
  bump.maxCoeff(&argmax);
  EXPECT_NEAR(basis.nodes[argmax], cfg.forcing_centers[0], 0.08);
  for (Eigen::Index j = 0; j < bump.size(); ++j) {
    const double expected = std::exp(-std::pow(basis.nodes[j] - 7.5, 2));
    EXPECT_NEAR(bump[j], expected, 1e-10);
  }
}

TEST(LinearizationOracle, StableSpectrumWithConjugatePairs) {
  const FhnConfig cfg;
  const FieldState eq = find_equilibrium(cfg);
  const Linearization lin = linearization_oracle(cfg, eq);

  // Stable equilibrium: every eigenvalue strictly in the left half-plane.
  EXPECT_LT(lin.values[0].real(), 0.0);
  // Sorted by real part descending.
  for (int k = 1; k < 10; ++k)
    EXPECT_LE(lin.values[k].real(), lin.values[k - 1].real() + 1e-14);
  // The slowest mode is oscillatory and paired with its conjugate.
  EXPECT_GT(std::abs(lin.values[0].imag()), 1e-3);
  EXPECT_NEAR(std::abs(lin.values[1] - std::conj(lin.values[0])), 0.0, 1e-12);
  EXPECT_NEAR(lin.vectors.col(0).norm(), 1.0, 1e-12);
}

TEST(LinearizationOracle, JacobianMatchesFiniteDifferences) {
  FhnConfig cfg;
  cfg.n_modes = 48;
  const FhnSystem system(cfg);
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  Eigen::VectorXd z(96);
  for (int i = 0; i < 96; ++i) z[i] = dist(gen);
  const Eigen::MatrixXd j = system.jacobian(z);

  for (uint32_t seed : {21u, 22u, 23u}) {
    std::mt19937 g2(seed);
    Eigen::VectorXd dir(96);
    for (int i = 0; i < 96; ++i) dir[i] = dist(g2);
    dir.normalize();
    const double h = 1e-6;
    const Eigen::VectorXd fd =
        (system.rhs_physical(z + h * dir) - system.rhs_physical(z - h * dir)) / (2 * h);
    const Eigen::VectorXd jd = j * dir;
    EXPECT_LT((fd - jd).norm(), 1e-6 * std::max(1.0, jd.norm()));
  }
}

TEST(NormalSampler, ReproducibleAndStandardized) {
  NormalSampler a(12345), b(12345);
  double mean = 0, var = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = a();
    EXPECT_EQ(z, b());
    mean += z;
    var += z * z;
  }
  mean /= n;
  var = var / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(GenerateDataset, ShapesPairingAndDeterminism) {
  const FhnConfig cfg = small_config();
  const auto sets = generate_dataset(cfg);
  ASSERT_EQ(sets.size(), 2u);
  for (const SnapshotSet& s : sets) {
    EXPECT_EQ(s.x.rows(), cfg.n_snapshots - 1);
    EXPECT_EQ(s.x.cols(), cfg.state_dim());
    ASSERT_TRUE(s.dt.has_value());
    EXPECT_DOUBLE_EQ(*s.dt, cfg.dt_sample);
    // Consecutive-snapshot pairing: y_m = x_{m+1}.
    for (Eigen::Index m = 0; m + 1 < s.x.rows(); ++m)
      EXPECT_EQ(s.y.row(m), s.x.row(m + 1));
  }
  // Trajectories use distinct streams.
  EXPECT_GT((sets[0].x - sets[1].x).cwiseAbs().maxCoeff(), 1e-6);

  const auto again = generate_dataset(cfg);
  for (size_t t = 0; t < sets.size(); ++t) {
    EXPECT_EQ(sets[t].x, again[t].x);
    EXPECT_EQ(sets[t].y, again[t].y);
  }
}

TEST(GenerateDataset, ZeroVarianceStaysAtEquilibrium) {
  FhnConfig cfg = small_config();
  cfg.forcing_stddev = 0.0;
  const FieldState eq = find_equilibrium(cfg);
  const FhnSystem system(cfg);
  const Eigen::VectorXd z_eq = system.physical_state(system.stack(eq));
  const auto sets = generate_dataset(cfg);
  for (const SnapshotSet& s : sets) {
    for (Eigen::Index m = 0; m < s.x.rows(); ++m)
      EXPECT_LT((s.x.row(m).transpose() - z_eq).cwiseAbs().maxCoeff(), 1e-8);
  }
}
