#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "kdmd/errors.hpp"
#include "kdmd/types.hpp"

namespace kdmd::fhn {

/// Parameters of the forced FitzHugh-Nagumo experiment. Defaults reproduce
/// the reference setup: Neumann boundaries on [0, 20], 128 cosine modes per
/// field, impulsive Gaussian forcing every 25 time units, five trajectories
/// of 2500 snapshots at unit sampling interval.
struct FhnConfig {
  double c0 = -0.03;
  double c1 = 2.0;
  double delta = 4.0;
  double epsilon = 0.02;
  double domain_length = 20.0;
  int n_modes = 128;
  double dt_sample = 1.0;
  double perturb_period = 25.0;
  std::array<double, 3> forcing_centers{7.5, 10.0, 12.5};
  double forcing_stddev = 0.1;
  int n_snapshots = 2500;
  int n_trajectories = 5;
  std::uint64_t rng_seed = 0;
  double dt_internal = 0.01;

  int state_dim() const { return 2 * n_modes; }

  int substeps_per_sample() const {
    return static_cast<int>(std::llround(dt_sample / dt_internal));
  }

  int samples_per_perturbation() const {
    return static_cast<int>(std::llround(perturb_period / dt_sample));
  }

  void validate() const {
    if (n_modes < 2) throw ConfigError("FhnConfig: need at least 2 cosine modes");
    if (!(domain_length > 0.0)) throw ConfigError("FhnConfig: domain length must be positive");
    if (!(dt_sample > 0.0) || !(dt_internal > 0.0))
      throw ConfigError("FhnConfig: time steps must be positive");
    const int m = substeps_per_sample();
    if (m < 1 || std::abs(m * dt_internal - dt_sample) > 1e-9 * dt_sample)
      throw ConfigError("FhnConfig: dt_internal must divide dt_sample evenly");
    const int p = samples_per_perturbation();
    if (p < 1 || std::abs(p * dt_sample - perturb_period) > 1e-9 * perturb_period)
      throw ConfigError("FhnConfig: perturb_period must be a multiple of dt_sample");
    if (forcing_stddev < 0.0) throw ConfigError("FhnConfig: forcing stddev must be >= 0");
    if (n_snapshots < 2) throw ConfigError("FhnConfig: need at least 2 snapshots");
    if (n_trajectories < 1) throw ConfigError("FhnConfig: need at least 1 trajectory");
  }
};

/// Cosine-spectral coefficients of the activator and inhibitor fields.
struct FieldState {
  Eigen::VectorXd v;
  Eigen::VectorXd w;
};

/// Cosine collocation on [0, L]: basis functions cos(k pi x / L) sampled at
/// the midpoint grid x_j = (j + 1/2) L / n. The basis satisfies the Neumann
/// conditions identically and diagonalizes the second derivative.
struct CosineBasis {
  int n = 0;
  double length = 0.0;
  Eigen::VectorXd nodes;      // collocation points
  Eigen::MatrixXd synth;      // spectral -> physical
  Eigen::MatrixXd analysis;   // physical -> spectral (closed-form inverse)
  Eigen::VectorXd diffusion;  // -(k pi / L)^2

  CosineBasis(int n_modes, double domain_length) : n(n_modes), length(domain_length) {
    nodes.resize(n);
    for (int j = 0; j < n; ++j) nodes[j] = (j + 0.5) * length / n;
    synth.resize(n, n);
    analysis.resize(n, n);
    diffusion.resize(n);
    for (int k = 0; k < n; ++k) {
      const double freq = k * std::numbers::pi / length;
      diffusion[k] = -freq * freq;
      const double weight = (k == 0 ? 1.0 : 2.0) / n;
      for (int j = 0; j < n; ++j) {
        const double c = std::cos(freq * nodes[j]);
        synth(j, k) = c;
        analysis(k, j) = weight * c;
      }
    }
  }

  Eigen::VectorXd to_physical(const Eigen::VectorXd& coeff) const { return synth * coeff; }
  Eigen::VectorXd to_spectral(const Eigen::VectorXd& values) const { return analysis * values; }

  /// Series value at an arbitrary point.
  double value_at(const Eigen::VectorXd& coeff, double x) const {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += coeff[k] * std::cos(k * std::numbers::pi / length * x);
    return s;
  }

  /// Spatial derivative of the series at an arbitrary point (vanishes at both
  /// boundaries for every coefficient vector).
  double derivative_at(const Eigen::VectorXd& coeff, double x) const {
    double s = 0.0;
    for (int k = 1; k < n; ++k) {
      const double freq = k * std::numbers::pi / length;
      s -= coeff[k] * freq * std::sin(freq * x);
    }
    return s;
  }
};

namespace detail {

/// ETDRK4 scalar coefficients for a diagonal linear part, evaluated with the
/// standard contour-integral trick to avoid cancellation near z = 0.
struct Etdrk4Coefficients {
  Eigen::ArrayXd e, e2, q, f1, f2, f3;

  Etdrk4Coefficients(const Eigen::ArrayXd& ldiag, double h) {
    const Eigen::Index n = ldiag.size();
    e = (h * ldiag).exp();
    e2 = (0.5 * h * ldiag).exp();
    q.resize(n);
    f1.resize(n);
    f2.resize(n);
    f3.resize(n);
    constexpr int kPoints = 32;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = h * ldiag[i];
      std::complex<double> sq = 0, s1 = 0, s2 = 0, s3 = 0;
      for (int j = 0; j < kPoints; ++j) {
        const double angle = std::numbers::pi * (j + 0.5) / kPoints;
        const std::complex<double> lr = z + std::polar(1.0, angle);
        const std::complex<double> elr = std::exp(lr);
        const std::complex<double> lr2 = lr * lr;
        const std::complex<double> lr3 = lr2 * lr;
        sq += (std::exp(0.5 * lr) - 1.0) / lr;
        s1 += (-4.0 - lr + elr * (4.0 - 3.0 * lr + lr2)) / lr3;
        s2 += (2.0 + lr + elr * (-2.0 + lr)) / lr3;
        s3 += (-4.0 - 3.0 * lr - lr2 + elr * (4.0 - lr)) / lr3;
      }
      const double inv = h / kPoints;  // upper semicircle; real parts average
      q[i] = sq.real() * inv;
      f1[i] = s1.real() * inv;
      f2[i] = s2.real() * inv;
      f3[i] = s3.real() * inv;
    }
  }
};

}  // namespace detail

/// Discretized FitzHugh-Nagumo operator: diffusion handled exactly in
/// spectral space, reaction evaluated pointwise on the collocation grid.
class FhnSystem {
public:
  explicit FhnSystem(const FhnConfig& cfg)
      : cfg_(cfg), basis_(cfg.n_modes, cfg.domain_length) {
    cfg_.validate();
    ldiag_.resize(2 * cfg_.n_modes);
    ldiag_.head(cfg_.n_modes) = basis_.diffusion;
    ldiag_.tail(cfg_.n_modes) = cfg_.delta * basis_.diffusion;
  }

  const FhnConfig& config() const { return cfg_; }
  const CosineBasis& basis() const { return basis_; }
  const Eigen::VectorXd& diffusion_diagonal() const { return ldiag_; }

  Eigen::VectorXd stack(const FieldState& s) const {
    Eigen::VectorXd u(2 * cfg_.n_modes);
    u.head(cfg_.n_modes) = s.v;
    u.tail(cfg_.n_modes) = s.w;
    return u;
  }

  FieldState unstack(const Eigen::VectorXd& u) const {
    return {u.head(cfg_.n_modes), u.tail(cfg_.n_modes)};
  }

  /// Physical snapshot layout: collocation values of v followed by w.
  Eigen::VectorXd physical_state(const Eigen::VectorXd& u) const {
    Eigen::VectorXd z(2 * cfg_.n_modes);
    z.head(cfg_.n_modes) = basis_.synth * u.head(cfg_.n_modes);
    z.tail(cfg_.n_modes) = basis_.synth * u.tail(cfg_.n_modes);
    return z;
  }

  Eigen::VectorXd spectral_state(const Eigen::VectorXd& z) const {
    Eigen::VectorXd u(2 * cfg_.n_modes);
    u.head(cfg_.n_modes) = basis_.analysis * z.head(cfg_.n_modes);
    u.tail(cfg_.n_modes) = basis_.analysis * z.tail(cfg_.n_modes);
    return u;
  }

  /// Reaction terms of the stacked spectral state.
  Eigen::VectorXd reaction(const Eigen::VectorXd& u) const {
    const int n = cfg_.n_modes;
    Eigen::MatrixXd phys(n, 2);
    phys.col(0).noalias() = basis_.synth * u.head(n);
    phys.col(1).noalias() = basis_.synth * u.tail(n);
    Eigen::MatrixXd react(n, 2);
    react.col(0) = phys.col(0).array() - phys.col(1).array() - phys.col(0).array().cube();
    react.col(1) =
        cfg_.epsilon * (phys.col(0).array() - cfg_.c1 * phys.col(1).array() - cfg_.c0);
    Eigen::VectorXd out(2 * n);
    out.head(n).noalias() = basis_.analysis * react.col(0);
    out.tail(n).noalias() = basis_.analysis * react.col(1);
    return out;
  }

  Eigen::VectorXd rhs(const Eigen::VectorXd& u) const {
    return (ldiag_.array() * u.array()).matrix() + reaction(u);
  }

  /// Right-hand side on physical collocation values z = [v; w].
  Eigen::VectorXd rhs_physical(const Eigen::VectorXd& z) const {
    const int n = cfg_.n_modes;
    const Eigen::MatrixXd d2 = second_derivative_matrix();
    Eigen::VectorXd out(2 * n);
    const auto v = z.head(n).array();
    const auto w = z.tail(n).array();
    out.head(n) = (d2 * z.head(n)).array() + v - w - v.cube();
    out.tail(n) = cfg_.delta * (d2 * z.tail(n)).array() +
                  cfg_.epsilon * (v - cfg_.c1 * w - cfg_.c0);
    return out;
  }

  /// Dense second-derivative operator on the collocation grid.
  Eigen::MatrixXd second_derivative_matrix() const {
    return basis_.synth * basis_.diffusion.asDiagonal() * basis_.analysis;
  }

  /// Analytic Jacobian of rhs_physical at z.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const {
    const int n = cfg_.n_modes;
    const Eigen::MatrixXd d2 = second_derivative_matrix();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    j.topLeftCorner(n, n) = d2;
    j.topLeftCorner(n, n).diagonal().array() += 1.0;
    j.topLeftCorner(n, n) -= (3.0 * z.head(n).array().square()).matrix().asDiagonal();
    j.topRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
    j.bottomLeftCorner(n, n) = cfg_.epsilon * Eigen::MatrixXd::Identity(n, n);
    j.bottomRightCorner(n, n) = cfg_.delta * d2;
    j.bottomRightCorner(n, n).diagonal().array() -= cfg_.epsilon * cfg_.c1;
    return j;
  }

private:
  FhnConfig cfg_;
  CosineBasis basis_;
  Eigen::VectorXd ldiag_;
};

/// One internal integrator: exponential treatment of the diffusion diagonal,
/// explicit fourth-order (ETDRK4) stages for the reaction.
class FhnIntegrator {
public:
  explicit FhnIntegrator(const FhnSystem& system)
      : system_(system),
        coeff_(system.diffusion_diagonal().array(), system.config().dt_internal) {}

  void substep(Eigen::VectorXd& u) const {
    const Eigen::ArrayXd nu = system_.reaction(u).array();
    const Eigen::VectorXd a = (coeff_.e2 * u.array() + coeff_.q * nu).matrix();
    const Eigen::ArrayXd na = system_.reaction(a).array();
    const Eigen::VectorXd b = (coeff_.e2 * u.array() + coeff_.q * na).matrix();
    const Eigen::ArrayXd nb = system_.reaction(b).array();
    const Eigen::VectorXd c = (coeff_.e2 * a.array() + coeff_.q * (2.0 * nb - nu)).matrix();
    const Eigen::ArrayXd nc = system_.reaction(c).array();
    u = (coeff_.e * u.array() + coeff_.f1 * nu + 2.0 * coeff_.f2 * (na + nb) +
         coeff_.f3 * nc)
            .matrix();
    if (u.cwiseAbs().maxCoeff() > 1e6)
      throw Instability("FhnIntegrator: coefficient magnitude exceeded 1e6");
  }

  void advance_one_sample(Eigen::VectorXd& u) const {
    const int m = system_.config().substeps_per_sample();
    for (int i = 0; i < m; ++i) substep(u);
  }

private:
  const FhnSystem& system_;
  detail::Etdrk4Coefficients coeff_;
};

/// Time derivative of a field state.
inline FieldState fhn_rhs(const FieldState& state, const FhnConfig& cfg) {
  const FhnSystem system(cfg);
  return system.unstack(system.rhs(system.stack(state)));
}

/// Integrates from a state over t_span (a multiple of dt_sample) and returns
/// the trajectory sampled every dt_sample, initial state included.
inline std::vector<FieldState> integrate(const FhnConfig& cfg, const FieldState& from,
                                         double t_span) {
  const int samples = static_cast<int>(std::llround(t_span / cfg.dt_sample));
  if (samples < 0 || std::abs(samples * cfg.dt_sample - t_span) > 1e-9 * std::max(t_span, 1.0))
    throw ConfigError("integrate: t_span must be a nonnegative multiple of dt_sample");
  const FhnSystem system(cfg);
  const FhnIntegrator stepper(system);
  std::vector<FieldState> out;
  out.reserve(static_cast<size_t>(samples) + 1);
  Eigen::VectorXd u = system.stack(from);
  out.push_back(system.unstack(u));
  for (int s = 0; s < samples; ++s) {
    stepper.advance_one_sample(u);
    out.push_back(system.unstack(u));
  }
  return out;
}

/// Adds the three forcing Gaussians u_i exp(-(x - x_i)^2) to the activator
/// field; the inhibitor is untouched.
inline FieldState perturb(const FieldState& state, const Eigen::Vector3d& u,
                          const FhnConfig& cfg) {
  const CosineBasis basis(cfg.n_modes, cfg.domain_length);
  Eigen::VectorXd bump = Eigen::VectorXd::Zero(cfg.n_modes);
  for (int i = 0; i < 3; ++i) {
    const double center = cfg.forcing_centers[static_cast<size_t>(i)];
    bump += u[i] * (-(basis.nodes.array() - center).square()).exp().matrix();
  }
  FieldState out = state;
  out.v += basis.to_spectral(bump);
  return out;
}

/// Newton solve of fhn_rhs = 0 seeded by relaxing a tanh front profile.
inline FieldState find_equilibrium(const FhnConfig& cfg) {
  const FhnSystem system(cfg);
  const CosineBasis& basis = system.basis();
  const int n = cfg.n_modes;

  const double mid = 0.5 * cfg.domain_length;
  Eigen::VectorXd v = (0.7 * ((basis.nodes.array() - mid) / 2.0).tanh()).matrix();
  Eigen::VectorXd w = (v.array() - cfg.c0).matrix() / cfg.c1;
  Eigen::VectorXd z(2 * n);
  z.head(n) = v;
  z.tail(n) = w;

  // Relax toward the attractor first so Newton starts inside its basin.
  {
    const FhnIntegrator stepper(system);
    Eigen::VectorXd u = system.spectral_state(z);
    const int warm = static_cast<int>(std::llround(200.0 / cfg.dt_sample));
    for (int s = 0; s < warm; ++s) stepper.advance_one_sample(u);
    z = system.physical_state(u);
  }

  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::VectorXd f = system.rhs_physical(z);
    const Eigen::VectorXd u = system.spectral_state(z);
    if (system.rhs(u).cwiseAbs().maxCoeff() < 1e-10) return system.unstack(u);

    const Eigen::VectorXd step = system.jacobian(z).partialPivLu().solve(-f);
    double alpha = 1.0;
    const double f0 = f.norm();
    for (int back = 0; back < 40; ++back) {
      const Eigen::VectorXd trial = z + alpha * step;
      if (system.rhs_physical(trial).norm() < f0) {
        z = trial;
        break;
      }
      alpha *= 0.5;
      if (back == 39) z += alpha * step;
    }
  }
  throw NoConvergence("find_equilibrium: no convergence after 200 iterations");
}

struct Linearization {
  Eigen::VectorXcd values;   // sorted by real part descending
  Eigen::MatrixXcd vectors;  // columns, unit norm, physical [v; w] layout
};

/// Eigendecomposition of the analytic Jacobian at an equilibrium; the leading
/// pair is the slowest linear mode used as ground truth for modes 2 and 3.
inline Linearization linearization_oracle(const FhnConfig& cfg, const FieldState& eq) {
  const FhnSystem system(cfg);
  const Eigen::VectorXd z = system.physical_state(system.stack(eq));
  Eigen::EigenSolver<Eigen::MatrixXd> es(system.jacobian(z));
  if (es.info() != Eigen::Success)
    throw EigensolverFailure("linearization_oracle: eigensolver failed");

  const Eigen::Index m = z.size();
  std::vector<Eigen::Index> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXcd vals = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&vals](Eigen::Index a, Eigen::Index b) {
    if (vals[a].real() != vals[b].real()) return vals[a].real() > vals[b].real();
    return vals[a].imag() > vals[b].imag();
  });

  Linearization out;
  out.values.resize(m);
  out.vectors.resize(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out.values[k] = vals[order[static_cast<size_t>(k)]];
    Eigen::VectorXcd col = es.eigenvectors().col(order[static_cast<size_t>(k)]);
    out.vectors.col(k) = col / col.norm();
  }
  return out;
}

/// Portable normal sampler: Box-Muller over mt19937_64, one normal per call,
/// exactly two engine draws each, so streams are reproducible everywhere.
class NormalSampler {
public:
  explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}

  double operator()() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::mt19937_64 gen_;
};

/// The full experiment: n_trajectories runs from the equilibrium, Gaussian
/// kicks applied immediately after the snapshot recorded at every
/// perturb_period, consecutive snapshots paired. Snapshot vectors are
/// physical collocation values, activator first. Trajectory t draws from a
/// stream seeded with rng_seed + t, three normals per perturbation.
inline std::vector<SnapshotSet> generate_dataset(const FhnConfig& cfg) {
  cfg.validate();
  const FhnSystem system(cfg);
  const FhnIntegrator stepper(system);
  const FieldState eq = find_equilibrium(cfg);
  const Eigen::VectorXd u0 = system.stack(eq);
  const int perturb_every = cfg.samples_per_perturbation();

  std::vector<SnapshotSet> out;
  out.reserve(static_cast<size_t>(cfg.n_trajectories));
  for (int traj = 0; traj < cfg.n_trajectories; ++traj) {
    NormalSampler normal(cfg.rng_seed + static_cast<std::uint64_t>(traj));
    Eigen::VectorXd u = u0;
    Eigen::MatrixXd snaps(cfg.n_snapshots, cfg.state_dim());
    for (int m = 0; m < cfg.n_snapshots; ++m) {
      snaps.row(m) = system.physical_state(u).transpose();
      if (m % perturb_every == 0) {
        Eigen::Vector3d kick;
        for (int i = 0; i < 3; ++i) kick[i] = cfg.forcing_stddev * normal();
        FieldState s = perturb(system.unstack(u), kick, cfg);
        u = system.stack(s);
      }
      if (m + 1 < cfg.n_snapshots) stepper.advance_one_sample(u);
    }
    SnapshotSet set;
    set.x = snaps.topRows(cfg.n_snapshots - 1);
    set.y = snaps.bottomRows(cfg.n_snapshots - 1);
    set.dt = cfg.dt_sample;
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace kdmd::fhn
