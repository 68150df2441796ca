#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "kdmd/errors.hpp"
#include "kdmd/kernels.hpp"
#include "kdmd/numerics.hpp"
#include "kdmd/types.hpp"

namespace kdmd {

/// Result of the kernel Extended DMD pipeline.
///
/// All stored matrices live in the fitted frame: when the fit normalized the
/// data, x_train holds the rescaled states and modes reconstructs those
/// rescaled states (phi_x * modes projects x_train onto the leading kernel
/// principal components). physical_modes() divides the scale back out so the
/// expansion x = sum_k xi_k phi_k(x) holds in the original units.
struct KoopmanDecomposition {
  Eigen::VectorXcd mu;          // discrete-time eigenvalues, |mu| descending
  Eigen::VectorXcd lambda;      // log(mu)/dt; NaN where undefined
  Eigen::MatrixXcd phi_x;       // M x r eigenfunction values at training points
  Eigen::MatrixXcd modes;       // r x N, row k = xi_k^T (fitted frame)
  Eigen::MatrixXcd efun_coeff;  // M x r, column k = Q Sigma^+ vhat_k
  TruncatedBasis basis;
  KernelSpec kernel;
  Eigen::MatrixXd x_train;      // M x N states in the fitted frame
  double scale = 1.0;
  bool has_dt = false;
  double dt = 0.0;

  // Diagnostics.
  double gram_condition = 0.0;   // (sigma_1 / sigma_r)^2 over the retained basis
  double vhat_condition = 0.0;
  bool singular_eigenbasis = false;  // modes fell back to pinv(phi_x)
  bool degenerate_eigenvalues = false;
  bool negative_real_mu = false;     // principal log hit the branch cut

  int rank() const { return static_cast<int>(mu.size()); }
  Eigen::Index snapshot_count() const { return x_train.rows(); }
  Eigen::Index state_dim() const { return x_train.cols(); }

  Eigen::MatrixXcd physical_modes() const { return modes / scale; }
};

namespace detail {

// |mu| below this multiple of the largest magnitude counts as a zero
// eigenvalue: no continuous-time value, excluded from decay ordering.
constexpr double kZeroMuRel = 1e-14;

inline bool is_zero_mu(const std::complex<double>& mu, double mu_max) {
  return std::abs(mu) <= kZeroMuRel * mu_max;
}

}  // namespace detail

/// Kernel Extended DMD: Gramians from the kernel, method-of-snapshots basis,
/// Khat = (Sigma^+ Q^T) Ahat (Q Sigma^+), then eigenvalues, eigenfunction
/// values Phi_x = Q Sigma_r Vhat and modes Xi = Vhat^-1 Sigma^+ Q^T X.
/// Never forms any feature-space object; cost is O(M^2 N) + O(M^3).
inline KoopmanDecomposition fit(const SnapshotSet& data, const KernelSpec& kernel,
                                const TruncationPolicy& policy, bool normalize = true) {
  data.validate();
  kernel.validate();

  KoopmanDecomposition d;
  d.kernel = kernel;
  d.scale = 1.0;
  SnapshotSet s = data;
  if (normalize) {
    auto [scaled, factor] = normalize_snapshots(data);
    s = std::move(scaled);
    d.scale = factor;
  }

  const GramPair grams = gram_pair(kernel, s);

  d.basis = truncated_sym_eig(grams.ghat, policy);
  const Eigen::VectorXd sig_inv = pinv_diag(d.basis.sigma);
  const int r = d.basis.rank();
  d.gram_condition = (d.basis.sigma[0] / d.basis.sigma[r - 1]) *
                     (d.basis.sigma[0] / d.basis.sigma[r - 1]);

  const Eigen::MatrixXd projected = d.basis.q.transpose() * grams.ahat * d.basis.q;
  const Eigen::MatrixXd khat =
      sig_inv.asDiagonal() * projected * sig_inv.asDiagonal();

  const EigenPairs ep = general_eig(khat);
  d.mu = ep.values;
  d.vhat_condition = ep.condition;
  d.degenerate_eigenvalues = ep.degenerate;

  d.phi_x = (d.basis.q * d.basis.sigma.asDiagonal()).cast<std::complex<double>>() * ep.right;
  d.efun_coeff = (d.basis.q * sig_inv.asDiagonal()).cast<std::complex<double>>() * ep.right;
  d.x_train = s.x;

  const Eigen::MatrixXcd projected_x =
      (sig_inv.asDiagonal() * (d.basis.q.transpose() * s.x)).cast<std::complex<double>>();
  if (ep.defective) {
    // Vhat is numerically singular: regress the states on the eigenfunction
    // values instead of applying Vhat^-1.
    d.singular_eigenbasis = true;
    d.modes = d.phi_x.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                  .solve(s.x.cast<std::complex<double>>());
  } else {
    d.modes = ep.left * projected_x;
  }

  if (s.dt) {
    d.has_dt = true;
    d.dt = *s.dt;
    d.lambda.resize(r);
    const double mu_max = d.mu.cwiseAbs().maxCoeff();
    const auto nan = std::complex<double>(std::numeric_limits<double>::quiet_NaN(),
                                          std::numeric_limits<double>::quiet_NaN());
    for (int k = 0; k < r; ++k) {
      if (detail::is_zero_mu(d.mu[k], mu_max)) {
        d.lambda[k] = nan;
        continue;
      }
      if (d.mu[k].imag() == 0.0 && d.mu[k].real() < 0.0) d.negative_real_mu = true;
      d.lambda[k] = std::log(d.mu[k]) / d.dt;  // principal branch
    }
  }
  return d;
}

/// Eigenfunction values (phi_1(x), ..., phi_r(x)) at a new state:
/// the kernel row against the training data times Q Sigma^+ Vhat.
/// O(M N) per evaluation.
inline Eigen::VectorXcd eigenfunction_at(const KoopmanDecomposition& d,
                                         const Eigen::VectorXd& x) {
  if (x.size() != d.state_dim())
    throw DimensionMismatch("eigenfunction_at: state has wrong dimension");
  const Eigen::VectorXd xs = x * d.scale;
  const Eigen::RowVectorXd row = kernel_row(d.kernel, xs, d.x_train);
  return (row.cast<std::complex<double>>() * d.efun_coeff).transpose();
}

/// One-step prediction F(x) = sum_k mu_k xi_k phi_k(x), mapped back to
/// physical units. The imaginary residue must cancel across conjugate pairs.
inline Eigen::VectorXd predict(const KoopmanDecomposition& d, const Eigen::VectorXd& x) {
  const Eigen::VectorXcd phi = eigenfunction_at(d, x);
  const Eigen::VectorXcd y = d.modes.transpose() * d.mu.cwiseProduct(phi);
  const double imag_norm = y.imag().norm();
  if (imag_norm > 1e-6 * std::max(y.norm(), std::numeric_limits<double>::min()))
    throw ConjugateImbalance("predict: imaginary residue exceeds 1e-6 of result norm");
  return y.real() / d.scale;
}

struct Reconstruction {
  Eigen::MatrixXd xhat;  // M x N, physical units
  double residual = 0.0; // ||X - Xhat||_F / ||X||_F
};

/// Re(phi_x * modes): the projection of the training states onto the leading
/// r kernel principal components, returned in physical units.
inline Reconstruction reconstruct(const KoopmanDecomposition& d) {
  const Eigen::MatrixXcd prod = d.phi_x * d.modes;
  Reconstruction out;
  out.residual = (d.x_train - prod.real()).norm() / d.x_train.norm();
  out.xhat = prod.real() / d.scale;
  return out;
}

struct SelectionCriterion {
  enum class Kind { slowest_decay, largest_magnitude, top_n };
  Kind kind = Kind::slowest_decay;
  int n = 0;

  static SelectionCriterion slowest_decay() { return {Kind::slowest_decay, 0}; }
  static SelectionCriterion largest_magnitude() { return {Kind::largest_magnitude, 0}; }
  static SelectionCriterion top_n(int n) {
    if (n < 0) throw ConfigError("top_n: n must be nonnegative");
    return {Kind::top_n, n};
  }
};

/// Tuple ordering for reporting. slowest_decay sorts by Re(lambda) descending
/// (equivalently log|mu| when no dt is present) and drops zero eigenvalues,
/// which have no continuous-time counterpart. Indices refer to positions in
/// d.mu; nothing is mutated.
inline std::vector<int> select_tuples(const KoopmanDecomposition& d,
                                      const SelectionCriterion& criterion) {
  const int r = d.rank();
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(r));

  if (criterion.kind == SelectionCriterion::Kind::largest_magnitude) {
    for (int k = 0; k < r; ++k) idx.push_back(k);
    std::stable_sort(idx.begin(), idx.end(), [&d](int a, int b) {
      return std::abs(d.mu[a]) > std::abs(d.mu[b]);
    });
    return idx;
  }

  const double mu_max = d.mu.cwiseAbs().maxCoeff();
  for (int k = 0; k < r; ++k)
    if (!detail::is_zero_mu(d.mu[k], mu_max)) idx.push_back(k);
  std::stable_sort(idx.begin(), idx.end(), [&d](int a, int b) {
    const double ra = d.has_dt ? d.lambda[a].real() : std::log(std::abs(d.mu[a]));
    const double rb = d.has_dt ? d.lambda[b].real() : std::log(std::abs(d.mu[b]));
    return ra > rb;
  });
  if (criterion.kind == SelectionCriterion::Kind::top_n &&
      static_cast<int>(idx.size()) > criterion.n)
    idx.resize(static_cast<size_t>(criterion.n));
  return idx;
}

}  // namespace kdmd
