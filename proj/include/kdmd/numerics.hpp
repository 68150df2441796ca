#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "kdmd/errors.hpp"
#include "kdmd/types.hpp"

namespace kdmd {

/// Leading eigenvectors Q and singular values sigma of a Gramian
/// G = Q * diag(sigma^2) * Q^T, i.e. the method-of-snapshots factorization.
struct TruncatedBasis {
  Eigen::MatrixXd q;      // M x r, orthonormal columns
  Eigen::VectorXd sigma;  // r, descending, strictly positive

  int rank() const { return static_cast<int>(sigma.size()); }
  Eigen::Index snapshot_count() const { return q.rows(); }
};

/// Eigendecomposition of a square Gramian. Eigenvalues are interpreted as
/// squared singular values: retained sigma_k = sqrt(eig_k). Negative
/// eigenvalues (roundoff on a PSD matrix) and zeros are discarded before
/// the truncation policy is applied; a relative threshold cuts the list
/// actually decomposed here, the descending eigenvalues.
inline TruncatedBasis truncated_sym_eig(const Eigen::MatrixXd& g,
                                        const TruncationPolicy& policy) {
  policy.validate();
  if (g.rows() != g.cols() || g.rows() < 1)
    throw DimensionMismatch("truncated_sym_eig: matrix must be square and nonempty");
  const double gmax = g.cwiseAbs().maxCoeff();
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * std::max(gmax, std::numeric_limits<double>::min()))
    throw NotSymmetric("truncated_sym_eig: input not symmetric within 1e-10 relative");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  if (es.info() != Eigen::Success)
    throw EigensolverFailure("truncated_sym_eig: symmetric eigensolver failed");

  // Eigen returns ascending order; walk from the back for descending.
  const Eigen::Index m = g.rows();
  const Eigen::VectorXd& evals = es.eigenvalues();

  std::vector<Eigen::Index> positive;
  positive.reserve(static_cast<size_t>(m));
  for (Eigen::Index i = m - 1; i >= 0; --i)
    if (evals[i] > 0.0) positive.push_back(i);

  if (positive.empty()) throw RankZero("truncated_sym_eig: no positive eigenvalue");

  Eigen::VectorXd evals_desc(static_cast<Eigen::Index>(positive.size()));
  for (size_t k = 0; k < positive.size(); ++k)
    evals_desc[static_cast<Eigen::Index>(k)] = evals[positive[k]];

  const int r = policy.retained(evals_desc);
  if (r == 0) throw RankZero("truncated_sym_eig: truncation policy retained nothing");

  TruncatedBasis basis;
  basis.sigma = evals_desc.head(r).cwiseSqrt();
  basis.q.resize(m, r);
  for (int k = 0; k < r; ++k) basis.q.col(k) = es.eigenvectors().col(positive[static_cast<size_t>(k)]);
  return basis;
}

/// Right and left eigenpairs of a real square matrix with biorthogonal
/// scaling: right eigenvectors have unit norm, left rows satisfy
/// left * right = I. Ordering is |value| descending, ties broken by
/// descending imaginary part, so conjugate pairs sit adjacent with the
/// positive-imaginary member first.
struct EigenPairs {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd right;  // columns
  Eigen::MatrixXcd left;   // rows w_i^*
  double condition = 0.0;  // 2-norm condition of the right-eigenvector matrix
  bool defective = false;  // condition > 1e12; left computed by pseudoinverse
  bool degenerate = false; // some eigenvalue pair has relative gap < 1e-10

  Eigen::Index size() const { return values.size(); }
};

namespace detail {

inline Eigen::MatrixXcd pseudo_inverse(const Eigen::MatrixXcd& a, double rcond = 1e-13) {
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = rcond * (s.size() ? s[0] : 0.0);
  Eigen::VectorXd sinv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > cutoff) sinv[i] = 1.0 / s[i];
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().adjoint();
}

}  // namespace detail

inline EigenPairs general_eig(const Eigen::MatrixXd& khat) {
  if (khat.rows() != khat.cols() || khat.rows() < 1)
    throw DimensionMismatch("general_eig: matrix must be square and nonempty");
  if (!khat.allFinite()) throw DegenerateData("general_eig: non-finite entries");

  Eigen::EigenSolver<Eigen::MatrixXd> es(khat);
  if (es.info() != Eigen::Success)
    throw EigensolverFailure("general_eig: eigensolver failed");

  const Eigen::Index n = khat.rows();
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXcd raw = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&raw](Eigen::Index a, Eigen::Index b) {
    const double ma = std::abs(raw[a]), mb = std::abs(raw[b]);
    if (ma != mb) return ma > mb;
    return raw[a].imag() > raw[b].imag();
  });

  EigenPairs ep;
  ep.values.resize(n);
  ep.right.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    ep.values[k] = raw[order[static_cast<size_t>(k)]];
    Eigen::VectorXcd v = es.eigenvectors().col(order[static_cast<size_t>(k)]);
    ep.right.col(k) = v / v.norm();
  }

  // Degeneracy scan: pairs closer than 1e-10 relative make the
  // biorthogonal scaling meaningful only blockwise.
  for (Eigen::Index i = 0; i < n && !ep.degenerate; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = std::abs(ep.values[i] - ep.values[j]);
      const double m = std::max(std::abs(ep.values[i]), std::abs(ep.values[j]));
      if (m == 0.0 || d < 1e-10 * m) {
        ep.degenerate = true;
        break;
      }
    }
  }

  Eigen::BDCSVD<Eigen::MatrixXcd> svd(ep.right);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  ep.condition = smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity();
  ep.defective = !(ep.condition <= 1e12);

  if (ep.defective) {
    ep.left = detail::pseudo_inverse(ep.right);
  } else {
    ep.left = ep.right.partialPivLu().solve(
        Eigen::MatrixXcd::Identity(n, n));
  }
  return ep;
}

/// Elementwise reciprocal of retained singular values.
inline Eigen::VectorXd pinv_diag(const Eigen::VectorXd& sigma) {
  Eigen::VectorXd out(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0))
      throw ZeroSingularValue("pinv_diag: nonpositive singular value (truncate first)");
    out[i] = 1.0 / sigma[i];
  }
  return out;
}

}  // namespace kdmd
