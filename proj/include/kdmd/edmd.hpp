#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "kdmd/errors.hpp"
#include "kdmd/numerics.hpp"
#include "kdmd/types.hpp"

namespace kdmd {

/// Explicit monomial feature map psi: R^N -> R^K used as the independent
/// check on the kernel pipeline. With multinomial square-root weights the
/// lifted inner product reproduces the inhomogeneous polynomial kernel
/// exactly: psi(z)^T psi(x) = (1 + z^T x)^alpha.
struct ExplicitDictionary {
  int state_dim = 0;
  int max_degree = 0;
  std::vector<std::vector<int>> exponents;  // ordered by (degree, lex descending)
  Eigen::VectorXd weights;
  bool weighted = true;

  int size() const { return static_cast<int>(exponents.size()); }

  /// Full monomial dictionary of total degree <= alpha, K = C(N+alpha, alpha).
  static ExplicitDictionary monomials(int n, int alpha, bool weighted = true) {
    if (n < 1) throw ConfigError("ExplicitDictionary: state dimension must be >= 1");
    if (alpha < 1) throw ConfigError("ExplicitDictionary: degree must be >= 1");
    ExplicitDictionary d;
    d.state_dim = n;
    d.max_degree = alpha;
    d.weighted = weighted;
    std::vector<int> current(static_cast<size_t>(n), 0);
    for (int degree = 0; degree <= alpha; ++degree)
      append_compositions(d.exponents, current, 0, degree);
    d.weights.resize(d.size());
    for (int k = 0; k < d.size(); ++k)
      d.weights[k] = weighted ? std::sqrt(multinomial(alpha, d.exponents[static_cast<size_t>(k)]))
                              : 1.0;
    return d;
  }

  /// psi(x) = x: the DMD baseline dictionary (no constant term).
  static ExplicitDictionary identity(int n) {
    if (n < 1) throw ConfigError("ExplicitDictionary: state dimension must be >= 1");
    ExplicitDictionary d;
    d.state_dim = n;
    d.max_degree = 1;
    d.weighted = false;
    for (int i = 0; i < n; ++i) {
      std::vector<int> e(static_cast<size_t>(n), 0);
      e[static_cast<size_t>(i)] = 1;
      d.exponents.push_back(std::move(e));
    }
    d.weights = Eigen::VectorXd::Ones(n);
    return d;
  }

private:
  // Exponent vectors of exact total degree, first position descending, which
  // yields lexicographically descending order within a degree block.
  static void append_compositions(std::vector<std::vector<int>>& out,
                                  std::vector<int>& current, size_t pos, int remaining) {
    if (pos + 1 == current.size()) {
      current[pos] = remaining;
      out.push_back(current);
      current[pos] = 0;
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current[pos] = e;
      append_compositions(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
  }

  // alpha! / ((alpha - |k|)! * prod k_i!) via lgamma; exact to ~1e-15.
  static double multinomial(int alpha, const std::vector<int>& k) {
    int total = 0;
    for (int e : k) total += e;
    double lg = std::lgamma(alpha + 1.0) - std::lgamma(alpha - total + 1.0);
    for (int e : k) lg -= std::lgamma(e + 1.0);
    return std::exp(lg);
  }
};

/// Psi_x: row m = psi(x_m)^T. Guarded against feature matrices too large to
/// materialize.
inline Eigen::MatrixXd lift(const ExplicitDictionary& dict, const Eigen::MatrixXd& x) {
  if (x.cols() != dict.state_dim)
    throw DimensionMismatch("lift: data dimension does not match dictionary");
  const Eigen::Index m = x.rows();
  const Eigen::Index k = dict.size();
  if (static_cast<double>(m) * static_cast<double>(k) > 1e8)
    throw DictionaryTooLarge("lift: M*K exceeds 1e8 entries");
  Eigen::MatrixXd out(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double v = dict.weights[j];
      const auto& e = dict.exponents[static_cast<size_t>(j)];
      for (int a = 0; a < dict.state_dim; ++a)
        if (e[static_cast<size_t>(a)] != 0)
          v *= std::pow(x(i, a), e[static_cast<size_t>(a)]);
      out(i, j) = v;
    }
  }
  return out;
}

enum class EdmdRoute {
  pseudoinverse,     // K = Psi_x^+ Psi_y
  normal_equations,  // K = (Psi_x^T Psi_x)^+ (Psi_x^T Psi_y)
};

/// The explicit Extended DMD matrix. Both routes are algebraically identical;
/// the second is cheaper when M >> K and is kept for the equivalence check.
inline Eigen::MatrixXd edmd_k_matrix(const SnapshotSet& s, const ExplicitDictionary& dict,
                                     const TruncationPolicy& policy,
                                     EdmdRoute route = EdmdRoute::pseudoinverse) {
  s.validate();
  const Eigen::MatrixXd psi_x = lift(dict, s.x);
  const Eigen::MatrixXd psi_y = lift(dict, s.y);

  if (route == EdmdRoute::pseudoinverse) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(psi_x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    Eigen::Index positive = 0;
    while (positive < sv.size() && sv[positive] > 0.0) ++positive;
    if (positive == 0) throw RankZero("edmd_k_matrix: zero feature matrix");
    const int r = policy.retained(sv.head(positive));
    if (r == 0) throw RankZero("edmd_k_matrix: truncation retained nothing");
    const Eigen::VectorXd sinv = sv.head(r).cwiseInverse();
    return svd.matrixV().leftCols(r) * sinv.asDiagonal() *
           (svd.matrixU().leftCols(r).transpose() * psi_y);
  }

  const Eigen::MatrixXd g = psi_x.transpose() * psi_x;
  const Eigen::MatrixXd a = psi_x.transpose() * psi_y;
  const TruncatedBasis basis = truncated_sym_eig(g, policy);
  const Eigen::VectorXd einv = basis.sigma.array().square().inverse();
  return basis.q * einv.asDiagonal() * (basis.q.transpose() * a);
}

/// Explicit Extended DMD decomposition: eigenvalues of K, right eigenvectors
/// as eigenfunction coefficients, and modes from regressing the states on the
/// eigenfunction values.
struct EdmdResult {
  Eigen::MatrixXd k_matrix;         // K x K
  Eigen::VectorXcd eigenvalues;     // ordering as general_eig
  Eigen::MatrixXcd efun_coeff;      // columns v_k
  Eigen::MatrixXcd left;            // rows w_k^*, biorthogonal to efun_coeff
  Eigen::MatrixXcd phi_x;           // M x K eigenfunction values at the data
  Eigen::MatrixXcd modes;           // K x N
  Eigen::VectorXd singular_values;  // of Psi_x, descending
  int retained = 0;
  double vhat_condition = 0.0;
  bool defective = false;
};

inline EdmdResult edmd_fit(const SnapshotSet& s, const ExplicitDictionary& dict,
                           const TruncationPolicy& policy) {
  s.validate();
  const Eigen::MatrixXd psi_x = lift(dict, s.x);
  const Eigen::MatrixXd psi_y = lift(dict, s.y);

  Eigen::BDCSVD<Eigen::MatrixXd> svd(psi_x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::Index positive = 0;
  while (positive < sv.size() && sv[positive] > 0.0) ++positive;
  if (positive == 0) throw RankZero("edmd_fit: zero feature matrix");
  const int r = policy.retained(sv.head(positive));
  if (r == 0) throw RankZero("edmd_fit: truncation retained nothing");

  EdmdResult out;
  out.singular_values = sv;
  out.retained = r;
  const Eigen::VectorXd sinv = sv.head(r).cwiseInverse();
  out.k_matrix = svd.matrixV().leftCols(r) * sinv.asDiagonal() *
                 (svd.matrixU().leftCols(r).transpose() * psi_y);

  const EigenPairs ep = general_eig(out.k_matrix);
  out.eigenvalues = ep.values;
  out.efun_coeff = ep.right;
  out.left = ep.left;
  out.vhat_condition = ep.condition;
  out.defective = ep.defective;
  out.phi_x = psi_x.cast<std::complex<double>>() * ep.right;
  out.modes = out.phi_x.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                  .solve(s.x.cast<std::complex<double>>());
  return out;
}

/// Greedy nearest-neighbor pairing of two spectra. Values with magnitude
/// <= 1e-10 are excluded as numerically zero; a pair is accepted only when
/// its distance is within tol.
struct SpectrumMatch {
  struct Pair {
    int index_a = 0;
    int index_b = 0;
    double distance = 0.0;
  };
  std::vector<Pair> matched;
  std::vector<int> unmatched_a;
  std::vector<int> unmatched_b;
  double max_distance = 0.0;

  bool all_matched() const { return unmatched_a.empty() && unmatched_b.empty(); }
};

inline SpectrumMatch match_spectra(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b,
                                   double tol) {
  constexpr double kNumericallyZero = 1e-10;
  std::vector<int> ia, ib;
  for (int i = 0; i < a.size(); ++i)
    if (std::abs(a[i]) > kNumericallyZero) ia.push_back(i);
  for (int j = 0; j < b.size(); ++j)
    if (std::abs(b[j]) > kNumericallyZero) ib.push_back(j);

  SpectrumMatch out;
  std::vector<bool> used_a(ia.size(), false), used_b(ib.size(), false);
  const size_t pairs = std::min(ia.size(), ib.size());
  for (size_t round = 0; round < pairs; ++round) {
    double best = std::numeric_limits<double>::infinity();
    size_t pa = 0, pb = 0;
    for (size_t i = 0; i < ia.size(); ++i) {
      if (used_a[i]) continue;
      for (size_t j = 0; j < ib.size(); ++j) {
        if (used_b[j]) continue;
        const double d = std::abs(a[ia[i]] - b[ib[j]]);
        if (d < best) {
          best = d;
          pa = i;
          pb = j;
        }
      }
    }
    if (!(best <= tol)) break;
    used_a[pa] = true;
    used_b[pb] = true;
    out.matched.push_back({ia[pa], ib[pb], best});
    out.max_distance = std::max(out.max_distance, best);
  }
  for (size_t i = 0; i < ia.size(); ++i)
    if (!used_a[i]) out.unmatched_a.push_back(ia[i]);
  for (size_t j = 0; j < ib.size(); ++j)
    if (!used_b[j]) out.unmatched_b.push_back(ib[j]);
  return out;
}

}  // namespace kdmd
