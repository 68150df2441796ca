#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kdmd/errors.hpp"
#include "kdmd/types.hpp"

namespace kdmd {

/// A symmetric kernel f(x, z) = psi(z)^T psi(x) for an implicitly defined
/// feature map psi. polynomial uses the inhomogeneous form (1 + z^T x)^alpha.
struct KernelSpec {
  enum class Family { polynomial, gaussian, linear };

  Family family = Family::linear;
  int degree = 1;      // polynomial alpha
  double width = 1.0;  // gaussian sigma

  static KernelSpec polynomial(int alpha) {
    KernelSpec k;
    k.family = Family::polynomial;
    k.degree = alpha;
    k.validate();
    return k;
  }

  static KernelSpec gaussian(double sigma) {
    KernelSpec k;
    k.family = Family::gaussian;
    k.width = sigma;
    k.validate();
    return k;
  }

  static KernelSpec linear() { return KernelSpec{}; }

  void validate() const {
    if (family == Family::polynomial && degree < 1)
      throw ConfigError("KernelSpec: polynomial degree must be >= 1");
    if (family == Family::gaussian && !(width > 0.0))
      throw ConfigError("KernelSpec: gaussian width must be positive");
  }

  std::string to_string() const {
    std::ostringstream os;
    switch (family) {
      case Family::polynomial: os << "polynomial:" << degree; break;
      case Family::gaussian: os << "gaussian:" << width; break;
      case Family::linear: os << "linear"; break;
    }
    return os.str();
  }

  /// Parses "polynomial:ALPHA", "gaussian:SIGMA" or "linear".
  static KernelSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    try {
      if (name == "linear") {
        if (!arg.empty()) throw ConfigError("kernel 'linear' takes no parameter");
        return linear();
      }
      if (name == "polynomial") {
        if (arg.empty()) throw ConfigError("kernel 'polynomial' needs :ALPHA");
        size_t used = 0;
        const int alpha = std::stoi(arg, &used);
        if (used != arg.size()) throw ConfigError("bad polynomial degree '" + arg + "'");
        return polynomial(alpha);
      }
      if (name == "gaussian") {
        if (arg.empty()) throw ConfigError("kernel 'gaussian' needs :SIGMA");
        size_t used = 0;
        const double sigma = std::stod(arg, &used);
        if (used != arg.size()) throw ConfigError("bad gaussian width '" + arg + "'");
        return gaussian(sigma);
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("unparsable kernel parameter in '" + text + "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("kernel parameter out of range in '" + text + "'");
    }
    throw ConfigError("unknown kernel '" + text +
                      "' (expected polynomial:ALPHA, gaussian:SIGMA or linear)");
  }
};

/// Single kernel evaluation, O(N).
inline double eval(const KernelSpec& kernel, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& z) {
  kernel.validate();
  if (x.size() != z.size())
    throw DimensionMismatch("kernel eval: vectors of different length");
  switch (kernel.family) {
    case KernelSpec::Family::linear: return z.dot(x);
    case KernelSpec::Family::polynomial:
      return std::pow(1.0 + z.dot(x), static_cast<double>(kernel.degree));
    case KernelSpec::Family::gaussian:
      return std::exp(-(x - z).squaredNorm() / (kernel.width * kernel.width));
  }
  return 0.0;  // unreachable
}

/// All kernel values f(x, row_j(rows)) as a row vector [1 x M].
inline Eigen::RowVectorXd kernel_row(const KernelSpec& kernel, const Eigen::VectorXd& x,
                                     const Eigen::MatrixXd& rows) {
  kernel.validate();
  if (x.size() != rows.cols())
    throw DimensionMismatch("kernel_row: state length does not match data dimension");
  switch (kernel.family) {
    case KernelSpec::Family::linear: return (rows * x).transpose();
    case KernelSpec::Family::polynomial:
      return ((rows * x).array() + 1.0)
          .pow(static_cast<double>(kernel.degree))
          .matrix()
          .transpose();
    case KernelSpec::Family::gaussian: {
      Eigen::VectorXd d2 = rows.rowwise().squaredNorm();
      d2.array() += x.squaredNorm();
      d2.noalias() -= 2.0 * (rows * x);
      d2 = d2.cwiseMax(0.0);
      return (-d2 / (kernel.width * kernel.width)).array().exp().matrix().transpose();
    }
  }
  return Eigen::RowVectorXd();  // unreachable
}

/// Gram matrix with entry (i, j) = f(row_i(a), row_j(b)). With a = b = X this
/// is Ghat; with a = Y, b = X it is Ahat. Cost O(M^2 N) via one matrix product.
inline Eigen::MatrixXd gram(const KernelSpec& kernel, const Eigen::MatrixXd& a,
                            const Eigen::MatrixXd& b) {
  kernel.validate();
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("gram: matrices must have identical shape");
  switch (kernel.family) {
    case KernelSpec::Family::linear: return a * b.transpose();
    case KernelSpec::Family::polynomial:
      return ((a * b.transpose()).array() + 1.0)
          .pow(static_cast<double>(kernel.degree))
          .matrix();
    case KernelSpec::Family::gaussian: {
      const Eigen::VectorXd a2 = a.rowwise().squaredNorm();
      const Eigen::VectorXd b2 = b.rowwise().squaredNorm();
      Eigen::MatrixXd d2 = -2.0 * (a * b.transpose());
      d2.colwise() += a2;
      d2.rowwise() += b2.transpose();
      d2 = d2.cwiseMax(0.0);
      return (-d2 / (kernel.width * kernel.width)).array().exp().matrix();
    }
  }
  return Eigen::MatrixXd();  // unreachable
}

/// The two kernel matrices the pipeline needs from data: Ghat(i,j) =
/// f(x_i, x_j) and Ahat(i,j) = f(y_i, x_j). Ghat is symmetric positive
/// semidefinite up to roundoff.
struct GramPair {
  Eigen::MatrixXd ghat;
  Eigen::MatrixXd ahat;
};

inline GramPair gram_pair(const KernelSpec& kernel, const SnapshotSet& s) {
  s.validate();
  return {gram(kernel, s.x, s.x), gram(kernel, s.y, s.x)};
}

/// Rescales x and y by the same factor so the mean Euclidean row norm of x
/// becomes 1. Returns the applied factor so modes can be mapped back to
/// physical units.
inline std::pair<SnapshotSet, double> normalize_snapshots(const SnapshotSet& s) {
  s.validate();
  const double total = s.x.rowwise().norm().sum();
  if (!(total > 0.0))
    throw DegenerateData("normalize_snapshots: all states are zero");
  const double scale = static_cast<double>(s.x.rows()) / total;
  SnapshotSet out = s;
  out.x *= scale;
  out.y *= scale;
  return {out, scale};
}

/// Median pairwise distance over (at most) the first max_rows rows; the
/// usual default for an unset gaussian width.
inline double gaussian_median_heuristic(const Eigen::MatrixXd& x, int max_rows = 500) {
  const Eigen::Index m = std::min<Eigen::Index>(x.rows(), max_rows);
  if (m < 2) throw DegenerateData("gaussian_median_heuristic: need at least 2 rows");
  std::vector<double> d;
  d.reserve(static_cast<size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      d.push_back((x.row(i) - x.row(j)).norm());
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  const double median = d[d.size() / 2];
  if (!(median > 0.0))
    throw DegenerateData("gaussian_median_heuristic: zero median distance");
  return median;
}

}  // namespace kdmd
