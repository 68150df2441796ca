#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <sstream>

#include "kdmd/errors.hpp"

namespace kdmd {

/// Rank-selection rule applied to a descending list of singular values.
/// fixed_rank keeps the r largest; relative_threshold keeps every value
/// s with s >= tau * s_max. The retained set is always a prefix of the
/// descending order.
struct TruncationPolicy {
  enum class Mode { fixed_rank, relative_threshold };

  Mode mode = Mode::relative_threshold;
  int rank = 0;
  double threshold = 0.0;

  static TruncationPolicy fixed_rank(int r) {
    TruncationPolicy p;
    p.mode = Mode::fixed_rank;
    p.rank = r;
    p.validate();
    return p;
  }

  static TruncationPolicy relative_threshold(double tau) {
    TruncationPolicy p;
    p.mode = Mode::relative_threshold;
    p.threshold = tau;
    p.validate();
    return p;
  }

  void validate() const {
    if (mode == Mode::fixed_rank) {
      if (rank < 1) throw ConfigError("TruncationPolicy: fixed rank must be >= 1");
    } else {
      if (!(threshold > 0.0) || threshold > 1.0)
        throw ConfigError("TruncationPolicy: relative threshold must be in (0, 1]");
    }
  }

  /// Number of retained entries for a descending vector of positive values.
  int retained(const Eigen::VectorXd& descending) const {
    validate();
    const int n = static_cast<int>(descending.size());
    if (n == 0) return 0;
    if (mode == Mode::fixed_rank) return std::min(rank, n);
    const double cutoff = threshold * descending[0];
    int r = 0;
    while (r < n && descending[r] >= cutoff) ++r;
    return r;
  }
};

/// Paired data matrices: row m of x is a state, row m of y its image one
/// step later. dt is the sampling interval when the pairs come from a
/// continuously sampled trajectory.
struct SnapshotSet {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  std::optional<double> dt;

  Eigen::Index count() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }

  void validate() const {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
      std::ostringstream os;
      os << "SnapshotSet: x is " << x.rows() << "x" << x.cols() << " but y is "
         << y.rows() << "x" << y.cols();
      throw DimensionMismatch(os.str());
    }
    if (x.rows() < 2) throw DegenerateData("SnapshotSet: need at least 2 snapshot pairs");
    if (!x.allFinite() || !y.allFinite())
      throw DegenerateData("SnapshotSet: non-finite entries");
    if (dt && !(*dt > 0.0)) throw ConfigError("SnapshotSet: dt must be positive");
  }
};

}  // namespace kdmd
