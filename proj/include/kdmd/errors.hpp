#pragma once

#include <stdexcept>
#include <string>

namespace kdmd {

// Failure category, used by the CLI to pick an exit code:
// config -> 2, data -> 3, numerical -> 4.
enum class ErrorKind { config, data, numerical };

class KdmdError : public std::runtime_error {
public:
  KdmdError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct ConfigError : KdmdError {
  explicit ConfigError(const std::string& m) : KdmdError(ErrorKind::config, m) {}
};
struct DictionaryTooLarge : KdmdError {
  explicit DictionaryTooLarge(const std::string& m) : KdmdError(ErrorKind::config, m) {}
};

struct IoError : KdmdError {
  explicit IoError(const std::string& m) : KdmdError(ErrorKind::data, m) {}
};
struct DimensionMismatch : KdmdError {
  explicit DimensionMismatch(const std::string& m) : KdmdError(ErrorKind::data, m) {}
};
struct DegenerateData : KdmdError {
  explicit DegenerateData(const std::string& m) : KdmdError(ErrorKind::data, m) {}
};

struct NotSymmetric : KdmdError {
  explicit NotSymmetric(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};
struct RankZero : KdmdError {
  explicit RankZero(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};
struct ZeroSingularValue : KdmdError {
  explicit ZeroSingularValue(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};
struct ConjugateImbalance : KdmdError {
  explicit ConjugateImbalance(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};
struct Instability : KdmdError {
  explicit Instability(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};
struct NoConvergence : KdmdError {
  explicit NoConvergence(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};
struct EigensolverFailure : KdmdError {
  explicit EigensolverFailure(const std::string& m) : KdmdError(ErrorKind::numerical, m) {}
};

}  // namespace kdmd
