#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hforce {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Category of a failure. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidArgument,  // caller broke a precondition (dimensions, ranges)
  kConfig,           // malformed or inconsistent configuration / model file
  kData,             // data-dependent failure (rank deficiency, divergence, short logs)
  kNumerical,        // solver did not converge or hit a singularity
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string& what,
                    ErrorKind kind = ErrorKind::kInvalidArgument) {
  if (!cond) throw Error(kind, what);
}

inline void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorKind::kInvalidArgument, std::string(what) + ": expected length " +
                                                 std::to_string(want) + ", got " +
                                                 std::to_string(got));
  }
}

}  // namespace hforce
