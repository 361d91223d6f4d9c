#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hmcperfect {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised when a position, momentum or energy leaves the finite doubles.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for parameter combinations the library deliberately does not support.
class UnsupportedConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bitwise equality of two positions; the coalescence test.
inline bool same_point(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace hmcperfect
