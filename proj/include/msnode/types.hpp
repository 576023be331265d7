#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace msnode {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Shape or length disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN or infinity surfaced at an operation boundary. `location` is the
// substep (integrator) or interval (shooting) where it was first seen, or -1.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, Index location = -1)
      : std::runtime_error(what), location_(location) {}
  Index location() const { return location_; }

 private:
  Index location_;
};

inline void require_length(Index actual, Index expected, const char* what) {
  if (actual != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
  }
}

}  // namespace msnode
