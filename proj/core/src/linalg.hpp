#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace kkr::detail {

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // matching columns
};

/// Largest `count` eigenpairs of a symmetric matrix (LAPACK dsyevr).
EigenPairs top_eigenpairs(const Eigen::MatrixXd& symmetric, std::size_t count);

}  // namespace kkr::detail
