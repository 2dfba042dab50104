#include "linalg.hpp"

#include <string>
#include <vector>

#include <lapacke.h>

#include "kkr/errors.hpp"

namespace kkr::detail {

EigenPairs top_eigenpairs(const Eigen::MatrixXd& symmetric, std::size_t count) {
  const auto n = static_cast<lapack_int>(symmetric.rows());
  if (symmetric.cols() != symmetric.rows()) throw DimensionMismatch("matrix is not square");
  if (count < 1 || count > static_cast<std::size_t>(n)) throw InvalidArgument("eigenpair count out of range");
  const auto want = static_cast<lapack_int>(count);

  Eigen::MatrixXd a = symmetric;  // destroyed by dsyevr
  Eigen::VectorXd w(n);
  Eigen::MatrixXd z(n, want);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(want));
  lapack_int found = 0;
  const lapack_int info =
      LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, n - want + 1, n, 0.0, &found,
                     w.data(), z.data(), n, support.data());
  if (info != 0 || found != want) {
    throw SingularGram("symmetric eigensolver failed (info " + std::to_string(info) + ")");
  }
  EigenPairs out;
  out.values = w.head(want).reverse();
  out.vectors = z.rowwise().reverse();
  return out;
}

}  // namespace kkr::detail
