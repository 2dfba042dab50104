#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "kkr/dynamics.hpp"
#include "kkr/spectra.hpp"

namespace kkr {

enum class BaseKernelKind {
  RBF,
  Linear,  // x^T y; length_scale unused. Not bounded, meant for exact test cases.
};

/// Scalar base kernel on the state space.
struct BaseKernelSpec {
  BaseKernelKind kind = BaseKernelKind::RBF;
  double length_scale = 1.0;

  void validate() const;
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y) const;
  /// k(rows of a, rows of b).
  Eigen::MatrixXd cross(const Eigen::Ref<const Eigen::MatrixXd>& a,
                        const Eigen::Ref<const Eigen::MatrixXd>& b) const;
};

/// exp(-|x - y|^2 / (2 l^2)).
double rbf(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
           double length_scale);

/// How the time pullback is weighted inside each eigenfunction kernel.
enum class WeightMode {
  Normalized,  // unit-norm pullback weights (default)
  Literal,     // (mu^-m)(conj(mu)^-n) / (H+1)^2 as in the discrete double sum
};

/// Base kernel between all time samples of two trajectories,
/// block(m, n) = k(a(t_m), b(t_n)).
Eigen::MatrixXd base_block(const Trajectory& a, const Trajectory& b, const BaseKernelSpec& base);

/// Scalar eigenfunction kernel
///   sum_{m,n} w_m block(m, n) conj(w'_n)
/// with w the pullback weights of `left` / `right` in the chosen mode.
/// Throws OverflowError if the literal weights are not representable.
Complex scalar_eigen_kernel(const Eigen::Ref<const Eigen::MatrixXd>& block, const MuPowers& left,
                            const MuPowers& right, WeightMode mode = WeightMode::Normalized);

/// (H+1)x(H+1) matrix kernel powers powers^H * scalar kernel; rank one in time.
Eigen::MatrixXcd matrix_eigen_kernel(const Trajectory& a, const Trajectory& b, const MuPowers& mu,
                                     const BaseKernelSpec& base,
                                     WeightMode mode = WeightMode::Normalized);

/// Sum of matrix eigenfunction kernels over the spectrum, shared base kernel.
Eigen::MatrixXcd koopman_kernel(const Trajectory& a, const Trajectory& b, const Spectrum& spectrum,
                                const BaseKernelSpec& base,
                                WeightMode mode = WeightMode::Normalized);

/// As above with a separate base kernel per eigenvalue (`bases.size()`
/// must equal the spectrum size).
Eigen::MatrixXcd koopman_kernel(const Trajectory& a, const Trajectory& b, const Spectrum& spectrum,
                                std::span<const BaseKernelSpec> bases,
                                WeightMode mode = WeightMode::Normalized);

/// Base kernel over every time sample of every trajectory,
/// (i, i', m, n) -> k(x_i(t_m), x_i'(t_n)), stored as one symmetric
/// N(H+1) x N(H+1) matrix with trajectory-major indices i (H+1) + m.
class BaseGramTensor {
 public:
  BaseGramTensor(const Dataset& dataset, const BaseKernelSpec& base);

  std::size_t trajectories() const { return n_; }
  std::size_t samples() const { return len_; }
  double operator()(std::size_t i, std::size_t ip, std::size_t m, std::size_t n) const {
    return values_(static_cast<Eigen::Index>(i * len_ + m), static_cast<Eigen::Index>(ip * len_ + n));
  }
  const Eigen::MatrixXd& matrix() const { return values_; }

 private:
  std::size_t n_;
  std::size_t len_;
  Eigen::MatrixXd values_;
};

/// Block Gram of the matrix Koopman kernel over a dataset.
struct KoopmanGram {
  /// N(H+1) x N(H+1), row index i (H+1) + h.
  Eigen::MatrixXcd matrix;
  /// Column j holds the N x N scalar kernel of eigenvalue j, column-major.
  Eigen::MatrixXcd scalar_kernels;
  Spectrum spectrum;
  WeightMode mode = WeightMode::Normalized;
  std::size_t trajectories = 0;
  std::size_t horizon = 0;

  Eigen::Map<const Eigen::MatrixXcd> scalar_kernel(std::size_t j) const {
    const auto n = static_cast<Eigen::Index>(trajectories);
    return {scalar_kernels.col(static_cast<Eigen::Index>(j)).data(), n, n};
  }
};

/// Computes the base Gram once, contracts it with the pullback weights of
/// every eigenvalue and accumulates the rank-one time blocks.
/// Throws DimensionMismatch if trajectories differ in H.
KoopmanGram assemble_gram(const Dataset& dataset, const Spectrum& spectrum, const BaseKernelSpec& base,
                          WeightMode mode = WeightMode::Normalized);

/// Same assembly from a precomputed base Gram.
KoopmanGram assemble_gram(const BaseGramTensor& base_gram, const Spectrum& spectrum,
                          WeightMode mode = WeightMode::Normalized);

/// Pullback weights for every eigenvalue as columns, in the requested mode
/// (literal weights include the 1/(H+1) factor).
Eigen::MatrixXcd pullback_weight_matrix(const Spectrum& spectrum, std::size_t horizon, WeightMode mode);

}  // namespace kkr
