#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "kkr/errors.hpp"
#include "kkr/kernel.hpp"
#include "oracle.hpp"

namespace kkr {
namespace {

Dataset small_vdp(std::size_t n, std::size_t horizon, std::uint64_t seed) {
  return sample_dataset(SystemSpec::van_der_pol(), ObservableSpec::coordinate(0), Box::cube(2, -1.0, 1.0), n, 0.1,
                        horizon, seed);
}

Trajectory constant_trajectory(double x, std::size_t horizon) {
  Trajectory t;
  t.dt = 0.1;
  t.states = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(horizon + 1), 1, x);
  t.outputs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(horizon + 1), x);
  return t;
}

TEST(BaseKernel, RbfValues) {
  EXPECT_EQ(rbf(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(1.0, 2.0), 0.3), 1.0);
  EXPECT_NEAR(rbf(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0), 1.0), std::exp(-0.5), 1e-16);
  const BaseKernelSpec lin{BaseKernelKind::Linear, 0.0};
  EXPECT_EQ(lin(Eigen::Vector2d(1.0, 2.0), Eigen::Vector2d(3.0, -1.0)), 1.0);
  EXPECT_THROW((BaseKernelSpec{BaseKernelKind::RBF, 0.0}.validate()), InvalidArgument);
  EXPECT_NO_THROW(lin.validate());
}

TEST(BaseKernel, CrossMatchesPointwise) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 3);
  const Eigen::MatrixXd b = Eigen::MatrixXd::Random(4, 3);
  for (const BaseKernelSpec spec : {BaseKernelSpec{BaseKernelKind::RBF, 0.7}, BaseKernelSpec{BaseKernelKind::Linear, 1.0}}) {
    const Eigen::MatrixXd c = spec.cross(a, b);
    for (Eigen::Index i = 0; i < 5; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        EXPECT_NEAR(c(i, j), spec(a.row(i).transpose(), b.row(j).transpose()), 1e-14);
      }
    }
  }
}

TEST(EigenKernel, ConstantBaseUnitEigenvalue) {
  const Trajectory t = constant_trajectory(0.2, 1);
  const MuPowers p = mu_powers(1.0, 1);
  const Eigen::MatrixXd block = base_block(t, t, {BaseKernelKind::RBF, 1.0});
  EXPECT_NEAR(scalar_eigen_kernel(block, p, p).real(), 2.0, 1e-14);
  EXPECT_NEAR(scalar_eigen_kernel(block, p, p, WeightMode::Literal).real(), 1.0, 1e-14);
}

TEST(EigenKernel, SingleSampleIsBaseKernel) {
  const Trajectory t = constant_trajectory(0.4, 0);
  const Spectrum s{{Complex(0.5, 0.1)}, 1.0, false};
  const Eigen::MatrixXcd k = koopman_kernel(t, t, s, {BaseKernelKind::RBF, 1.0});
  ASSERT_EQ(k.rows(), 1);
  EXPECT_NEAR(std::abs(k(0, 0) - Complex(1.0)), 0.0, 1e-15);
}

TEST(EigenKernel, BoundedByHorizon) {
  const Dataset d = small_vdp(6, 9, 1);
  const Spectrum s = sample_uniform_disk(20, 2);
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.3};
  for (const Complex mu : s.mus) {
    const MuPowers p = mu_powers(mu, 9);
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (std::size_t j = 0; j < d.size(); ++j) {
        EXPECT_LE(std::abs(scalar_eigen_kernel(base_block(d[i], d[j], base), p, p)), 10.0 + 1e-12);
      }
    }
  }
}

TEST(EigenKernel, MatrixKernelIsRankOne) {
  const Dataset d = small_vdp(2, 6, 3);
  const MuPowers p = mu_powers(Complex(0.6, -0.5), 6);
  const Eigen::MatrixXcd k = matrix_eigen_kernel(d[0], d[1], p, {BaseKernelKind::RBF, 0.5});
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(k);
  EXPECT_LT(svd.singularValues()[1], 1e-12 * svd.singularValues()[0]);
}

TEST(EigenKernel, LiteralOverflowIsReported) {
  const Trajectory t = constant_trajectory(0.0, 200);
  const MuPowers p = mu_powers(1e-5, 200);
  EXPECT_THROW(scalar_eigen_kernel(base_block(t, t, {}), p, p, WeightMode::Literal), OverflowError);
  EXPECT_NO_THROW(scalar_eigen_kernel(base_block(t, t, {}), p, p));
}

TEST(Gram, MatchesBruteForce) {
  const Dataset d = small_vdp(5, 6, 4);
  const Spectrum s = testing::moderate_spectrum(7, 5);
  const KoopmanGram g = assemble_gram(d, s, {BaseKernelKind::RBF, 0.4});
  const Eigen::MatrixXcd oracle = testing::brute_force_gram(d, s, 0.4);
  EXPECT_LT((g.matrix - oracle).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gram, BlocksMatchPairwiseKernel) {
  const Dataset d = small_vdp(4, 5, 6);
  const Spectrum s = sample_conjugate_pairs(6, 7);
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.25};
  const KoopmanGram g = assemble_gram(d, s, base);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const Eigen::MatrixXcd block = g.matrix.block(static_cast<Eigen::Index>(6 * i), static_cast<Eigen::Index>(6 * j), 6, 6);
      EXPECT_LT((block - koopman_kernel(d[i], d[j], s, base)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Gram, HermitianPositiveSemidefinite) {
  const Dataset d = small_vdp(8, 7, 9);
  const KoopmanGram g = assemble_gram(d, sample_uniform_disk(15, 10), {BaseKernelKind::RBF, 0.2});
  EXPECT_LT((g.matrix - g.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(g.matrix);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10 * eig.eigenvalues().maxCoeff());
}

TEST(Gram, ScalarKernelsAreHermitianPsd) {
  const Dataset d = small_vdp(6, 4, 1);
  const Spectrum s = sample_uniform_disk(5, 2);
  const KoopmanGram g = assemble_gram(d, s, {BaseKernelKind::RBF, 0.5});
  for (std::size_t j = 0; j < s.size(); ++j) {
    const Eigen::MatrixXcd k = g.scalar_kernel(j);
    EXPECT_LT((k - k.adjoint()).cwiseAbs().maxCoeff(), 1e-13);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(k);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(Gram, PrecomputedBaseGramAgrees) {
  const Dataset d = small_vdp(4, 3, 2);
  const Spectrum s = sample_uniform_disk(4, 3);
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.5};
  const BaseGramTensor tensor(d, base);
  EXPECT_EQ(tensor(1, 2, 3, 0), base(d[1].states.row(3).transpose(), d[2].states.row(0).transpose()));
  EXPECT_EQ(assemble_gram(tensor, s).matrix, assemble_gram(d, s, base).matrix);
}

TEST(Gram, PerEigenvalueBases) {
  const Dataset d = small_vdp(2, 3, 2);
  const Spectrum s = sample_uniform_disk(3, 3);
  const std::vector<BaseKernelSpec> same(3, BaseKernelSpec{BaseKernelKind::RBF, 0.5});
  EXPECT_LT((koopman_kernel(d[0], d[1], s, same) - koopman_kernel(d[0], d[1], s, same[0])).norm(), 1e-14);
  const std::vector<BaseKernelSpec> wrong(2);
  EXPECT_THROW(koopman_kernel(d[0], d[1], s, wrong), DimensionMismatch);
}

}  // namespace
}  // namespace kkr
