#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "kkr/diagnostics.hpp"
#include "kkr/edmd.hpp"
#include "kkr/errors.hpp"

namespace kkr {
namespace {

Dataset bistable_data(std::size_t n, std::uint64_t seed, std::size_t horizon = 14) {
  return sample_dataset(SystemSpec::bistable(), ObservableSpec::coordinate(0), Box::cube(1, -1.0, 1.0), n, 1.0 / 14.0,
                        horizon, seed);
}

SnapshotPairs random_pairs(Eigen::Index m, Eigen::Index d, unsigned seed) {
  std::srand(seed);
  SnapshotPairs p;
  p.inputs = Eigen::MatrixXd::Random(m, d);
  p.successors = p.inputs;
  p.outputs = p.inputs.col(0);
  p.successor_outputs = p.outputs;
  p.horizon = 1;
  p.dt = 0.1;
  for (Eigen::Index i = 0; i < m; ++i) p.ids.push_back(i);
  return p;
}

class EDMDTest : public ::testing::Test {
 protected:
  ScopedWarningHandler quiet_{[this](std::string_view w) { warnings_.emplace_back(w); }};
  std::vector<std::string> warnings_;
};

TEST(Pairs, SingleTrajectory) {
  const Dataset d = bistable_data(1, 1, 2);
  const SnapshotPairs p = make_pairs(d);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.inputs.row(0), d[0].states.row(0));
  EXPECT_EQ(p.successors.row(0), d[0].states.row(1));
  EXPECT_EQ(p.inputs.row(1), d[0].states.row(1));
  EXPECT_EQ(p.successors.row(1), d[0].states.row(2));
  EXPECT_EQ(p.outputs[1], d[0].outputs[1]);
}

TEST(Pairs, CountAndRoundTrip) {
  EXPECT_EQ(make_pairs(bistable_data(2, 2, 1)).size(), 2u);
  const Dataset d = sample_dataset(SystemSpec::van_der_pol(), ObservableSpec::norm(), Box::cube(2, -1.0, 1.0), 5, 0.1,
                                   7, 3);
  const SnapshotPairs p = make_pairs(d);
  EXPECT_EQ(p.size(), 35u);
  EXPECT_TRUE(reconstruct_dataset(p) == d);
}

TEST_F(EDMDTest, IdentityDynamicsHasUnitEigenvalues) {
  const SnapshotPairs p = random_pairs(40, 2, 4);
  const EDMDModel m = fit_pcr(p, 8, {BaseKernelKind::RBF, 0.7});
  ASSERT_EQ(m.rank, 8u);
  for (Eigen::Index j = 0; j < m.eigenvalues.size(); ++j) {
    EXPECT_LT(std::abs(m.eigenvalues[j] - Complex(1.0)), 1e-8);
  }
  const Eigen::VectorXd f = forecast_edmd(m, Eigen::Vector2d(0.1, -0.2), 6);
  for (Eigen::Index h = 1; h < f.size(); ++h) EXPECT_NEAR(f[h], f[0], 1e-8 * std::max(1.0, std::abs(f[0])));
}

TEST_F(EDMDTest, RankOneIsRayleighQuotient) {
  const SnapshotPairs p = make_pairs(bistable_data(6, 5));
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.3};
  const EDMDModel m = fit_pcr(p, 1, base);
  // Independent reduction with a dense solver.
  Eigen::MatrixXd g(p.size(), p.size());
  Eigen::MatrixXd a(p.size(), p.size());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      g(i, j) = rbf(p.inputs.row(i).transpose(), p.inputs.row(j).transpose(), 0.3);
      a(i, j) = rbf(p.successors.row(i).transpose(), p.inputs.row(j).transpose(), 0.3);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  const Eigen::VectorXd u = eig.eigenvectors().rightCols(1);
  const double sigma = eig.eigenvalues()[g.rows() - 1];
  ASSERT_EQ(m.eigenvalues.size(), 1);
  EXPECT_NEAR(m.eigenvalues[0].real(), u.dot(a * u) / sigma, 1e-10);
  EXPECT_EQ(m.eigenvalues[0].imag(), 0.0);
}

TEST_F(EDMDTest, LinearKernelLinearDynamics) {
  SnapshotPairs p;
  p.inputs = Eigen::VectorXd::LinSpaced(9, -1.0, 1.5);
  p.successors = 0.5 * p.inputs;
  p.outputs = p.inputs.col(0);
  p.successor_outputs = p.successors.col(0);
  p.horizon = 1;
  p.dt = 1.0;
  p.ids.resize(9);
  const EDMDModel m = fit_pcr(p, 1, {BaseKernelKind::Linear, 1.0});
  EXPECT_LT(std::abs(m.eigenvalues[0] - Complex(0.5)), 1e-10);
  const Eigen::VectorXd f = forecast_edmd(m, Eigen::VectorXd::Constant(1, 0.8), 3);
  EXPECT_LT((f - Eigen::Vector4d(0.8, 0.4, 0.2, 0.1)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST_F(EDMDTest, RankReductionWarns) {
  SnapshotPairs p;
  p.inputs = Eigen::VectorXd::LinSpaced(9, -1.0, 1.5);
  p.successors = 0.5 * p.inputs;
  p.outputs = p.inputs.col(0);
  p.successor_outputs = p.successors.col(0);
  p.horizon = 1;
  p.dt = 1.0;
  p.ids.resize(9);
  const EDMDModel m = fit_pcr(p, 3, {BaseKernelKind::Linear, 1.0});
  EXPECT_EQ(m.requested_rank, 3u);
  EXPECT_EQ(m.rank, 1u);
  ASSERT_EQ(warnings_.size(), 1u);
  EXPECT_NE(warnings_[0].find("rank reduced"), std::string::npos);
}

TEST_F(EDMDTest, ZeroModesGiveZeroForecast) {
  EDMDModel m = fit_pcr(make_pairs(bistable_data(4, 6)), 5, {BaseKernelKind::RBF, 0.2});
  m.modes.setZero();
  EXPECT_EQ(forecast_edmd(m, Eigen::VectorXd::Constant(1, 0.3), 5), Eigen::VectorXd::Zero(6));
}

TEST_F(EDMDTest, FirstStepIsRegression) {
  const SnapshotPairs p = make_pairs(bistable_data(8, 7));
  const EDMDModel m = fit_pcr(p, 12, {BaseKernelKind::RBF, 0.1});
  for (const double x : {-0.7, 0.0, 0.45}) {
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, x);
    const Complex direct = eigenfunctions_at(m, x0).cwiseProduct(m.modes).sum();
    EXPECT_NEAR(forecast_edmd(m, x0, 4)[0], direct.real(), 1e-12);
  }
}

TEST_F(EDMDTest, ResidualShrinksWithRank) {
  const SnapshotPairs p = make_pairs(bistable_data(10, 8));
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.1};
  double previous = INFINITY;
  for (const std::size_t rank : {1u, 2u, 4u, 8u, 16u, 32u}) {
    const EDMDModel m = fit_pcr(p, rank, base, 1e-10);
    EXPECT_LE(m.regression_residual, previous + 1e-6);
    previous = m.regression_residual;
  }
}

TEST_F(EDMDTest, ContractiveSystemHasBoundedSpectrum) {
  const EDMDModel m = fit_pcr(make_pairs(bistable_data(30, 9)), 10, {BaseKernelKind::RBF, 0.05});
  EXPECT_LE(m.eigenvalues.cwiseAbs().maxCoeff(), 1.05);
}

TEST_F(EDMDTest, Errors) {
  const SnapshotPairs p = make_pairs(bistable_data(2, 10, 2));
  EXPECT_THROW(fit_pcr(p, 0, {}), InvalidArgument);
  EXPECT_THROW(fit_pcr(p, 5, {}), InvalidArgument);
  EXPECT_THROW(fit_pcr(p, 2, {}, -1.0), InvalidArgument);
  const EDMDModel m = fit_pcr(p, 2, {});
  EXPECT_THROW(eigenfunctions_at(m, Eigen::VectorXd::Zero(2)), DimensionMismatch);
}

TEST_F(EDMDTest, JsonRoundTrip) {
  const EDMDModel m = fit_pcr(make_pairs(bistable_data(5, 11)), 6, {BaseKernelKind::RBF, 0.2});
  const auto path = std::filesystem::temp_directory_path() / "kkr_edmd_roundtrip.json";
  save_model(m, path);
  const EDMDModel back = load_edmd_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.eigenvalues, m.eigenvalues);
  EXPECT_EQ(back.modes, m.modes);
  EXPECT_EQ(back.eigenfunction_weights, m.eigenfunction_weights);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, -0.2);
  EXPECT_EQ(forecast_edmd(back, x0, 10), forecast_edmd(m, x0, 10));
}

}  // namespace
}  // namespace kkr
