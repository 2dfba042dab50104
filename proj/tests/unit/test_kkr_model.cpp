#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kkr/diagnostics.hpp"
#include "kkr/errors.hpp"
#include "kkr/kkr_model.hpp"
#include "kkr/random.hpp"

namespace kkr {
namespace {

Dataset bistable_data(std::size_t n, std::uint64_t seed, std::size_t horizon = 14) {
  return sample_dataset(SystemSpec::bistable(), ObservableSpec::coordinate(0), Box::cube(1, -1.0, 1.0), n, 1.0 / 14.0,
                        horizon, seed);
}

Spectrum disk(std::size_t d, std::uint64_t seed) { return sample_uniform_disk(d, seed, 1.0 / 14.0); }

// Fixture silencing expected warnings.
class KKRModelTest : public ::testing::Test {
 protected:
  ScopedWarningHandler quiet_{[this](std::string_view w) { warnings_.emplace_back(w); }};
  std::vector<std::string> warnings_;
};

TEST_F(KKRModelTest, RankOneClosedForm) {
  Trajectory t;
  t.dt = 1.0;
  t.states = Eigen::MatrixXd::Constant(2, 1, 0.3);
  t.outputs = Eigen::Vector2d(1.7, 1.7);
  const Dataset d({t});
  const Spectrum s{{Complex(1.0)}, 1.0, true};
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.5};
  const double kxx = 2.0;  // normalized weights (1, 1)/sqrt(2) on an all-ones block
  for (const double gamma : {1e-3, 0.1, 1.0, 10.0}) {
    KKRConfig cfg;
    cfg.gamma = gamma;
    cfg.jitter = 0.0;
    const KKRModel m = fit(d, s, base, cfg);
    const Forecast f = forecast(m, t.initial_state(), 1);
    const double expected = 2.0 * kxx / (2.0 * kxx + gamma) * 1.7;
    EXPECT_NEAR(f.values[0], expected, 1e-12);
    EXPECT_NEAR(f.values[1], expected, 1e-12);
  }
}

TEST_F(KKRModelTest, LargeRidgeShrinksToZero) {
  const Dataset d = bistable_data(10, 1);
  KKRConfig cfg;
  cfg.gamma = 1e12;
  const KKRModel m = fit(d, disk(20, 2), {BaseKernelKind::RBF, 0.1}, cfg);
  const double ynorm = d.stacked_outputs().norm();
  EXPECT_NEAR(m.beta.norm(), ynorm / cfg.gamma, 1e-3 * ynorm / cfg.gamma);
  EXPECT_LT(forecast(m, d[0].initial_state(), 14).values.cwiseAbs().maxCoeff(), 1e-9);
}

TEST_F(KKRModelTest, ForecastPowerSums) {
  KKRModel m;
  m.spectrum = Spectrum{{Complex(0.5), Complex(-0.5)}, 1.0, true};
  m.base = {BaseKernelKind::RBF, 1.0};
  m.horizon = 2;
  m.dt = 1.0;
  m.initial_states = Eigen::MatrixXd::Zero(1, 1);
  m.alphas = Eigen::MatrixXcd::Ones(1, 2);
  const Forecast f = forecast(m, Eigen::VectorXd::Zero(1), 2);
  EXPECT_EQ(f.values, Eigen::Vector3d(2.0, 0.0, 0.5));
  EXPECT_EQ(f.max_imag, 0.0);

  m.alphas.setZero();
  EXPECT_EQ(eigenfunctions_at(m, Eigen::VectorXd::Zero(1)), Eigen::Vector2cd::Zero());
  EXPECT_EQ(forecast(m, Eigen::VectorXd::Zero(1), 2).values, Eigen::Vector3d::Zero());
}

TEST_F(KKRModelTest, FarAwayStateHasNoFeatures) {
  const KKRModel m = fit(bistable_data(8, 3), disk(10, 4), {BaseKernelKind::RBF, 0.1});
  EXPECT_LT(eigenfunctions_at(m, Eigen::VectorXd::Constant(1, 50.0)).norm(), 1e-100);
}

TEST_F(KKRModelTest, TrainingPointReproducesStoredFeatures) {
  // Exact pullback: with jitter the training features are only reproduced up to O(jitter).
  const Dataset d = bistable_data(12, 5);
  KKRConfig cfg;
  cfg.jitter = 0.0;
  const KKRModel m = fit(d, disk(30, 6), {BaseKernelKind::RBF, 0.2}, cfg);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Eigen::VectorXcd phi = eigenfunctions_at(m, d[i].initial_state());
    const Eigen::VectorXcd stored = m.train_features.row(static_cast<Eigen::Index>(i)).transpose();
    EXPECT_LT((phi - stored).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, stored.cwiseAbs().maxCoeff()));
  }
}

TEST_F(KKRModelTest, BenchmarkInterpolatesTrainingData) {
  const Dataset d = bistable_data(50, 7);
  const KKRModel m = fit(d, disk(100, 8), {BaseKernelKind::RBF, 0.05});
  double worst = 0.0;
  for (const auto& r : linearity_check(m, d)) worst = std::max(worst, r.max_residual);
  EXPECT_LE(worst, 1e-2);
  EXPECT_LE(m.diagnostics.representer_residual, 1e-8);
  EXPECT_DOUBLE_EQ(m.diagnostics.jitter, 50e-10);
}

TEST_F(KKRModelTest, ConjugateClosedSpectrumGivesRealForecasts) {
  const Dataset d = sample_dataset(SystemSpec::van_der_pol(), ObservableSpec::coordinate(0), Box::cube(2, -1.0, 1.0),
                                   15, 1.0 / 14.0, 14, 9);
  const KKRModel m = fit(d, sample_conjugate_pairs(41, 10, 1.0 / 14.0), {BaseKernelKind::RBF, 0.3});
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Vector2d x0(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    const Forecast f = forecast(m, x0, 14);
    EXPECT_LE(f.max_imag, 1e-8 * std::max(f.values.cwiseAbs().maxCoeff(), 1e-300));
  }
}

TEST_F(KKRModelTest, PermutationInvariance) {
  const Dataset d = bistable_data(10, 12);
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[7]);
  const Spectrum s = disk(25, 13);
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.1};
  const KKRModel a = fit(d, s, base);
  const KKRModel b = fit(d.subset(perm), s, base);
  for (const double x : {-0.9, -0.3, 0.05, 0.4, 0.8}) {
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, x);
    const Eigen::VectorXd fa = forecast(a, x0, 14).values;
    const Eigen::VectorXd fb = forecast(b, x0, 14).values;
    EXPECT_LT((fa - fb).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, fa.cwiseAbs().maxCoeff()));
  }
}

TEST_F(KKRModelTest, ShrinkageIdentity) {
  const Dataset d = bistable_data(6, 14, 5);
  const Spectrum s = disk(9, 15);
  const BaseKernelSpec base{BaseKernelKind::RBF, 0.3};
  KKRConfig cfg;
  cfg.gamma = 1e-2;
  cfg.jitter = 0.0;
  const KoopmanGram g = assemble_gram(d, s, base);
  const KKRModel m = fit_with_gram(d, g, base, cfg);
  Eigen::MatrixXcd a = g.matrix;
  a.diagonal().array() += cfg.gamma;
  const Eigen::VectorXd expected = (g.matrix * a.ldlt().solve(d.stacked_outputs().cast<Complex>())).real();
  Eigen::VectorXd stacked(expected.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    stacked.segment(static_cast<Eigen::Index>(6 * i), 6) = forecast(m, d[i].initial_state(), 5).values;
  }
  EXPECT_LT((stacked - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_F(KKRModelTest, FeaturePropagationIsExact) {
  const Dataset d = bistable_data(8, 16);
  const KKRModel m = fit(d, disk(20, 17), {BaseKernelKind::RBF, 0.1});
  for (const auto& r : linearity_check(m, d)) EXPECT_EQ(r.feature_defect, 0.0);
  const LTIPredictor p = predictor(m, d[0].initial_state(), 14);
  EXPECT_EQ(p.gamma.row(0), Eigen::RowVectorXcd::Ones(20));
  EXPECT_LT((p.rollout().colwise().sum().transpose() - p.gamma * p.phi0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_F(KKRModelTest, SmallRidgeReconstructsTraining) {
  const Dataset d = bistable_data(10, 18);
  KKRConfig cfg;
  cfg.gamma = 1e-8;
  const KKRModel m = fit(d, disk(100, 19), {BaseKernelKind::RBF, 0.05}, cfg);
  for (const auto& r : linearity_check(m, d)) EXPECT_LE(r.max_residual, 1e-4);
}

TEST_F(KKRModelTest, LeaveOneOutPicksGridValue) {
  const Dataset d = bistable_data(20, 20);
  KKRConfig cfg;
  cfg.jitter_rule = JitterRule::LeaveOneOut;
  const KKRModel m = fit(d, disk(50, 21), {BaseKernelKind::RBF, 0.05}, cfg);
  const double k = 2.0 * std::log10(m.diagnostics.jitter);
  EXPECT_NEAR(k, std::round(k), 1e-9);
  EXPECT_GE(m.diagnostics.jitter, 1e-12 * (1 - 1e-12));
  EXPECT_LE(m.diagnostics.jitter, 1.0);
}

TEST_F(KKRModelTest, ExtrapolationWarns) {
  const Dataset d = bistable_data(4, 22, 5);
  const KKRModel m = fit(d, disk(5, 23), {BaseKernelKind::RBF, 0.2});
  warnings_.clear();
  EXPECT_EQ(forecast(m, d[0].initial_state(), 9).values.size(), 10);
  ASSERT_EQ(warnings_.size(), 1u);
  EXPECT_NE(warnings_[0].find("exceeds"), std::string::npos);
}

TEST_F(KKRModelTest, StrictRealifyRejectsOpenSpectrum) {
  KKRConfig cfg;
  cfg.realify = Realify::RequireConjugateClosed;
  const Dataset d = bistable_data(4, 24);
  EXPECT_THROW(fit(d, Spectrum{{Complex(0.5, 0.5)}, 1.0 / 14.0, false}, {BaseKernelKind::RBF, 0.2}, cfg),
               InvalidArgument);
  EXPECT_NO_THROW(fit(d, sample_conjugate_pairs(6, 25, 1.0 / 14.0), {BaseKernelKind::RBF, 0.2}, cfg));
}

TEST_F(KKRModelTest, ConfigAndShapeErrors) {
  KKRConfig cfg;
  cfg.gamma = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.gamma = 1e-6;
  cfg.jitter = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);

  const Dataset d = bistable_data(4, 26);
  const KoopmanGram g = assemble_gram(bistable_data(5, 26), disk(4, 27), {});
  EXPECT_THROW(fit_with_gram(d, g, {}), DimensionMismatch);
  const KKRModel m = fit(d, disk(4, 27), {});
  EXPECT_THROW(eigenfunctions_at(m, Eigen::VectorXd::Zero(2)), DimensionMismatch);
  EXPECT_THROW(linearity_check(m, bistable_data(4, 26, 6)), DimensionMismatch);
}

TEST_F(KKRModelTest, SingularSystemWithoutRidge) {
  // Two identical trajectories and gamma = 0 give an exactly singular Gram.
  const Dataset one = bistable_data(1, 28);
  const Dataset d({one[0], one[0]});
  KKRConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(fit(d, disk(3, 29), {BaseKernelKind::RBF, 0.2}, cfg), SingularGram);
}

TEST_F(KKRModelTest, JsonRoundTrip) {
  const Dataset d = bistable_data(6, 30);
  KKRConfig cfg;
  cfg.jitter = 3e-9;
  const KKRModel m = fit(d, disk(11, 31), {BaseKernelKind::RBF, 0.15}, cfg);
  const auto path = std::filesystem::temp_directory_path() / "kkr_model_roundtrip.json";
  save_model(m, path);
  const KKRModel back = load_kkr_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.beta, m.beta);
  EXPECT_EQ(back.alphas, m.alphas);
  EXPECT_EQ(back.spectrum.mus, m.spectrum.mus);
  EXPECT_EQ(back.initial_states, m.initial_states);
  EXPECT_EQ(back.config.jitter, cfg.jitter);
  EXPECT_EQ(back.base.length_scale, 0.15);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.37);
  EXPECT_EQ(forecast(back, x0, 14).values, forecast(m, x0, 14).values);

  nlohmann::json doc = to_json(m);
  doc["format"] = "something-else";
  EXPECT_THROW(kkr_model_from_json(doc), SchemaError);
  doc = to_json(m);
  doc.erase("beta");
  EXPECT_THROW(kkr_model_from_json(doc), SchemaError);
}

}  // namespace
}  // namespace kkr
