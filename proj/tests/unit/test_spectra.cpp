#include <cmath>
#include <complex>
#include <filesystem>

#include <gtest/gtest.h>

#include "kkr/errors.hpp"
#include "kkr/spectra.hpp"

namespace kkr {
namespace {

TEST(Samplers, UniformDiskSecondMoment) {
  const Spectrum s = sample_uniform_disk(20000, 3);
  double second = 0.0;
  for (const auto& mu : s.mus) {
    EXPECT_LE(std::abs(mu), 1.0);
    second += std::norm(mu);
  }
  EXPECT_NEAR(second / 20000.0, 0.5, 0.01);
  EXPECT_NO_THROW(s.validate());
}

TEST(Samplers, RadiusScalesDisk) {
  const Spectrum s = sample_uniform_disk(500, 3, 1.0, 0.5);
  for (const auto& mu : s.mus) EXPECT_LE(std::abs(mu), 0.5);
  EXPECT_THROW(sample_uniform_disk(5, 1, 1.0, 1.5), InvalidArgument);
  EXPECT_THROW(sample_uniform_disk(5, 1, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(sample_uniform_disk(0, 1), InvalidArgument);
}

TEST(Samplers, Deterministic) {
  EXPECT_EQ(sample_uniform_disk(30, 8).mus, sample_uniform_disk(30, 8).mus);
  EXPECT_NE(sample_uniform_disk(30, 8).mus, sample_uniform_disk(30, 9).mus);
  // A prefix of a larger draw is the smaller draw.
  const Spectrum big = sample_uniform_disk(50, 8);
  EXPECT_EQ(big.prefix(30).mus, sample_uniform_disk(30, 8).mus);
}

TEST(Samplers, ConjugatePairsAreClosed) {
  for (std::size_t d : {1u, 2u, 7u, 40u}) {
    const Spectrum s = sample_conjugate_pairs(d, 5);
    ASSERT_EQ(s.size(), d);
    EXPECT_TRUE(s.conjugate_closed);
    EXPECT_TRUE(is_conjugate_closed(s.mus));
    EXPECT_NO_THROW(s.validate());
  }
}

TEST(Samplers, StructuredIsClosedOnUnitCircleOrRealAxis) {
  for (std::size_t d : {1u, 3u, 10u, 101u}) {
    const Spectrum s = sample_structured(d, 12, 0.1);
    ASSERT_EQ(s.size(), d);
    EXPECT_TRUE(is_conjugate_closed(s.mus));
    for (const auto& mu : s.mus) {
      const bool on_circle = std::abs(std::abs(mu) - 1.0) < 1e-12;
      const bool decaying = mu.imag() == 0.0 && mu.real() >= std::exp(-0.1) - 1e-15 && mu.real() <= 1.0;
      EXPECT_TRUE(on_circle || decaying) << mu;
    }
  }
}

TEST(MuPowers, Example) {
  const MuPowers p = mu_powers(0.5, 2);
  EXPECT_EQ(p.powers, Eigen::Vector3cd(1.0, 0.5, 0.25));
  const Eigen::Vector3cd expected = Eigen::Vector3cd(1.0, 2.0, 4.0) / std::sqrt(21.0);
  EXPECT_LT((p.pullback_weights - expected).norm(), 1e-15);
}

TEST(MuPowers, UnitNormAndDirection) {
  for (const Complex mu : {Complex(0.3, -0.4), Complex(-1.0, 0.0), Complex(0.0, 1.0), Complex(1e-3, 1e-3)}) {
    const MuPowers p = mu_powers(mu, 14);
    EXPECT_NEAR(p.pullback_weights.norm(), 1.0, 1e-14);
    const Eigen::VectorXcd literal = literal_pullback(mu, 14);
    // Same direction as the literal weights.
    const Complex overlap = p.pullback_weights.dot(literal) / literal.norm();
    EXPECT_NEAR(std::abs(overlap), 1.0, 1e-12) << mu;
  }
}

TEST(MuPowers, ZeroEigenvalueIsIndicator) {
  const MuPowers p = mu_powers(0.0, 4);
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(5);
  e[4] = 1.0;
  EXPECT_EQ(p.pullback_weights, e);
  EXPECT_EQ(p.powers[0], Complex(1.0));
  EXPECT_EQ(p.powers[1], Complex(0.0));
}

TEST(MuPowers, TinyEigenvalueStaysFinite) {
  const MuPowers p = mu_powers(1e-30, 20);
  EXPECT_TRUE(p.pullback_weights.allFinite());
  EXPECT_NEAR(std::abs(p.pullback_weights[20]), 1.0, 1e-12);
  EXPECT_FALSE(literal_pullback(1e-30, 20).allFinite());
}

TEST(Closure, Examples) {
  EXPECT_TRUE(is_conjugate_closed({Complex(0.5, 0.2), Complex(0.5, -0.2), Complex(0.1, 0.0)}));
  EXPECT_FALSE(is_conjugate_closed({Complex(0.5, 0.2), Complex(0.1, 0.0)}));
  EXPECT_FALSE(is_conjugate_closed({Complex(0.5, 0.2), Complex(0.5, -0.3)}));
  EXPECT_TRUE(is_conjugate_closed({}));
}

TEST(SpectrumType, Validate) {
  Spectrum s;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.mus = {Complex(1.1, 0.0)};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.mus = {Complex(0.5, 0.5)};
  s.conjugate_closed = true;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.conjugate_closed = false;
  EXPECT_NO_THROW(s.validate());
  s.mus = {Complex(std::nan(""), 0.0)};
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(SpectrumType, CsvRoundTrip) {
  const auto p = std::filesystem::temp_directory_path() / "kkr_spectrum_roundtrip.csv";
  const Spectrum s = sample_conjugate_pairs(9, 4, 0.25);
  save_spectrum_csv(s, p);
  const Spectrum back = load_spectrum_csv(p, 0.25);
  std::filesystem::remove(p);
  EXPECT_EQ(back.mus, s.mus);
  EXPECT_TRUE(back.conjugate_closed);
  EXPECT_EQ(back.dt, 0.25);
}

}  // namespace
}  // namespace kkr
