#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kkr/dynamics.hpp"
#include "kkr/kernel.hpp"
#include "kkr/kkr_model.hpp"
#include "kkr/spectra.hpp"

namespace kkr {

enum class Method { KKR, EDMD };
enum class SweepAxis { N, D, H };
enum class RiskMetric { Train, Test, Excess };
enum class SpectrumSampler { UniformDisk, ConjugatePairs, Structured };

std::string to_string(Method m);
std::string to_string(SweepAxis a);
std::string to_string(RiskMetric m);
std::string to_string(SpectrumSampler s);
Method method_from_string(const std::string& s);
SweepAxis axis_from_string(const std::string& s);
RiskMetric metric_from_string(const std::string& s);
SpectrumSampler sampler_from_string(const std::string& s);

Spectrum sample_spectrum(SpectrumSampler sampler, std::size_t count, std::uint64_t seed, double dt,
                         double radius = 1.0);

// Seeds are derived from the master seed by nested stream_seed calls:
//   stream_seed(stream_seed(stream_seed(master, cell), rep), role)
// Test sets use cell = kSharedCell so that every cell of one repetition
// sees the same initial conditions.
enum class SeedRole : std::uint64_t { Data = 0, Spectrum = 1, Split = 2 };
inline constexpr std::uint64_t kSharedCell = ~std::uint64_t{0};
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell, std::uint64_t rep, SeedRole role);

/// Maps an initial state to a forecast of length horizon + 1.
using Forecaster = std::function<Eigen::VectorXd(const Eigen::VectorXd& x0, std::size_t horizon)>;

/// Mean over trajectories of |y - forecast(x0)|^2.
double risk(const Forecaster& forecaster, const Dataset& dataset);

struct RiskReport {
  double empirical_risk = 0.0;
  double test_risk = 0.0;
  double excess_risk = 0.0;
  std::size_t trajectories = 0;
  std::size_t eigen_count = 0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  Method method = Method::KKR;
};

/// Fills the risks and N, H; the caller sets D, seed and method.
RiskReport excess_risk(const Forecaster& forecaster, const Dataset& train, const Dataset& test);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // RMS of log-space residuals
  std::size_t points = 0;
  bool defined = false;   // false with fewer than two usable points; slope is NaN
};

/// Least squares of log(y) on log(x). Points with non-positive or
/// non-finite coordinates are skipped.
SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// `count` integers log-spaced over [lo, hi], rounded and deduplicated.
std::vector<std::size_t> log_grid(std::size_t lo, std::size_t hi, std::size_t count);

/// Everything that stays fixed across a sweep.
struct SweepSetup {
  SystemSpec system = SystemSpec::bistable();
  ObservableSpec observable = ObservableSpec::coordinate(0);
  Box box = Box::cube(1, -1.0, 1.0);
  std::size_t trajectories = 50;
  double dt = 1.0 / 14.0;
  std::size_t horizon = 14;
  std::size_t substeps = 10;
  std::size_t eigen_count = 100;  // KKR D
  std::size_t edmd_rank = 10;     // EDMD D unless the D axis is swept
  BaseKernelSpec base;
  SpectrumSampler sampler = SpectrumSampler::UniformDisk;
  double disk_radius = 1.0;
  KKRConfig kkr;
  double edmd_ridge = 1e-8;
  std::size_t test_trajectories = 200;

  void validate() const;
};

struct SweepOptions {
  SweepAxis axis = SweepAxis::N;
  std::vector<std::size_t> grid;
  std::size_t repetitions = 16;
  std::vector<Method> methods{Method::KKR, Method::EDMD};
  std::uint64_t master_seed = 0;
  /// Aggregated metric; excess risk for the N and H axes, test risk for D when unset.
  std::optional<RiskMetric> metric;
  /// 0 means one worker per hardware thread.
  std::size_t threads = 0;

  RiskMetric resolved_metric() const;
  void validate() const;
};

struct CellRecord {
  Method method = Method::KKR;
  SweepAxis axis = SweepAxis::N;
  std::size_t axis_value = 0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;  // training-data seed
  double train_risk = 0.0;
  double test_risk = 0.0;
  double excess_risk = 0.0;
  bool missing = false;
  std::string error;

  double value(RiskMetric m) const;
};

struct CellAggregate {
  std::size_t axis_value = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one entry
  std::size_t count = 0;
};

struct SweepResult {
  Method method = Method::KKR;
  SweepAxis axis = SweepAxis::N;
  RiskMetric metric = RiskMetric::Excess;
  std::vector<std::size_t> grid;
  std::vector<CellAggregate> cells;  // one per grid value, same order
  SlopeFit slope;
};

struct SweepOutput {
  std::vector<CellRecord> records;  // ordered by (cell, rep, method)
  std::vector<SweepResult> results; // one per method
};

/// Runs every (cell, repetition) task, possibly in parallel. Failed fits
/// are recorded as missing cells and reported through warn().
SweepOutput sweep(const SweepSetup& setup, const SweepOptions& options);

/// Aggregates records of one method; exposed for recomputing other metrics.
SweepResult aggregate(const std::vector<CellRecord>& records, Method method, SweepAxis axis,
                      const std::vector<std::size_t>& grid, RiskMetric metric);

void write_results_csv(const std::vector<CellRecord>& records, const std::filesystem::path& path);
void write_aggregate_csv(const std::vector<SweepResult>& results, const std::filesystem::path& path);
void write_slopes_csv(const std::vector<SweepResult>& results, const std::filesystem::path& path);

struct KernelConvergenceSetup {
  SystemSpec system = SystemSpec::van_der_pol();
  Box box = Box::cube(2, -1.0, 1.0);
  double dt = 1.0 / 14.0;
  std::size_t horizon = 14;
  std::size_t substeps = 10;
  BaseKernelSpec base;
  std::vector<std::size_t> grid;
  std::size_t baseline_count = 20000;
  std::size_t points = 5;
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  void validate() const;
};

struct KernelConvergenceResult {
  std::vector<std::size_t> grid;
  std::vector<double> mean;  // mean over runs of the pair-averaged difference
  std::vector<double> std;   // sample std over runs
  std::vector<std::vector<double>> per_run;  // [run][cell]
  std::size_t baseline_count = 0;
  SlopeFit slope;
};

/// |K_base - (D_base / D) sum_{j<D} K^{mu_j}|_F where `kernel_base` already
/// holds the sum over the D_base baseline eigenvalues.
double kernel_difference(const Eigen::MatrixXcd& kernel_base, const Eigen::MatrixXd& block,
                         const Spectrum& spectrum, std::size_t count, std::size_t baseline_count);

/// Monte Carlo convergence of sampled-spectrum kernels towards a large
/// baseline. Warns when the baseline is smaller than 10 max(grid).
KernelConvergenceResult kernel_convergence(const KernelConvergenceSetup& setup);

void write_convergence_csv(const KernelConvergenceResult& result, const std::filesystem::path& path);

}  // namespace kkr
