#include "kkr/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "io_util.hpp"
#include "kkr/diagnostics.hpp"
#include "kkr/edmd.hpp"
#include "kkr/errors.hpp"
#include "kkr/random.hpp"

namespace kkr {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Runs task(0..count-1) on up to `threads` workers. Tasks must not throw.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) task(k);
    });
  }
  for (auto& th : pool) th.join();
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {kNaN, kNaN};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

void check_grid(const std::vector<std::size_t>& grid, const char* what) {
  if (grid.empty()) throw InvalidArgument(std::string(what) + " grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] < 1) throw InvalidArgument(std::string(what) + " grid values must be positive");
    if (k > 0 && grid[k] <= grid[k - 1]) throw InvalidArgument(std::string(what) + " grid must be strictly increasing");
  }
}

/// Sum of the matrix eigenfunction kernels of mus[begin, end) for one base block.
Eigen::MatrixXcd kernel_terms(const Eigen::MatrixXd& block, const Spectrum& spectrum, std::size_t begin,
                              std::size_t end) {
  const auto len = block.rows();
  const auto horizon = static_cast<std::size_t>(len - 1);
  const auto count = static_cast<Eigen::Index>(end - begin);
  Eigen::MatrixXcd powers(len, count);
  Eigen::MatrixXcd weights(len, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    const MuPowers p = mu_powers(spectrum.mus[begin + static_cast<std::size_t>(j)], horizon);
    powers.col(j) = p.powers;
    weights.col(j) = p.pullback_weights;
  }
  // k_j = w_j^T B conj(w_j)
  const Eigen::MatrixXcd bw = block.cast<Complex>() * weights.conjugate();
  const Eigen::VectorXcd k = weights.cwiseProduct(bw).colwise().sum().transpose();
  return powers * k.asDiagonal() * powers.adjoint();
}

}  // namespace

std::string to_string(Method m) { return m == Method::KKR ? "kkr" : "edmd"; }

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::N: return "N";
    case SweepAxis::D: return "D";
    case SweepAxis::H: return "H";
  }
  return "?";
}

std::string to_string(RiskMetric m) {
  switch (m) {
    case RiskMetric::Train: return "train_risk";
    case RiskMetric::Test: return "test_risk";
    case RiskMetric::Excess: return "excess_risk";
  }
  return "?";
}

std::string to_string(SpectrumSampler s) {
  switch (s) {
    case SpectrumSampler::UniformDisk: return "uniform_disk";
    case SpectrumSampler::ConjugatePairs: return "conjugate_pairs";
    case SpectrumSampler::Structured: return "structured";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "kkr") return Method::KKR;
  if (s == "edmd") return Method::EDMD;
  throw InvalidArgument("unknown method '" + s + "'");
}

SweepAxis axis_from_string(const std::string& s) {
  if (s == "N") return SweepAxis::N;
  if (s == "D") return SweepAxis::D;
  if (s == "H") return SweepAxis::H;
  throw InvalidArgument("unknown sweep axis '" + s + "'");
}

RiskMetric metric_from_string(const std::string& s) {
  if (s == "train_risk") return RiskMetric::Train;
  if (s == "test_risk") return RiskMetric::Test;
  if (s == "excess_risk") return RiskMetric::Excess;
  throw InvalidArgument("unknown risk metric '" + s + "'");
}

SpectrumSampler sampler_from_string(const std::string& s) {
  if (s == "uniform_disk") return SpectrumSampler::UniformDisk;
  if (s == "conjugate_pairs") return SpectrumSampler::ConjugatePairs;
  if (s == "structured") return SpectrumSampler::Structured;
  throw InvalidArgument("unknown spectrum sampler '" + s + "'");
}

Spectrum sample_spectrum(SpectrumSampler sampler, std::size_t count, std::uint64_t seed, double dt,
                         double radius) {
  switch (sampler) {
    case SpectrumSampler::UniformDisk: return sample_uniform_disk(count, seed, dt, radius);
    case SpectrumSampler::ConjugatePairs: return sample_conjugate_pairs(count, seed, dt, radius);
    case SpectrumSampler::Structured: return sample_structured(count, seed, dt);
  }
  throw InvalidArgument("unknown spectrum sampler");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell, std::uint64_t rep, SeedRole role) {
  return stream_seed(stream_seed(stream_seed(master, cell), rep), static_cast<std::uint64_t>(role));
}

double risk(const Forecaster& forecaster, const Dataset& dataset) {
  double total = 0.0;
  for (const Trajectory& t : dataset.trajectories()) {
    const Eigen::VectorXd yhat = forecaster(t.initial_state(), t.horizon());
    if (yhat.size() != t.outputs.size()) throw DimensionMismatch("forecast length differs from the trajectory");
    total += (t.outputs - yhat).squaredNorm();
  }
  return total / static_cast<double>(dataset.size());
}

RiskReport excess_risk(const Forecaster& forecaster, const Dataset& train, const Dataset& test) {
  RiskReport r;
  r.empirical_risk = risk(forecaster, train);
  r.test_risk = risk(forecaster, test);
  r.excess_risk = std::abs(r.test_risk - r.empirical_risk);
  r.trajectories = train.size();
  r.horizon = train.horizon();
  return r;
}

SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionMismatch("slope fit needs matching x and y");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] > 0.0 && y[k] > 0.0 && std::isfinite(x[k]) && std::isfinite(y[k])) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
  }
  SlopeFit fit;
  fit.points = lx.size();
  const double n = static_cast<double>(lx.size());
  const double mx = lx.empty() ? 0.0 : std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = ly.empty() ? 0.0 : std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  if (lx.size() < 2 || sxx <= 0.0) {
    fit.slope = fit.intercept = fit.residual = kNaN;
    return fit;
  }
  fit.defined = true;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double r = ly[k] - (fit.intercept + fit.slope * lx[k]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

std::vector<std::size_t> log_grid(std::size_t lo, std::size_t hi, std::size_t count) {
  if (lo < 1 || hi < lo || count < 1) throw InvalidArgument("log grid needs 1 <= lo <= hi and count >= 1");
  std::vector<std::size_t> out;
  if (count == 1) return {lo};
  const double a = std::log(static_cast<double>(lo));
  const double b = std::log(static_cast<double>(hi));
  for (std::size_t k = 0; k < count; ++k) {
    const double v = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
    const auto r = static_cast<std::size_t>(std::llround(v));
    if (out.empty() || r > out.back()) out.push_back(r);
  }
  return out;
}

void SweepSetup::validate() const {
  system.validate();
  observable.validate(system.state_dim);
  if (box.dim() != system.state_dim) throw InvalidArgument("initial-condition box has the wrong dimension");
  if (trajectories < 1 || test_trajectories < 1) throw InvalidArgument("trajectory counts must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (horizon < 1 || substeps < 1) throw InvalidArgument("horizon and substeps must be positive");
  if (eigen_count < 1 || edmd_rank < 1) throw InvalidArgument("eigenvalue counts must be positive");
  base.validate();
  kkr.validate();
  if (!(edmd_ridge >= 0.0)) throw InvalidArgument("EDMD ridge must be >= 0");
}

RiskMetric SweepOptions::resolved_metric() const {
  if (metric) return *metric;
  return axis == SweepAxis::D ? RiskMetric::Test : RiskMetric::Excess;
}

void SweepOptions::validate() const {
  check_grid(grid, "sweep");
  if (repetitions < 2) throw InvalidArgument("a sweep needs at least 2 repetitions");
  if (methods.empty()) throw InvalidArgument("a sweep needs at least one method");
}

double CellRecord::value(RiskMetric m) const {
  switch (m) {
    case RiskMetric::Train: return train_risk;
    case RiskMetric::Test: return test_risk;
    case RiskMetric::Excess: return excess_risk;
  }
  return kNaN;
}

SweepOutput sweep(const SweepSetup& setup, const SweepOptions& options) {
  setup.validate();
  options.validate();
  const std::size_t cells = options.grid.size();
  const std::size_t reps = options.repetitions;
  const std::size_t methods = options.methods.size();
  std::vector<CellRecord> records(cells * reps * methods);

  parallel_for(cells * reps, options.threads, [&](std::size_t task) {
    const std::size_t cell = task / reps;
    const std::size_t rep = task % reps;
    const std::size_t value = options.grid[cell];
    std::size_t n = setup.trajectories;
    std::size_t d = setup.eigen_count;
    std::size_t h = setup.horizon;
    switch (options.axis) {
      case SweepAxis::N: n = value; break;
      case SweepAxis::D: d = value; break;
      case SweepAxis::H: h = value; break;
    }
    const std::uint64_t data_seed = derive_seed(options.master_seed, cell, rep, SeedRole::Data);
    const std::uint64_t spectrum_seed = derive_seed(options.master_seed, cell, rep, SeedRole::Spectrum);
    const std::uint64_t test_seed = derive_seed(options.master_seed, kSharedCell, rep, SeedRole::Split);

    CellRecord* slot = &records[(cell * reps + rep) * methods];
    for (std::size_t m = 0; m < methods; ++m) {
      slot[m].method = options.methods[m];
      slot[m].axis = options.axis;
      slot[m].axis_value = value;
      slot[m].rep = rep;
      slot[m].seed = data_seed;
    }
    auto mark_missing = [&](std::size_t m, const std::string& what) {
      slot[m].missing = true;
      slot[m].error = what;
      slot[m].train_risk = slot[m].test_risk = slot[m].excess_risk = kNaN;
      warn(to_string(slot[m].method) + " " + to_string(options.axis) + "=" + std::to_string(value) + " rep " +
           std::to_string(rep) + " failed: " + what);
    };

    std::optional<Dataset> train;
    std::optional<Dataset> test;
    try {
      train.emplace(sample_dataset(setup.system, setup.observable, setup.box, n, setup.dt, h, data_seed,
                                   setup.substeps));
      test.emplace(sample_dataset(setup.system, setup.observable, setup.box, setup.test_trajectories, setup.dt,
                                  h, test_seed, setup.substeps));
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < methods; ++m) mark_missing(m, e.what());
      return;
    }

    for (std::size_t m = 0; m < methods; ++m) {
      try {
        RiskReport report;
        if (options.methods[m] == Method::KKR) {
          const Spectrum spectrum = sample_spectrum(setup.sampler, d, spectrum_seed, setup.dt, setup.disk_radius);
          const KKRModel model = fit(*train, spectrum, setup.base, setup.kkr);
          report = excess_risk(
              [&](const Eigen::VectorXd& x0, std::size_t steps) { return forecast(model, x0, steps).values; },
              *train, *test);
        } else {
          const std::size_t rank = options.axis == SweepAxis::D ? d : setup.edmd_rank;
          const EDMDModel model = fit_pcr(make_pairs(*train), rank, setup.base, setup.edmd_ridge);
          report = excess_risk(
              [&](const Eigen::VectorXd& x0, std::size_t steps) { return forecast_edmd(model, x0, steps); },
              *train, *test);
        }
        slot[m].train_risk = report.empirical_risk;
        slot[m].test_risk = report.test_risk;
        slot[m].excess_risk = report.excess_risk;
      } catch (const std::exception& e) {
        mark_missing(m, e.what());
      }
    }
  });

  SweepOutput out;
  out.records = std::move(records);
  for (Method method : options.methods) {
    out.results.push_back(aggregate(out.records, method, options.axis, options.grid, options.resolved_metric()));
  }
  return out;
}

SweepResult aggregate(const std::vector<CellRecord>& records, Method method, SweepAxis axis,
                      const std::vector<std::size_t>& grid, RiskMetric metric) {
  SweepResult result;
  result.method = method;
  result.axis = axis;
  result.metric = metric;
  result.grid = grid;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t value : grid) {
    std::vector<double> vals;
    for (const CellRecord& r : records) {
      if (r.method == method && r.axis == axis && r.axis_value == value && !r.missing) vals.push_back(r.value(metric));
    }
    CellAggregate cell;
    cell.axis_value = value;
    cell.count = vals.size();
    std::tie(cell.mean, cell.std) = mean_std(vals);
    result.cells.push_back(cell);
    if (cell.count > 0) {
      xs.push_back(static_cast<double>(value));
      ys.push_back(cell.mean);
    }
  }
  result.slope = loglog_slope(xs, ys);
  return result;
}

void write_results_csv(const std::vector<CellRecord>& records, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "method,axis,axis_value,rep,seed,train_risk,test_risk,excess_risk\n";
  for (const CellRecord& r : records) {
    out << to_string(r.method) << ',' << to_string(r.axis) << ',' << r.axis_value << ',' << r.rep << ','
        << r.seed << ',' << format_double(r.train_risk) << ',' << format_double(r.test_risk) << ','
        << format_double(r.excess_risk) << '\n';
  }
  close_csv(out, path);
}

void write_aggregate_csv(const std::vector<SweepResult>& results, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "method,axis,axis_value,mean,std,count\n";
  for (const SweepResult& res : results) {
    for (const CellAggregate& c : res.cells) {
      out << to_string(res.method) << ',' << to_string(res.axis) << ',' << c.axis_value << ','
          << format_double(c.mean) << ',' << format_double(c.std) << ',' << c.count << '\n';
    }
  }
  close_csv(out, path);
}

void write_slopes_csv(const std::vector<SweepResult>& results, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "method,axis,metric,slope,intercept,residual,points,defined\n";
  for (const SweepResult& res : results) {
    out << to_string(res.method) << ',' << to_string(res.axis) << ',' << to_string(res.metric) << ','
        << format_double(res.slope.slope) << ',' << format_double(res.slope.intercept) << ','
        << format_double(res.slope.residual) << ',' << res.slope.points << ','
        << (res.slope.defined ? "true" : "false") << '\n';
  }
  close_csv(out, path);
}

void KernelConvergenceSetup::validate() const {
  system.validate();
  if (box.dim() != system.state_dim) throw InvalidArgument("initial-condition box has the wrong dimension");
  if (!(dt > 0.0) || horizon < 1 || substeps < 1) throw InvalidArgument("dt, horizon and substeps must be positive");
  base.validate();
  check_grid(grid, "kernel-convergence");
  if (points < 1 || runs < 1) throw InvalidArgument("points and runs must be positive");
  if (baseline_count < grid.back()) throw InvalidArgument("baseline must hold at least max(grid) eigenvalues");
}

double kernel_difference(const Eigen::MatrixXcd& kernel_base, const Eigen::MatrixXd& block,
                         const Spectrum& spectrum, std::size_t count, std::size_t baseline_count) {
  if (count < 1 || count > spectrum.size()) throw InvalidArgument("partial sum size out of range");
  const double scale = static_cast<double>(baseline_count) / static_cast<double>(count);
  return (kernel_base - scale * kernel_terms(block, spectrum, 0, count)).norm();
}

KernelConvergenceResult kernel_convergence(const KernelConvergenceSetup& setup) {
  setup.validate();
  if (setup.baseline_count < 10 * setup.grid.back()) {
    warn("baseline of " + std::to_string(setup.baseline_count) + " eigenvalues is below 10 x max(grid)");
  }
  const std::uint64_t data_seed = derive_seed(setup.seed, kSharedCell, 0, SeedRole::Data);
  const std::uint64_t base_seed = derive_seed(setup.seed, kSharedCell, 0, SeedRole::Spectrum);
  const Dataset pairs = sample_dataset(setup.system, ObservableSpec::coordinate(0), setup.box, 2 * setup.points,
                                      setup.dt, setup.horizon, data_seed, setup.substeps);
  std::vector<Eigen::MatrixXd> blocks;
  for (std::size_t p = 0; p < setup.points; ++p) blocks.push_back(base_block(pairs[2 * p], pairs[2 * p + 1], setup.base));

  const Spectrum baseline = sample_uniform_disk(setup.baseline_count, base_seed, setup.dt);
  std::vector<Eigen::MatrixXcd> kernel_base;
  for (const auto& b : blocks) kernel_base.push_back(kernel_terms(b, baseline, 0, baseline.size()));

  const std::size_t cells = setup.grid.size();
  KernelConvergenceResult result;
  result.grid = setup.grid;
  result.baseline_count = setup.baseline_count;
  result.per_run.assign(setup.runs, std::vector<double>(cells, 0.0));

  parallel_for(setup.runs, setup.threads, [&](std::size_t run) {
    const Spectrum spectrum =
        sample_uniform_disk(setup.grid.back(), derive_seed(setup.seed, 0, run, SeedRole::Spectrum), setup.dt);
    for (std::size_t p = 0; p < blocks.size(); ++p) {
      Eigen::MatrixXcd partial = Eigen::MatrixXcd::Zero(blocks[p].rows(), blocks[p].cols());
      std::size_t done = 0;
      for (std::size_t c = 0; c < cells; ++c) {
        partial += kernel_terms(blocks[p], spectrum, done, setup.grid[c]);
        done = setup.grid[c];
        const double scale = static_cast<double>(setup.baseline_count) / static_cast<double>(done);
        result.per_run[run][c] += (kernel_base[p] - scale * partial).norm() / static_cast<double>(blocks.size());
      }
    }
  });

  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<double> vals;
    for (std::size_t r = 0; r < setup.runs; ++r) vals.push_back(result.per_run[r][c]);
    const auto [mean, sd] = mean_std(vals);
    result.mean.push_back(mean);
    result.std.push_back(sd);
  }
  std::vector<double> xs(setup.grid.begin(), setup.grid.end());
  result.slope = loglog_slope(xs, result.mean);
  return result;
}

void write_convergence_csv(const KernelConvergenceResult& result, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "D,mean,std,runs,baseline\n";
  for (std::size_t c = 0; c < result.grid.size(); ++c) {
    out << result.grid[c] << ',' << format_double(result.mean[c]) << ',' << format_double(result.std[c]) << ','
        << result.per_run.size() << ',' << result.baseline_count << '\n';
  }
  close_csv(out, path);
}

}  // namespace kkr
