#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kkr/dynamics.hpp"
#include "kkr/experiments.hpp"
#include "kkr/kernel.hpp"
#include "kkr/kkr_model.hpp"

namespace kkr::cli {

/// Invalid or incomplete run configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSection {
  std::size_t trajectories = 50;
  double dt = 1.0 / 14.0;
  std::size_t horizon = 14;
  std::size_t substeps = 10;
  std::optional<std::uint64_t> seed;
};

struct SpectrumSection {
  SpectrumSampler sampler = SpectrumSampler::UniformDisk;
  std::size_t count = 100;
  std::optional<std::uint64_t> seed;
  bool conjugate_closed = false;
  double radius = 1.0;
};

struct EdmdSection {
  std::size_t rank = 10;
  double ridge = 1e-8;
};

struct ExperimentSection {
  SweepAxis axis = SweepAxis::N;
  std::vector<std::size_t> grid;
  std::size_t repetitions = 16;
  std::size_t test_trajectories = 200;
  std::optional<std::uint64_t> master_seed;
  std::vector<Method> methods{Method::KKR, Method::EDMD};
  std::optional<RiskMetric> metric;
};

struct ConvergenceSection {
  std::vector<std::size_t> grid;
  std::size_t baseline = 20000;
  std::size_t points = 5;
  std::size_t runs = 20;
  std::optional<std::uint64_t> seed;
};

/// Parsed JSON run configuration. Every section is optional and falls back
/// to the defaults above; seeds have no default and must be given by the
/// subcommands that consume them.
struct RunConfig {
  SystemSpec system = SystemSpec::bistable();
  ObservableSpec observable = ObservableSpec::coordinate(0);
  Box box = Box::cube(1, -1.0, 1.0);
  DataSection data;
  BaseKernelSpec base;
  SpectrumSection spectrum;
  KKRConfig kkr;
  EdmdSection edmd;
  ExperimentSection experiment;
  ConvergenceSection convergence;
  std::filesystem::path out_dir = ".";

  /// Fully expanded config, defaults included. Parsing it yields the same run.
  nlohmann::json resolved() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
/// Throws IoError if the file cannot be read, ConfigError on bad content.
RunConfig load_run_config(const std::filesystem::path& path);

/// Throws ConfigError when `seed` is unset.
std::uint64_t require_seed(const std::optional<std::uint64_t>& seed, const char* key);

}  // namespace kkr::cli
