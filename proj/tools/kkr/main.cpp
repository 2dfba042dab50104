// kkr: simulate benchmark data, fit and evaluate Koopman kernel models, run
// risk sweeps. Results go to files under --out; warnings go to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kkr/dynamics.hpp"
#include "kkr/edmd.hpp"
#include "kkr/errors.hpp"
#include "kkr/experiments.hpp"
#include "kkr/kkr_model.hpp"
#include "kkr/version.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct Options {
  fs::path config;
  std::optional<fs::path> out;
  std::size_t threads = 0;
  fs::path data;
  fs::path model;
  std::string method = "kkr";
  std::string x0;
  std::size_t steps = 0;
};

fs::path out_dir(const Options& opt, const kkr::cli::RunConfig& cfg) {
  const fs::path dir = opt.out ? *opt.out : cfg.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw kkr::IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

fs::path or_default(const fs::path& given, const fs::path& fallback) { return given.empty() ? fallback : given; }

void write_manifest(const fs::path& dir, const std::string& command, const Options& opt,
                    const kkr::cli::RunConfig& cfg, json extra = json::object()) {
  json doc = {{"tool", "kkr"},
              {"version", kkr::kVersion},
              {"command", command},
              {"threads", opt.threads},
              {"config", cfg.resolved()}};
  for (auto& [k, v] : extra.items()) doc[k] = v;
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw kkr::IoError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

kkr::Spectrum draw_spectrum(const kkr::cli::RunConfig& cfg, double dt) {
  const std::uint64_t seed = kkr::cli::require_seed(cfg.spectrum.seed, "spectrum.seed");
  return kkr::sample_spectrum(cfg.spectrum.sampler, cfg.spectrum.count, seed, dt, cfg.spectrum.radius);
}

int cmd_simulate(const Options& opt, const kkr::cli::RunConfig& cfg) {
  const std::uint64_t seed = kkr::cli::require_seed(cfg.data.seed, "data.seed");
  const fs::path dir = out_dir(opt, cfg);
  const kkr::Dataset data = kkr::sample_dataset(cfg.system, cfg.observable, cfg.box, cfg.data.trajectories,
                                                cfg.data.dt, cfg.data.horizon, seed, cfg.data.substeps);
  const fs::path path = or_default(opt.data, dir / "dataset.csv");
  kkr::save_csv(data, path);
  write_manifest(dir, "simulate", opt, cfg, {{"outputs", {path.string()}}});
  return 0;
}

int cmd_fit(const Options& opt, const kkr::cli::RunConfig& cfg) {
  const fs::path dir = out_dir(opt, cfg);
  const fs::path data_path = or_default(opt.data, dir / "dataset.csv");
  const fs::path model_path = or_default(opt.model, dir / "model.json");
  const kkr::Dataset data = kkr::load_csv(data_path);
  if (opt.method == "kkr") {
    const kkr::KKRModel model = kkr::fit(data, draw_spectrum(cfg, data.dt()), cfg.base, cfg.kkr);
    kkr::save_model(model, model_path);
  } else {
    const kkr::EDMDModel model = kkr::fit_pcr(kkr::make_pairs(data), cfg.edmd.rank, cfg.base, cfg.edmd.ridge);
    kkr::save_model(model, model_path);
  }
  write_manifest(dir, "fit", opt, cfg,
                 {{"method", opt.method}, {"inputs", {data_path.string()}}, {"outputs", {model_path.string()}}});
  return 0;
}

Eigen::VectorXd parse_state(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw kkr::cli::ConfigError("--x0 expects comma-separated numbers, got '" + text + "'");
    }
  }
  if (values.empty()) throw kkr::cli::ConfigError("--x0 is empty");
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw kkr::IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw kkr::SchemaError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

int cmd_forecast(const Options& opt, const kkr::cli::RunConfig& cfg) {
  const fs::path dir = out_dir(opt, cfg);
  const fs::path model_path = or_default(opt.model, dir / "model.json");
  const Eigen::VectorXd x0 = parse_state(opt.x0);
  const json doc = read_json(model_path);
  const std::string format = doc.value("format", "");

  Eigen::VectorXd y;
  double dt = 0.0;
  double max_imag = 0.0;
  if (format == "kkr-model") {
    const kkr::KKRModel model = kkr::kkr_model_from_json(doc);
    const kkr::Forecast f = kkr::forecast(model, x0, opt.steps);
    y = f.values;
    max_imag = f.max_imag;
    dt = model.dt;
  } else if (format == "edmd-model") {
    const kkr::EDMDModel model = kkr::edmd_model_from_json(doc);
    if (opt.steps > model.horizon) {
      std::cerr << "warning: forecast horizon " << opt.steps << " exceeds the training horizon " << model.horizon
                << '\n';
    }
    y = kkr::forecast_edmd(model, x0, opt.steps);
    dt = model.dt;
  } else {
    throw kkr::SchemaError("'" + model_path.string() + "' is neither a KKR nor an EDMD model");
  }

  const fs::path path = dir / "forecast.csv";
  std::ofstream out(path);
  if (!out) throw kkr::IoError("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "h,t,y\n";
  for (Eigen::Index h = 0; h < y.size(); ++h) out << h << ',' << static_cast<double>(h) * dt << ',' << y[h] << '\n';
  if (!out) throw kkr::IoError("failed writing '" + path.string() + "'");
  write_manifest(dir, "forecast", opt, cfg,
                 {{"inputs", {model_path.string()}},
                  {"x0", std::vector<double>(x0.data(), x0.data() + x0.size())},
                  {"steps", opt.steps},
                  {"max_imag", max_imag},
                  {"outputs", {path.string()}}});
  return 0;
}

int cmd_sweep(const Options& opt, const kkr::cli::RunConfig& cfg) {
  kkr::SweepSetup setup;
  setup.system = cfg.system;
  setup.observable = cfg.observable;
  setup.box = cfg.box;
  setup.trajectories = cfg.data.trajectories;
  setup.dt = cfg.data.dt;
  setup.horizon = cfg.data.horizon;
  setup.substeps = cfg.data.substeps;
  setup.eigen_count = cfg.spectrum.count;
  setup.edmd_rank = cfg.edmd.rank;
  setup.base = cfg.base;
  setup.sampler = cfg.spectrum.sampler;
  setup.disk_radius = cfg.spectrum.radius;
  setup.kkr = cfg.kkr;
  setup.edmd_ridge = cfg.edmd.ridge;
  setup.test_trajectories = cfg.experiment.test_trajectories;

  kkr::SweepOptions options;
  options.axis = cfg.experiment.axis;
  options.grid = cfg.experiment.grid;
  options.repetitions = cfg.experiment.repetitions;
  options.methods = cfg.experiment.methods;
  options.master_seed = kkr::cli::require_seed(cfg.experiment.master_seed, "experiment.master_seed");
  options.metric = cfg.experiment.metric;
  options.threads = opt.threads;
  try {
    setup.validate();
    options.validate();
  } catch (const kkr::InvalidArgument& e) {
    throw kkr::cli::ConfigError(e.what());
  }

  const fs::path dir = out_dir(opt, cfg);
  const kkr::SweepOutput result = kkr::sweep(setup, options);
  kkr::write_results_csv(result.records, dir / "results.csv");
  kkr::write_aggregate_csv(result.results, dir / "aggregate.csv");
  kkr::write_slopes_csv(result.results, dir / "slopes.csv");
  write_manifest(dir, "sweep", opt, cfg,
                 {{"outputs", {(dir / "results.csv").string(), (dir / "aggregate.csv").string(),
                               (dir / "slopes.csv").string()}}});
  return 0;
}

int cmd_kernel_convergence(const Options& opt, const kkr::cli::RunConfig& cfg) {
  kkr::KernelConvergenceSetup setup;
  setup.system = cfg.system;
  setup.box = cfg.box;
  setup.dt = cfg.data.dt;
  setup.horizon = cfg.data.horizon;
  setup.substeps = cfg.data.substeps;
  setup.base = cfg.base;
  setup.grid = cfg.convergence.grid;
  setup.baseline_count = cfg.convergence.baseline;
  setup.points = cfg.convergence.points;
  setup.runs = cfg.convergence.runs;
  setup.seed = kkr::cli::require_seed(cfg.convergence.seed, "convergence.seed");
  setup.threads = opt.threads;
  try {
    setup.validate();
  } catch (const kkr::InvalidArgument& e) {
    throw kkr::cli::ConfigError(e.what());
  }

  const fs::path dir = out_dir(opt, cfg);
  const kkr::KernelConvergenceResult result = kkr::kernel_convergence(setup);
  kkr::write_convergence_csv(result, dir / "convergence.csv");
  write_manifest(dir, "kernel-convergence", opt, cfg,
                 {{"slope", result.slope.defined ? json(result.slope.slope) : json(nullptr)},
                  {"outputs", {(dir / "convergence.csv").string()}}});
  return 0;
}

int report(int code, const std::string& kind, const std::exception& e) {
  std::cerr << "kkr: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman kernel regression toolkit"};
  app.set_version_flag("--version", std::string(kkr::kVersion));
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
    if (config_required) c->required();
    sub->add_option("--out", opt.out, "Output directory (overrides io.out_dir)");
    sub->add_option("--threads", opt.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate a trajectory dataset");
  add_common(simulate, true);
  simulate->add_option("--data", opt.data, "Dataset CSV to write (default OUT/dataset.csv)");

  auto* fit = app.add_subcommand("fit", "Fit a KKR or EDMD model to a dataset");
  add_common(fit, true);
  fit->add_option("--data", opt.data, "Dataset CSV (default OUT/dataset.csv)");
  fit->add_option("--model", opt.model, "Model JSON to write (default OUT/model.json)");
  fit->add_option("--method", opt.method, "kkr or edmd")->check(CLI::IsMember({"kkr", "edmd"}));

  auto* forecast = app.add_subcommand("forecast", "Forecast from an initial state with a saved model");
  add_common(forecast, false);
  forecast->add_option("--model", opt.model, "Model JSON (default OUT/model.json)");
  forecast->add_option("--x0", opt.x0, "Initial state, comma separated")->required();
  forecast->add_option("--steps", opt.steps, "Forecast horizon H'")->required();

  auto* sweep = app.add_subcommand("sweep", "Risk sweep over N, D or H");
  add_common(sweep, true);

  auto* convergence = app.add_subcommand("kernel-convergence", "Convergence of sampled-spectrum kernels");
  add_common(convergence, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const kkr::cli::RunConfig cfg = opt.config.empty() ? kkr::cli::RunConfig{} : kkr::cli::load_run_config(opt.config);
    if (*simulate) return cmd_simulate(opt, cfg);
    if (*fit) return cmd_fit(opt, cfg);
    if (*forecast) return cmd_forecast(opt, cfg);
    if (*sweep) return cmd_sweep(opt, cfg);
    if (*convergence) return cmd_kernel_convergence(opt, cfg);
  } catch (const kkr::cli::ConfigError& e) {
    return report(kExitConfig, "config error", e);
  } catch (const kkr::InvalidArgument& e) {
    return report(kExitConfig, "invalid argument", e);
  } catch (const kkr::IoError& e) {
    return report(kExitIo, "I/O error", e);
  } catch (const kkr::ParseError& e) {
    return report(kExitIo, "parse error", e);
  } catch (const kkr::SchemaError& e) {
    return report(kExitIo, "schema error", e);
  } catch (const kkr::Error& e) {
    return report(kExitNumeric, "numerical failure", e);
  } catch (const std::exception& e) {
    return report(kExitNumeric, "error", e);
  }
  return EXIT_FAILURE;
}
