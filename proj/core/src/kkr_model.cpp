#include "kkr/kkr_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "kkr/diagnostics.hpp"
#include "kkr/errors.hpp"

namespace kkr {
namespace {

using detail::json;

bool all_finite(const Eigen::MatrixXcd& m) {
  return m.real().allFinite() && m.imag().allFinite();
}

/// Hermitian solve of `a x = rhs`, Cholesky first, eigendecomposition on failure.
Eigen::VectorXcd solve_regularized(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& rhs,
                                   FitDiagnostics& diag) {
  Eigen::LLT<Eigen::MatrixXcd> llt(a);
  if (llt.info() == Eigen::Success) {
    Eigen::VectorXcd x = llt.solve(rhs);
    if (all_finite(x)) {
      // One step of iterative refinement; cheap next to the factorization.
      const Eigen::VectorXcd r = rhs - a * x;
      x += llt.solve(r);
      if (all_finite(x)) return x;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(a);
  if (eig.info() != Eigen::Success) throw SingularGram("eigendecomposition of the regularized Gram failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double lmax = lambda.cwiseAbs().maxCoeff();
  const double lmin = lambda.minCoeff();
  diag.eigen_fallback = true;
  diag.condition_number = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmin > lmax * 1e-15)) {
    throw SingularGram("regularized Gram is not positive definite (min eigenvalue " + std::to_string(lmin) +
                       ", max " + std::to_string(lmax) + ")");
  }
  warn("Cholesky factorization failed, solved by eigendecomposition (condition number " +
       std::to_string(diag.condition_number) + ")");
  const Eigen::MatrixXcd& v = eig.eigenvectors();
  const Eigen::VectorXcd coeff = (v.adjoint() * rhs).cwiseQuotient(lambda.cast<Complex>());
  return v * coeff;
}

/// Solves the real SPD system k0 x = rhs column-wise.
Eigen::MatrixXd solve_initial_gram(const Eigen::MatrixXd& k0, const Eigen::MatrixXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(k0);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd x = llt.solve(rhs);
    if (x.allFinite()) return x;
  }
  // Duplicate initial conditions with zero jitter: minimum-norm solution.
  warn("initial-condition Gram is singular, using a pseudo-inverse");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k0);
  if (eig.info() != Eigen::Success) throw SingularGram("eigendecomposition of the initial-condition Gram failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = lambda.cwiseAbs().maxCoeff() * 1e-12 * static_cast<double>(lambda.size());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (lambda[k] > cutoff) inv[k] = 1.0 / lambda[k];
  }
  const Eigen::MatrixXd& v = eig.eigenvectors();
  return v * inv.asDiagonal() * (v.transpose() * rhs);
}

Eigen::MatrixXcd powers_matrix(const Spectrum& spectrum, std::size_t horizon) {
  const auto len = static_cast<Eigen::Index>(horizon + 1);
  const auto count = static_cast<Eigen::Index>(spectrum.size());
  Eigen::MatrixXcd p(len, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    const Complex mu = spectrum.mus[static_cast<std::size_t>(j)];
    p(0, j) = 1.0;
    for (Eigen::Index h = 1; h < len; ++h) p(h, j) = p(h - 1, j) * mu;
  }
  return p;
}

/// Candidate ridges for JitterRule::LeaveOneOut, half-decade steps.
std::vector<double> jitter_grid() {
  std::vector<double> grid;
  for (int k = -24; k <= 0; ++k) grid.push_back(std::pow(10.0, 0.5 * k));
  return grid;
}

/// Ridge on k0 minimizing sum_i |y_i - Re(Gamma phi_loo(x0_i))|^2, where
/// phi_loo(x0_i) interpolates the training features with trajectory i left out.
double select_jitter_loo(const Eigen::MatrixXd& k0, const Eigen::MatrixXcd& features,
                         const Eigen::MatrixXd& outputs, const Eigen::MatrixXcd& powers) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k0);
  if (eig.info() != Eigen::Success) throw SingularGram("eigendecomposition of the initial-condition Gram failed");
  const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::MatrixXcd vf = v.transpose().cast<Complex>() * features;
  double best = std::numeric_limits<double>::infinity();
  double best_jitter = 0.0;
  for (double eps : jitter_grid()) {
    const Eigen::VectorXd shrink = lambda.array() / (lambda.array() + eps);
    const Eigen::VectorXd hat_diag = (v.array().square().rowwise() * shrink.transpose().array()).rowwise().sum();
    const Eigen::MatrixXcd fitted = v.cast<Complex>() * (shrink.cast<Complex>().asDiagonal() * vf);
    Eigen::MatrixXcd loo = features;
    for (Eigen::Index i = 0; i < loo.rows(); ++i) {
      loo.row(i) -= (features.row(i) - fitted.row(i)) / std::max(1.0 - hat_diag[i], 1e-12);
    }
    const double err = (outputs - (loo * powers.transpose()).real()).squaredNorm();
    if (err < best) {
      best = err;
      best_jitter = eps;
    }
  }
  return best_jitter;
}

const char* realify_name(Realify r) {
  return r == Realify::RealPart ? "real_part" : "require_conjugate_closed";
}

Realify realify_from(const std::string& s) {
  if (s == "real_part") return Realify::RealPart;
  if (s == "require_conjugate_closed") return Realify::RequireConjugateClosed;
  throw SchemaError("unknown realify mode '" + s + "'");
}

const char* weights_name(WeightMode w) { return w == WeightMode::Normalized ? "normalized" : "literal"; }

WeightMode weights_from(const std::string& s) {
  if (s == "normalized") return WeightMode::Normalized;
  if (s == "literal") return WeightMode::Literal;
  throw SchemaError("unknown weight mode '" + s + "'");
}

}  // namespace

void KKRConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be a finite value >= 0");
  if (jitter && (!(*jitter >= 0.0) || !std::isfinite(*jitter))) {
    throw InvalidArgument("jitter must be a finite value >= 0");
  }
}

namespace {

// Kept out of line so the rollout and the defect check round identically
// (contracted multiply-adds could otherwise differ between call sites).
[[gnu::noinline]] Eigen::VectorXcd propagate_step(const Eigen::VectorXcd& lambda, const Eigen::VectorXcd& z) {
  return lambda.cwiseProduct(z);
}

}  // namespace

Eigen::MatrixXcd LTIPredictor::rollout() const {
  const Eigen::Index steps = gamma.rows();
  Eigen::MatrixXcd z(phi0.size(), steps);
  if (steps == 0) return z;
  z.col(0) = phi0;
  for (Eigen::Index h = 1; h < steps; ++h) z.col(h) = propagate_step(lambda, z.col(h - 1));
  return z;
}

double LTIPredictor::propagation_defect() const {
  const Eigen::MatrixXcd z = rollout();
  double defect = 0.0;
  for (Eigen::Index h = 0; h + 1 < z.cols(); ++h) {
    defect = std::max(defect, (z.col(h + 1) - propagate_step(lambda, z.col(h))).cwiseAbs().maxCoeff());
  }
  return defect;
}

KKRModel fit(const Dataset& dataset, const Spectrum& spectrum, const BaseKernelSpec& base,
             const KKRConfig& config) {
  config.validate();
  spectrum.validate();
  base.validate();
  const KoopmanGram gram = assemble_gram(dataset, spectrum, base, config.weights);
  return fit_with_gram(dataset, gram, base, config);
}

KKRModel fit_with_gram(const Dataset& dataset, const KoopmanGram& gram, const BaseKernelSpec& base,
                       const KKRConfig& config) {
  config.validate();
  const Spectrum& spectrum = gram.spectrum;
  const std::size_t n = dataset.size();
  const std::size_t horizon = dataset.horizon();
  const auto len = static_cast<Eigen::Index>(horizon + 1);
  const auto total = static_cast<Eigen::Index>(n) * len;
  if (gram.trajectories != n || gram.horizon != horizon || gram.matrix.rows() != total ||
      gram.matrix.cols() != total) {
    throw DimensionMismatch("Gram was assembled for a different dataset shape");
  }
  if (config.weights != gram.mode) throw InvalidArgument("Gram weight mode differs from the configuration");
  if (config.realify == Realify::RequireConjugateClosed && !is_conjugate_closed(spectrum.mus)) {
    throw InvalidArgument("strict realification requires a conjugate-closed spectrum");
  }
  if (std::abs(spectrum.dt - dataset.dt()) > 1e-12 * std::max(1.0, dataset.dt())) {
    warn("spectrum dt " + std::to_string(spectrum.dt) + " differs from dataset dt " +
         std::to_string(dataset.dt()));
  }

  KKRModel model;
  model.config = config;
  model.spectrum = spectrum;
  model.base = base;
  model.dt = dataset.dt();
  model.horizon = horizon;
  model.initial_states = dataset.initial_states();
  model.diagnostics.jitter = config.resolved_jitter(n);

  const Eigen::VectorXcd y = dataset.stacked_outputs().cast<Complex>();
  Eigen::MatrixXcd a = gram.matrix;
  a.diagonal().array() += config.gamma;
  model.beta = solve_regularized(a, y, model.diagnostics);
  const double ynorm = y.norm();
  const double res = (a * model.beta - y).norm();
  model.diagnostics.representer_residual = ynorm > 0.0 ? res / ynorm : res;

  // s_j[i] = sum_h conj(mu_j^h) beta[i (H+1) + h]
  const Eigen::Map<const Eigen::MatrixXcd> blocks(model.beta.data(), len, static_cast<Eigen::Index>(n));
  const Eigen::MatrixXcd s = blocks.transpose() * powers_matrix(spectrum, horizon).conjugate();

  const auto count = static_cast<Eigen::Index>(spectrum.size());
  model.train_features.resize(static_cast<Eigen::Index>(n), count);
  for (Eigen::Index j = 0; j < count; ++j) {
    model.train_features.col(j) = gram.scalar_kernel(static_cast<std::size_t>(j)) * s.col(j);
  }

  Eigen::MatrixXd k0 = base.cross(model.initial_states, model.initial_states);
  if (config.jitter_rule == JitterRule::LeaveOneOut) {
    const Eigen::VectorXd stacked = dataset.stacked_outputs();
    const Eigen::Map<const Eigen::MatrixXd> ys(stacked.data(), len, static_cast<Eigen::Index>(n));
    model.diagnostics.jitter =
        select_jitter_loo(k0, model.train_features, ys.transpose(), powers_matrix(spectrum, horizon));
  }
  k0.diagonal().array() += model.diagnostics.jitter;
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), 2 * count);
  rhs << model.train_features.real(), model.train_features.imag();
  const Eigen::MatrixXd sol = solve_initial_gram(k0, rhs);
  model.alphas.resize(static_cast<Eigen::Index>(n), count);
  model.alphas.real() = sol.leftCols(count);
  model.alphas.imag() = sol.rightCols(count);

  if (!all_finite(model.beta) || !all_finite(model.alphas)) {
    throw NonFiniteError("fitted coefficients are not finite");
  }
  if (!(model.diagnostics.representer_residual <= 1e-8)) {
    warn("representer residual " + std::to_string(model.diagnostics.representer_residual) +
         " exceeds 1e-8 relative");
  }
  return model;
}

Eigen::VectorXcd eigenfunctions_at(const KKRModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0) {
  if (static_cast<std::size_t>(x0.size()) != model.state_dim()) {
    throw DimensionMismatch("state has dimension " + std::to_string(x0.size()) + ", model expects " +
                            std::to_string(model.state_dim()));
  }
  const Eigen::VectorXd kx = model.base.cross(x0.transpose(), model.initial_states).transpose();
  return model.alphas.transpose() * kx.cast<Complex>();
}

LTIPredictor predictor(const KKRModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                       std::size_t horizon) {
  LTIPredictor p;
  const auto count = static_cast<Eigen::Index>(model.eigen_count());
  p.lambda.resize(count);
  for (Eigen::Index j = 0; j < count; ++j) p.lambda[j] = model.spectrum.mus[static_cast<std::size_t>(j)];
  p.phi0 = eigenfunctions_at(model, x0);
  p.gamma = powers_matrix(model.spectrum, horizon);
  return p;
}

Forecast forecast(const KKRModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0, std::size_t horizon) {
  if (horizon > model.horizon) {
    warn("forecast horizon " + std::to_string(horizon) + " exceeds the training horizon " +
         std::to_string(model.horizon));
  }
  const LTIPredictor p = predictor(model, x0, horizon);
  const Eigen::VectorXcd yc = p.gamma * p.phi0;
  Forecast out;
  out.values = yc.real();
  out.max_imag = yc.size() > 0 ? yc.imag().cwiseAbs().maxCoeff() : 0.0;
  return out;
}

std::vector<LinearityReport> linearity_check(const KKRModel& model, const Dataset& dataset) {
  if (dataset.horizon() != model.horizon || dataset.state_dim() != model.state_dim()) {
    throw DimensionMismatch("dataset shape differs from the model");
  }
  if (std::abs(dataset.dt() - model.dt) > 1e-12 * std::max(1.0, model.dt)) {
    throw InvalidArgument("dataset dt differs from the model");
  }
  std::vector<LinearityReport> reports;
  reports.reserve(dataset.size());
  for (const Trajectory& traj : dataset.trajectories()) {
    const Eigen::VectorXd x0 = traj.initial_state();
    const LTIPredictor p = predictor(model, x0, model.horizon);
    LinearityReport r;
    r.trajectory_id = traj.id;
    r.feature_defect = p.propagation_defect();
    r.residual = (traj.outputs - (p.gamma * p.phi0).real()).cwiseAbs();
    r.max_residual = r.residual.size() > 0 ? r.residual.maxCoeff() : 0.0;
    reports.push_back(std::move(r));
  }
  return reports;
}

nlohmann::json to_json(const KKRModel& model) {
  json config = {{"gamma", model.config.gamma},
                 {"realify", realify_name(model.config.realify)},
                 {"jitter_rule", model.config.jitter_rule == JitterRule::Fixed ? "fixed" : "leave_one_out"},
                 {"weights", weights_name(model.config.weights)}};
  config["jitter"] = model.config.jitter ? json(*model.config.jitter) : json(nullptr);
  return {{"format", "kkr-model"},
          {"version", 1},
          {"config", std::move(config)},
          {"base_kernel", detail::base_kernel_to_json(model.base)},
          {"spectrum", detail::spectrum_to_json(model.spectrum)},
          {"dt", model.dt},
          {"horizon", model.horizon},
          {"initial_states", detail::real_rows_to_json(model.initial_states)},
          {"beta", detail::complex_vector_to_json(model.beta)},
          {"alphas", detail::complex_columns_to_json(model.alphas)},
          {"train_features", detail::complex_columns_to_json(model.train_features)},
          {"diagnostics",
           {{"representer_residual", model.diagnostics.representer_residual},
            {"eigen_fallback", model.diagnostics.eigen_fallback},
            {"condition_number", model.diagnostics.condition_number},
            {"jitter", model.diagnostics.jitter}}}};
}

KKRModel kkr_model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "kkr-model") throw SchemaError("not a KKR model document");
    if (doc.at("version").get<int>() != 1) throw SchemaError("unsupported model version");
    KKRModel m;
    const auto& config = doc.at("config");
    m.config.gamma = config.at("gamma").get<double>();
    if (!config.at("jitter").is_null()) m.config.jitter = config.at("jitter").get<double>();
    m.config.realify = realify_from(config.at("realify").get<std::string>());
    const auto rule = config.at("jitter_rule").get<std::string>();
    if (rule == "leave_one_out") {
      m.config.jitter_rule = JitterRule::LeaveOneOut;
    } else if (rule != "fixed") {
      throw SchemaError("unknown jitter rule '" + rule + "'");
    }
    m.config.weights = weights_from(config.at("weights").get<std::string>());
    m.config.validate();
    m.base = detail::base_kernel_from_json(doc.at("base_kernel"));
    m.spectrum = detail::spectrum_from_json(doc.at("spectrum"));
    m.spectrum.validate();
    m.dt = doc.at("dt").get<double>();
    m.horizon = doc.at("horizon").get<std::size_t>();
    m.initial_states = detail::real_rows_from_json(doc.at("initial_states"));
    const auto n = m.initial_states.rows();
    m.beta = detail::complex_vector_from_json(doc.at("beta"));
    m.alphas = detail::complex_columns_from_json(doc.at("alphas"), n);
    m.train_features = detail::complex_columns_from_json(doc.at("train_features"), n);
    const auto count = static_cast<Eigen::Index>(m.spectrum.size());
    if (n < 1 || m.beta.size() != n * static_cast<Eigen::Index>(m.horizon + 1) || m.alphas.cols() != count ||
        m.train_features.cols() != count) {
      throw SchemaError("model arrays have inconsistent sizes");
    }
    if (!all_finite(m.beta) || !all_finite(m.alphas) || !m.initial_states.allFinite()) {
      throw SchemaError("model contains non-finite values");
    }
    if (doc.contains("diagnostics")) {
      const auto& d = doc.at("diagnostics");
      m.diagnostics.representer_residual = d.at("representer_residual").get<double>();
      m.diagnostics.eigen_fallback = d.at("eigen_fallback").get<bool>();
      m.diagnostics.condition_number = d.at("condition_number").get<double>();
      m.diagnostics.jitter = d.at("jitter").get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model document: ") + e.what());
  }
}

void save_model(const KKRModel& model, const std::filesystem::path& path) {
  detail::write_json_file(to_json(model), path);
}

KKRModel load_kkr_model(const std::filesystem::path& path) {
  return kkr_model_from_json(detail::read_json_file(path));
}

}  // namespace kkr
