#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "kkr/dynamics.hpp"
#include "kkr/kernel.hpp"
#include "kkr/spectra.hpp"

namespace kkr {

/// How complex forecasts become real outputs.
enum class Realify {
  RealPart,                // take Re, report the imaginary magnitude
  RequireConjugateClosed,  // refuse spectra that are not conjugate-closed
};

/// How the ridge on the initial-condition Gram is chosen.
enum class JitterRule {
  Fixed,        // `jitter`, or 1e-10 N when unset
  LeaveOneOut,  // minimizes the leave-one-out training forecast error over a log grid
};

struct KKRConfig {
  double gamma = 1e-6;
  /// Ridge on the initial-condition Gram; 1e-10 N when unset.
  std::optional<double> jitter;
  JitterRule jitter_rule = JitterRule::Fixed;
  Realify realify = Realify::RealPart;
  WeightMode weights = WeightMode::Normalized;

  void validate() const;
  double resolved_jitter(std::size_t trajectories) const {
    return jitter.value_or(1e-10 * static_cast<double>(trajectories));
  }
};

struct FitDiagnostics {
  /// |(G + gamma I) beta - y| / |y| on the assembled Gram.
  double representer_residual = 0.0;
  bool eigen_fallback = false;
  /// Only set when the eigendecomposition fallback ran.
  double condition_number = 0.0;
  /// Ridge actually applied to the initial-condition Gram.
  double jitter = 0.0;
};

/// Fitted estimator. Immutable after fit; safe for concurrent forecasting.
struct KKRModel {
  KKRConfig config;
  Spectrum spectrum;
  BaseKernelSpec base;
  double dt = 0.0;
  std::size_t horizon = 0;
  Eigen::MatrixXd initial_states;     // N x d
  Eigen::VectorXcd beta;              // N (H+1), trajectory-major
  Eigen::MatrixXcd alphas;            // N x D, column j = alpha_j
  Eigen::MatrixXcd train_features;    // N x D, eigenfunction values of the training trajectories
  FitDiagnostics diagnostics;

  std::size_t trajectories() const { return static_cast<std::size_t>(initial_states.rows()); }
  std::size_t state_dim() const { return static_cast<std::size_t>(initial_states.cols()); }
  std::size_t eigen_count() const { return spectrum.size(); }
};

/// Diagonal LTI system z+ = Lambda z, y = 1^T z started at phi(x0).
struct LTIPredictor {
  Eigen::VectorXcd lambda;  // diagonal of Lambda
  Eigen::VectorXcd phi0;
  Eigen::MatrixXcd gamma;   // (H'+1) x D, row h = 1^T Lambda^h

  /// States z_0 .. z_H' as columns.
  Eigen::MatrixXcd rollout() const;
  /// max_h |z_{h+1} - Lambda z_h| over a rollout.
  double propagation_defect() const;
};

struct Forecast {
  Eigen::VectorXd values;  // Re(1^T z_h)
  double max_imag = 0.0;   // max_h |Im(1^T z_h)|
};

struct LinearityReport {
  std::int64_t trajectory_id = 0;
  double feature_defect = 0.0;
  double max_residual = 0.0;
  Eigen::VectorXd residual;  // |y_h - yhat_h|
};

/// Solves (G + gamma I) beta = y and pulls every eigenfunction back to the
/// initial-condition kernel. Throws SingularGram, DimensionMismatch or
/// InvalidArgument (strict realification with a spectrum that is not
/// conjugate-closed).
KKRModel fit(const Dataset& dataset, const Spectrum& spectrum, const BaseKernelSpec& base,
             const KKRConfig& config = {});

/// Same, reusing an already assembled Gram of `dataset`.
KKRModel fit_with_gram(const Dataset& dataset, const KoopmanGram& gram, const BaseKernelSpec& base,
                       const KKRConfig& config = {});

Eigen::VectorXcd eigenfunctions_at(const KKRModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0);

LTIPredictor predictor(const KKRModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                       std::size_t horizon);

/// Warns (does not fail) when `horizon` exceeds the training horizon.
Forecast forecast(const KKRModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                  std::size_t horizon);

std::vector<LinearityReport> linearity_check(const KKRModel& model, const Dataset& dataset);

nlohmann::json to_json(const KKRModel& model);
KKRModel kkr_model_from_json(const nlohmann::json& doc);
void save_model(const KKRModel& model, const std::filesystem::path& path);
KKRModel load_kkr_model(const std::filesystem::path& path);

}  // namespace kkr
