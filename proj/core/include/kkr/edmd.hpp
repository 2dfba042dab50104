#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "kkr/dynamics.hpp"
#include "kkr/kernel.hpp"

namespace kkr {

/// One-step pairs (x_h, x_{h+1}) of every trajectory, trajectory-major.
struct SnapshotPairs {
  Eigen::MatrixXd inputs;            // M x d
  Eigen::MatrixXd successors;        // M x d
  Eigen::VectorXd outputs;           // y at the inputs
  Eigen::VectorXd successor_outputs; // y at the successors, kept for reconstruction
  std::vector<std::int64_t> ids;     // one per trajectory
  std::size_t horizon = 0;
  double dt = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t trajectories() const { return ids.size(); }
};

/// Requires H >= 1.
SnapshotPairs make_pairs(const Dataset& dataset);

/// Inverse of make_pairs.
Dataset reconstruct_dataset(const SnapshotPairs& pairs);

/// Kernel EDMD by principal component regression.
struct EDMDModel {
  std::size_t requested_rank = 0;
  std::size_t rank = 0;                   // after dropping negligible principal values
  Eigen::VectorXcd eigenvalues;           // mu_hat, length rank
  Eigen::MatrixXcd eigenfunction_weights; // M x rank: phi_hat(x) = k(x, X) E
  Eigen::VectorXcd modes;                 // output coefficients c
  BaseKernelSpec base;
  Eigen::MatrixXd training_inputs;        // X, M x d
  double ridge = 1e-8;
  double regression_residual = 0.0;       // |Y - Phi c| on the training inputs
  double dt = 0.0;
  std::size_t horizon = 0;

  std::size_t state_dim() const { return static_cast<std::size_t>(training_inputs.cols()); }
};

/// Warns and lowers the rank when retained principal values fall below
/// 1e-12 of the largest. Throws InvalidArgument unless 1 <= rank <= M.
EDMDModel fit_pcr(const SnapshotPairs& pairs, std::size_t rank, const BaseKernelSpec& base,
                  double ridge = 1e-8);

Eigen::VectorXcd eigenfunctions_at(const EDMDModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// y[h] = Re(sum_j c_j mu_j^h phi_j(x0)).
Eigen::VectorXd forecast_edmd(const EDMDModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                              std::size_t horizon);

nlohmann::json to_json(const EDMDModel& model);
EDMDModel edmd_model_from_json(const nlohmann::json& doc);
void save_model(const EDMDModel& model, const std::filesystem::path& path);
EDMDModel load_edmd_model(const std::filesystem::path& path);

}  // namespace kkr
