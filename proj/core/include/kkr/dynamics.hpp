#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kkr {

using State = Eigen::VectorXd;
using VectorField = std::function<State(const State&)>;

enum class SystemKind { Bistable, VanDerPol, Custom };

/// Autonomous ODE x' = f(x) with named real coefficients.
///
/// Bistable:  x' = a x + b x^3                      (params a, b)
/// VanDerPol: x'' = damping x' (1 - nonlinearity x^2) - stiffness x
///            as the first-order pair (x, v).
struct SystemSpec {
  SystemKind kind = SystemKind::Bistable;
  std::map<std::string, double> params;
  std::size_t state_dim = 1;
  VectorField custom_rhs;  // only consulted for SystemKind::Custom

  static SystemSpec bistable(double a = 4.0, double b = -16.0);
  static SystemSpec van_der_pol(double damping = 2.0, double nonlinearity = 5.0,
                                double stiffness = 0.8);
  static SystemSpec custom(std::size_t state_dim, VectorField rhs);

  /// Throws InvalidArgument when the invariants of `kind` are violated.
  void validate() const;
  double param(const std::string& name) const;
  State rhs(const State& x) const;
};

enum class ObservableKind { Coordinate, Norm, Custom };

struct ObservableSpec {
  ObservableKind kind = ObservableKind::Coordinate;
  std::size_t index = 0;
  std::string description = "x0";
  std::function<double(const State&)> custom;

  static ObservableSpec coordinate(std::size_t index);
  static ObservableSpec norm();
  static ObservableSpec custom_fn(std::string description,
                                  std::function<double(const State&)> fn);

  void validate(std::size_t state_dim) const;
  double operator()(const State& x) const;
};

/// Axis-aligned box of initial conditions. Degenerate sides are allowed.
struct Box {
  State lower;
  State upper;

  static Box cube(std::size_t dim, double lo, double hi);
  std::size_t dim() const { return static_cast<std::size_t>(lower.size()); }
};

/// Uniformly sampled state path with its scalar outputs.
struct Trajectory {
  double dt = 0.0;
  Eigen::MatrixXd states;   // (H+1) x d, row h is x(h dt)
  Eigen::VectorXd outputs;  // H+1
  std::int64_t id = 0;

  std::size_t horizon() const { return static_cast<std::size_t>(states.rows()) - 1; }
  std::size_t state_dim() const { return static_cast<std::size_t>(states.cols()); }
  State initial_state() const { return states.row(0).transpose(); }

  /// Throws NonFiniteError / DimensionMismatch on invalid content.
  void validate() const;

  bool operator==(const Trajectory& other) const;
};

/// Immutable collection of trajectories sharing dt, H and d.
class Dataset {
 public:
  explicit Dataset(std::vector<Trajectory> trajectories);

  std::size_t size() const { return trajectories_.size(); }
  double dt() const { return trajectories_.front().dt; }
  std::size_t horizon() const { return trajectories_.front().horizon(); }
  std::size_t state_dim() const { return trajectories_.front().state_dim(); }

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }

  /// N x d matrix of initial conditions, row i = trajectory i at t = 0.
  Eigen::MatrixXd initial_states() const;
  /// Outputs stacked trajectory-major, index i (H+1) + h.
  Eigen::VectorXd stacked_outputs() const;

  /// Trajectories at `indices`, in the given order.
  Dataset subset(const std::vector<std::size_t>& indices) const;

  bool operator==(const Dataset& other) const;

 private:
  std::vector<Trajectory> trajectories_;
};

double bistable_rhs(double x, double a, double b);
Eigen::Vector2d vanderpol_rhs(const Eigen::Vector2d& state);

/// Classical RK4 with `substeps` internal steps per output sample.
/// Outputs are q(states[h]) for the given observable.
Trajectory integrate(const SystemSpec& system, const State& x0, double dt,
                     std::size_t horizon, std::size_t substeps = 10,
                     const ObservableSpec& observable = ObservableSpec{});

/// N trajectories from initial conditions uniform in `box`. Trajectory i
/// draws from its own stream seeded by (seed, i), so the result does not
/// depend on evaluation order.
Dataset sample_dataset(const SystemSpec& system, const ObservableSpec& observable,
                       const Box& box, std::size_t count, double dt,
                       std::size_t horizon, std::uint64_t seed,
                       std::size_t substeps = 10);

/// False iff two distinct samples lie closer than `tol` in Euclidean norm.
bool check_nonrecurrence(const Trajectory& trajectory, double tol);

/// CSV: header `traj_id,t,x0,...,x{d-1},y`, rows sorted by (traj_id, t),
/// values with 17 significant digits.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace kkr
