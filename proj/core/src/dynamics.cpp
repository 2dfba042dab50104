#include "kkr/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "kkr/errors.hpp"
#include "kkr/random.hpp"

namespace kkr {
namespace {

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

}  // namespace

// ---------------------------------------------------------------------------
// SystemSpec

SystemSpec SystemSpec::bistable(double a, double b) {
  SystemSpec s;
  s.kind = SystemKind::Bistable;
  s.params = {{"a", a}, {"b", b}};
  s.state_dim = 1;
  return s;
}

SystemSpec SystemSpec::van_der_pol(double damping, double nonlinearity, double stiffness) {
  SystemSpec s;
  s.kind = SystemKind::VanDerPol;
  s.params = {{"damping", damping}, {"nonlinearity", nonlinearity}, {"stiffness", stiffness}};
  s.state_dim = 2;
  return s;
}

SystemSpec SystemSpec::custom(std::size_t state_dim, VectorField rhs) {
  SystemSpec s;
  s.kind = SystemKind::Custom;
  s.state_dim = state_dim;
  s.custom_rhs = std::move(rhs);
  return s;
}

void SystemSpec::validate() const {
  for (const auto& [name, value] : params) {
    if (!std::isfinite(value)) {
      throw InvalidArgument("system parameter '" + name + "' is not finite");
    }
  }
  switch (kind) {
    case SystemKind::Bistable:
      if (state_dim != 1) throw InvalidArgument("bistable system has state_dim 1");
      param("a");
      param("b");
      break;
    case SystemKind::VanDerPol:
      if (state_dim != 2) throw InvalidArgument("Van der Pol system has state_dim 2");
      param("damping");
      param("nonlinearity");
      param("stiffness");
      break;
    case SystemKind::Custom:
      if (state_dim == 0) throw InvalidArgument("state_dim must be positive");
      if (!custom_rhs) throw InvalidArgument("custom system without a vector field");
      break;
  }
}

double SystemSpec::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw InvalidArgument("missing system parameter '" + name + "'");
  return it->second;
}

State SystemSpec::rhs(const State& x) const {
  switch (kind) {
    case SystemKind::Bistable: {
      State dx(1);
      dx[0] = bistable_rhs(x[0], params.at("a"), params.at("b"));
      return dx;
    }
    case SystemKind::VanDerPol: {
      const double pos = x[0];
      const double vel = x[1];
      State dx(2);
      dx[0] = vel;
      dx[1] = params.at("damping") * vel * (1.0 - params.at("nonlinearity") * pos * pos) -
              params.at("stiffness") * pos;
      return dx;
    }
    case SystemKind::Custom:
      return custom_rhs(x);
  }
  return x;
}

double bistable_rhs(double x, double a, double b) { return a * x + b * x * x * x; }

Eigen::Vector2d vanderpol_rhs(const Eigen::Vector2d& state) {
  const double x = state[0];
  const double v = state[1];
  return {v, 2.0 * v * (1.0 - 5.0 * x * x) - 0.8 * x};
}

// ---------------------------------------------------------------------------
// ObservableSpec

ObservableSpec ObservableSpec::coordinate(std::size_t index) {
  ObservableSpec q;
  q.kind = ObservableKind::Coordinate;
  q.index = index;
  q.description = "x" + std::to_string(index);
  return q;
}

ObservableSpec ObservableSpec::norm() {
  ObservableSpec q;
  q.kind = ObservableKind::Norm;
  q.description = "norm";
  return q;
}

ObservableSpec ObservableSpec::custom_fn(std::string description,
                                         std::function<double(const State&)> fn) {
  ObservableSpec q;
  q.kind = ObservableKind::Custom;
  q.description = std::move(description);
  q.custom = std::move(fn);
  return q;
}

void ObservableSpec::validate(std::size_t state_dim) const {
  if (kind == ObservableKind::Coordinate && index >= state_dim) {
    throw InvalidArgument("observable coordinate " + std::to_string(index) +
                          " out of range for state_dim " + std::to_string(state_dim));
  }
  if (kind == ObservableKind::Custom && !custom) {
    throw InvalidArgument("custom observable without a function");
  }
}

double ObservableSpec::operator()(const State& x) const {
  switch (kind) {
    case ObservableKind::Coordinate:
      return x[static_cast<Eigen::Index>(index)];
    case ObservableKind::Norm:
      return x.norm();
    case ObservableKind::Custom:
      return custom(x);
  }
  return 0.0;
}

Box Box::cube(std::size_t dim, double lo, double hi) {
  const auto n = static_cast<Eigen::Index>(dim);
  return {State::Constant(n, lo), State::Constant(n, hi)};
}

// ---------------------------------------------------------------------------
// Trajectory / Dataset

void Trajectory::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("trajectory dt must be positive");
  if (states.rows() < 1 || states.cols() < 1) throw DimensionMismatch("empty trajectory");
  if (outputs.size() != states.rows()) {
    throw DimensionMismatch("trajectory outputs length differs from number of states");
  }
  if (!all_finite(states) || !outputs.allFinite()) {
    throw NonFiniteError("trajectory " + std::to_string(id) + " has non-finite entries");
  }
}

bool Trajectory::operator==(const Trajectory& other) const {
  return dt == other.dt && id == other.id && states.rows() == other.states.rows() &&
         states.cols() == other.states.cols() && states == other.states &&
         outputs.size() == other.outputs.size() && outputs == other.outputs;
}

Dataset::Dataset(std::vector<Trajectory> trajectories) : trajectories_(std::move(trajectories)) {
  if (trajectories_.empty()) throw InvalidArgument("a dataset needs at least one trajectory");
  const auto& first = trajectories_.front();
  for (const auto& traj : trajectories_) {
    traj.validate();
    if (traj.horizon() != first.horizon()) {
      throw DimensionMismatch("trajectories differ in horizon");
    }
    if (traj.state_dim() != first.state_dim()) {
      throw DimensionMismatch("trajectories differ in state dimension");
    }
    if (traj.dt != first.dt) throw DimensionMismatch("trajectories differ in dt");
  }
}

Eigen::MatrixXd Dataset::initial_states() const {
  Eigen::MatrixXd x0(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(state_dim()));
  for (std::size_t i = 0; i < size(); ++i) {
    x0.row(static_cast<Eigen::Index>(i)) = trajectories_[i].states.row(0);
  }
  return x0;
}

Eigen::VectorXd Dataset::stacked_outputs() const {
  const auto len = static_cast<Eigen::Index>(horizon() + 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(size()) * len);
  for (std::size_t i = 0; i < size(); ++i) {
    y.segment(static_cast<Eigen::Index>(i) * len, len) = trajectories_[i].outputs;
  }
  return y;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<Trajectory> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(trajectories_.at(i));
  return Dataset(std::move(picked));
}

bool Dataset::operator==(const Dataset& other) const {
  return trajectories_ == other.trajectories_;
}

// ---------------------------------------------------------------------------
// Integration

Trajectory integrate(const SystemSpec& system, const State& x0, double dt,
                     std::size_t horizon, std::size_t substeps,
                     const ObservableSpec& observable) {
  system.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (substeps < 1) throw InvalidArgument("substeps must be at least 1");
  if (static_cast<std::size_t>(x0.size()) != system.state_dim) {
    throw DimensionMismatch("initial state dimension differs from system state_dim");
  }
  observable.validate(system.state_dim);
  if (!x0.allFinite()) throw NonFiniteError("initial state is not finite");

  Trajectory traj;
  traj.dt = dt;
  traj.states.resize(static_cast<Eigen::Index>(horizon + 1), x0.size());
  traj.outputs.resize(static_cast<Eigen::Index>(horizon + 1));

  const double h = dt / static_cast<double>(substeps);
  State x = x0;
  traj.states.row(0) = x.transpose();
  traj.outputs[0] = observable(x);
  for (std::size_t step = 1; step <= horizon; ++step) {
    for (std::size_t s = 0; s < substeps; ++s) {
      const State k1 = system.rhs(x);
      const State k2 = system.rhs(x + 0.5 * h * k1);
      const State k3 = system.rhs(x + 0.5 * h * k2);
      const State k4 = system.rhs(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) {
        std::ostringstream msg;
        msg << "state left the finite range at t = "
            << (static_cast<double>(step - 1) * dt + static_cast<double>(s + 1) * h);
        throw NonFiniteError(msg.str());
      }
    }
    const auto row = static_cast<Eigen::Index>(step);
    traj.states.row(row) = x.transpose();
    traj.outputs[row] = observable(x);
  }
  if (!traj.outputs.allFinite()) throw NonFiniteError("observable produced a non-finite value");
  return traj;
}

Dataset sample_dataset(const SystemSpec& system, const ObservableSpec& observable,
                       const Box& box, std::size_t count, double dt, std::size_t horizon,
                       std::uint64_t seed, std::size_t substeps) {
  system.validate();
  if (count < 1) throw InvalidArgument("dataset size must be at least 1");
  if (box.dim() != system.state_dim || box.upper.size() != box.lower.size()) {
    throw DimensionMismatch("initial-condition box dimension differs from system state_dim");
  }
  if (!box.lower.allFinite() || !box.upper.allFinite() || (box.upper.array() < box.lower.array()).any()) {
    throw InvalidArgument("initial-condition box must be finite with lower <= upper");
  }

  std::vector<Trajectory> trajectories;
  trajectories.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(stream_seed(seed, i));
    State x0(box.lower.size());
    for (Eigen::Index k = 0; k < x0.size(); ++k) x0[k] = uniform(rng, box.lower[k], box.upper[k]);
    Trajectory traj = integrate(system, x0, dt, horizon, substeps, observable);
    traj.id = static_cast<std::int64_t>(i);
    for (Eigen::Index h = 0; h < traj.states.rows(); ++h) {
      if (traj.outputs[h] != observable(traj.states.row(h).transpose())) {
        throw InvalidArgument("observable is not a deterministic function of the state");
      }
    }
    trajectories.push_back(std::move(traj));
  }
  return Dataset(std::move(trajectories));
}

bool check_nonrecurrence(const Trajectory& trajectory, double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  const auto& s = trajectory.states;
  const double tol2 = tol * tol;
  for (Eigen::Index a = 0; a < s.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < s.rows(); ++b) {
      if ((s.row(a) - s.row(b)).squaredNorm() < tol2) return false;
    }
  }
  return true;
}

}  // namespace kkr
