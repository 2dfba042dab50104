#include "kkr/edmd.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "json_util.hpp"
#include "kkr/diagnostics.hpp"
#include "kkr/errors.hpp"
#include "linalg.hpp"

namespace kkr {
namespace {

using detail::json;

constexpr double kRelativeRankCutoff = 1e-12;

bool all_finite(const Eigen::MatrixXcd& m) { return m.real().allFinite() && m.imag().allFinite(); }

/// Ridge least squares (Phi^H Phi + ridge I) c = Phi^H y.
Eigen::VectorXcd regress(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& y, double ridge) {
  Eigen::MatrixXcd normal = phi.adjoint() * phi;
  normal.diagonal().array() += ridge;
  const Eigen::VectorXcd rhs = phi.adjoint() * y;
  Eigen::LLT<Eigen::MatrixXcd> llt(normal);
  if (llt.info() == Eigen::Success) {
    Eigen::VectorXcd c = llt.solve(rhs);
    if (all_finite(c)) return c;
  }
  return phi.completeOrthogonalDecomposition().solve(y);
}

}  // namespace

SnapshotPairs make_pairs(const Dataset& dataset) {
  const std::size_t horizon = dataset.horizon();
  if (horizon < 1) throw InvalidArgument("snapshot pairs need H >= 1");
  const auto h = static_cast<Eigen::Index>(horizon);
  const auto m = static_cast<Eigen::Index>(dataset.size()) * h;
  const auto d = static_cast<Eigen::Index>(dataset.state_dim());
  SnapshotPairs p;
  p.inputs.resize(m, d);
  p.successors.resize(m, d);
  p.outputs.resize(m);
  p.successor_outputs.resize(m);
  p.horizon = horizon;
  p.dt = dataset.dt();
  p.ids.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Trajectory& t = dataset[i];
    const Eigen::Index row = static_cast<Eigen::Index>(i) * h;
    p.inputs.middleRows(row, h) = t.states.topRows(h);
    p.successors.middleRows(row, h) = t.states.bottomRows(h);
    p.outputs.segment(row, h) = t.outputs.head(h);
    p.successor_outputs.segment(row, h) = t.outputs.tail(h);
    p.ids.push_back(t.id);
  }
  return p;
}

Dataset reconstruct_dataset(const SnapshotPairs& pairs) {
  const auto h = static_cast<Eigen::Index>(pairs.horizon);
  if (h < 1 || pairs.trajectories() < 1 ||
      static_cast<std::size_t>(pairs.inputs.rows()) != pairs.trajectories() * pairs.horizon) {
    throw DimensionMismatch("snapshot pairs do not tile whole trajectories");
  }
  std::vector<Trajectory> out;
  out.reserve(pairs.trajectories());
  for (std::size_t i = 0; i < pairs.trajectories(); ++i) {
    const Eigen::Index row = static_cast<Eigen::Index>(i) * h;
    Trajectory t;
    t.dt = pairs.dt;
    t.id = pairs.ids[i];
    t.states.resize(h + 1, pairs.inputs.cols());
    t.states.topRows(h) = pairs.inputs.middleRows(row, h);
    t.states.row(h) = pairs.successors.row(row + h - 1);
    t.outputs.resize(h + 1);
    t.outputs.head(h) = pairs.outputs.segment(row, h);
    t.outputs[h] = pairs.successor_outputs[row + h - 1];
    out.push_back(std::move(t));
  }
  return Dataset(std::move(out));
}

EDMDModel fit_pcr(const SnapshotPairs& pairs, std::size_t rank, const BaseKernelSpec& base, double ridge) {
  base.validate();
  const std::size_t m = pairs.size();
  if (rank < 1 || rank > m) {
    throw InvalidArgument("rank " + std::to_string(rank) + " outside [1, " + std::to_string(m) + "]");
  }
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidArgument("ridge must be a finite value >= 0");
  if (pairs.successors.rows() != pairs.inputs.rows() || pairs.successors.cols() != pairs.inputs.cols() ||
      static_cast<std::size_t>(pairs.outputs.size()) != m) {
    throw DimensionMismatch("snapshot pair arrays differ in shape");
  }

  const Eigen::MatrixXd g = base.cross(pairs.inputs, pairs.inputs);
  const detail::EigenPairs top = detail::top_eigenpairs(g, rank);
  const double smax = top.values[0];
  if (!(smax > 0.0)) throw SingularGram("input Gram has no positive principal value");
  Eigen::Index keep = 0;
  while (keep < top.values.size() && top.values[keep] > kRelativeRankCutoff * smax) ++keep;
  if (static_cast<std::size_t>(keep) < rank) {
    warn("EDMD rank reduced from " + std::to_string(rank) + " to " + std::to_string(keep) +
         " (negligible principal values)");
  }

  const Eigen::MatrixXd u = top.vectors.leftCols(keep);
  const Eigen::VectorXd inv_sqrt = top.values.head(keep).cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd a = base.cross(pairs.successors, pairs.inputs);  // A[i, j] = k(x+_i, x_j)
  const Eigen::MatrixXd t = inv_sqrt.asDiagonal() * (u.transpose() * a * u) * inv_sqrt.asDiagonal();

  Eigen::EigenSolver<Eigen::MatrixXd> es(t);
  if (es.info() != Eigen::Success) throw SingularGram("eigendecomposition of the reduced operator failed");

  EDMDModel model;
  model.requested_rank = rank;
  model.rank = static_cast<std::size_t>(keep);
  model.eigenvalues = es.eigenvalues();
  model.eigenfunction_weights = (u * inv_sqrt.asDiagonal()).cast<Complex>() * es.eigenvectors();
  model.base = base;
  model.training_inputs = pairs.inputs;
  model.ridge = ridge;
  model.dt = pairs.dt;
  model.horizon = pairs.horizon;

  const Eigen::MatrixXcd phi = g.cast<Complex>() * model.eigenfunction_weights;
  const Eigen::VectorXcd y = pairs.outputs.cast<Complex>();
  model.modes = regress(phi, y, ridge);
  model.regression_residual = (y - phi * model.modes).norm();
  if (!all_finite(model.eigenvalues) || !all_finite(model.eigenfunction_weights) || !all_finite(model.modes)) {
    throw NonFiniteError("EDMD fit produced non-finite values");
  }
  return model;
}

Eigen::VectorXcd eigenfunctions_at(const EDMDModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != model.state_dim()) {
    throw DimensionMismatch("state has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(model.state_dim()));
  }
  const Eigen::VectorXd kx = model.base.cross(x.transpose(), model.training_inputs).transpose();
  return model.eigenfunction_weights.transpose() * kx.cast<Complex>();
}

Eigen::VectorXd forecast_edmd(const EDMDModel& model, const Eigen::Ref<const Eigen::VectorXd>& x0,
                              std::size_t horizon) {
  Eigen::VectorXcd z = model.modes.cwiseProduct(eigenfunctions_at(model, x0));
  Eigen::VectorXd y(static_cast<Eigen::Index>(horizon + 1));
  for (Eigen::Index h = 0; h < y.size(); ++h) {
    if (h > 0) z = z.cwiseProduct(model.eigenvalues);
    y[h] = z.sum().real();
  }
  return y;
}

nlohmann::json to_json(const EDMDModel& model) {
  return {{"format", "edmd-model"},
          {"version", 1},
          {"requested_rank", model.requested_rank},
          {"rank", model.rank},
          {"base_kernel", detail::base_kernel_to_json(model.base)},
          {"ridge", model.ridge},
          {"dt", model.dt},
          {"horizon", model.horizon},
          {"regression_residual", model.regression_residual},
          {"eigenvalues", detail::complex_vector_to_json(model.eigenvalues)},
          {"modes", detail::complex_vector_to_json(model.modes)},
          {"eigenfunction_weights", detail::complex_columns_to_json(model.eigenfunction_weights)},
          {"training_inputs", detail::real_rows_to_json(model.training_inputs)}};
}

EDMDModel edmd_model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "edmd-model") throw SchemaError("not an EDMD model document");
    if (doc.at("version").get<int>() != 1) throw SchemaError("unsupported model version");
    EDMDModel m;
    m.requested_rank = doc.at("requested_rank").get<std::size_t>();
    m.rank = doc.at("rank").get<std::size_t>();
    m.base = detail::base_kernel_from_json(doc.at("base_kernel"));
    m.ridge = doc.at("ridge").get<double>();
    m.dt = doc.at("dt").get<double>();
    m.horizon = doc.at("horizon").get<std::size_t>();
    m.regression_residual = doc.at("regression_residual").get<double>();
    m.eigenvalues = detail::complex_vector_from_json(doc.at("eigenvalues"));
    m.modes = detail::complex_vector_from_json(doc.at("modes"));
    m.training_inputs = detail::real_rows_from_json(doc.at("training_inputs"));
    m.eigenfunction_weights = detail::complex_columns_from_json(doc.at("eigenfunction_weights"),
                                                                m.training_inputs.rows());
    const auto r = static_cast<Eigen::Index>(m.rank);
    if (m.eigenvalues.size() != r || m.modes.size() != r || m.eigenfunction_weights.cols() != r ||
        m.training_inputs.rows() < r) {
      throw SchemaError("model arrays have inconsistent sizes");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model document: ") + e.what());
  }
}

void save_model(const EDMDModel& model, const std::filesystem::path& path) {
  detail::write_json_file(to_json(model), path);
}

EDMDModel load_edmd_model(const std::filesystem::path& path) {
  return edmd_model_from_json(detail::read_json_file(path));
}

}  // namespace kkr
