#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "kkr/dynamics.hpp"
#include "kkr/errors.hpp"
#include "io_util.hpp"

namespace kkr {

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");

  const std::size_t d = dataset.state_dim();
  out << "traj_id,t";
  for (std::size_t k = 0; k < d; ++k) out << ",x" << k;
  out << ",y\n";

  std::string line;
  for (const auto& traj : dataset.trajectories()) {
    for (Eigen::Index h = 0; h < traj.states.rows(); ++h) {
      line.clear();
      line += std::to_string(traj.id);
      line += ',';
      line += format_double(static_cast<double>(h) * traj.dt);
      for (Eigen::Index k = 0; k < traj.states.cols(); ++k) {
        line += ',';
        line += format_double(traj.states(h, k));
      }
      line += ',';
      line += format_double(traj.outputs[h]);
      line += '\n';
      out << line;
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

struct RawTrajectory {
  std::int64_t id = 0;
  std::vector<double> times;
  std::vector<double> values;  // row-major states
  std::vector<double> outputs;
};

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || trim_cr(line).empty()) {
    throw SchemaError("'" + path.string() + "' is empty, expected a traj_id,t,x0,...,y header");
  }
  const auto header = split_csv(trim_cr(line));
  if (header.size() < 4 || header[0] != "traj_id" || header[1] != "t" || header.back() != "y") {
    throw SchemaError("header must be traj_id,t,x0,...,x{d-1},y");
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k + 2] != "x" + std::to_string(k)) {
      throw SchemaError("header column " + std::to_string(k + 2) + " must be x" + std::to_string(k));
    }
  }

  std::vector<RawTrajectory> raw;
  std::size_t line_no = 1;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim_cr(line);
    if (row.empty()) continue;
    fields = split_csv(row);
    if (fields.size() != header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " columns, found " +
                        std::to_string(fields.size()));
    }
    const auto id = parse_int(fields[0], line_no);
    if (raw.empty() || raw.back().id != id) {
      for (const auto& r : raw) {
        if (r.id == id) throw ParseError("trajectory " + std::to_string(id) + " is not contiguous", line_no);
      }
      if (!raw.empty() && id < raw.back().id) {
        throw ParseError("rows must be sorted by traj_id", line_no);
      }
      raw.push_back({id, {}, {}, {}});
    }
    auto& cur = raw.back();
    const double t = parse_double(fields[1], line_no);
    if (!cur.times.empty() && !(t > cur.times.back())) {
      throw ParseError("time must increase within a trajectory", line_no);
    }
    cur.times.push_back(t);
    for (std::size_t k = 0; k < d; ++k) cur.values.push_back(parse_double(fields[k + 2], line_no));
    cur.outputs.push_back(parse_double(fields.back(), line_no));
  }
  if (raw.empty()) throw SchemaError("'" + path.string() + "' has a header but no data rows");

  const std::size_t rows = raw.front().times.size();
  if (rows < 2) throw SchemaError("trajectories need at least two samples to define dt");
  const double dt = raw.front().times[1] - raw.front().times[0];

  std::vector<Trajectory> trajectories;
  trajectories.reserve(raw.size());
  for (const auto& r : raw) {
    if (r.times.size() != rows) {
      throw SchemaError("trajectory " + std::to_string(r.id) + " has " +
                        std::to_string(r.times.size()) + " samples, expected " + std::to_string(rows));
    }
    const double scale = std::max(1.0, std::abs(r.times.back()));
    for (std::size_t h = 0; h < rows; ++h) {
      const double expected = r.times[0] + static_cast<double>(h) * dt;
      if (std::abs(r.times[h] - expected) > 1e-9 * scale) {
        throw SchemaError("trajectory " + std::to_string(r.id) + " is not uniformly sampled with dt = " +
                          format_double(dt));
      }
    }
    Trajectory traj;
    traj.id = r.id;
    traj.dt = dt;
    traj.states = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        r.values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    traj.outputs = Eigen::Map<const Eigen::VectorXd>(r.outputs.data(), static_cast<Eigen::Index>(rows));
    trajectories.push_back(std::move(traj));
  }
  return Dataset(std::move(trajectories));
}

}  // namespace kkr
