#pragma once

#include <complex>
#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kkr/errors.hpp"
#include "kkr/kernel.hpp"
#include "kkr/spectra.hpp"

namespace kkr::detail {

using nlohmann::json;

inline json complex_vector_to_json(const Eigen::Ref<const Eigen::VectorXcd>& v) {
  json re = json::array();
  json im = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    re.push_back(v[k].real());
    im.push_back(v[k].imag());
  }
  return {{"re", std::move(re)}, {"im", std::move(im)}};
}

inline Eigen::VectorXcd complex_vector_from_json(const json& doc) {
  const auto& re = doc.at("re");
  const auto& im = doc.at("im");
  if (re.size() != im.size()) throw SchemaError("re/im lists differ in length");
  Eigen::VectorXcd v(static_cast<Eigen::Index>(re.size()));
  for (std::size_t k = 0; k < re.size(); ++k) {
    v[static_cast<Eigen::Index>(k)] = {re[k].get<double>(), im[k].get<double>()};
  }
  return v;
}

/// Columns as a list of {re, im} objects.
inline json complex_columns_to_json(const Eigen::MatrixXcd& m) {
  json cols = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) cols.push_back(complex_vector_to_json(m.col(j)));
  return cols;
}

inline Eigen::MatrixXcd complex_columns_from_json(const json& doc, Eigen::Index rows) {
  Eigen::MatrixXcd m(rows, static_cast<Eigen::Index>(doc.size()));
  for (std::size_t j = 0; j < doc.size(); ++j) {
    const Eigen::VectorXcd col = complex_vector_from_json(doc[j]);
    if (col.size() != rows) throw SchemaError("column length mismatch in model document");
    m.col(static_cast<Eigen::Index>(j)) = col;
  }
  return m;
}

inline json real_rows_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd real_rows_from_json(const json& doc) {
  if (doc.empty()) return {};
  const auto cols = doc[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(doc.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < doc.size(); ++r) {
    if (doc[r].size() != cols) throw SchemaError("ragged matrix in model document");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = doc[r][c].get<double>();
    }
  }
  return m;
}

inline json spectrum_to_json(const Spectrum& s) {
  Eigen::VectorXcd mus(static_cast<Eigen::Index>(s.size()));
  for (std::size_t j = 0; j < s.size(); ++j) mus[static_cast<Eigen::Index>(j)] = s.mus[j];
  json doc = complex_vector_to_json(mus);
  doc["dt"] = s.dt;
  doc["conjugate_closed"] = s.conjugate_closed;
  return doc;
}

inline Spectrum spectrum_from_json(const json& doc) {
  Spectrum s;
  const Eigen::VectorXcd mus = complex_vector_from_json(doc);
  s.mus.assign(mus.data(), mus.data() + mus.size());
  s.dt = doc.at("dt").get<double>();
  s.conjugate_closed = doc.at("conjugate_closed").get<bool>();
  return s;
}

inline json base_kernel_to_json(const BaseKernelSpec& k) {
  return {{"kind", k.kind == BaseKernelKind::RBF ? "rbf" : "linear"}, {"length_scale", k.length_scale}};
}

inline BaseKernelSpec base_kernel_from_json(const json& doc) {
  const auto kind = doc.at("kind").get<std::string>();
  BaseKernelSpec k;
  if (kind == "linear") {
    k.kind = BaseKernelKind::Linear;
  } else if (kind != "rbf") {
    throw SchemaError("unknown base kernel kind '" + kind + "'");
  }
  k.length_scale = doc.at("length_scale").get<double>();
  k.validate();
  return k;
}

inline void write_json_file(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0);
  }
}

}  // namespace kkr::detail
