#include "kkr/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "io_util.hpp"
#include "kkr/errors.hpp"
#include "kkr/random.hpp"

namespace kkr {
namespace {

constexpr double kUnitDiskSlack = 1e-12;

void check_sampler_args(std::size_t count, double dt, double radius) {
  if (count < 1) throw InvalidArgument("spectrum size must be at least 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("spectrum dt must be positive");
  if (!(radius > 0.0) || radius > 1.0) throw InvalidArgument("disk radius must lie in (0, 1]");
}

Complex disk_point(Rng& rng, double radius, double max_angle) {
  const double r = radius * std::sqrt(uniform01(rng));
  const double theta = max_angle * uniform01(rng);
  return std::polar(r, theta);
}

bool lex_less(const Complex& a, const Complex& b) {
  return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
}

}  // namespace

Spectrum Spectrum::prefix(std::size_t count) const {
  Spectrum out;
  out.dt = dt;
  out.mus.assign(mus.begin(), mus.begin() + static_cast<std::ptrdiff_t>(std::min(count, mus.size())));
  out.conjugate_closed = is_conjugate_closed(out.mus);
  return out;
}

void Spectrum::validate() const {
  if (mus.empty()) throw InvalidArgument("spectrum is empty");
  if (!(dt > 0.0)) throw InvalidArgument("spectrum dt must be positive");
  for (const auto& mu : mus) {
    if (!std::isfinite(mu.real()) || !std::isfinite(mu.imag())) {
      throw InvalidArgument("spectrum contains a non-finite eigenvalue");
    }
    if (std::abs(mu) > 1.0 + kUnitDiskSlack) {
      throw InvalidArgument("eigenvalue outside the closed unit disk");
    }
  }
  if (conjugate_closed && !is_conjugate_closed(mus)) {
    throw InvalidArgument("spectrum flagged conjugate-closed but is not");
  }
}

Spectrum sample_uniform_disk(std::size_t count, std::uint64_t seed, double dt, double radius) {
  check_sampler_args(count, dt, radius);
  Rng rng(seed);
  Spectrum s;
  s.dt = dt;
  s.mus.reserve(count);
  for (std::size_t j = 0; j < count; ++j) s.mus.push_back(disk_point(rng, radius, 2.0 * std::numbers::pi));
  s.conjugate_closed = false;
  return s;
}

Spectrum sample_conjugate_pairs(std::size_t count, std::uint64_t seed, double dt, double radius) {
  check_sampler_args(count, dt, radius);
  Rng rng(seed);
  Spectrum s;
  s.dt = dt;
  s.mus.reserve(count);
  for (std::size_t p = 0; p < count / 2; ++p) {
    const Complex mu = disk_point(rng, radius, std::numbers::pi);
    s.mus.push_back(mu);
    s.mus.push_back(std::conj(mu));
  }
  if (count % 2 == 1) s.mus.emplace_back(uniform(rng, -radius, radius), 0.0);
  s.conjugate_closed = true;
  return s;
}

Spectrum sample_structured(std::size_t count, std::uint64_t seed, double dt) {
  check_sampler_args(count, dt, 1.0);
  Rng rng(seed);
  Spectrum s;
  s.dt = dt;
  s.mus.reserve(count);
  while (s.mus.size() < count) {
    const auto branch = static_cast<int>(3.0 * uniform01(rng));
    const double a = uniform01(rng);
    const bool imaginary = branch < 2 && count - s.mus.size() >= 2;
    if (imaginary) {
      // +ia and -ia land on the same conjugate pair.
      const Complex mu = std::exp(Complex(0.0, a * dt));
      s.mus.push_back(mu);
      s.mus.push_back(std::conj(mu));
    } else {
      s.mus.emplace_back(std::exp(-a * dt), 0.0);
    }
  }
  s.conjugate_closed = true;
  return s;
}

MuPowers mu_powers(Complex mu, std::size_t horizon) {
  const auto len = static_cast<Eigen::Index>(horizon + 1);
  MuPowers out;
  out.mu = mu;
  out.powers.resize(len);
  out.powers[0] = 1.0;
  for (Eigen::Index h = 1; h < len; ++h) out.powers[h] = out.powers[h - 1] * mu;

  Eigen::VectorXcd v(len);
  if (std::abs(mu) <= 1.0) {
    // mu^(H-h) = mu^H * mu^-h: same direction, trailing entry 1.
    for (Eigen::Index h = 0; h < len; ++h) v[h] = out.powers[len - 1 - h];
  } else {
    const Complex inv = 1.0 / mu;
    v[0] = 1.0;
    for (Eigen::Index h = 1; h < len; ++h) v[h] = v[h - 1] * inv;
  }
  out.pullback_weights = v / v.norm();
  return out;
}

Eigen::VectorXcd literal_pullback(Complex mu, std::size_t horizon) {
  const auto len = static_cast<Eigen::Index>(horizon + 1);
  Eigen::VectorXcd v(len);
  v[0] = 1.0;
  const Complex inv = 1.0 / mu;
  for (Eigen::Index h = 1; h < len; ++h) v[h] = v[h - 1] * inv;
  return v;
}

bool is_conjugate_closed(const std::vector<Complex>& mus, double tol) {
  std::vector<Complex> upper;
  std::vector<Complex> lower;
  for (const auto& mu : mus) {
    if (mu.imag() > tol) {
      upper.push_back(mu);
    } else if (mu.imag() < -tol) {
      lower.push_back(std::conj(mu));
    }
  }
  if (upper.size() != lower.size()) return false;
  std::sort(upper.begin(), upper.end(), lex_less);
  std::sort(lower.begin(), lower.end(), lex_less);
  for (std::size_t k = 0; k < upper.size(); ++k) {
    if (std::abs(upper[k] - lower[k]) > tol * std::max(1.0, std::abs(upper[k]))) return false;
  }
  return true;
}

void save_spectrum_csv(const Spectrum& spectrum, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "re,im\n";
  for (const auto& mu : spectrum.mus) {
    out << format_double(mu.real()) << ',' << format_double(mu.imag()) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Spectrum load_spectrum_csv(const std::filesystem::path& path, double dt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != "re,im") {
    throw SchemaError("spectrum file must start with the header re,im");
  }
  Spectrum s;
  s.dt = dt;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim_cr(line);
    if (row.empty()) continue;
    const auto fields = split_csv(row);
    if (fields.size() != 2) throw SchemaError("line " + std::to_string(line_no) + ": expected 2 columns");
    s.mus.emplace_back(parse_double(fields[0], line_no), parse_double(fields[1], line_no));
  }
  if (s.mus.empty()) throw SchemaError("spectrum file has no eigenvalues");
  s.conjugate_closed = is_conjugate_closed(s.mus);
  s.validate();
  return s;
}

}  // namespace kkr
