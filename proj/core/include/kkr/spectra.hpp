#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace kkr {

using Complex = std::complex<double>;

/// Multiset of discrete-time eigenvalues mu_j = exp(lambda_j dt).
struct Spectrum {
  std::vector<Complex> mus;
  double dt = 1.0;
  bool conjugate_closed = false;

  std::size_t size() const { return mus.size(); }

  /// First `count` eigenvalues. The closure flag is recomputed.
  Spectrum prefix(std::size_t count) const;

  /// Throws InvalidArgument if an eigenvalue is non-finite, lies outside
  /// the closed unit disk, or the closure flag is wrong.
  void validate() const;
};

/// Time-power structure of a single eigenvalue over a horizon H.
struct MuPowers {
  Complex mu;
  Eigen::VectorXcd powers;            // mu^h, h = 0..H
  Eigen::VectorXcd pullback_weights;  // unit-norm direction of (mu^-h)_h

  std::size_t horizon() const { return static_cast<std::size_t>(powers.size()) - 1; }
};

/// i.i.d. draws, uniform in area over the disk of the given radius
/// (r = radius sqrt(u), theta = 2 pi v).
Spectrum sample_uniform_disk(std::size_t count, std::uint64_t seed, double dt = 1.0,
                             double radius = 1.0);

/// floor(D/2) pairs {mu, conj(mu)} with mu uniform over the upper half
/// disk, plus one real eigenvalue uniform on [-radius, radius] when D is odd.
Spectrum sample_conjugate_pairs(std::size_t count, std::uint64_t seed, double dt = 1.0,
                                double radius = 1.0);

/// Continuous-time eigenvalues drawn from the three branches {+ia, -ia, -a},
/// a ~ U[0, 1], mapped through mu = exp(lambda dt). Imaginary draws emit the
/// conjugate pair jointly; when only one slot is left the decaying branch
/// is used, so the result is always conjugate-closed.
Spectrum sample_structured(std::size_t count, std::uint64_t seed, double dt);

/// Powers and normalized pullback weights. The weights are computed from
/// mu^(H-h) for |mu| <= 1 and from (1/mu)^h otherwise, both of which have
/// unit-modulus leading or trailing entry and cannot overflow. mu = 0
/// yields the indicator e_H.
MuPowers mu_powers(Complex mu, std::size_t horizon);

/// Literal pullback (mu^-h)_h without normalization. Entries overflow for
/// |mu| << 1 and are returned as they are.
Eigen::VectorXcd literal_pullback(Complex mu, std::size_t horizon);

/// True if the multiset equals its conjugate within `tol`.
bool is_conjugate_closed(const std::vector<Complex>& mus, double tol = 1e-12);

/// CSV with header `re,im`, one eigenvalue per row.
void save_spectrum_csv(const Spectrum& spectrum, const std::filesystem::path& path);
Spectrum load_spectrum_csv(const std::filesystem::path& path, double dt);

}  // namespace kkr
