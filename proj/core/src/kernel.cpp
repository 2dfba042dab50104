#include "kkr/kernel.hpp"

#include <cmath>
#include <string>

#include "kkr/errors.hpp"

namespace kkr {
namespace {

// Above this dimension squared distances go through a GEMM.
constexpr Eigen::Index kDirectDistanceMaxDim = 16;

Eigen::MatrixXd stacked_states(const Dataset& dataset) {
  const auto len = static_cast<Eigen::Index>(dataset.horizon() + 1);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(dataset.size()) * len,
                    static_cast<Eigen::Index>(dataset.state_dim()));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    z.middleRows(static_cast<Eigen::Index>(i) * len, len) = dataset[i].states;
  }
  return z;
}

void check_block(const Eigen::Ref<const Eigen::MatrixXd>& block, const MuPowers& left,
                 const MuPowers& right) {
  if (block.rows() != left.powers.size() || block.cols() != right.powers.size()) {
    throw DimensionMismatch("kernel block is " + std::to_string(block.rows()) + "x" +
                            std::to_string(block.cols()) + " but weights have length " +
                            std::to_string(left.powers.size()) + " and " +
                            std::to_string(right.powers.size()));
  }
}

Eigen::VectorXcd weights_for(const MuPowers& p, WeightMode mode) {
  if (mode == WeightMode::Normalized) return p.pullback_weights;
  const auto h = p.horizon();
  Eigen::VectorXcd v = literal_pullback(p.mu, h) / static_cast<double>(h + 1);
  if (!v.allFinite()) {
    throw OverflowError("literal pullback weights overflow for |mu| = " + std::to_string(std::abs(p.mu)) +
                        " over H = " + std::to_string(h));
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Base kernel

void BaseKernelSpec::validate() const {
  if (kind == BaseKernelKind::Linear) return;
  if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
    throw InvalidArgument("kernel length scale must be positive");
  }
}

double rbf(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
           double length_scale) {
  if (x.size() != y.size()) throw DimensionMismatch("rbf arguments differ in dimension");
  return std::exp(-(x - y).squaredNorm() / (2.0 * length_scale * length_scale));
}

double BaseKernelSpec::operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (kind == BaseKernelKind::Linear) {
    if (x.size() != y.size()) throw DimensionMismatch("kernel arguments differ in dimension");
    return x.dot(y);
  }
  return rbf(x, y, length_scale);
}

Eigen::MatrixXd BaseKernelSpec::cross(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                      const Eigen::Ref<const Eigen::MatrixXd>& b) const {
  if (a.cols() != b.cols()) throw DimensionMismatch("kernel arguments differ in dimension");
  if (kind == BaseKernelKind::Linear) return a * b.transpose();
  const double scale = -1.0 / (2.0 * length_scale * length_scale);
  Eigen::MatrixXd out(a.rows(), b.rows());
  if (a.cols() <= kDirectDistanceMaxDim) {
    for (Eigen::Index c = 0; c < b.rows(); ++c) {
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        out(r, c) = std::exp(scale * (a.row(r) - b.row(c)).squaredNorm());
      }
    }
    return out;
  }
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  out.noalias() = -2.0 * a * b.transpose();
  out.colwise() += na;
  out.rowwise() += nb.transpose();
  out = (scale * out.cwiseMax(0.0)).array().exp().matrix();
  return out;
}

Eigen::MatrixXd base_block(const Trajectory& a, const Trajectory& b, const BaseKernelSpec& base) {
  return base.cross(a.states, b.states);
}

// ---------------------------------------------------------------------------
// Per-pair kernels

Complex scalar_eigen_kernel(const Eigen::Ref<const Eigen::MatrixXd>& block, const MuPowers& left,
                            const MuPowers& right, WeightMode mode) {
  check_block(block, left, right);
  const Eigen::VectorXcd w = weights_for(left, mode);
  const Eigen::VectorXcd wp = weights_for(right, mode);
  const Complex value = w.transpose() * block.cast<Complex>() * wp.conjugate();
  if (!std::isfinite(value.real()) || !std::isfinite(value.imag())) {
    throw OverflowError("eigenfunction kernel value is not finite");
  }
  return value;
}

Eigen::MatrixXcd matrix_eigen_kernel(const Trajectory& a, const Trajectory& b, const MuPowers& mu,
                                     const BaseKernelSpec& base, WeightMode mode) {
  if (a.horizon() != b.horizon()) throw DimensionMismatch("trajectories differ in horizon");
  const Eigen::MatrixXd block = base_block(a, b, base);
  const Complex s = scalar_eigen_kernel(block, mu, mu, mode);
  return s * (mu.powers * mu.powers.adjoint());
}

Eigen::MatrixXcd koopman_kernel(const Trajectory& a, const Trajectory& b, const Spectrum& spectrum,
                                std::span<const BaseKernelSpec> bases, WeightMode mode) {
  if (a.horizon() != b.horizon()) throw DimensionMismatch("trajectories differ in horizon");
  if (bases.size() != spectrum.size()) {
    throw DimensionMismatch("need one base kernel per eigenvalue");
  }
  const auto len = static_cast<Eigen::Index>(a.horizon() + 1);
  Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(len, len);
  for (std::size_t j = 0; j < spectrum.size(); ++j) {
    sum += matrix_eigen_kernel(a, b, mu_powers(spectrum.mus[j], a.horizon()), bases[j], mode);
  }
  return sum;
}

Eigen::MatrixXcd koopman_kernel(const Trajectory& a, const Trajectory& b, const Spectrum& spectrum,
                                const BaseKernelSpec& base, WeightMode mode) {
  if (a.horizon() != b.horizon()) throw DimensionMismatch("trajectories differ in horizon");
  // Shared base kernel: evaluate the block once.
  const Eigen::MatrixXd block = base_block(a, b, base);
  const auto len = static_cast<Eigen::Index>(a.horizon() + 1);
  Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(len, len);
  for (const auto& mu : spectrum.mus) {
    const MuPowers p = mu_powers(mu, a.horizon());
    sum += scalar_eigen_kernel(block, p, p, mode) * (p.powers * p.powers.adjoint());
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Gram assembly

BaseGramTensor::BaseGramTensor(const Dataset& dataset, const BaseKernelSpec& base)
    : n_(dataset.size()), len_(dataset.horizon() + 1) {
  base.validate();
  const Eigen::MatrixXd z = stacked_states(dataset);
  if (z.cols() <= kDirectDistanceMaxDim) {
    const double scale = -1.0 / (2.0 * base.length_scale * base.length_scale);
    const Eigen::Index r = z.rows();
    values_.resize(r, r);
    for (Eigen::Index c = 0; c < r; ++c) {
      values_(c, c) = 1.0;
      for (Eigen::Index a = c + 1; a < r; ++a) {
        const double v = std::exp(scale * (z.row(a) - z.row(c)).squaredNorm());
        values_(a, c) = v;
        values_(c, a) = v;
      }
    }
  } else {
    values_ = base.cross(z, z);
    values_ = 0.5 * (values_ + values_.transpose()).eval();
    values_.diagonal().setOnes();
  }
}

Eigen::MatrixXcd pullback_weight_matrix(const Spectrum& spectrum, std::size_t horizon, WeightMode mode) {
  Eigen::MatrixXcd w(static_cast<Eigen::Index>(horizon + 1), static_cast<Eigen::Index>(spectrum.size()));
  for (std::size_t j = 0; j < spectrum.size(); ++j) {
    w.col(static_cast<Eigen::Index>(j)) = weights_for(mu_powers(spectrum.mus[j], horizon), mode);
  }
  return w;
}

KoopmanGram assemble_gram(const Dataset& dataset, const Spectrum& spectrum, const BaseKernelSpec& base,
                          WeightMode mode) {
  return assemble_gram(BaseGramTensor(dataset, base), spectrum, mode);
}

KoopmanGram assemble_gram(const BaseGramTensor& base_gram, const Spectrum& spectrum, WeightMode mode) {
  if (spectrum.size() == 0) throw InvalidArgument("cannot assemble a Gram from an empty spectrum");
  const auto n = static_cast<Eigen::Index>(base_gram.trajectories());
  const auto len = static_cast<Eigen::Index>(base_gram.samples());
  const auto d = static_cast<Eigen::Index>(spectrum.size());
  const auto horizon = static_cast<std::size_t>(len - 1);
  const Eigen::MatrixXd& b = base_gram.matrix();

  const Eigen::MatrixXcd w = pullback_weight_matrix(spectrum, horizon, mode);
  const Eigen::MatrixXd wr = w.real();
  const Eigen::MatrixXd wi = w.imag();

  KoopmanGram gram;
  gram.spectrum = spectrum;
  gram.mode = mode;
  gram.trajectories = static_cast<std::size_t>(n);
  gram.horizon = horizon;
  gram.scalar_kernels.resize(n * n, d);

  // Scalar kernels: k_j[i, i'] = sum_{m,n} w_j[m] B[(i,m), (i',n)] conj(w_j[n]).
  // Only i >= i' is contracted; the rest follows from Hermitian symmetry.
  Eigen::MatrixXd tr;
  Eigen::MatrixXd ti;
  for (Eigen::Index ip = 0; ip < n; ++ip) {
    const auto rows = (n - ip) * len;
    const auto slab = b.block(ip * len, ip * len, rows, len);
    tr.noalias() = slab * wr;
    ti.noalias() = slab * wi;
    for (Eigen::Index i = ip; i < n; ++i) {
      const auto off = (i - ip) * len;
      const auto tr_i = tr.middleRows(off, len);
      const auto ti_i = ti.middleRows(off, len);
      const Eigen::RowVectorXd re = (wr.cwiseProduct(tr_i) + wi.cwiseProduct(ti_i)).colwise().sum();
      const Eigen::RowVectorXd im = (wi.cwiseProduct(tr_i) - wr.cwiseProduct(ti_i)).colwise().sum();
      for (Eigen::Index j = 0; j < d; ++j) {
        const Complex v(re[j], i == ip ? 0.0 : im[j]);
        gram.scalar_kernels(i + n * ip, j) = v;
        gram.scalar_kernels(ip + n * i, j) = std::conj(v);
      }
    }
  }

  // Time structure: Q[(h, h'), j] = p_j[h] conj(p_j[h']).
  Eigen::MatrixXcd powers(len, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    powers.col(j) = mu_powers(spectrum.mus[static_cast<std::size_t>(j)], horizon).powers;
  }
  Eigen::MatrixXcd q(len * len, d);
  for (Eigen::Index hp = 0; hp < len; ++hp) {
    for (Eigen::Index h = 0; h < len; ++h) {
      q.row(h + len * hp) = powers.row(h).cwiseProduct(powers.row(hp).conjugate());
    }
  }

  const auto r = n * len;
  gram.matrix.resize(r, r);
  Eigen::MatrixXcd blocks;
  for (Eigen::Index ip = 0; ip < n; ++ip) {
    // Columns i + n ip for i >= ip are contiguous in scalar_kernels' rows.
    blocks.noalias() = q * gram.scalar_kernels.middleRows(ip * n + ip, n - ip).transpose();
    for (Eigen::Index i = ip; i < n; ++i) {
      const Eigen::Map<const Eigen::MatrixXcd> blk(blocks.col(i - ip).data(), len, len);
      gram.matrix.block(i * len, ip * len, len, len) = blk;
      if (i != ip) gram.matrix.block(ip * len, i * len, len, len) = blk.adjoint();
    }
  }
  // Diagonal blocks: enforce exact Hermitian symmetry.
  for (Eigen::Index i = 0; i < n; ++i) {
    auto blk = gram.matrix.block(i * len, i * len, len, len);
    const Eigen::MatrixXcd sym = 0.5 * (blk + blk.adjoint());
    blk = sym;
  }
  return gram;
}

}  // namespace kkr
