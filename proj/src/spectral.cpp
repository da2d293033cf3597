#include "imputeformer/spectral.hpp"

#include <numeric>

namespace imputeformer::spectral {

double ComplexSpectrum::l1_norm() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i) acc += modulus(i);
  return acc;
}

double SingularSpectrum::nuclear_norm() const { return std::accumulate(values.begin(), values.end(), 0.0); }

std::vector<double> SingularSpectrum::cumulative_energy() const {
  std::vector<double> out(values.size());
  double total = 0.0;
  for (double v : values) total += v * v;
  double run = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    run += values[i] * values[i];
    out[i] = total > 0.0 ? run / total : 0.0;
  }
  return out;
}

ComplexSpectrum dft(const Tensor& x, const std::vector<int>& axes) {
  ComplexSpectrum s;
  s.shape = x.shape();
  std::vector<std::complex<double>> data(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) data[i] = {x[i], 0.0};

  for (int axis : axes) {
    const int rank = static_cast<int>(x.dim());
    const int ax = axis < 0 ? axis + rank : axis;
    if (ax < 0 || ax >= rank) throw DimensionError("dft: axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= x.shape()[static_cast<std::size_t>(i)];
    for (int i = ax + 1; i < rank; ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
    const std::size_t len = x.shape()[static_cast<std::size_t>(ax)];
    std::vector<std::complex<double>> line(len);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        for (std::size_t j = 0; j < len; ++j) line[j] = data[base + j * inner];
        line = spectral::dft(std::move(line));
        for (std::size_t j = 0; j < len; ++j) data[base + j * inner] = line[j];
      }
    }
  }
  s.re.resize(data.size());
  s.im.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.re[i] = data[i].real();
    s.im[i] = data[i].imag();
  }
  return s;
}

Tensor dft_l1(const Tensor& x) {
  if (x.dim() != 2) throw DimensionError("dft_l1: expected [N,T] tensor, got " + shape_string(x.shape()));
  const auto rows = static_cast<Eigen::Index>(x.shape()[0]);
  const auto cols = static_cast<Eigen::Index>(x.shape()[1]);
  Matrix<std::complex<double>> z(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) z(r, c) = {x[static_cast<std::size_t>(r * cols + c)], 0.0};
  z = dft2(z);
  const double inv = 1.0 / static_cast<double>(rows * cols);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) acc += std::abs(z(i));
  return record_op({}, {acc * inv}, {x}, [x, z, rows, cols, inv](const TensorNode& o) {
    if (!x.requires_grad()) return;
    // d|z_k|/dx = Re(adjoint transform of z_k/|z_k|); zero at exact spectral zeros.
    Matrix<std::complex<double>> phase(rows, cols);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double m = std::abs(z(i));
      phase(i) = m > 0.0 ? z(i) / m : std::complex<double>{};
    }
    const auto back = dft2(phase, /*inverse=*/true);
    auto& g = x.node()->grad;
    const double scale = o.grad[0] * inv;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) g[static_cast<std::size_t>(r * cols + c)] += scale * back(r, c).real();
  });
}

Tensor circulant(const Tensor& x) {
  if (x.dim() != 1) throw DimensionError("circulant: expected a vector, got " + shape_string(x.shape()));
  const Eigen::Map<const Eigen::VectorXd> v(x.data().data(), static_cast<Eigen::Index>(x.size()));
  return Tensor::from_matrix(spectral::circulant(v));
}

SingularSpectrum svd_values(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  const auto r = jacobi_svd(m);
  return {std::vector<double>(r.values.data(), r.values.data() + r.values.size())};
}

SingularSpectrum svd_values(const Tensor& m) { return svd_values(m.to_matrix()); }

Lemma1Check lemma1_check(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 1) throw ContractError("lemma1_check: empty vector");
  Lemma1Check out;
  for (const auto& z : dft_real(x)) out.fourier_l1 += std::abs(z);
  out.circulant_nuclear_norm = svd_values(spectral::circulant(x)).nuclear_norm();
  return out;
}

}  // namespace imputeformer::spectral
