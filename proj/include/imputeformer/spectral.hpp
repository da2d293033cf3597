#pragma once

// Discrete Fourier transforms, circulant matrices and a one-sided Jacobi SVD.
// The numeric kernels are templates over the scalar type; the Tensor-facing
// wrappers at the bottom work in double precision.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "imputeformer/errors.hpp"
#include "imputeformer/tensor.hpp"

namespace imputeformer::spectral {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

// Exact twiddles w^j = exp(sign * 2*pi*i*j/n) for j in [0, n).
template <class Scalar>
std::vector<std::complex<Scalar>> twiddles(std::size_t n, bool inverse) {
  std::vector<std::complex<Scalar>> w(n);
  const Scalar sign = inverse ? Scalar(1) : Scalar(-1);
  for (std::size_t j = 0; j < n; ++j) {
    const Scalar angle = sign * Scalar(2) * std::numbers::pi_v<Scalar> * Scalar(j) / Scalar(n);
    w[j] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

template <class Scalar>
void radix2(std::vector<std::complex<Scalar>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto w = twiddles<Scalar>(n, inverse);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w[k * step];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

}  // namespace detail

// Unscaled direct transform X_k = sum_n x_n exp(-2 pi i k n / N), any length.
template <class Scalar>
std::vector<std::complex<Scalar>> dft_direct(const std::vector<std::complex<Scalar>>& x, bool inverse = false) {
  const std::size_t n = x.size();
  const auto w = detail::twiddles<Scalar>(n, inverse);
  std::vector<std::complex<Scalar>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<Scalar> acc{};
    for (std::size_t j = 0; j < n; ++j) acc += x[j] * w[(k * j) % n];
    out[k] = acc;
  }
  return out;
}

// Unscaled transform; uses radix-2 when the length is a power of two and the
// direct sum otherwise. Inputs are never zero-padded. `inverse` flips the
// exponent sign without the 1/N factor (the adjoint of the forward map).
template <class Scalar>
std::vector<std::complex<Scalar>> dft(std::vector<std::complex<Scalar>> x, bool inverse = false) {
  if (x.size() <= 1) return x;
  if (is_power_of_two(x.size())) {
    detail::radix2(x, inverse);
    return x;
  }
  return dft_direct(x, inverse);
}

template <class Derived>
std::vector<std::complex<typename Derived::Scalar>> dft_real(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  std::vector<std::complex<Scalar>> c(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) c[static_cast<std::size_t>(i)] = {x(i), Scalar(0)};
  return dft(std::move(c));
}

// Separable 2-D transform over rows and columns.
template <class Scalar>
Matrix<std::complex<Scalar>> dft2(const Matrix<std::complex<Scalar>>& x, bool inverse = false) {
  Matrix<std::complex<Scalar>> out = x;
  std::vector<std::complex<Scalar>> buf;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    buf.assign(out.cols(), {});
    for (Eigen::Index c = 0; c < out.cols(); ++c) buf[static_cast<std::size_t>(c)] = out(r, c);
    buf = dft(std::move(buf), inverse);
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = buf[static_cast<std::size_t>(c)];
  }
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    buf.assign(out.rows(), {});
    for (Eigen::Index r = 0; r < out.rows(); ++r) buf[static_cast<std::size_t>(r)] = out(r, c);
    buf = dft(std::move(buf), inverse);
    for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = buf[static_cast<std::size_t>(r)];
  }
  return out;
}

// Column j is x cyclically shifted down by j, so C(x)[:,0] == x.
template <class Derived>
Matrix<typename Derived::Scalar> circulant(const Eigen::MatrixBase<Derived>& x) {
  const Eigen::Index n = x.size();
  if (n < 1) throw ContractError("circulant: empty vector");
  Matrix<typename Derived::Scalar> c(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) c(i, j) = x((i - j + n) % n);
  return c;
}

template <class Scalar>
struct SvdResult {
  Matrix<Scalar> u;        // m x k, orthonormal columns for nonzero values
  Vector<Scalar> values;   // k = min(m, n), non-increasing
  Matrix<Scalar> v;        // n x k
};

// One-sided (Hestenes) Jacobi SVD. Columns are rotated pairwise until every
// pair is orthogonal to `tol` relative to their norms.
template <class Derived>
SvdResult<typename Derived::Scalar> jacobi_svd(const Eigen::MatrixBase<Derived>& m, int max_sweeps = 100,
                                               typename Derived::Scalar tol = typename Derived::Scalar(-1)) {
  using Scalar = typename Derived::Scalar;
  if (!m.allFinite()) throw NumericError("jacobi_svd: matrix contains non-finite values");
  const bool wide = m.rows() < m.cols();
  Matrix<Scalar> a = wide ? Matrix<Scalar>(m.transpose()) : Matrix<Scalar>(m);
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix<Scalar> v = Matrix<Scalar>::Identity(cols, cols);
  if (tol < 0) tol = std::numeric_limits<Scalar>::epsilon() * Scalar(std::max<Eigen::Index>(rows, 1));
  // Columns below this squared norm are numerically zero; rotations preserve the Frobenius norm.
  const Scalar negligible = std::pow(std::numeric_limits<Scalar>::epsilon() * a.norm(), 2);

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index p = 0; p + 1 < cols; ++p) {
      for (Eigen::Index q = p + 1; q < cols; ++q) {
        const Scalar alpha = a.col(p).squaredNorm();
        const Scalar beta = a.col(q).squaredNorm();
        const Scalar gamma = a.col(p).dot(a.col(q));
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) / (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Eigen::Index i = 0; i < rows; ++i) {
          const Scalar ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (Eigen::Index i = 0; i < cols; ++i) {
          const Scalar vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw NumericError("jacobi_svd: no convergence after " + std::to_string(max_sweeps) + " sweeps");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(cols));
  Vector<Scalar> norms(cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    norms(j) = a.col(j).norm();
    order[static_cast<std::size_t>(j)] = j;
  }
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  SvdResult<Scalar> r;
  r.values.resize(cols);
  r.u = Matrix<Scalar>::Zero(rows, cols);
  r.v.resize(cols, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    r.values(j) = norms(src);
    if (norms(src) > Scalar(0)) r.u.col(j) = a.col(src) / norms(src);
    r.v.col(j) = v.col(src);
  }
  if (wide) std::swap(r.u, r.v);
  return r;
}

// Moore-Penrose pseudo-inverse; values below rcond * sigma_max are dropped.
template <class Derived>
Matrix<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& m,
                                                typename Derived::Scalar rcond = typename Derived::Scalar(1e-12)) {
  using Scalar = typename Derived::Scalar;
  const auto svd = jacobi_svd(m);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(m.cols(), m.rows());
  const Scalar cutoff = svd.values.size() > 0 ? rcond * svd.values(0) : Scalar(0);
  for (Eigen::Index j = 0; j < svd.values.size(); ++j) {
    if (svd.values(j) <= cutoff || svd.values(j) == Scalar(0)) continue;
    out.noalias() += (svd.v.col(j) / svd.values(j)) * svd.u.col(j).transpose();
  }
  return out;
}

// --- Tensor-facing API ----------------------------------------------------

struct ComplexSpectrum {
  Shape shape;
  std::vector<double> re, im;

  double modulus(std::size_t i) const { return std::hypot(re[i], im[i]); }
  double l1_norm() const;
};

// Non-increasing, non-negative singular values.
struct SingularSpectrum {
  std::vector<double> values;

  double nuclear_norm() const;
  // Fraction of squared energy captured by the leading k values, for k = 1..n.
  std::vector<double> cumulative_energy() const;
};

// Unscaled DFT of a real tensor along each listed axis in turn.
ComplexSpectrum dft(const Tensor& x, const std::vector<int>& axes);

// Differentiable (1/(N*T)) * sum |FFT2(x)| for a real [N,T] tensor.
Tensor dft_l1(const Tensor& x);

Tensor circulant(const Tensor& x);

SingularSpectrum svd_values(const Eigen::Ref<const Eigen::MatrixXd>& m);
SingularSpectrum svd_values(const Tensor& m);

struct Lemma1Check {
  double fourier_l1 = 0.0;
  double circulant_nuclear_norm = 0.0;
};

// Sum of DFT moduli of x next to the nuclear norm of its circulant matrix.
Lemma1Check lemma1_check(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace imputeformer::spectral
