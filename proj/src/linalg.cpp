#include "pigan/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pigan/common.hpp"

namespace pigan::linalg {

ComplexMatrix::ComplexMatrix(std::size_t rows, std::size_t cols,
                             std::initializer_list<cplx> entries)
    : rows_(rows), cols_(cols), a_(entries) {
  if (a_.size() != rows * cols)
    throw std::invalid_argument("ComplexMatrix: entry count does not match shape");
}

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool ComplexMatrix::all_finite() const {
  for (const cplx& v : a_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ");
  ComplexMatrix c(a.rows(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const cplx* ai = a.data() + i * k;
    cplx* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const cplx aip = ai[p];
      const cplx* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

ComplexMatrix adjoint(const ComplexMatrix& a) {
  ComplexMatrix c(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(j, i) = std::conj(a(i, j));
  return c;
}

ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add: shape mismatch");
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    c.data()[i] = a.data()[i] + b.data()[i];
  return c;
}

ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("sub: shape mismatch");
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    c.data()[i] = a.data()[i] - b.data()[i];
  return c;
}

ComplexMatrix scale(const ComplexMatrix& a, cplx factor) {
  ComplexMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    c.data()[i] = a.data()[i] * factor;
  return c;
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix c(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const cplx aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          c(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return c;
}

cplx trace(const ComplexMatrix& a) {
  cplx t = 0.0;
  for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
  return t;
}

double frobenius_norm(const ComplexMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i)
    s += std::norm(a.data()[i]);
  return std::sqrt(s);
}

double hermiticity_gap(const ComplexMatrix& a) {
  double g = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      g = std::max(g, std::abs(a(i, j) - std::conj(a(j, i))));
  return g;
}

namespace {

constexpr int kMaxSweeps = 100;

double offdiag_norm(const ComplexMatrix& w) {
  double s = 0.0;
  for (std::size_t p = 0; p + 1 < w.rows(); ++p)
    for (std::size_t q = p + 1; q < w.cols(); ++q) s += std::norm(w(p, q));
  return std::sqrt(2.0 * s);
}

// One cyclic Jacobi pass. Each rotation diagonalizes the 2x2 Hermitian block
// at (p,q): the block's phase is factored out, then a standard real rotation
// with tan chosen by the stable root of t^2 + 2*tau*t - 1 = 0 is applied.
void jacobi_sweep(ComplexMatrix& w, ComplexMatrix* v, double skip_below) {
  const std::size_t n = w.rows();
  for (std::size_t p = 0; p + 1 < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      const cplx apq = w(p, q);
      const double r = std::abs(apq);
      if (r <= skip_below) continue;
      const cplx phase = apq / r;
      const double app = w(p, p).real();
      const double aqq = w(q, q).real();
      const double tau = (aqq - app) / (2.0 * r);
      double t;
      if (tau >= 0.0)
        t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
      else
        t = -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = t * c;
      const cplx phase_c = std::conj(phase);

      // columns p,q of W (right-multiply by the rotation)
      for (std::size_t k = 0; k < n; ++k) {
        const cplx wkp = w(k, p), wkq = w(k, q);
        w(k, p) = c * wkp - s * phase_c * wkq;
        w(k, q) = s * wkp + c * phase_c * wkq;
      }
      // rows p,q of W (left-multiply by the adjoint)
      for (std::size_t k = 0; k < n; ++k) {
        const cplx wpk = w(p, k), wqk = w(q, k);
        w(p, k) = c * wpk - s * phase * wqk;
        w(q, k) = s * wpk + c * phase * wqk;
      }
      // freshly annihilated entries, exactly
      w(p, q) = 0.0;
      w(q, p) = 0.0;
      w(p, p) = cplx(w(p, p).real(), 0.0);
      w(q, q) = cplx(w(q, q).real(), 0.0);

      if (v) {
        for (std::size_t k = 0; k < n; ++k) {
          const cplx vkp = (*v)(k, p), vkq = (*v)(k, q);
          (*v)(k, p) = c * vkp - s * phase_c * vkq;
          (*v)(k, q) = s * vkp + c * phase_c * vkq;
        }
      }
    }
  }
}

// Shared Jacobi driver; v == nullptr skips eigenvector accumulation.
std::vector<double> jacobi_eigen(const ComplexMatrix& a, ComplexMatrix* v) {
  if (!a.square()) throw std::invalid_argument("hermitian_eig: matrix not square");
  const std::size_t n = a.rows();
  const double scale = frobenius_norm(a);
  if (hermiticity_gap(a) > 1e-9 * std::max(1.0, scale))
    throw std::invalid_argument("hermitian_eig: input not Hermitian within 1e-9");

  ComplexMatrix w(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      w(i, j) = 0.5 * (a(i, j) + std::conj(a(j, i)));
  if (v) *v = ComplexMatrix::identity(n);

  if (scale > 0.0) {
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
      const double off = offdiag_norm(w);
      if (off <= 1e-14 * scale) {
        converged = true;
        break;
      }
      // skip entries that cannot affect convergence this sweep
      const double skip_below = 0.01 * off / static_cast<double>(n * n);
      jacobi_sweep(w, v, skip_below);
    }
    if (!converged && offdiag_norm(w) > 1e-12 * scale)
      throw NumericError("hermitian_eig: no convergence within 100 sweeps",
                         offdiag_norm(w));
  }

  std::vector<double> eigs(n);
  for (std::size_t i = 0; i < n; ++i) eigs[i] = w(i, i).real();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return eigs[x] < eigs[y]; });

  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = eigs[order[i]];
  if (v) {
    ComplexMatrix vs(n, n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) vs(i, j) = (*v)(i, order[j]);
    *v = vs;
  }
  return sorted;
}

}  // namespace

HermitianEig hermitian_eig(const ComplexMatrix& a) {
  HermitianEig out;
  out.eigenvectors = ComplexMatrix();
  ComplexMatrix v;
  out.eigenvalues = jacobi_eigen(a, &v);
  out.eigenvectors = v;
  return out;
}

std::vector<double> hermitian_eigenvalues(const ComplexMatrix& a) {
  return jacobi_eigen(a, nullptr);
}

ComplexMatrix psd_sqrt(const ComplexMatrix& a) {
  HermitianEig eig = hermitian_eig(a);
  const std::size_t n = a.rows();
  std::vector<double> roots(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lam = eig.eigenvalues[i];
    if (lam < -kPsdTol)
      throw NumericError("psd_sqrt: matrix not PSD (eigenvalue below -1e-9)", lam);
    if (lam < 0.0) lam = 0.0;
    roots[i] = std::sqrt(lam);
  }
  // B = V sqrt(D) V†, then exact symmetrization to scrub roundoff
  const ComplexMatrix& v = eig.eigenvectors;
  ComplexMatrix b(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cplx s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += v(i, k) * roots[k] * std::conj(v(j, k));
      b(i, j) = s;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const cplx avg = 0.5 * (b(i, j) + std::conj(b(j, i)));
      b(i, j) = avg;
      b(j, i) = std::conj(avg);
    }
  return b;
}

}  // namespace pigan::linalg
