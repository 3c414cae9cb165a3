#include "pigan/qstate.hpp"

#include <cmath>
#include <stdexcept>

#include "pigan/common.hpp"

namespace pigan::qstate {

using linalg::adjoint;
using linalg::hermitian_eig;
using linalg::hermitian_eigenvalues;
using linalg::matmul;
using linalg::psd_sqrt;
using linalg::trace;

DensityCandidate::DensityCandidate(const ComplexMatrix& m) {
  if (m.rows() != 4 || m.cols() != 4)
    throw std::invalid_argument("DensityCandidate: expected a 4x4 matrix");
  mat_ = ComplexMatrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      mat_(i, j) = 0.5 * (m(i, j) + std::conj(m(j, i)));
}

const ComplexMatrix& pauli(int i) {
  static const std::array<ComplexMatrix, 4> sigma = {
      ComplexMatrix(2, 2, {1, 0, 0, 1}),
      ComplexMatrix(2, 2, {0, 1, 1, 0}),
      ComplexMatrix(2, 2, {0, cplx(0, -1), cplx(0, 1), 0}),
      ComplexMatrix(2, 2, {1, 0, 0, -1})};
  return sigma[i];
}

const ComplexMatrix& pauli_pair(int i, int j) {
  static const std::array<ComplexMatrix, 16> cache = [] {
    std::array<ComplexMatrix, 16> c;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) c[4 * a + b] = linalg::kron(pauli(a), pauli(b));
    return c;
  }();
  return cache[4 * i + j];
}

namespace {

// Re Tr(rho * P) for Hermitian P, without forming the product
double pauli_expectation(const ComplexMatrix& rho, const ComplexMatrix& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      const cplx& r = rho(i, k);
      const cplx& q = p(k, i);
      s += r.real() * q.real() - r.imag() * q.imag();
    }
  return s;
}

}  // namespace

BlochForm bloch_decompose(const DensityCandidate& rho) {
  BlochForm f;
  const ComplexMatrix& m = rho.mat();
  for (int i = 1; i <= 3; ++i) {
    f.a[i - 1] = pauli_expectation(m, pauli_pair(i, 0));
    f.b[i - 1] = pauli_expectation(m, pauli_pair(0, i));
  }
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j)
      f.t[i - 1][j - 1] = pauli_expectation(m, pauli_pair(i, j));
  return f;
}

DensityCandidate state_from_bloch(const BlochForm& form) {
  ComplexMatrix m = ComplexMatrix::identity(4);
  for (int i = 1; i <= 3; ++i) {
    m = linalg::add(m, linalg::scale(pauli_pair(i, 0), form.a[i - 1]));
    m = linalg::add(m, linalg::scale(pauli_pair(0, i), form.b[i - 1]));
  }
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j)
      m = linalg::add(m, linalg::scale(pauli_pair(i, j), form.t[i - 1][j - 1]));
  return DensityCandidate(linalg::scale(m, 0.25));
}

PauliEmbedding pauli_embedding(const DensityCandidate& rho) {
  PauliEmbedding e;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      e.phi[4 * i + j] = pauli_expectation(rho.mat(), pauli_pair(i, j));
  return e;
}

ComplexMatrix partial_transpose(const DensityCandidate& rho) {
  const ComplexMatrix& m = rho.mat();
  ComplexMatrix out(4, 4);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b)
          out(2 * i + a, 2 * j + b) = m(2 * i + b, 2 * j + a);
  return out;
}

double min_eig_pt(const DensityCandidate& rho) {
  return hermitian_eigenvalues(partial_transpose(rho)).front();
}

TeleportationScore teleportation_score(const DensityCandidate& rho) {
  const BlochForm f = bloch_decompose(rho);
  // singular values of t via the eigenvalues of t^T t (3x3 real symmetric)
  ComplexMatrix tt(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += f.t[k][i] * f.t[k][j];
      tt(i, j) = s;
    }
  double n = 0.0;
  for (double lam : hermitian_eigenvalues(tt)) n += std::sqrt(std::max(0.0, lam));
  return {n, 0.5 * (1.0 + n / 3.0)};
}

namespace {

void require_valid_state(const DensityCandidate& rho, const char* role) {
  const double tr_gap = std::abs(trace(rho.mat()).real() - 1.0);
  if (tr_gap > 1e-6)
    throw std::invalid_argument(std::string("uhlmann_fidelity: ") + role +
                                " is not trace-one within 1e-6");
  const double min_eig = hermitian_eigenvalues(rho.mat()).front();
  if (min_eig < -1e-6)
    throw std::invalid_argument(std::string("uhlmann_fidelity: ") + role +
                                " is not PSD within 1e-6");
}

}  // namespace

double uhlmann_fidelity(const DensityCandidate& rho, const DensityCandidate& sigma,
                        FidelityConvention convention) {
  require_valid_state(rho, "first argument");
  require_valid_state(sigma, "second argument");
  return uhlmann_fidelity_with_sqrt(psd_sqrt(rho.mat()), sigma, convention);
}

double uhlmann_fidelity_with_sqrt(const ComplexMatrix& sqrt_rho,
                                  const DensityCandidate& sigma,
                                  FidelityConvention convention) {
  const ComplexMatrix inner = matmul(matmul(sqrt_rho, sigma.mat()), sqrt_rho);
  double root_sum = 0.0;
  for (double lam : hermitian_eigenvalues(inner))
    root_sum += std::sqrt(std::max(0.0, lam));
  double f = root_sum;
  if (convention == FidelityConvention::Squared) f = root_sum * root_sum;
  return std::clamp(f, 0.0, 1.0 + 1e-9);
}

double psd_violation(const DensityCandidate& rho) {
  double v = 0.0;
  for (double lam : hermitian_eigenvalues(rho.mat()))
    if (lam < 0.0) v -= lam;
  return v;
}

double trace_violation(const DensityCandidate& rho) {
  return std::abs(trace(rho.mat()).real() - 1.0);
}

DensityCandidate project_to_physical(const DensityCandidate& rho) {
  const linalg::HermitianEig eig = hermitian_eig(rho.mat());
  const ComplexMatrix& v = eig.eigenvectors;
  std::vector<double> lam(4);
  double tr = 0.0;
  for (int i = 0; i < 4; ++i) {
    lam[i] = std::max(0.0, eig.eigenvalues[i]);
    tr += lam[i];
  }
  ComplexMatrix m(4, 4);
  if (tr < 1e-12) {
    m = linalg::scale(ComplexMatrix::identity(4), 0.25);
  } else {
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        cplx s = 0.0;
        for (int k = 0; k < 4; ++k)
          s += v(i, k) * (lam[k] / tr) * std::conj(v(j, k));
        m(i, j) = s;
      }
  }
  return DensityCandidate(m);
}

}  // namespace pigan::qstate
