#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace pigan::linalg {

using cplx = std::complex<double>;

// Dense row-major complex matrix. Sized for the d <= 512 workloads of this
// toolkit: two-qubit density matrices, Pauli embeddings, FID covariances and
// the scaling benchmarks.
class ComplexMatrix {
public:
  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), a_(rows * cols, cplx(0.0, 0.0)) {}
  ComplexMatrix(std::size_t rows, std::size_t cols,
                std::initializer_list<cplx> entries);

  static ComplexMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  cplx& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const {
    return a_[i * cols_ + j];
  }

  cplx* data() { return a_.data(); }
  const cplx* data() const { return a_.data(); }

  bool all_finite() const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> a_;
};

// Standard product with a fixed row-major, left-to-right summation order so
// repeated runs are bit-identical. Throws std::invalid_argument on mismatch.
ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix adjoint(const ComplexMatrix& a);
ComplexMatrix add(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix sub(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix scale(const ComplexMatrix& a, cplx factor);
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

cplx trace(const ComplexMatrix& a);
double frobenius_norm(const ComplexMatrix& a);
// max_ij |a_ij - conj(a_ji)|
double hermiticity_gap(const ComplexMatrix& a);

inline ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  return matmul(a, b);
}
inline ComplexMatrix operator+(const ComplexMatrix& a, const ComplexMatrix& b) {
  return add(a, b);
}
inline ComplexMatrix operator-(const ComplexMatrix& a, const ComplexMatrix& b) {
  return sub(a, b);
}

struct HermitianEig {
  std::vector<double> eigenvalues;  // ascending
  ComplexMatrix eigenvectors;       // unit-norm columns, same order
};

// Full spectrum of a Hermitian matrix via cyclic complex Jacobi rotations
// (threshold sweeps, 100-sweep cap). The input is symmetrized to (A+A†)/2
// first and must be Hermitian within 1e-9; deterministic sweep order.
HermitianEig hermitian_eig(const ComplexMatrix& a);

// Eigenvalues only; skips the eigenvector accumulation.
std::vector<double> hermitian_eigenvalues(const ComplexMatrix& a);

// Hermitian PSD square root. Eigenvalues in [-1e-9, 0) are clamped to zero;
// anything below -1e-9 raises NumericError carrying the offending eigenvalue.
ComplexMatrix psd_sqrt(const ComplexMatrix& a);

}  // namespace pigan::linalg
