#pragma once

#include <array>

#include "pigan/linalg.hpp"

namespace pigan::qstate {

using linalg::ComplexMatrix;
using linalg::cplx;

// A 4x4 Hermitian candidate for a two-qubit density matrix. Hermiticity is
// enforced at construction via (M+M†)/2; trace-one and positivity are NOT
// enforced -- generator outputs may violate both, and the violations are
// measured as continuous penalties rather than rejected.
class DensityCandidate {
public:
  explicit DensityCandidate(const ComplexMatrix& m);
  const ComplexMatrix& mat() const { return mat_; }

private:
  ComplexMatrix mat_;
};

// Pauli decomposition: local vectors a, b and the 3x3 correlation matrix t,
// so that rho = 1/4 (I + sum_i a_i s_i(x)I + sum_j b_j I(x)s_j
//                      + sum_ij t_ij s_i(x)s_j).
struct BlochForm {
  std::array<double, 3> a{};
  std::array<double, 3> b{};
  std::array<std::array<double, 3>, 3> t{};
};

// phi[4*i + j] = <s_i (x) s_j>, i,j in {0..3} with s_0 = I. phi[0] = Tr(rho).
struct PauliEmbedding {
  std::array<double, 16> phi{};
};

struct TeleportationScore {
  double n;      // sum of singular values of t
  double f_max;  // (1 + n/3) / 2
};

enum class FidelityConvention { Squared, Root };

// sigma_i for i in {0,1,2,3}; sigma_0 = I
const ComplexMatrix& pauli(int i);
// sigma_i (x) sigma_j, cached
const ComplexMatrix& pauli_pair(int i, int j);

BlochForm bloch_decompose(const DensityCandidate& rho);
DensityCandidate state_from_bloch(const BlochForm& form);
PauliEmbedding pauli_embedding(const DensityCandidate& rho);

// Transpose on the second qubit's indices (2x2 block-wise transpose).
ComplexMatrix partial_transpose(const DensityCandidate& rho);
// Smallest eigenvalue of the partial transpose. The state is PPT-entangled
// iff the result is < -1e-9.
double min_eig_pt(const DensityCandidate& rho);

TeleportationScore teleportation_score(const DensityCandidate& rho);

// Uhlmann fidelity. Inputs must be numerically PSD and trace-one within 1e-6.
// Squared convention (default): F = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
double uhlmann_fidelity(const DensityCandidate& rho, const DensityCandidate& sigma,
                        FidelityConvention convention = FidelityConvention::Squared);
// Same, with sqrt(rho) precomputed; used by the pairwise evaluation loops.
double uhlmann_fidelity_with_sqrt(const ComplexMatrix& sqrt_rho,
                                  const DensityCandidate& sigma,
                                  FidelityConvention convention = FidelityConvention::Squared);

// Sum of magnitudes of negative eigenvalues; zero iff numerically PSD.
double psd_violation(const DensityCandidate& rho);
// |Re Tr(rho) - 1|
double trace_violation(const DensityCandidate& rho);

// Nearest valid state: clamp negative eigenvalues to zero and renormalize.
// Used when a metric (fidelity) requires a proper density matrix.
DensityCandidate project_to_physical(const DensityCandidate& rho);

}  // namespace pigan::qstate
