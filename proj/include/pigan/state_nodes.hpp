#pragma once

#include "pigan/autodiff.hpp"

namespace pigan::ad {

// Differentiable nodes mapping network outputs to two-qubit density-matrix
// candidates and to the physics penalties. Candidate batches use one
// canonical layout everywhere, matching the discriminator's input flattening:
// 32 channels per sample, the 16 real parts in row-major order followed by
// the 16 imaginary parts.

inline std::size_t re_ch(std::size_t a, std::size_t b) { return 4 * a + b; }
inline std::size_t im_ch(std::size_t a, std::size_t b) { return 16 + 4 * a + b; }

// (B,16) head -> rho~ = L L† as (B,32). Head layout: 4 real diagonal entries,
// then the 6 sub-diagonal complex entries (re,im) in row-major order
// (1,0),(2,0),(2,1),(3,0),(3,1),(3,2).
Tape::Id cholesky_assemble(Tape& tape, Tape::Id head);

// (B,16) head -> rho~ = L D L† as (B,32) with unit-lower-triangular L (6
// complex sub-diagonal entries, 12 values) and D = diag(softplus(d) + eps)
// from the last 4 values.
Tape::Id ldl_assemble(Tape& tape, Tape::Id head, double eps);

// (B,32) raw matrix -> Hermitian part (M + M†)/2, same layout.
Tape::Id direct_hermitize(Tape& tape, Tape::Id raw);

// rho = rho~ / Tr(rho~); adds 1e-12*I first when the trace falls below 1e-12.
Tape::Id trace_normalize(Tape& tape, Tape::Id rho);

// (B,32) -> (B,): sum_j max(0, -lambda_j) per sample, with the analytic
// Hermitian eigenvalue derivative -sum_{lambda<0} v v† on the backward pass.
// Near-degenerate active eigenvalues are jittered by 1e-12 before the
// active-set selection.
Tape::Id psd_penalty(Tape& tape, Tape::Id rho);

// (B,32) -> (B,): |Re Tr(rho) - 1| per sample.
Tape::Id trace_penalty(Tape& tape, Tape::Id rho);

// (B,32) -> (B,): ||M - M†||_1 / 2 per sample (entrywise 1-norm), measuring
// how far the raw Direct output is from Hermitian.
Tape::Id herm_penalty(Tape& tape, Tape::Id raw);

// (B,32) -> (B,16): Pauli-expectation embedding phi_ij = <s_i (x) s_j>.
Tape::Id pauli_embed(Tape& tape, Tape::Id rho);

// (B,32) -> (B,): teleportation hinge max(0, 2/3 - F_max) with
// F_max = (1 + N/3)/2 and N the nuclear norm of the correlation matrix.
Tape::Id teleport_hinge(Tape& tape, Tape::Id rho);

// (B,32) -> (B,): Bell-diagonal broadcasting hinge max(0, thr - s)/thr where
// s is the best signed sum of c~ = diag(T) over the four tetrahedron vertices.
Tape::Id bell_broadcast_hinge(Tape& tape, Tape::Id rho, double threshold);

// (B,32) -> (B,): Werner-like broadcasting hinge max(0, thr - s)/thr with
// s = -lambda_min(partial transpose) and thr = 1e-3.
Tape::Id werner_broadcast_hinge(Tape& tape, Tape::Id rho, double threshold);

// (B,16) embeddings -> scalar: mean over unordered pairs of
// max(0, margin - ||phi_i - phi_j||).
Tape::Id diversity_loss(Tape& tape, Tape::Id embeddings, double margin);

}  // namespace pigan::ad
