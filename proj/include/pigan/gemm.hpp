#pragma once

#include <cstddef>

namespace pigan {

// Accumulating real matrix products on contiguous row-major storage. These
// carry the training workload; loop orders are chosen so the inner loop runs
// over contiguous memory and autovectorizes.

// C (m x n) += A (m x k) * B (k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

// C (m x k) += A (m x n) * B(k x n)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k);

// C (k x n) += A(m x k)^T * B (m x n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

}  // namespace pigan
