#pragma once

namespace bn {

// Thin row-major dgemm wrappers. OpenBLAS is pinned to one thread so results
// are reproducible run-to-run and concurrent callers do not oversubscribe.

/// C (m x n) = A (m x k) * B^T, with B stored (n x k).
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);

/// C (m x n) = A^T * B, with A stored (k x m), B stored (k x n).
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);

/// C (m x n) = A (m x k) * B (k x n).
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);

/// C (m x n) = A (m x k) * B, where B is the first n columns of a row-major
/// matrix with row stride ldb (k rows).
void gemm_nn_sub(int m, int n, int k, const double* a, const double* b, int ldb,
                 double* c);

}  // namespace bn
