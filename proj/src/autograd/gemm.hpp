#pragma once

// Row-major dense kernels on raw buffers, backed by Eigen.

namespace vdip::ad::detail {

/// C = alpha op(A) op(B) + beta C, with op(A) M x K and op(B) K x N.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

/// y = alpha op(A) x + beta y, A stored m x n.
void gemv(bool trans, int m, int n, double alpha, const double* a, const double* x, double beta, double* y);

/// A += alpha x y^T, A stored m x n.
void ger(int m, int n, double alpha, const double* x, const double* y, double* a);

}  // namespace vdip::ad::detail
