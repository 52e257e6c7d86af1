#include "gemm.hpp"

#include <Eigen/Core>

namespace vdip::ad::detail {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;
using View = Eigen::Map<RowMajor, 0, Eigen::OuterStride<>>;

template <typename L, typename R>
void accumulate(View& c, double alpha, const L& lhs, const R& rhs, double beta) {
  if (beta == 0.0) {
    c.noalias() = alpha * lhs * rhs;
  } else {
    if (beta != 1.0) c *= beta;
    c.noalias() += alpha * lhs * rhs;
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  if (m == 0 || n == 0) return;
  const ConstView A(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  const ConstView B(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  View C(c, m, n, Eigen::OuterStride<>(ldc));
  if (trans_a && trans_b) accumulate(C, alpha, A.transpose(), B.transpose(), beta);
  else if (trans_a) accumulate(C, alpha, A.transpose(), B, beta);
  else if (trans_b) accumulate(C, alpha, A, B.transpose(), beta);
  else accumulate(C, alpha, A, B, beta);
}

void gemv(bool trans, int m, int n, double alpha, const double* a, const double* x, double beta, double* y) {
  const ConstView A(a, m, n, Eigen::OuterStride<>(n));
  const int out = trans ? n : m, in = trans ? m : n;
  Eigen::Map<const Eigen::VectorXd> X(x, in);
  Eigen::Map<Eigen::VectorXd> Y(y, out);
  if (beta != 1.0) Y *= beta;
  if (trans) Y.noalias() += alpha * A.transpose() * X;
  else Y.noalias() += alpha * A * X;
}

void ger(int m, int n, double alpha, const double* x, const double* y, double* a) {
  View A(a, m, n, Eigen::OuterStride<>(n));
  Eigen::Map<const Eigen::VectorXd> X(x, m);
  Eigen::Map<const Eigen::VectorXd> Y(y, n);
  A.noalias() += alpha * X * Y.transpose();
}

}  // namespace vdip::ad::detail
