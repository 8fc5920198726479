#pragma once

#include "mmcs/tensor.hpp"

// Forward kernels used by the tape and the model. Hot loops are OpenMP
// parallel over output rows; every output element is produced by exactly one
// thread with a fixed inner summation order, so results are bit-identical
// for any thread count (and to a serial build).

namespace mmcs::kern {

Tensor matmul(const Tensor& a, const Tensor& b);    // a[m,k] * b[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b); // a[m,k] * b[n,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b); // a[k,m]^T * b[k,n]

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

Tensor broadcast_row(const Tensor& row, int m); // 1 x d -> m x d
Tensor broadcast_col(const Tensor& col, int n); // m x 1 -> m x n
Tensor sum_rows(const Tensor& x);               // m x d -> 1 x d
Tensor sum_cols(const Tensor& x);               // m x d -> m x 1

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int c0, int width);
Tensor transpose(const Tensor& x);

// into += src (shapes must match)
void accumulate(Tensor& into, const Tensor& src);

} // namespace mmcs::kern
