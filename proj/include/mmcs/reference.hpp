#pragma once

#include "mmcs/tensor.hpp"

// Serial scalar-loop reference implementations. These are deliberately plain
// (no OpenMP, no reordering tricks) and are kept as the independent oracle
// for the parallel kernels: tests compare kern:: against ref::, and the
// benchmark tool reports the speedup between the two.

namespace mmcs::ref {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Scaled dot-product attention softmax(q k^T / sqrt(d)) v as three explicit
// loops over positions.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Gate pre-activation of one modality: k*w1 + (m*u)*w2 broadcast over rows.
Tensor gate_preact(const Tensor& k, const Tensor& w1, const Tensor& m,
                   const Tensor& u, const Tensor& w2);

// (1-lam) . k + lam . (m*u) with m broadcast over the rows of k.
Tensor lerp_rows(const Tensor& k, const Tensor& lam, const Tensor& m,
                 const Tensor& u);

// [h (+) hm] * g + b, affine compound gate.
Tensor concat_affine(const Tensor& h, const Tensor& hm, const Tensor& g,
                     const Tensor& b);

} // namespace mmcs::ref
