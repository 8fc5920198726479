#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mmcs/tensor.hpp"

namespace mmcs {

// Reverse-mode autodiff over a linear tape. Each op records its inputs and
// whatever it needs for the backward rule; backward() replays the nodes in
// reverse creation order exactly once, accumulating gradients (a value used
// several times sums the contributions). A tape belongs to one thread; the
// kernels it calls may parallelize internally.

enum class Op : uint8_t {
    Leaf,
    MatMul,
    MatMulNT,
    SoftmaxRows,
    LogSoftmaxRows,
    Sigmoid,
    Relu,
    Add,
    Sub,
    Mul,
    Scale,
    BroadcastRow,
    BroadcastCol,
    ConcatCols,
    SliceCols,
    LayerNorm,
    LookupRows,
    NllMean,
    SumAll,
};

using ValueId = int32_t;

struct TapeNode {
    Op op = Op::Leaf;
    std::array<ValueId, 3> in{-1, -1, -1};
    int n_in = 0;
    bool needs_grad = false;
    // op-specific payloads
    int i0 = 0, i1 = 0;        // slice offsets, broadcast extents
    double scalar = 0.0;       // scale factor / nll normalizer
    std::vector<int> ids;      // row indices (LookupRows) or targets (NllMean)
    std::vector<double> aux;   // per-target weights (NllMean)
    Tensor saved0, saved1;     // layer-norm x_hat and inverse stddev
};

class Tape {
public:
    Tape() = default;

    // Inserts a value not produced by an op. Gradients flow into it only when
    // needs_grad is set (parameters and probed inputs).
    ValueId leaf(Tensor value, bool needs_grad = false);

    const Tensor& val(ValueId id) const { return values_[static_cast<size_t>(id)]; }
    // Valid after backward(); zero tensor if nothing flowed into id.
    const Tensor& grad(ValueId id) const;
    size_t size() const { return nodes_.size(); }

    ValueId matmul(ValueId a, ValueId b);
    ValueId matmul_nt(ValueId a, ValueId b);
    ValueId softmax_rows(ValueId x);
    ValueId log_softmax_rows(ValueId x);
    ValueId sigmoid(ValueId x);
    ValueId relu(ValueId x);
    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId scale(ValueId x, double s);
    ValueId broadcast_row(ValueId row, int m);
    ValueId broadcast_col(ValueId col, int n);
    ValueId concat_cols(ValueId a, ValueId b);
    ValueId slice_cols(ValueId x, int c0, int width);
    ValueId layer_norm(ValueId x, ValueId gamma, ValueId beta);
    ValueId lookup_rows(ValueId table, const std::vector<int>& row_ids);
    // -(sum_i w_i * logp[i, target_i]) / sum_i w_i, a 1x1 scalar.
    ValueId nll_mean(ValueId logp, const std::vector<int>& targets,
                     const std::vector<double>& weights);
    ValueId sum_all(ValueId x);

    // Seeds d(seed)=1 (seed must be 1x1) and accumulates gradients into every
    // reachable node that requires them.
    void backward(ValueId seed);

private:
    ValueId push(TapeNode node, Tensor value);
    Tensor& grad_slot(ValueId id);

    std::vector<TapeNode> nodes_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    Tensor empty_;
};

} // namespace mmcs
