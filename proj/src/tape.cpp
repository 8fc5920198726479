#include "mmcs/tape.hpp"

#include <cmath>

#include "mmcs/kernels.hpp"

namespace mmcs {

ValueId Tape::leaf(Tensor value, bool needs_grad) {
    TapeNode n;
    n.op = Op::Leaf;
    n.needs_grad = needs_grad;
    return push(std::move(n), std::move(value));
}

const Tensor& Tape::grad(ValueId id) const {
    const auto& g = grads_[static_cast<size_t>(id)];
    return g.empty() ? empty_ : g;
}

ValueId Tape::push(TapeNode node, Tensor value) {
    for (int i = 0; i < node.n_in; ++i)
        node.needs_grad = node.needs_grad || nodes_[static_cast<size_t>(node.in[i])].needs_grad;
    nodes_.push_back(std::move(node));
    values_.push_back(std::move(value));
    grads_.emplace_back();
    return static_cast<ValueId>(nodes_.size() - 1);
}

Tensor& Tape::grad_slot(ValueId id) {
    auto& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) g = Tensor(values_[static_cast<size_t>(id)].shape());
    return g;
}

namespace {
TapeNode unary(Op op, ValueId a) {
    TapeNode n;
    n.op = op;
    n.in[0] = a;
    n.n_in = 1;
    return n;
}
TapeNode binary(Op op, ValueId a, ValueId b) {
    TapeNode n;
    n.op = op;
    n.in[0] = a;
    n.in[1] = b;
    n.n_in = 2;
    return n;
}
} // namespace

ValueId Tape::matmul(ValueId a, ValueId b) {
    return push(binary(Op::MatMul, a, b), kern::matmul(val(a), val(b)));
}

ValueId Tape::matmul_nt(ValueId a, ValueId b) {
    return push(binary(Op::MatMulNT, a, b), kern::matmul_nt(val(a), val(b)));
}

ValueId Tape::softmax_rows(ValueId x) {
    return push(unary(Op::SoftmaxRows, x), kern::softmax_rows(val(x)));
}

ValueId Tape::log_softmax_rows(ValueId x) {
    return push(unary(Op::LogSoftmaxRows, x), kern::log_softmax_rows(val(x)));
}

ValueId Tape::sigmoid(ValueId x) {
    return push(unary(Op::Sigmoid, x), kern::sigmoid(val(x)));
}

ValueId Tape::relu(ValueId x) {
    return push(unary(Op::Relu, x), kern::relu(val(x)));
}

ValueId Tape::add(ValueId a, ValueId b) {
    return push(binary(Op::Add, a, b), kern::add(val(a), val(b)));
}

ValueId Tape::sub(ValueId a, ValueId b) {
    return push(binary(Op::Sub, a, b), kern::sub(val(a), val(b)));
}

ValueId Tape::mul(ValueId a, ValueId b) {
    return push(binary(Op::Mul, a, b), kern::mul(val(a), val(b)));
}

ValueId Tape::scale(ValueId x, double s) {
    TapeNode n = unary(Op::Scale, x);
    n.scalar = s;
    return push(std::move(n), kern::scale(val(x), s));
}

ValueId Tape::broadcast_row(ValueId row, int m) {
    TapeNode n = unary(Op::BroadcastRow, row);
    n.i0 = m;
    return push(std::move(n), kern::broadcast_row(val(row), m));
}

ValueId Tape::broadcast_col(ValueId col, int w) {
    TapeNode n = unary(Op::BroadcastCol, col);
    n.i0 = w;
    return push(std::move(n), kern::broadcast_col(val(col), w));
}

ValueId Tape::concat_cols(ValueId a, ValueId b) {
    return push(binary(Op::ConcatCols, a, b), kern::concat_cols(val(a), val(b)));
}

ValueId Tape::slice_cols(ValueId x, int c0, int width) {
    TapeNode n = unary(Op::SliceCols, x);
    n.i0 = c0;
    n.i1 = width;
    return push(std::move(n), kern::slice_cols(val(x), c0, width));
}

ValueId Tape::layer_norm(ValueId x, ValueId gamma, ValueId beta) {
    constexpr double kEps = 1e-5;
    const Tensor& xv = val(x);
    require_rank2(xv, "layer_norm");
    const int m = xv.rows(), d = xv.cols();
    const Tensor& g = val(gamma);
    const Tensor& b = val(beta);
    if (g.rows() != 1 || g.cols() != d || b.rows() != 1 || b.cols() != d)
        throw DimError("layer_norm: gamma/beta must be 1x" + std::to_string(d));

    Tensor xhat({m, d});
    Tensor invstd({m, 1});
    Tensor y({m, d});
    for (int i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xv.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv.at(i, j) - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + kEps);
        invstd[i] = is;
        for (int j = 0; j < d; ++j) {
            xhat.at(i, j) = (xv.at(i, j) - mean) * is;
            y.at(i, j) = xhat.at(i, j) * g[j] + b[j];
        }
    }

    TapeNode n;
    n.op = Op::LayerNorm;
    n.in = {x, gamma, beta};
    n.n_in = 3;
    n.saved0 = std::move(xhat);
    n.saved1 = std::move(invstd);
    return push(std::move(n), std::move(y));
}

ValueId Tape::lookup_rows(ValueId table, const std::vector<int>& row_ids) {
    const Tensor& t = val(table);
    require_rank2(t, "lookup_rows");
    Tensor y({static_cast<int>(row_ids.size()), t.cols()});
    for (size_t i = 0; i < row_ids.size(); ++i) {
        const int r = row_ids[i];
        if (r < 0 || r >= t.rows())
            throw InputError("lookup_rows: row id " + std::to_string(r) +
                             " outside table " + t.shape_str());
        for (int j = 0; j < t.cols(); ++j) y.at(static_cast<int>(i), j) = t.at(r, j);
    }
    TapeNode n = unary(Op::LookupRows, table);
    n.ids = row_ids;
    return push(std::move(n), std::move(y));
}

ValueId Tape::nll_mean(ValueId logp, const std::vector<int>& targets,
                       const std::vector<double>& weights) {
    const Tensor& lp = val(logp);
    require_rank2(lp, "nll_mean");
    if (targets.size() != static_cast<size_t>(lp.rows()) || weights.size() != targets.size())
        throw DimError("nll_mean: need one target and weight per row of " + lp.shape_str());
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0) throw InputError("nll_mean: no supervised positions");
    double loss = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
        const int t = targets[i];
        if (t < 0 || t >= lp.cols())
            throw InputError("nll_mean: target " + std::to_string(t) + " outside " +
                             lp.shape_str());
        loss -= weights[i] * lp.at(static_cast<int>(i), t);
    }
    TapeNode n = unary(Op::NllMean, logp);
    n.ids = targets;
    n.aux = weights;
    n.scalar = wsum;
    return push(std::move(n), Tensor::from({1, 1}, {loss / wsum}));
}

ValueId Tape::sum_all(ValueId x) {
    double s = 0.0;
    const Tensor& xv = val(x);
    for (int64_t i = 0; i < xv.size(); ++i) s += xv[i];
    return push(unary(Op::SumAll, x), Tensor::from({1, 1}, {s}));
}

void Tape::backward(ValueId seed) {
    const Tensor& sv = val(seed);
    if (sv.size() != 1)
        throw DimError("backward: seed must be a 1x1 scalar, got " + sv.shape_str());
    grad_slot(seed)[0] = 1.0;

    for (ValueId id = seed; id >= 0; --id) {
        const TapeNode& n = nodes_[static_cast<size_t>(id)];
        const Tensor& gy = grads_[static_cast<size_t>(id)];
        if (gy.empty() || !n.needs_grad || n.op == Op::Leaf) continue;

        auto wants = [&](int slot) {
            return nodes_[static_cast<size_t>(n.in[slot])].needs_grad;
        };
        const Tensor& y = values_[static_cast<size_t>(id)];

        switch (n.op) {
        case Op::MatMul: {
            // c = a*b: da = gy*b^T, db = a^T*gy
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::matmul_nt(gy, val(n.in[1])));
            if (wants(1)) kern::accumulate(grad_slot(n.in[1]), kern::matmul_tn(val(n.in[0]), gy));
            break;
        }
        case Op::MatMulNT: {
            // c = a*b^T: da = gy*b, db = gy^T*a
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::matmul(gy, val(n.in[1])));
            if (wants(1)) kern::accumulate(grad_slot(n.in[1]), kern::matmul_tn(gy, val(n.in[0])));
            break;
        }
        case Op::SoftmaxRows: {
            if (!wants(0)) break;
            // dx = y . (gy - rowsum(gy . y))
            Tensor dx(y.shape());
            for (int i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < y.cols(); ++j) dot += gy.at(i, j) * y.at(i, j);
                for (int j = 0; j < y.cols(); ++j)
                    dx.at(i, j) = y.at(i, j) * (gy.at(i, j) - dot);
            }
            kern::accumulate(grad_slot(n.in[0]), dx);
            break;
        }
        case Op::LogSoftmaxRows: {
            if (!wants(0)) break;
            // dx = gy - softmax(x) * rowsum(gy)
            Tensor dx(y.shape());
            for (int i = 0; i < y.rows(); ++i) {
                double rs = 0.0;
                for (int j = 0; j < y.cols(); ++j) rs += gy.at(i, j);
                for (int j = 0; j < y.cols(); ++j)
                    dx.at(i, j) = gy.at(i, j) - std::exp(y.at(i, j)) * rs;
            }
            kern::accumulate(grad_slot(n.in[0]), dx);
            break;
        }
        case Op::Sigmoid: {
            if (!wants(0)) break;
            Tensor dx(y.shape());
            for (int64_t i = 0; i < y.size(); ++i) dx[i] = gy[i] * y[i] * (1.0 - y[i]);
            kern::accumulate(grad_slot(n.in[0]), dx);
            break;
        }
        case Op::Relu: {
            if (!wants(0)) break;
            const Tensor& x = val(n.in[0]);
            Tensor dx(y.shape());
            for (int64_t i = 0; i < y.size(); ++i) dx[i] = x[i] > 0.0 ? gy[i] : 0.0;
            kern::accumulate(grad_slot(n.in[0]), dx);
            break;
        }
        case Op::Add: {
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), gy);
            if (wants(1)) kern::accumulate(grad_slot(n.in[1]), gy);
            break;
        }
        case Op::Sub: {
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), gy);
            if (wants(1)) kern::accumulate(grad_slot(n.in[1]), kern::scale(gy, -1.0));
            break;
        }
        case Op::Mul: {
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::mul(gy, val(n.in[1])));
            if (wants(1)) kern::accumulate(grad_slot(n.in[1]), kern::mul(gy, val(n.in[0])));
            break;
        }
        case Op::Scale: {
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::scale(gy, n.scalar));
            break;
        }
        case Op::BroadcastRow: {
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::sum_rows(gy));
            break;
        }
        case Op::BroadcastCol: {
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::sum_cols(gy));
            break;
        }
        case Op::ConcatCols: {
            const int d1 = val(n.in[0]).cols();
            const int d2 = val(n.in[1]).cols();
            if (wants(0)) kern::accumulate(grad_slot(n.in[0]), kern::slice_cols(gy, 0, d1));
            if (wants(1)) kern::accumulate(grad_slot(n.in[1]), kern::slice_cols(gy, d1, d2));
            break;
        }
        case Op::SliceCols: {
            if (!wants(0)) break;
            Tensor& gx = grad_slot(n.in[0]);
            for (int i = 0; i < gy.rows(); ++i)
                for (int j = 0; j < gy.cols(); ++j) gx.at(i, n.i0 + j) += gy.at(i, j);
            break;
        }
        case Op::LayerNorm: {
            const Tensor& xhat = n.saved0;
            const Tensor& invstd = n.saved1;
            const Tensor& gamma = val(n.in[1]);
            const int m = xhat.rows(), d = xhat.cols();
            if (wants(1) || wants(2)) {
                Tensor dgamma({1, d});
                Tensor dbeta({1, d});
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < d; ++j) {
                        dgamma[j] += gy.at(i, j) * xhat.at(i, j);
                        dbeta[j] += gy.at(i, j);
                    }
                if (wants(1)) kern::accumulate(grad_slot(n.in[1]), dgamma);
                if (wants(2)) kern::accumulate(grad_slot(n.in[2]), dbeta);
            }
            if (wants(0)) {
                Tensor dx({m, d});
                for (int i = 0; i < m; ++i) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double g = gy.at(i, j) * gamma[j];
                        mean_g += g;
                        mean_gx += g * xhat.at(i, j);
                    }
                    mean_g /= d;
                    mean_gx /= d;
                    for (int j = 0; j < d; ++j) {
                        const double g = gy.at(i, j) * gamma[j];
                        dx.at(i, j) = invstd[i] * (g - mean_g - xhat.at(i, j) * mean_gx);
                    }
                }
                kern::accumulate(grad_slot(n.in[0]), dx);
            }
            break;
        }
        case Op::LookupRows: {
            if (!wants(0)) break;
            Tensor& gt = grad_slot(n.in[0]);
            for (size_t i = 0; i < n.ids.size(); ++i)
                for (int j = 0; j < gy.cols(); ++j)
                    gt.at(n.ids[i], j) += gy.at(static_cast<int>(i), j);
            break;
        }
        case Op::NllMean: {
            if (!wants(0)) break;
            const double g = gy[0];
            Tensor& gx = grad_slot(n.in[0]);
            for (size_t i = 0; i < n.ids.size(); ++i)
                gx.at(static_cast<int>(i), n.ids[i]) -= g * n.aux[i] / n.scalar;
            break;
        }
        case Op::SumAll: {
            if (!wants(0)) break;
            const Tensor& x = val(n.in[0]);
            kern::accumulate(grad_slot(n.in[0]), Tensor::full(x.shape(), gy[0]));
            break;
        }
        case Op::Leaf:
            break;
        }
    }
}

} // namespace mmcs
