#include "mmcs/kernels.hpp"

#include <cmath>

namespace mmcs::kern {

namespace {

// Parallel regions only pay off above this many output elements; below it the
// fork/join overhead dominates at desk scale.
constexpr int64_t kParallelCutoff = 16 * 1024;

void require_matmul(const Tensor& a, const Tensor& b, int ak, int bk, const char* op) {
    require_rank2(a, op);
    require_rank2(b, op);
    if (ak != bk)
        throw DimError(std::string(op) + ": inner dimensions disagree, " +
                       a.shape_str() + " vs " + b.shape_str());
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matmul(a, b, a.cols(), b.rows(), "matmul");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * n * k > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        double* crow = pc + static_cast<size_t>(i) * n;
        const double* arow = pa + static_cast<size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = pb + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matmul(a, b, a.cols(), b.cols(), "matmul_nt");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * n * k > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            const double* arow = a.data() + static_cast<size_t>(i) * k;
            const double* brow = b.data() + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
            c.at(i, j) = s;
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matmul(a, b, a.rows(), b.rows(), "matmul_tn");
    const int k = a.rows(), m = a.cols(), n = b.cols();
    Tensor c({m, n});
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * n * k > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        double* crow = c.data() + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const double av = a.at(l, i);
            const double* brow = b.data() + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    Tensor y({m, n});
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * n > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        const double* xr = x.data() + static_cast<size_t>(i) * n;
        double* yr = y.data() + static_cast<size_t>(i) * n;
        double mx = xr[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            denom += yr[j];
        }
        for (int j = 0; j < n; ++j) yr[j] /= denom;
    }
    return y;
}

Tensor log_softmax_rows(const Tensor& x) {
    require_rank2(x, "log_softmax_rows");
    const int m = x.rows(), n = x.cols();
    Tensor y({m, n});
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * n > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        const double* xr = x.data() + static_cast<size_t>(i) * n;
        double* yr = y.data() + static_cast<size_t>(i) * n;
        double mx = xr[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) denom += std::exp(xr[j] - mx);
        const double lse = mx + std::log(denom);
        for (int j = 0; j < n; ++j) yr[j] = xr[j] - lse;
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    const int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) {
        const double v = x[i];
        // Two-branch form keeps exp() argument non-positive.
        if (v >= 0.0) {
            y[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y[i] = e / (1.0 + e);
        }
    }
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    const int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor y(a.shape());
    const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor y(a.shape());
    const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor y(a.shape());
    const int64_t n = a.size();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
    return y;
}

Tensor scale(const Tensor& x, double s) {
    Tensor y(x.shape());
    const int64_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelCutoff)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] * s;
    return y;
}

Tensor broadcast_row(const Tensor& row, int m) {
    require_rank2(row, "broadcast_row");
    if (row.rows() != 1)
        throw DimError("broadcast_row: expected a 1-row tensor, got " + row.shape_str());
    const int d = row.cols();
    Tensor y({m, d});
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * d > kParallelCutoff)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) y.at(i, j) = row[j];
    return y;
}

Tensor broadcast_col(const Tensor& col, int n) {
    require_rank2(col, "broadcast_col");
    if (col.cols() != 1)
        throw DimError("broadcast_col: expected a 1-column tensor, got " + col.shape_str());
    const int m = col.rows();
    Tensor y({m, n});
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(m) * n > kParallelCutoff)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) y.at(i, j) = col[i];
    return y;
}

Tensor sum_rows(const Tensor& x) {
    require_rank2(x, "sum_rows");
    Tensor y({1, x.cols()});
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) y[j] += x.at(i, j);
    return y;
}

Tensor sum_cols(const Tensor& x) {
    require_rank2(x, "sum_cols");
    Tensor y({x.rows(), 1});
    for (int i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols(); ++j) s += x.at(i, j);
        y[i] = s;
    }
    return y;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    if (a.rows() != b.rows())
        throw DimError("concat_cols: leading dimensions differ, " + a.shape_str() +
                       " vs " + b.shape_str());
    const int m = a.rows(), d1 = a.cols(), d2 = b.cols();
    Tensor y({m, d1 + d2});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d1; ++j) y.at(i, j) = a.at(i, j);
        for (int j = 0; j < d2; ++j) y.at(i, d1 + j) = b.at(i, j);
    }
    return y;
}

Tensor slice_cols(const Tensor& x, int c0, int width) {
    require_rank2(x, "slice_cols");
    if (c0 < 0 || width <= 0 || c0 + width > x.cols())
        throw DimError("slice_cols: range [" + std::to_string(c0) + "," +
                       std::to_string(c0 + width) + ") outside " + x.shape_str());
    Tensor y({x.rows(), width});
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < width; ++j) y.at(i, j) = x.at(i, c0 + j);
    return y;
}

Tensor transpose(const Tensor& x) {
    require_rank2(x, "transpose");
    Tensor y({x.cols(), x.rows()});
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) y.at(j, i) = x.at(i, j);
    return y;
}

void accumulate(Tensor& into, const Tensor& src) {
    require_same_shape(into, src, "accumulate");
    const int64_t n = into.size();
    for (int64_t i = 0; i < n; ++i) into[i] += src[i];
}

} // namespace mmcs::kern
