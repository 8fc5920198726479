#include "mmcs/reference.hpp"

#include <cmath>

namespace mmcs::ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "ref::matmul");
    require_rank2(b, "ref::matmul");
    if (a.cols() != b.rows())
        throw DimError("ref::matmul: inner dimensions disagree, " + a.shape_str() +
                       " vs " + b.shape_str());
    Tensor c({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int l = 0; l < a.cols(); ++l) s += a.at(i, l) * b.at(l, j);
            c.at(i, j) = s;
        }
    return c;
}

Tensor softmax_rows(const Tensor& x) {
    Tensor y(x.shape());
    for (int i = 0; i < x.rows(); ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < x.cols(); ++j) denom += std::exp(x.at(i, j) - mx);
        for (int j = 0; j < x.cols(); ++j) y.at(i, j) = std::exp(x.at(i, j) - mx) / denom;
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return y;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const int l = q.rows(), d = q.cols();
    Tensor scores({l, k.rows()});
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < k.rows(); ++j) {
            double s = 0.0;
            for (int c = 0; c < d; ++c) s += q.at(i, c) * k.at(j, c);
            scores.at(i, j) = s / std::sqrt(static_cast<double>(d));
        }
    Tensor probs = softmax_rows(scores);
    Tensor out({l, v.cols()});
    for (int i = 0; i < l; ++i)
        for (int c = 0; c < v.cols(); ++c) {
            double s = 0.0;
            for (int j = 0; j < v.rows(); ++j) s += probs.at(i, j) * v.at(j, c);
            out.at(i, c) = s;
        }
    return out;
}

Tensor gate_preact(const Tensor& k, const Tensor& w1, const Tensor& m,
                   const Tensor& u, const Tensor& w2) {
    const int l = k.rows(), d = k.cols();
    // m*u -> 1 x d, then (m*u)*w2 -> scalar
    double mu_w2 = 0.0;
    for (int j = 0; j < d; ++j) {
        double mu_j = 0.0;
        for (int c = 0; c < m.cols(); ++c) mu_j += m.at(0, c) * u.at(c, j);
        mu_w2 += mu_j * w2.at(j, 0);
    }
    Tensor out({l, 1});
    for (int i = 0; i < l; ++i) {
        double kw = 0.0;
        for (int j = 0; j < d; ++j) kw += k.at(i, j) * w1.at(j, 0);
        out.at(i, 0) = kw + mu_w2;
    }
    return out;
}

Tensor lerp_rows(const Tensor& k, const Tensor& lam, const Tensor& m,
                 const Tensor& u) {
    const int l = k.rows(), d = k.cols();
    Tensor mu({1, d});
    for (int j = 0; j < d; ++j)
        for (int c = 0; c < m.cols(); ++c) mu.at(0, j) += m.at(0, c) * u.at(c, j);
    Tensor out({l, d});
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < d; ++j)
            out.at(i, j) = (1.0 - lam.at(i, 0)) * k.at(i, j) + lam.at(i, 0) * mu.at(0, j);
    return out;
}

Tensor concat_affine(const Tensor& h, const Tensor& hm, const Tensor& g,
                     const Tensor& b) {
    const int l = h.rows(), d = h.cols();
    Tensor out({l, g.cols()});
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < g.cols(); ++j) {
            double s = b.at(0, j);
            for (int c = 0; c < d; ++c) s += h.at(i, c) * g.at(c, j);
            for (int c = 0; c < d; ++c) s += hm.at(i, c) * g.at(d + c, j);
            out.at(i, j) = s;
        }
    return out;
}

} // namespace mmcs::ref
