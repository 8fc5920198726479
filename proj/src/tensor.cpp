#include "mmcs/tensor.hpp"

#include <cmath>
#include <cstring>

namespace mmcs {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 3)
        throw DimError("tensor rank must be 1..3, got " + shape_to_string(shape_));
    int64_t n = 1;
    for (int d : shape_) {
        if (d <= 0) throw DimError("non-positive dimension in shape " + shape_to_string(shape_));
        n *= d;
    }
    data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    Tensor t(std::move(shape));
    if (static_cast<int64_t>(data.size()) != t.size())
        throw DimError("data length " + std::to_string(data.size()) +
                       " does not fill shape " + t.shape_str());
    std::memcpy(t.data(), data.data(), data.size() * sizeof(double));
    return t;
}

Tensor Tensor::row(std::vector<double> data) {
    return from({1, static_cast<int>(data.size())}, std::move(data));
}

Tensor Tensor::identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

bool Tensor::bit_equal(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimError(std::string(op) + ": shape mismatch " + a.shape_str() +
                       " vs " + b.shape_str());
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw DimError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

} // namespace mmcs
