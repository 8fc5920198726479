#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "mmcs/errors.hpp"

namespace mmcs {

// Dense row-major array of 64-bit floats. Rank 1..3 is storable but all
// arithmetic in this project is rank-2; vectors are carried as 1 x d rows.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from(std::vector<int> shape, std::vector<double> data);
    static Tensor row(std::vector<double> data);
    static Tensor identity(int n);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int rows() const { return shape_.empty() ? 0 : shape_[0]; }
    int cols() const { return rank() < 2 ? 1 : shape_[1]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    void fill(double v);
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    bool bit_equal(const Tensor& o) const;
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_to_string(const std::vector<int>& shape);

// Throws DimError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_rank2(const Tensor& t, const char* op);

} // namespace mmcs
