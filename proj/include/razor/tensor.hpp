#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace razor {

/// Dense row-major tensor of 64-bit reals. Rank is usually 1 or 2; no
/// broadcasting beyond what the graph ops provide. All reductions over the
/// flat data use fixed left-to-right summation order.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> values);       // [1 x n]
    static Tensor vec(std::vector<double> values);       // [n]
    static Tensor matrix(int rows, int cols, std::vector<double> values);

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const;
    int cols() const;

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

int64_t shape_size(const std::vector<int>& shape);

// Sequential left-to-right reductions (bit-reproducible).
double seq_sum(const std::vector<double>& v);
double seq_dot(const std::vector<double>& a, const std::vector<double>& b);
double l2_norm(const std::vector<double>& v);

}  // namespace razor
