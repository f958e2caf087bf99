#include "razor/tensor.hpp"

#include <cmath>
#include <sstream>

#include "razor/errors.hpp"

namespace razor {

int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_size(shape) != static_cast<int64_t>(data.size()))
        throw DimensionError("tensor data length does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int> shape) {
    int64_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    int64_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::vec(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

int Tensor::rows() const {
    if (rank() == 2) return shape[0];
    if (rank() == 1) return 1;
    throw DimensionError("rows() on tensor of rank " + std::to_string(rank()));
}

int Tensor::cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    throw DimensionError("cols() on tensor of rank " + std::to_string(rank()));
}

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

double seq_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

double seq_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    size_t n = a.size() < b.size() ? a.size() : b.size();
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace razor
