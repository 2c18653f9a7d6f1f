#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace noisegeo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a shape contract is violated. The message names the kernel and both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A default-constructed tensor is "null" (no shape, no data) and is used to
/// mark absent values, e.g. gradients that were not requested. Every other
/// tensor has a nonempty shape of positive dimensions and exactly
/// product(shape) entries.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor identity(std::size_t n);

    [[nodiscard]] bool is_null() const noexcept { return shape_.empty(); }
    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    /// Dimension `axis`; negative values count from the back.
    [[nodiscard]] std::size_t dim(int axis) const;

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    /// Value of a single-element tensor.
    [[nodiscard]] double item() const;
    [[nodiscard]] Tensor reshaped(Shape shape) const;
    [[nodiscard]] bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Kernels. All raise ShapeError on nonconforming inputs.
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// (m,k) x (k,n) -> (m,n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// (m,k) x (n,k)^T -> (m,n).
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
/// (k,m)^T x (k,n) -> (m,n).
Tensor transposed_matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
/// Adds `b` to every leading-axis slice of `a`: a is (n, ...rest), b is (...rest).
Tensor broadcast_add(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);
/// Sums out `axis` (negative counts from the back). A rank-1 input reduces to shape {1}.
Tensor reduce_sum(const Tensor& a, int axis);
double sum(const Tensor& a);
double mean(const Tensor& a);
double norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Row `i` of a matrix (or leading-axis slice of any tensor).
Tensor slice(const Tensor& a, std::size_t i);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
/// Rows [begin, end) along the leading axis.
Tensor rows(const Tensor& a, std::size_t begin, std::size_t end);

}  // namespace noisegeo
