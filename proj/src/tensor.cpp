#include "noisegeo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace noisegeo {

namespace {

[[noreturn]] void shape_fail(const char* kernel, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(kernel) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void require_same(const char* kernel, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.is_null()) shape_fail(kernel, a.shape(), b.shape());
}

void require_matrix(const char* kernel, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) shape_fail(kernel, a.shape(), b.shape());
}

std::size_t normalize_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    const int ax = axis < 0 ? axis + r : axis;
    if (ax < 0 || ax >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return static_cast<std::size_t>(ax);
}

}  // namespace

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end())
        throw ShapeError("tensor: invalid shape " + to_string(shape_));
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end())
        throw ShapeError("tensor: invalid shape " + to_string(shape_));
    if (data_.size() != shape_size(shape_))
        throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " + to_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t Tensor::dim(int axis) const { return shape_[normalize_axis(axis, shape_.size())]; }

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not a single value");
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same("add", a, b);
    Tensor out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same("subtract", a, b);
    Tensor out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
    require_same("multiply", a, b);
    Tensor out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out = a;
    for (double& v : out.data()) v *= factor;
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a, b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) shape_fail("matmul", a.shape(), b.shape());
    Tensor out({m, n});
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = od + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bd + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
    require_matrix("matmul_transposed", a, b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) shape_fail("matmul_transposed", a.shape(), b.shape());
    Tensor out({m, n});
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ad + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bd + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            od[i * n + j] = acc;
        }
    }
    return out;
}

Tensor transposed_matmul(const Tensor& a, const Tensor& b) {
    require_matrix("transposed_matmul", a, b);
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) shape_fail("transposed_matmul", a.shape(), b.shape());
    Tensor out({m, n});
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* od = out.data().data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = ad + p * m;
        const double* brow = bd + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = arow[i];
            if (api == 0.0) continue;
            double* orow = od + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + to_string(m.shape()));
    const std::size_t r = m.dim(0), c = m.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(j, i) = m(i, j);
    return out;
}

Tensor broadcast_add(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() + 1 || !std::equal(b.shape().begin(), b.shape().end(), a.shape().begin() + 1))
        shape_fail("broadcast_add", a.shape(), b.shape());
    Tensor out = a;
    const std::size_t inner = b.size();
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i % inner];
    return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) shape_fail("reshape", a.shape(), shape);
    return a.reshaped(std::move(shape));
}

Tensor reduce_sum(const Tensor& a, int axis) {
    if (a.is_null()) throw ShapeError("reduce_sum: null tensor");
    const std::size_t ax = normalize_axis(axis, a.rank());
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= a.shape()[i];
    for (std::size_t i = ax + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    const std::size_t n = a.shape()[ax];
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != ax) out_shape.push_back(a.shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor out(out_shape);
    auto o = out.data();
    auto d = a.data();
    for (std::size_t p = 0; p < outer; ++p)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < inner; ++q) o[p * inner + q] += d[(p * n + j) * inner + q];
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

double mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    return sum(a) / static_cast<double>(a.size());
}

double norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same("max_abs_diff", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor slice(const Tensor& a, std::size_t i) {
    if (a.rank() < 1 || i >= a.dim(0)) throw ShapeError("slice: index " + std::to_string(i) + " out of range for " + to_string(a.shape()));
    Shape s(a.shape().begin() + 1, a.shape().end());
    if (s.empty()) s.push_back(1);
    const std::size_t n = shape_size(s);
    std::vector<double> d(a.data().begin() + static_cast<std::ptrdiff_t>(i * n), a.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    return Tensor(std::move(s), std::move(d));
}

Tensor stack(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack: no tensors");
    Shape s = parts.front().shape();
    std::vector<double> d;
    d.reserve(parts.size() * parts.front().size());
    for (const Tensor& p : parts) {
        if (p.shape() != s) shape_fail("stack", s, p.shape());
        d.insert(d.end(), p.data().begin(), p.data().end());
    }
    s.insert(s.begin(), parts.size());
    return Tensor(std::move(s), std::move(d));
}

Tensor rows(const Tensor& a, std::size_t begin, std::size_t end) {
    if (a.rank() < 1 || begin >= end || end > a.dim(0))
        throw ShapeError("rows: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " + to_string(a.shape()));
    Shape s = a.shape();
    s[0] = end - begin;
    const std::size_t inner = a.size() / a.dim(0);
    std::vector<double> d(a.data().begin() + static_cast<std::ptrdiff_t>(begin * inner), a.data().begin() + static_cast<std::ptrdiff_t>(end * inner));
    return Tensor(std::move(s), std::move(d));
}

}  // namespace noisegeo
