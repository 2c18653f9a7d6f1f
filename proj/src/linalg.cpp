#include "noisegeo/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace noisegeo {

namespace {

constexpr int kMaxSweeps = 80;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Column-major working copy, so Jacobi rotations touch contiguous memory.
struct Columns {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double* col(std::size_t j) { return data.data() + j * rows; }
    const double* col(std::size_t j) const { return data.data() + j * rows; }
};

Columns to_columns(const Tensor& m) {
    Columns c{m.dim(0), m.dim(1), std::vector<double>(m.size())};
    for (std::size_t i = 0; i < c.rows; ++i)
        for (std::size_t j = 0; j < c.cols; ++j) c.data[j * c.rows + i] = m(i, j);
    return c;
}

Tensor from_columns(const Columns& c, const std::vector<std::size_t>& order) {
    Tensor m({c.rows, order.size()});
    for (std::size_t k = 0; k < order.size(); ++k) {
        const double* src = c.col(order[k]);
        for (std::size_t i = 0; i < c.rows; ++i) m(i, k) = src[i];
    }
    return m;
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void rotate(double* a, double* b, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a[i], y = b[i];
        a[i] = c * x - s * y;
        b[i] = s * x + c * y;
    }
}

// Replaces column j by a unit vector orthogonal to every column in `done`.
void complete_column(Columns& u, std::size_t j, const std::vector<std::size_t>& done) {
    for (std::size_t e = 0; e < u.rows; ++e) {
        double* c = u.col(j);
        std::fill(c, c + u.rows, 0.0);
        c[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t k : done) {
                const double* q = u.col(k);
                const double proj = dot(c, q, u.rows);
                for (std::size_t i = 0; i < u.rows; ++i) c[i] -= proj * q[i];
            }
        const double nrm = std::sqrt(dot(c, c, u.rows));
        if (nrm > 0.5) {
            for (std::size_t i = 0; i < u.rows; ++i) c[i] /= nrm;
            return;
        }
    }
}

Svd svd_tall(const Tensor& m) {
    Columns u = to_columns(m);
    const std::size_t n = u.cols, rows = u.rows;
    Columns v{n, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) v.data[i * n + i] = 1.0;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(u.col(p), u.col(p), rows);
                const double beta = dot(u.col(q), u.col(q), rows);
                const double gamma = dot(u.col(p), u.col(q), rows);
                if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(u.col(p), u.col(q), rows, c, s);
                rotate(v.col(p), v.col(q), n, c, s);
            }
        if (!rotated) break;
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(dot(u.col(j), u.col(j), rows));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sv[a] > sv[b]; });

    std::vector<std::size_t> done;
    for (std::size_t j : order) {
        double* c = u.col(j);
        if (sv[j] > 0.0) {
            for (std::size_t i = 0; i < rows; ++i) c[i] /= sv[j];
        } else {
            complete_column(u, j, done);
        }
        done.push_back(j);
    }

    Svd out;
    out.u = from_columns(u, order);
    out.v = from_columns(v, order);
    out.singular_values.reserve(n);
    for (std::size_t j : order) out.singular_values.push_back(sv[j]);
    return out;
}

}  // namespace

Svd svd(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("svd: expected a matrix, got shape " + to_string(m.shape()));
    if (m.dim(0) >= m.dim(1)) return svd_tall(m);
    Svd t = svd_tall(transpose(m));
    std::swap(t.u, t.v);
    return t;
}

SymmetricEigen symmetric_eigen(const Tensor& s) {
    if (s.rank() != 2 || s.dim(0) != s.dim(1)) throw ShapeError("symmetric_eigen: expected a square matrix, got " + to_string(s.shape()));
    const std::size_t n = s.dim(0);
    Tensor a = s;
    Tensor v = Tensor::identity(n);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += a(i, j) * a(i, j);
        if (off <= kEps * kEps * diag || off == 0.0) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    SymmetricEigen out{{}, Tensor({n, n})};
    for (std::size_t k = 0; k < n; ++k) {
        out.values.push_back(a(order[k], order[k]));
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

Tensor column_mean(const Tensor& samples) {
    if (samples.rank() != 2) throw ShapeError("column_mean: expected an n x m matrix, got " + to_string(samples.shape()));
    Tensor m = reduce_sum(samples, 0);
    return scale(m, 1.0 / static_cast<double>(samples.dim(0)));
}

Tensor covariance(const Tensor& samples) {
    if (samples.rank() != 2 || samples.dim(0) < 2)
        throw ShapeError("covariance: need an n x m matrix with n >= 2, got " + to_string(samples.shape()));
    const Tensor mu = column_mean(samples);
    const std::size_t n = samples.dim(0), m = samples.dim(1);
    Tensor centered = samples;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) centered(i, j) -= mu[j];
    return scale(transposed_matmul(centered, centered), 1.0 / static_cast<double>(n - 1));
}

std::vector<double> pca_strengths(const Tensor& samples) {
    if (samples.rank() != 2 || samples.dim(0) < 2)
        throw Error("pca_strengths: need at least 2 samples in an n x m matrix, got " + to_string(samples.shape()));
    const std::size_t n = samples.dim(0), m = samples.dim(1);
    bool all_same = true;
    for (std::size_t i = 1; i < n && all_same; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (samples(i, j) != samples(0, j)) {
                all_same = false;
                break;
            }
    if (all_same) throw Error("pca_strengths: degenerate covariance");

    const Tensor mu = column_mean(samples);
    Tensor centered = samples;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) centered(i, j) -= mu[j];
    // Squared singular values of the centered data are (n-1) times the
    // covariance eigenvalues; the factor cancels in the normalization.
    const Svd d = svd(centered);
    std::vector<double> strengths(m, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < d.singular_values.size(); ++k) {
        strengths[k] = d.singular_values[k] * d.singular_values[k];
        total += strengths[k];
    }
    if (!(total > 0.0)) throw Error("pca_strengths: degenerate covariance");
    for (double& s : strengths) s /= total;
    return strengths;
}

}  // namespace noisegeo
