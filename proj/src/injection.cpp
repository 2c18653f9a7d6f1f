#include "noisegeo/injection.hpp"

#include <cmath>

#include "noisegeo/nn_kernels.hpp"

namespace noisegeo {

namespace {

struct MapLayout {
    std::size_t maps;  // number of (h,w) maps
    std::size_t area;  // h * w
};

MapLayout spatial_layout(const Tensor& t, const char* op) {
    if (t.rank() < 2) throw ShapeError(std::string(op) + ": expected (..., h, w), got " + to_string(t.shape()));
    const std::size_t area = t.dim(-2) * t.dim(-1);
    return {t.size() / area, area};
}

Shape spatial_shape(const Tensor& t) { return {t.dim(-2), t.dim(-1)}; }

// Checks mu (..., c, h, w) against a spatial map (..., h, w) with the same leading axes.
void require_broadcastable(const Tensor& mu, const Tensor& map, const char* op) {
    const bool ok = mu.rank() >= 3 && map.rank() + 1 == mu.rank() &&
                    std::equal(map.shape().begin(), map.shape().end() - 2, mu.shape().begin()) &&
                    map.dim(-2) == mu.dim(-2) && map.dim(-1) == mu.dim(-1);
    if (!ok) throw ShapeError(std::string(op) + ": spatial shape mismatch " + to_string(mu.shape()) + " vs " + to_string(map.shape()));
}

Shape drop_channel_axis(const Shape& s) {
    Shape out(s);
    out.erase(out.end() - 3);
    return out;
}

std::size_t argmax_abs(const double* x, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(x[i]) > std::abs(x[best])) best = i;
    return best;
}

double map_mean(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s / static_cast<double>(n);
}

double map_norm(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

}  // namespace

std::string_view variant_name(RniVariant v) {
    switch (v) {
        case RniVariant::full: return "full";
        case RniVariant::no_normalization: return "no-normalization";
        case RniVariant::no_stabilization: return "no-stabilization";
        case RniVariant::no_decomposition: return "no-decomposition";
        case RniVariant::cnn_sigma: return "cnn-sigma";
    }
    return "full";
}

RniVariant parse_variant(std::string_view name) {
    for (RniVariant v : kAllRniVariants)
        if (variant_name(v) == name) return v;
    throw Error("unknown injection variant '" + std::string(name) + "'");
}

RniParams RniParams::initial(std::size_t channels, std::size_t height, std::size_t width, RniVariant variant,
                             RandomSource* rs) {
    RniParams p;
    p.A = Tensor({height, width}, 1.0);
    p.b = Tensor({height, width}, 0.0);
    p.r = std::sqrt(static_cast<double>(height * width));
    p.alpha = 0.0;
    p.variant = variant;
    if (variant == RniVariant::cnn_sigma) {
        if (rs == nullptr) throw Error("RniParams::initial: cnn-sigma needs a random source for its weights");
        p.conv_weight = scale(rs->gaussian({1, channels, 3, 3}), 1.0 / std::sqrt(9.0 * static_cast<double>(channels)));
        p.conv_bias = Tensor({1}, 0.0);
    }
    return p;
}

Tensor eni_forward(const Tensor& mu, const EniParams& p, const Tensor& eps) {
    require_broadcastable(mu, eps, "eni_forward");
    const std::size_t area = eps.dim(-2) * eps.dim(-1);
    const std::size_t channels = mu.dim(-3);
    Tensor out = mu;
    for (std::size_t m = 0; m < eps.size() / area; ++m)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t j = 0; j < area; ++j) out[(m * channels + c) * area + j] += p.a * eps[m * area + j];
    return out;
}

Tensor channel_sum(const Tensor& mu) {
    if (mu.rank() < 3) throw ShapeError("channel_sum: expected (..., c, h, w), got " + to_string(mu.shape()));
    return reduce_sum(mu, -3);
}

Tensor semantic_normalize(const Tensor& summed) {
    const auto [maps, area] = spatial_layout(summed, "semantic_normalize");
    Tensor out(summed.shape());
    for (std::size_t m = 0; m < maps; ++m) {
        const double* x = summed.data().data() + m * area;
        double* y = out.data().data() + m * area;
        const double mu = map_mean(x, area);
        for (std::size_t i = 0; i < area; ++i) y[i] = x[i] - mu;
        const double peak = std::abs(y[argmax_abs(y, area)]);
        if (peak == 0.0) continue;  // constant map: s = 0
        for (std::size_t i = 0; i < area; ++i) y[i] /= peak;
    }
    return out;
}

Tensor affine_decompose(const Tensor& s, const Tensor& A, const Tensor& b) {
    const auto [maps, area] = spatial_layout(s, "affine_decompose");
    if (A.shape() != spatial_shape(s) || b.shape() != spatial_shape(s))
        throw ShapeError("affine_decompose: shape mismatch " + to_string(s.shape()) + " vs " + to_string(A.shape()) + " / " +
                         to_string(b.shape()));
    Tensor out(s.shape());
    for (std::size_t m = 0; m < maps; ++m)
        for (std::size_t i = 0; i < area; ++i) out[m * area + i] = A[i] * s[m * area + i] + b[i];
    return out;
}

Tensor frobenius_normalize(const Tensor& m) {
    const auto [maps, area] = spatial_layout(m, "frobenius_normalize");
    Tensor out = m;
    for (std::size_t k = 0; k < maps; ++k) {
        double* x = out.data().data() + k * area;
        const double n = map_norm(x, area);
        if (!(n > 0.0)) throw Error("degenerate stabilized map");
        for (std::size_t i = 0; i < area; ++i) x[i] /= n;
    }
    return out;
}

Tensor stabilize_normalize(const Tensor& sd, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("stabilize_normalize: alpha must lie in [0,1], got " + std::to_string(alpha));
    Tensor blended = sd;
    for (double& v : blended.data()) v = alpha * v + (1.0 - alpha);
    return frobenius_normalize(blended);
}

Tensor rni_combine(const Tensor& mu, const Tensor& sigma, const Tensor& eps, double r) {
    require_broadcastable(mu, sigma, "rni_combine");
    require_broadcastable(mu, eps, "rni_combine");
    const std::size_t area = sigma.dim(-2) * sigma.dim(-1);
    const std::size_t channels = mu.dim(-3);
    Tensor out(mu.shape());
    for (std::size_t m = 0; m < sigma.size() / area; ++m)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t j = 0; j < area; ++j) {
                const std::size_t at = (m * channels + c) * area + j;
                const double rs = r * sigma[m * area + j];
                out[at] = rs * mu[at] + rs * eps[m * area + j];
            }
    return out;
}

Tensor rni_sigma(const Tensor& mu, const RniParams& p) {
    if (mu.rank() < 3) throw ShapeError("rni_forward: expected (..., c, h, w), got " + to_string(mu.shape()));
    if (p.variant == RniVariant::cnn_sigma) {
        // The convolution wants a 4-D batch; fold any leading axes into one.
        const std::size_t c = mu.dim(-3), h = mu.dim(-2), w = mu.dim(-1);
        const Tensor batched = mu.reshaped({mu.size() / (c * h * w), c, h, w});
        Tensor conv = conv3x3(batched, p.conv_weight, p.conv_bias);
        Shape out_shape = drop_channel_axis(mu.shape());
        return frobenius_normalize(conv.reshaped(std::move(out_shape)));
    }
    Tensor s = channel_sum(mu);
    if (p.variant != RniVariant::no_normalization) s = semantic_normalize(s);
    if (p.variant != RniVariant::no_decomposition) s = affine_decompose(s, p.A, p.b);
    if (p.variant != RniVariant::no_stabilization) s = stabilize_normalize(s, p.alpha);
    return s;
}

Tensor rni_forward(const Tensor& mu, const RniParams& p, const Tensor& eps) {
    require_broadcastable(mu, eps, "rni_forward");
    return rni_combine(mu, rni_sigma(mu, p), eps, p.r);
}

void RepresentativePair::validate() const {
    if (mu.rank() != 1 || frame.rank() != 2 || frame.dim(0) != mu.size())
        throw ShapeError("representative pair: frame " + to_string(frame.shape()) + " does not match center " + to_string(mu.shape()));
    if (!(r > 0.0)) throw Error("representative pair: radius must be positive");
    const Tensor gram = transposed_matmul(frame, frame);
    if (max_abs_diff(gram, Tensor::identity(frame.dim(1))) > 1e-8) throw Error("representative pair: frame columns are not orthonormal");
}

Tensor sample_from_pair(const RepresentativePair& p, const Tensor& eps) {
    if (eps.size() != p.frame.dim(1))
        throw ShapeError("sample_from_pair: noise " + to_string(eps.shape()) + " does not match frame " + to_string(p.frame.shape()));
    const std::size_t m = p.frame.dim(0), d = p.frame.dim(1);
    Tensor out = p.mu;
    for (std::size_t i = 0; i < m; ++i) {
        double t = 0.0;
        for (std::size_t j = 0; j < d; ++j) t += p.frame(i, j) * eps[j];
        out[i] = p.mu[i] + p.r * t;
    }
    return out;
}

Tensor sample_from_pair(const RepresentativePair& p, RandomSource& rs) {
    return sample_from_pair(p, rs.gaussian({p.frame.dim(1)}));
}

double euclidean_distance(const Tensor& x, const Tensor& y) { return norm(subtract(x, y)); }

double fuzzy_similarity(const Metric& d, const Tensor& x, const Tensor& y) {
    const double dist = d(x, y);
    if (dist < 0.0) throw Error("fuzzy_similarity: distance " + std::to_string(dist) + " is negative, not a metric");
    return std::exp(-dist);
}

TEquivalenceReport verify_t_equivalence(const Similarity& similarity, std::span<const Tensor> points, double tolerance) {
    const std::size_t n = points.size();
    TEquivalenceReport report;
    report.points = n;
    std::vector<double> e(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) e[i * n + j] = similarity(points[i], points[j]);
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(e[i * n + i] - 1.0) > tolerance) ++report.reflexivity_violations;
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(e[i * n + j] - e[j * n + i]) > tolerance) ++report.symmetry_violations;
    }
    report.worst_transitivity_gap = -1.0;
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t z = 0; z < n; ++z) {
                const double gap = e[x * n + y] * e[y * n + z] - e[x * n + z];
                report.worst_transitivity_gap = std::max(report.worst_transitivity_gap, gap);
                if (gap > tolerance) ++report.transitivity_violations;
                ++report.triples_checked;
            }
    return report;
}

namespace ad {

Var channel_sum(Var mu) {
    return mu.tape->apply(
        "channel_sum", {mu}, [](auto in) { return noisegeo::channel_sum(*in[0]); },
        [](const BackwardArgs& args) {
            const Tensor& x = *args.inputs[0];
            const std::size_t c = x.dim(-3), area = x.dim(-2) * x.dim(-1);
            Tensor g(x.shape());
            for (std::size_t m = 0; m < x.size() / (c * area); ++m)
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t j = 0; j < area; ++j) g[(m * c + k) * area + j] = args.grad[m * area + j];
            return std::vector<Tensor>{std::move(g)};
        });
}

Var semantic_normalize(Var summed) {
    return summed.tape->apply(
        "semantic_normalize", {summed}, [](auto in) { return noisegeo::semantic_normalize(*in[0]); },
        [](const BackwardArgs& args) {
            const Tensor& x = *args.inputs[0];
            const auto [maps, area] = spatial_layout(x, "semantic_normalize");
            const double n = static_cast<double>(area);
            Tensor g(x.shape());
            for (std::size_t m = 0; m < maps; ++m) {
                const double* xm = x.data().data() + m * area;
                const double* ym = args.output.data().data() + m * area;
                const double* gm = args.grad.data().data() + m * area;
                double* out = g.data().data() + m * area;
                const double mu = map_mean(xm, area);
                std::vector<double> centered(area);
                for (std::size_t i = 0; i < area; ++i) centered[i] = xm[i] - mu;
                const std::size_t peak_at = argmax_abs(centered.data(), area);
                const double peak = std::abs(centered[peak_at]);
                if (peak == 0.0) continue;
                const double sign = centered[peak_at] > 0.0 ? 1.0 : -1.0;
                const double gbar = map_mean(gm, area);
                double gy = 0.0;
                for (std::size_t i = 0; i < area; ++i) gy += gm[i] * ym[i];
                const double k = gy / peak * sign;
                for (std::size_t i = 0; i < area; ++i) out[i] = (gm[i] - gbar) / peak + k / n;
                out[peak_at] -= k;
            }
            return std::vector<Tensor>{std::move(g)};
        });
}

Var affine_decompose(Var s, Var A, Var b) {
    return s.tape->apply(
        "affine_decompose", {s, A, b}, [](auto in) { return noisegeo::affine_decompose(*in[0], *in[1], *in[2]); },
        [](const BackwardArgs& args) {
            const Tensor& sv = *args.inputs[0];
            const Tensor& Av = *args.inputs[1];
            const auto [maps, area] = spatial_layout(sv, "affine_decompose");
            Tensor gs(sv.shape()), gA(Av.shape()), gb(Av.shape());
            for (std::size_t m = 0; m < maps; ++m)
                for (std::size_t i = 0; i < area; ++i) {
                    const double g = args.grad[m * area + i];
                    gs[m * area + i] = Av[i] * g;
                    gA[i] += g * sv[m * area + i];
                    gb[i] += g;
                }
            return std::vector<Tensor>{std::move(gs), std::move(gA), std::move(gb)};
        });
}

Var frobenius_normalize(Var m) {
    return m.tape->apply(
        "frobenius_normalize", {m}, [](auto in) { return noisegeo::frobenius_normalize(*in[0]); },
        [](const BackwardArgs& args) {
            const Tensor& x = *args.inputs[0];
            const auto [maps, area] = spatial_layout(x, "frobenius_normalize");
            Tensor g(x.shape());
            for (std::size_t k = 0; k < maps; ++k) {
                const double* y = args.output.data().data() + k * area;
                const double* gk = args.grad.data().data() + k * area;
                const double n = map_norm(x.data().data() + k * area, area);
                double yg = 0.0;
                for (std::size_t i = 0; i < area; ++i) yg += y[i] * gk[i];
                for (std::size_t i = 0; i < area; ++i) g[k * area + i] = (gk[i] - y[i] * yg) / n;
            }
            return std::vector<Tensor>{std::move(g)};
        });
}

Var stabilize_normalize(Var sd, Var alpha) {
    if (alpha.value().size() != 1) throw ShapeError("stabilize_normalize: alpha must be a single value");
    Tape& tape = *sd.tape;
    Var blended = tape.apply(
        "stabilize_blend", {sd, alpha},
        [](auto in) {
            const double a = (*in[1])[0];
            Tensor out = *in[0];
            for (double& v : out.data()) v = a * v + (1.0 - a);
            return out;
        },
        [](const BackwardArgs& args) {
            const double a = (*args.inputs[1])[0];
            double ga = 0.0;
            for (std::size_t i = 0; i < args.grad.size(); ++i) ga += args.grad[i] * ((*args.inputs[0])[i] - 1.0);
            return std::vector<Tensor>{noisegeo::scale(args.grad, a), Tensor({1}, ga)};
        });
    return frobenius_normalize(blended);
}

Var rni_combine(Var mu, Var sigma, Var eps, Var r) {
    return mu.tape->apply(
        "rni_combine", {mu, sigma, eps, r}, [](auto in) { return noisegeo::rni_combine(*in[0], *in[1], *in[2], (*in[3])[0]); },
        [](const BackwardArgs& args) {
            const Tensor& m = *args.inputs[0];
            const Tensor& s = *args.inputs[1];
            const Tensor& e = *args.inputs[2];
            const double r = (*args.inputs[3])[0];
            const std::size_t area = s.dim(-2) * s.dim(-1), channels = m.dim(-3);
            Tensor gm(m.shape()), gs(s.shape()), ge(e.shape());
            double gr = 0.0;
            for (std::size_t k = 0; k < s.size() / area; ++k)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t j = 0; j < area; ++j) {
                        const std::size_t at = (k * channels + c) * area + j;
                        const double g = args.grad[at];
                        const double sig = s[k * area + j];
                        const double total = m[at] + e[k * area + j];
                        gm[at] = r * sig * g;
                        gs[k * area + j] += r * g * total;
                        ge[k * area + j] += r * sig * g;
                        gr += sig * g * total;
                    }
            return std::vector<Tensor>{std::move(gm), std::move(gs), std::move(ge), Tensor({1}, gr)};
        });
}

Var eni_combine(Var mu, Var eps, Var a) {
    return mu.tape->apply(
        "eni_combine", {mu, eps, a}, [](auto in) { return noisegeo::eni_forward(*in[0], EniParams{(*in[2])[0]}, *in[1]); },
        [](const BackwardArgs& args) {
            const Tensor& m = *args.inputs[0];
            const Tensor& e = *args.inputs[1];
            const double a = (*args.inputs[2])[0];
            const std::size_t area = e.dim(-2) * e.dim(-1), channels = m.dim(-3);
            Tensor ge(e.shape());
            double ga = 0.0;
            for (std::size_t k = 0; k < e.size() / area; ++k)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t j = 0; j < area; ++j) {
                        const double g = args.grad[(k * channels + c) * area + j];
                        ge[k * area + j] += a * g;
                        ga += g * e[k * area + j];
                    }
            return std::vector<Tensor>{args.grad, std::move(ge), Tensor({1}, ga)};
        });
}

}  // namespace ad

}  // namespace noisegeo
