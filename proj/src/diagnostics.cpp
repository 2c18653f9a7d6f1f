#include "noisegeo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "noisegeo/linalg.hpp"
#include "noisegeo/parallel.hpp"

namespace noisegeo {

namespace {

constexpr std::size_t kBlock = 2048;

Shape with_batch(std::size_t batch, const Shape& s) {
    Shape out{batch};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

std::size_t flat_input(const Network& net) { return shape_size(net.input_shape()); }
std::size_t flat_output(const Network& net) { return shape_size(net.output_shape()); }

double row_distance(const Tensor& a, const Tensor& b, std::size_t i) {
    const std::size_t m = a.dim(1);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double d = a(i, j) - b(i, j);
        s += d * d;
    }
    return std::sqrt(s);
}

double row_norm(const Tensor& a, std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.dim(1); ++j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

std::size_t blocks(std::size_t n) { return (n + kBlock - 1) / kBlock; }

/// Forward pass on a flat batch (B, n), output flattened to (B, m).
Tensor forward_flat(const Network& net, const Tensor& zs, Noise noise) {
    const std::size_t b = zs.dim(0);
    const Tensor out = forward(net, zs.reshaped(with_batch(b, net.input_shape())), std::move(noise)).output;
    return out.reshaped({b, out.size() / b});
}

/// Gradient rows of a batch of copies: row r of the result is d out[r, r mod m] / d in[r].
Tensor copy_jacobian_rows(const Network& net, const Tensor& batched_input, std::size_t m, Noise noise) {
    const std::size_t rows = batched_input.dim(0);
    Tape tape;
    const BoundParameters params = bind_parameters(tape, net);
    Var input = tape.leaf(batched_input);
    const TapeForward f = forward_on_tape(net, params, input, noise);
    Tensor mask({rows, m}, 0.0);
    for (std::size_t r = 0; r < rows; ++r) mask(r, r % m) = 1.0;
    Var out = ad::reshape(f.output, {rows, m});
    const std::vector<Var> wrt{input};
    return tape.grad(ad::sum(ad::mul(out, tape.leaf(mask))), wrt)[0].reshaped({rows, batched_input.size() / rows});
}

}  // namespace

BatchMap network_map(const Network& net) {
    return [net](const Tensor& zs) { return forward_flat(net, zs, Noise::deterministic()); };
}

InputSampler gaussian_sampler(std::size_t dim) {
    return [dim](RandomSource& rs, std::size_t count) { return rs.gaussian({count, dim}); };
}

Tensor jacobian(const Network& net, const Tensor& z, Noise noise) {
    if (noise.kind() == Noise::Kind::stochastic)
        throw Error("jacobian: stochastic injection noise must be pinned");
    const std::size_t n = flat_input(net), m = flat_output(net);
    if (z.size() != n) throw ShapeError("jacobian: input " + to_string(z.shape()) + " does not match network input " + to_string(net.input_shape()));
    Tensor copies({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) copies(i, j) = z[j];
    Noise tiled = Noise::deterministic();
    if (noise.kind() == Noise::Kind::pinned) {
        std::vector<Tensor> eps;
        for (const Tensor& e : noise.pinned_values()) {
            if (e.rank() == 3 && e.dim(0) != 1) throw ShapeError("jacobian: pinned eps " + to_string(e.shape()) + " must have batch 1");
            const std::size_t hw = e.size();
            const Shape spatial = e.rank() == 3 ? Shape{e.dim(1), e.dim(2)} : e.shape();
            Tensor t(with_batch(m, spatial));
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t k = 0; k < hw; ++k) t[i * hw + k] = e[k];
            eps.push_back(std::move(t));
        }
        tiled = Noise::pinned(std::move(eps));
    }
    if (net.size() == 0) return Tensor::identity(n);
    return copy_jacobian_rows(net, copies.reshaped(with_batch(m, net.input_shape())), m, std::move(tiled));
}

std::vector<Tensor> jacobians(const Network& net, const Tensor& zs) {
    const std::size_t n = flat_input(net), m = flat_output(net);
    if (zs.rank() != 2 || zs.dim(1) != n) throw ShapeError("jacobians: inputs " + to_string(zs.shape()) + " are not (B, " + std::to_string(n) + ")");
    const std::size_t count = zs.dim(0);
    std::vector<Tensor> out;
    out.reserve(count);
    if (net.size() == 0) {
        for (std::size_t b = 0; b < count; ++b) out.push_back(Tensor::identity(n));
        return out;
    }
    const std::size_t per_chunk = std::max<std::size_t>(1, kBlock / m);
    for (std::size_t start = 0; start < count; start += per_chunk) {
        const std::size_t end = std::min(count, start + per_chunk);
        Tensor copies({(end - start) * m, n});
        for (std::size_t b = start; b < end; ++b)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) copies((b - start) * m + i, j) = zs(b, j);
        const Tensor rows = copy_jacobian_rows(net, copies.reshaped(with_batch(copies.dim(0), net.input_shape())), m, Noise::deterministic());
        for (std::size_t b = start; b < end; ++b) {
            Tensor j({m, n});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t k = 0; k < n; ++k) j(i, k) = rows((b - start) * m + i, k);
            out.push_back(std::move(j));
        }
    }
    return out;
}

std::size_t estimate_rank(const Tensor& m, double threshold) {
    const std::vector<double> s = svd(m).singular_values;
    if (s.empty() || s.front() == 0.0) return 0;
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double v) { return v > threshold * s.front(); }));
}

bool RankProfile::non_increasing(std::size_t tolerance) const {
    for (std::size_t k = 1; k < entries.size(); ++k)
        if (entries[k].rank > entries[k - 1].rank + tolerance) return false;
    return true;
}

RankProfile layer_rank_profile(const Network& net, const std::vector<Tensor>& zs) {
    if (zs.empty()) throw Error("layer_rank_profile: no samples");
    RankProfile profile;
    for (std::size_t depth = 1; depth <= net.size(); ++depth) {
        const Network prefix = net.prefix(depth - 1);
        std::vector<std::size_t> ranks;
        RankProfileEntry entry{depth, 0, {}};
        for (std::size_t i = 0; i < zs.size(); ++i) {
            const Tensor j = jacobian(prefix, zs[i]);
            ranks.push_back(estimate_rank(j));
            if (i == 0) {
                entry.spectrum = svd(j).singular_values;
                const double top = entry.spectrum.empty() ? 0.0 : entry.spectrum.front();
                if (top > 0.0)
                    for (double& s : entry.spectrum) s /= top;
            }
        }
        std::sort(ranks.begin(), ranks.end());
        entry.rank = ranks[(ranks.size() - 1) / 2];
        profile.entries.push_back(std::move(entry));
    }
    return profile;
}

std::size_t cloud_intrinsic_dim(const Tensor& cloud, double threshold) {
    const std::vector<double> s = pca_strengths(cloud);
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double v) { return v > threshold * s.front(); }));
}

std::size_t feature_intrinsic_dim(const Network& net, std::size_t depth, RandomSource& rs, const IntrinsicDimOptions& options) {
    if (options.samples < 2) throw Error("feature_intrinsic_dim: need at least two samples");
    if (depth > net.size()) throw Error("feature_intrinsic_dim: depth " + std::to_string(depth) + " exceeds " + std::to_string(net.size()) + " layers");
    const std::size_t n = flat_input(net);
    Tensor zs = rs.gaussian({options.samples, n});
    if (!options.center.is_null()) {
        if (options.center.size() != n) throw ShapeError("feature_intrinsic_dim: center " + to_string(options.center.shape()) + " does not match the input");
        for (std::size_t i = 0; i < options.samples; ++i)
            for (std::size_t j = 0; j < n; ++j) zs(i, j) = options.center[j] + options.scale * zs(i, j);
    }
    if (depth == 0) return cloud_intrinsic_dim(zs, options.threshold);
    const Network prefix = net.prefix(depth - 1);
    const std::size_t m = flat_output(prefix);
    Tensor cloud({options.samples, m});
    const RandomSource noise_base = rs.child(rs.next_u64());
    for (std::size_t b = 0; b < blocks(options.samples); ++b) {
        const std::size_t start = b * kBlock, end = std::min(options.samples, start + kBlock);
        Tensor chunk({end - start, n});
        std::copy(zs.data().begin() + static_cast<std::ptrdiff_t>(start * n), zs.data().begin() + static_cast<std::ptrdiff_t>(end * n), chunk.data().begin());
        RandomSource stream = noise_base.child(b);
        const Tensor out = forward_flat(prefix, chunk, options.stochastic ? Noise::stochastic(stream) : Noise::deterministic());
        std::copy(out.data().begin(), out.data().end(), cloud.data().begin() + static_cast<std::ptrdiff_t>(start * m));
    }
    return cloud_intrinsic_dim(cloud, options.threshold);
}

ConditionReport condition_metrics(const BatchMap& f, const InputSampler& sampler, RandomSource& rs, const ConditionOptions& options) {
    const PairedMap paired = [&f](const Tensor& x, const Tensor& y, RandomSource&) { return std::make_pair(f(x), f(y)); };
    return condition_metrics(paired, sampler, rs, options);
}

ConditionReport condition_metrics(const PairedMap& f, const InputSampler& sampler, RandomSource& rs, const ConditionOptions& options) {
    if (options.pairs == 0) throw Error("condition_metrics: no pairs requested");
    const RandomSource base = rs.child(rs.next_u64());
    const double sd = std::sqrt(options.perturbation_variance);
    const std::size_t nblocks = blocks(options.pairs);
    std::vector<std::vector<double>> values(nblocks);
    std::vector<std::size_t> discarded(nblocks, 0);
    parallel_for(nblocks, options.threads, [&](std::size_t b) {
        const std::size_t count = std::min(kBlock, options.pairs - b * kBlock);
        RandomSource stream = base.child(b);
        const Tensor x = sampler(stream, count);
        const Tensor dx = scale(stream.gaussian(x.shape()), sd);
        const auto [fx, fy] = f(x, add(x, dx), stream);
        for (std::size_t i = 0; i < count; ++i) {
            const double nfx = row_norm(fx, i), nx = row_norm(x, i), ndx = row_norm(dx, i);
            if (nfx < 1e-12 || nx == 0.0 || ndx == 0.0) {
                ++discarded[b];
                continue;
            }
            values[b].push_back((row_distance(fx, fy, i) / nfx) / (ndx / nx));
        }
    });
    std::vector<double> all;
    ConditionReport report;
    report.perturbation_variance = options.perturbation_variance;
    for (std::size_t b = 0; b < nblocks; ++b) {
        all.insert(all.end(), values[b].begin(), values[b].end());
        report.discarded_pairs += discarded[b];
    }
    if (all.empty()) throw Error("condition_metrics: all pairs discarded");
    report.pairs = all.size();
    double total = 0.0;
    for (double v : all) total += v;
    report.mc = total / static_cast<double>(all.size());
    const std::size_t k = std::min(options.top_k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), std::greater<>());
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top += all[i];
    report.ttmc = top / static_cast<double>(k);
    return report;
}

double js_histogram(const Tensor& p, const Tensor& q, std::size_t bins) {
    if (p.rank() != 2 || q.rank() != 2 || p.dim(1) != q.dim(1))
        throw ShapeError("js_histogram: samples " + to_string(p.shape()) + " and " + to_string(q.shape()) + " are not (n, d) with equal d");
    const std::size_t d = p.dim(1);
    if (d > 3) throw Error("histogram JS limited to ≤ 3 dims");
    if (bins == 0) throw Error("js_histogram: zero bins");
    std::vector<double> lo(d), width(d);
    for (std::size_t a = 0; a < d; ++a) {
        double mn = p(0, a), mx = p(0, a);
        for (const Tensor* s : {&p, &q})
            for (std::size_t i = 0; i < s->dim(0); ++i) {
                mn = std::min(mn, (*s)(i, a));
                mx = std::max(mx, (*s)(i, a));
            }
        double span = mx - mn;
        if (span == 0.0) span = 1.0;
        lo[a] = mn - 0.05 * span;
        width[a] = 1.1 * span / static_cast<double>(bins);
    }
    std::size_t cells = 1;
    for (std::size_t a = 0; a < d; ++a) cells *= bins;
    auto histogram = [&](const Tensor& s) {
        std::vector<double> h(cells, 0.0);
        for (std::size_t i = 0; i < s.dim(0); ++i) {
            std::size_t index = 0;
            for (std::size_t a = 0; a < d; ++a) {
                const double pos = std::floor((s(i, a) - lo[a]) / width[a]);
                const std::size_t bin = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, pos)));
                index = index * bins + bin;
            }
            h[index] += 1.0;
        }
        for (double& v : h) v /= static_cast<double>(s.dim(0));
        return h;
    };
    const std::vector<double> hp = histogram(p), hq = histogram(q);
    double js = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        const double m = 0.5 * (hp[c] + hq[c]);
        if (hp[c] > 0.0) js += 0.5 * hp[c] * std::log(hp[c] / m);
        if (hq[c] > 0.0) js += 0.5 * hq[c] * std::log(hq[c] / m);
    }
    return std::clamp(js, 0.0, std::numbers::ln2);
}

double frechet_gaussian(const Tensor& p, const Tensor& q) {
    if (p.rank() != 2 || q.rank() != 2 || p.dim(1) != q.dim(1))
        throw ShapeError("frechet_gaussian: samples " + to_string(p.shape()) + " and " + to_string(q.shape()) + " are not (n, d) with equal d");
    const std::size_t d = p.dim(1);
    if (p.dim(0) < d + 1 || q.dim(0) < d + 1) throw Error("frechet_gaussian: need at least dim + 1 samples per set");
    const Tensor m1 = column_mean(p), m2 = column_mean(q);
    const Tensor c1 = covariance(p), c2 = covariance(q);

    auto psd_eigen = [](const Tensor& s) {
        const Tensor sym = scale(add(s, transpose(s)), 0.5);
        SymmetricEigen e = symmetric_eigen(sym);
        const double tol = 1e-9 * (1.0 + std::abs(e.values.front()));
        for (double& v : e.values) {
            if (v < -tol) throw Error("frechet_gaussian: covariance is not positive semidefinite");
            v = std::max(v, 0.0);
        }
        return e;
    };
    const SymmetricEigen e1 = psd_eigen(c1);
    Tensor root1({d, d}, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) root1(i, j) += e1.vectors(i, k) * std::sqrt(e1.values[k]) * e1.vectors(j, k);
    const SymmetricEigen inner = psd_eigen(matmul(matmul(root1, c2), root1));
    double trace_root = 0.0;
    for (double v : inner.values) trace_root += std::sqrt(v);
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += c1(i, i) + c2(i, i);
    const Tensor diff = subtract(m1, m2);
    const double value = norm(diff) * norm(diff) + trace - 2.0 * trace_root;
    return std::max(0.0, value);
}

double path_length(const BatchMap& f, std::size_t latent_dim, RandomSource& rs, const PathLengthOptions& options) {
    if (options.paths == 0) throw Error("path_length: no paths requested");
    const RandomSource base = rs.child(rs.next_u64());
    const std::size_t nblocks = blocks(options.paths);
    std::vector<double> sums(nblocks, 0.0);
    parallel_for(nblocks, options.threads, [&](std::size_t b) {
        const std::size_t count = std::min(kBlock, options.paths - b * kBlock);
        RandomSource stream = base.child(b);
        const Tensor z1 = stream.gaussian({count, latent_dim});
        const Tensor z2 = stream.gaussian({count, latent_dim});
        Tensor a({count, latent_dim}), c({count, latent_dim});
        for (std::size_t i = 0; i < count; ++i) {
            const double t = stream.uniform();
            for (std::size_t j = 0; j < latent_dim; ++j) {
                const double delta = z2(i, j) - z1(i, j);
                a(i, j) = z1(i, j) + t * delta;
                c(i, j) = z1(i, j) + (t + options.step) * delta;
            }
        }
        const Tensor fa = f(a), fc = f(c);
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double dist = row_distance(fa, fc, i);
            s += dist * dist / (options.step * options.step);
        }
        sums[b] = s;
    });
    double total = 0.0;
    for (double s : sums) total += s;
    return total / static_cast<double>(options.paths);
}

double path_length(const Network& gen, RandomSource& rs, const PathLengthOptions& options) {
    return path_length(network_map(gen), flat_input(gen), rs, options);
}

LipschitzReport lipschitz_slack_probe(const StochasticMap& g, const InputSampler& sampler, RandomSource& rs, const LipschitzOptions& options) {
    if (options.pairs < 2 || options.draws == 0) throw Error("lipschitz_slack_probe: need at least two pairs and one draw");
    const RandomSource base = rs.child(rs.next_u64());
    std::vector<double> sep(options.pairs), expect(options.pairs);
    parallel_for(options.pairs, options.threads, [&](std::size_t i) {
        RandomSource stream = base.child(i);
        const Tensor x = sampler(stream, 1);
        const std::size_t n = x.dim(1);
        Tensor u = stream.gaussian({n});
        u = scale(u, 1.0 / norm(u));
        const double s = options.max_separation * static_cast<double>(i) / static_cast<double>(options.pairs - 1);
        Tensor xs({options.draws, n}), ys({options.draws, n});
        for (std::size_t k = 0; k < options.draws; ++k)
            for (std::size_t j = 0; j < n; ++j) {
                xs(k, j) = x(0, j);
                ys(k, j) = x(0, j) + s * u[j];
            }
        const Tensor gx = g(xs, stream);
        const Tensor gy = g(ys, stream);
        double e = 0.0;
        for (std::size_t k = 0; k < options.draws; ++k) e += row_distance(gx, gy, k);
        sep[i] = s;
        expect[i] = e / static_cast<double>(options.draws);
    });
    double ms = 0.0, me = 0.0;
    for (std::size_t i = 0; i < options.pairs; ++i) {
        ms += sep[i];
        me += expect[i];
    }
    ms /= static_cast<double>(options.pairs);
    me /= static_cast<double>(options.pairs);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < options.pairs; ++i) {
        sxy += (sep[i] - ms) * (expect[i] - me);
        sxx += (sep[i] - ms) * (sep[i] - ms);
    }
    LipschitzReport report;
    report.lipschitz = sxx > 0.0 ? sxy / sxx : 0.0;
    report.intercept = me - report.lipschitz * ms;
    for (std::size_t i = 0; i < options.pairs; ++i) report.slack = std::max(report.slack, expect[i] - report.lipschitz * sep[i]);
    report.sigma_inf = options.sigma_inf;
    return report;
}

double spectral_norm_estimate(const Tensor& j, RandomSource& rs, int iterations) {
    const std::size_t n = j.dim(1);
    Tensor v = rs.gaussian({n, 1});
    v = scale(v, 1.0 / std::max(norm(v), 1e-300));
    for (int k = 0; k < iterations; ++k) {
        const Tensor w = transposed_matmul(j, matmul(j, v));
        const double l = norm(w);
        if (l == 0.0) return 0.0;
        v = scale(w, 1.0 / l);
    }
    return norm(matmul(j, v));
}

double gradient_proxy(const Network& gen, const Tensor& probes, RandomSource& rs) {
    double best = 0.0;
    for (const Tensor& j : jacobians(gen, probes)) best = std::max(best, spectral_norm_estimate(j, rs));
    return best;
}

nlohmann::json rank_profile_to_json(const RankProfile& p) {
    nlohmann::json out = nlohmann::json::array();
    for (const RankProfileEntry& e : p.entries) out.push_back({{"depth", e.depth}, {"rank", e.rank}, {"spectrum", e.spectrum}});
    return out;
}

nlohmann::json condition_to_json(const ConditionReport& r) {
    return {{"mc", r.mc}, {"ttmc", r.ttmc}, {"discarded_pairs", r.discarded_pairs}};
}

}  // namespace noisegeo
