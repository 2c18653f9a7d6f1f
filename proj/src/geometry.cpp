#include "noisegeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace noisegeo {

namespace {

constexpr double kMembershipTol = 1e-10;
constexpr double kTangentTol = 1e-8;

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double length(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

// Sphere of radius R in R^n (n = 2 or 3), written into out.
void sphere_exp(const double* mu, const double* v, double R, std::size_t n, double* out) {
    const double len = length(v, n);
    if (len == 0.0) {
        std::copy(mu, mu + n, out);
        return;
    }
    const double theta = len / R;
    const double c = std::cos(theta), s = std::sin(theta) * R / len;
    for (std::size_t i = 0; i < n; ++i) out[i] = c * mu[i] + s * v[i];
    const double fix = R / length(out, n);
    for (std::size_t i = 0; i < n; ++i) out[i] *= fix;
}

void sphere_log(const double* mu, const double* x, double R, std::size_t n, double* out) {
    const double proj = dot(mu, x, n) / (R * R);
    double w[3];
    for (std::size_t i = 0; i < n; ++i) w[i] = x[i] - proj * mu[i];
    const double wl = length(w, n);
    if (wl == 0.0) {
        std::fill(out, out + n, 0.0);
        return;
    }
    const double theta = std::atan2(wl / R, proj);
    for (std::size_t i = 0; i < n; ++i) out[i] = theta * R * w[i] / wl;
}

double sphere_distance(const double* a, const double* b, double R, std::size_t n) {
    const double proj = dot(a, b, n) / (R * R);
    double w[3];
    for (std::size_t i = 0; i < n; ++i) w[i] = b[i] - proj * a[i];
    return R * std::atan2(length(w, n) / R, proj);
}

bool on_sphere(const double* x, double R, std::size_t n) {
    return std::abs(length(x, n) - R) <= kMembershipTol * std::max(1.0, R);
}

bool tangent_at(const double* mu, const double* v, double R, std::size_t n) {
    return std::abs(dot(mu, v, n)) / R <= kTangentTol * (1.0 + length(v, n));
}

double fractional(double x) { return x - std::floor(x); }

}  // namespace

AnalyticManifold::AnalyticManifold(Kind kind, std::vector<double> radii) : kind_(kind), radii_(std::move(radii)) {
    for (double r : radii_)
        if (!(r > 0.0) || !std::isfinite(r)) throw Error("manifold radius must be positive, got " + std::to_string(r));
}

AnalyticManifold AnalyticManifold::circle(double radius) { return {Kind::circle, {radius}}; }
AnalyticManifold AnalyticManifold::sphere(double radius) { return {Kind::sphere, {radius}}; }
AnalyticManifold AnalyticManifold::torus(double r1, double r2) { return {Kind::torus, {r1, r2}}; }

AnalyticManifold AnalyticManifold::parse(std::string_view name, const std::vector<double>& radii) {
    if (name == "circle" && radii.size() <= 1) return circle(radii.empty() ? 1.0 : radii[0]);
    if (name == "sphere" && radii.size() <= 1) return sphere(radii.empty() ? 1.0 : radii[0]);
    if (name == "torus" && radii.size() <= 2) {
        if (radii.empty()) return torus();
        return torus(radii[0], radii.size() == 2 ? radii[1] : radii[0]);
    }
    throw Error("unknown manifold '" + std::string(name) + "' with " + std::to_string(radii.size()) + " radii");
}

std::string_view AnalyticManifold::name() const {
    switch (kind_) {
        case Kind::circle: return "circle";
        case Kind::sphere: return "sphere";
        case Kind::torus: return "torus";
    }
    return "?";
}

std::size_t AnalyticManifold::ambient_dim() const {
    switch (kind_) {
        case Kind::circle: return 2;
        case Kind::sphere: return 3;
        case Kind::torus: return 4;
    }
    return 0;
}

std::size_t AnalyticManifold::intrinsic_dim() const { return kind_ == Kind::circle ? 1 : 2; }

double AnalyticManifold::diameter() const {
    if (kind_ == Kind::torus) return std::numbers::pi * std::hypot(radii_[0], radii_[1]);
    return std::numbers::pi * radii_[0];
}

bool AnalyticManifold::contains(const Tensor& x) const {
    if (x.is_null() || x.shape() != Shape{ambient_dim()} || !x.all_finite()) return false;
    const double* p = x.data().data();
    if (kind_ == Kind::torus) return on_sphere(p, radii_[0], 2) && on_sphere(p + 2, radii_[1], 2);
    return on_sphere(p, radii_[0], ambient_dim());
}

void AnalyticManifold::require_point(const Tensor& x, std::string_view op) const {
    if (!contains(x))
        throw Error(std::string(op) + ": point " + (x.is_null() ? std::string("(null)") : to_string(x.shape())) +
                    " is not on the " + std::string(name()));
}

Tensor AnalyticManifold::exp_map(const Tensor& mu, const Tensor& v) const {
    require_point(mu, "exp_map");
    const std::size_t n = ambient_dim();
    if (v.shape() != Shape{n}) throw ShapeError("exp_map: tangent vector " + to_string(v.shape()) + " is not " + to_string(Shape{n}));
    const double* m = mu.data().data();
    const double* t = v.data().data();
    Tensor out({n});
    double* o = out.data().data();
    if (kind_ == Kind::torus) {
        if (!tangent_at(m, t, radii_[0], 2) || !tangent_at(m + 2, t + 2, radii_[1], 2))
            throw Error("exp_map: vector is not tangent at mu");
        sphere_exp(m, t, radii_[0], 2, o);
        sphere_exp(m + 2, t + 2, radii_[1], 2, o + 2);
    } else {
        if (!tangent_at(m, t, radii_[0], n)) throw Error("exp_map: vector is not tangent at mu");
        sphere_exp(m, t, radii_[0], n, o);
    }
    return out;
}

Tensor AnalyticManifold::log_map(const Tensor& mu, const Tensor& x) const {
    require_point(mu, "log_map");
    require_point(x, "log_map");
    const std::size_t n = ambient_dim();
    Tensor out({n});
    const double* m = mu.data().data();
    const double* p = x.data().data();
    double* o = out.data().data();
    if (kind_ == Kind::torus) {
        sphere_log(m, p, radii_[0], 2, o);
        sphere_log(m + 2, p + 2, radii_[1], 2, o + 2);
    } else {
        sphere_log(m, p, radii_[0], n, o);
    }
    return out;
}

Tensor AnalyticManifold::tangent_frame(const Tensor& mu) const {
    require_point(mu, "tangent_frame");
    const double* m = mu.data().data();
    switch (kind_) {
        case Kind::circle: {
            const double R = radii_[0];
            return Tensor::matrix(2, 1, {-m[1] / R, m[0] / R});
        }
        case Kind::torus: {
            const double R1 = radii_[0], R2 = radii_[1];
            return Tensor::matrix(4, 2, {-m[1] / R1, 0.0, m[0] / R1, 0.0, 0.0, -m[3] / R2, 0.0, m[2] / R2});
        }
        case Kind::sphere: break;
    }
    const double R = radii_[0];
    const double n[3] = {m[0] / R, m[1] / R, m[2] / R};
    std::size_t axis = 0;
    for (std::size_t k = 1; k < 3; ++k)
        if (std::abs(n[k]) < std::abs(n[axis])) axis = k;
    double t1[3] = {0.0, 0.0, 0.0};
    t1[axis] = 1.0;
    const double c = n[axis];
    for (std::size_t k = 0; k < 3; ++k) t1[k] -= c * n[k];
    const double l = length(t1, 3);
    for (double& e : t1) e /= l;
    const double t2[3] = {n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2], n[0] * t1[1] - n[1] * t1[0]};
    return Tensor::matrix(3, 2, {t1[0], t2[0], t1[1], t2[1], t1[2], t2[2]});
}

double AnalyticManifold::distance(const Tensor& a, const Tensor& b) const {
    require_point(a, "distance");
    require_point(b, "distance");
    const double* p = a.data().data();
    const double* q = b.data().data();
    if (kind_ == Kind::torus) return std::hypot(sphere_distance(p, q, radii_[0], 2), sphere_distance(p + 2, q + 2, radii_[1], 2));
    return sphere_distance(p, q, radii_[0], ambient_dim());
}

Tensor AnalyticManifold::sample(RandomSource& rs) const {
    const double two_pi = 2.0 * std::numbers::pi;
    switch (kind_) {
        case Kind::circle: {
            const double t = two_pi * rs.uniform();
            return Tensor::vector({radii_[0] * std::cos(t), radii_[0] * std::sin(t)});
        }
        case Kind::torus: {
            const double a = two_pi * rs.uniform(), b = two_pi * rs.uniform();
            return Tensor::vector({radii_[0] * std::cos(a), radii_[0] * std::sin(a), radii_[1] * std::cos(b), radii_[1] * std::sin(b)});
        }
        case Kind::sphere: break;
    }
    Tensor g = rs.gaussian({3});
    double l = norm(g);
    while (l < 1e-12) {
        g = rs.gaussian({3});
        l = norm(g);
    }
    return scale(g, radii_[0] / l);
}

std::vector<Tensor> AnalyticManifold::dense_sample(std::size_t n) const {
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double fi = static_cast<double>(i);
        switch (kind_) {
            case Kind::circle: {
                const double t = two_pi * fi / static_cast<double>(n);
                out.push_back(Tensor::vector({radii_[0] * std::cos(t), radii_[0] * std::sin(t)}));
                break;
            }
            case Kind::sphere: {
                // Fibonacci lattice.
                const double z = 1.0 - (2.0 * fi + 1.0) / static_cast<double>(n);
                const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
                const double phi = fi * std::numbers::pi * (3.0 - std::sqrt(5.0));
                out.push_back(Tensor::vector({radii_[0] * rho * std::cos(phi), radii_[0] * rho * std::sin(phi), radii_[0] * z}));
                break;
            }
            case Kind::torus: {
                // R2 sequence, steps 1/g and 1/g^2 for the plastic constant g.
                constexpr double g = 1.32471795724474602596;
                const double a = two_pi * fractional(0.5 + fi / g);
                const double b = two_pi * fractional(0.5 + fi / (g * g));
                out.push_back(Tensor::vector({radii_[0] * std::cos(a), radii_[0] * std::sin(a), radii_[1] * std::cos(b), radii_[1] * std::sin(b)}));
                break;
            }
        }
    }
    return out;
}

Tensor first_order_approx(const Tensor& mu, const Tensor& frame, const Tensor& v) {
    if (frame.rank() != 2 || frame.dim(0) != mu.size() || v.size() != frame.dim(1))
        throw ShapeError("first_order_approx: frame " + to_string(frame.shape()) + " does not fit mu " + to_string(mu.shape()) +
                         " and v " + to_string(v.shape()));
    Tensor out = mu;
    for (std::size_t i = 0; i < frame.dim(0); ++i)
        for (std::size_t j = 0; j < frame.dim(1); ++j) out[i] += frame(i, j) * v[j];
    return out;
}

std::vector<ErrorProfileRow> approx_error_profile(const AnalyticManifold& m, const Tensor& mu, const std::vector<double>& radii) {
    constexpr std::size_t kDirections = 64, kMagnitudes = 16;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0)) throw Error("approx_error_profile: radii must be positive");
        if (i > 0 && !(radii[i] < radii[i - 1])) throw Error("approx_error_profile: radii must be descending");
    }
    const Tensor frame = m.tangent_frame(mu);
    const std::size_t d = frame.dim(1);
    std::vector<ErrorProfileRow> rows;
    for (double r : radii) {
        double worst = 0.0;
        for (std::size_t k = 0; k < kDirections; ++k) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / kDirections;
            Tensor dir({d});
            if (d == 1) {
                dir[0] = k % 2 == 0 ? 1.0 : -1.0;
            } else {
                dir[0] = std::cos(angle);
                dir[1] = std::sin(angle);
            }
            for (std::size_t j = 1; j <= kMagnitudes; ++j) {
                const Tensor c = scale(dir, r * static_cast<double>(j) / kMagnitudes);
                const Tensor linear = first_order_approx(mu, frame, c);
                const Tensor exact = m.exp_map(mu, subtract(linear, mu));
                worst = std::max(worst, norm(subtract(exact, linear)));
            }
        }
        rows.push_back({r, worst});
    }
    return rows;
}

SkeletonSet build_skeleton(const AnalyticManifold& m, double r, RandomSource& rs, std::size_t build_samples) {
    if (!(r > 0.0)) throw Error("build_skeleton: radius must be positive");
    if (build_samples == 0) throw Error("build_skeleton: empty build sample");
    const std::vector<Tensor> points = m.dense_sample(build_samples);
    SkeletonSet out{m, r, {}};
    auto add_center = [&](const Tensor& mu) { out.pairs.push_back({mu, m.tangent_frame(mu), r}); };

    std::size_t next = rs.below(points.size());
    if (r >= m.diameter()) {
        add_center(points[next]);
        return out;
    }
    std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
    while (true) {
        add_center(points[next]);
        const Tensor& c = points[next];
        for (std::size_t i = 0; i < points.size(); ++i) nearest[i] = std::min(nearest[i], m.distance(c, points[i]));
        next = static_cast<std::size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
        if (nearest[next] <= r) break;
    }
    return out;
}

CoverageReport coverage_check(const SkeletonSet& s, const std::vector<Tensor>& points) {
    CoverageReport report;
    report.samples = points.size();
    if (s.pairs.empty()) {
        report.worst_reconstruction_error = std::numeric_limits<double>::infinity();
        return report;
    }
    for (const Tensor& x : points) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < s.pairs.size(); ++k) {
            const double d = s.manifold.distance(s.pairs[k].mu, x);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        if (best_d <= s.radius) ++report.covered;
        const RepresentativePair& p = s.pairs[best];
        const Tensor v = s.manifold.log_map(p.mu, x);
        Tensor coords({p.frame.dim(1)}, 0.0);
        for (std::size_t j = 0; j < p.frame.dim(1); ++j)
            for (std::size_t i = 0; i < p.frame.dim(0); ++i) coords[j] += p.frame(i, j) * v[i];
        report.worst_reconstruction_error =
            std::max(report.worst_reconstruction_error, norm(subtract(x, first_order_approx(p.mu, p.frame, coords))));
    }
    report.fraction = report.samples == 0 ? 0.0 : static_cast<double>(report.covered) / static_cast<double>(report.samples);
    return report;
}

CoverageReport coverage_check(const SkeletonSet& s, std::size_t n, RandomSource& rs) {
    std::vector<Tensor> points;
    points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) points.push_back(s.manifold.sample(rs));
    return coverage_check(s, points);
}

nlohmann::json skeleton_to_json(const SkeletonSet& s) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const RepresentativePair& p : s.pairs) {
        nlohmann::json frame = nlohmann::json::array();
        for (std::size_t i = 0; i < p.frame.dim(0); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < p.frame.dim(1); ++j) row.push_back(p.frame(i, j));
            frame.push_back(row);
        }
        pairs.push_back({{"mu", p.mu.values()}, {"T", frame}, {"r", p.r}});
    }
    const nlohmann::json manifold{{"kind", s.manifold.name()}, {"radii", s.manifold.radii()}};
    return {{"manifold", manifold}, {"radius", s.radius}, {"pairs", pairs}};
}

SkeletonSet skeleton_from_json(const nlohmann::json& doc) {
    try {
        const nlohmann::json& md = doc.at("manifold");
        const AnalyticManifold m = AnalyticManifold::parse(md.at("kind").get<std::string>(), md.at("radii").get<std::vector<double>>());
        SkeletonSet s{m, doc.at("radius").get<double>(), {}};
        for (const nlohmann::json& p : doc.at("pairs")) {
            const auto rows = p.at("T").get<std::vector<std::vector<double>>>();
            if (rows.empty() || rows[0].empty()) throw Error("empty tangent frame");
            Tensor frame({rows.size(), rows[0].size()});
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows[0].size()) throw Error("ragged tangent frame");
                for (std::size_t j = 0; j < rows[i].size(); ++j) frame(i, j) = rows[i][j];
            }
            RepresentativePair pair{Tensor::vector(p.at("mu").get<std::vector<double>>()), frame, p.at("r").get<double>()};
            pair.validate();
            m.require_point(pair.mu, "skeleton json");
            s.pairs.push_back(std::move(pair));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("skeleton json: ") + e.what());
    }
}

}  // namespace noisegeo
