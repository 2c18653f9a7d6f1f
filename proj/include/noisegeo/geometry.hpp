#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "noisegeo/injection.hpp"
#include "noisegeo/random.hpp"
#include "noisegeo/tensor.hpp"

namespace noisegeo {

/// Closed-form manifolds embedded in Euclidean space.
///
///   circle   |x| = R in R^2, d = 1
///   sphere   |x| = R in R^3, d = 2
///   torus    (x1,x2) on a circle of radius R1 and (x3,x4) on one of radius R2,
///            a flat torus in R^4, d = 2
///
/// Tangent vectors are ambient vectors. Points are rank-1 tensors.
class AnalyticManifold {
public:
    enum class Kind { circle, sphere, torus };

    static AnalyticManifold circle(double radius = 1.0);
    static AnalyticManifold sphere(double radius = 1.0);
    static AnalyticManifold torus(double r1 = 1.0, double r2 = 1.0);
    /// "circle", "sphere" or "torus"; the torus takes one or two radii.
    static AnalyticManifold parse(std::string_view name, const std::vector<double>& radii);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] std::string_view name() const;
    [[nodiscard]] const std::vector<double>& radii() const noexcept { return radii_; }
    [[nodiscard]] std::size_t ambient_dim() const;
    [[nodiscard]] std::size_t intrinsic_dim() const;
    [[nodiscard]] double diameter() const;

    /// Defining equations hold to 1e-10 (scaled by the radius).
    [[nodiscard]] bool contains(const Tensor& x) const;
    /// Throws unless contains(x).
    void require_point(const Tensor& x, std::string_view op) const;

    [[nodiscard]] Tensor exp_map(const Tensor& mu, const Tensor& v) const;
    /// Inverse of exp_map within the injectivity radius.
    [[nodiscard]] Tensor log_map(const Tensor& mu, const Tensor& x) const;
    /// ambient x d, orthonormal columns.
    [[nodiscard]] Tensor tangent_frame(const Tensor& mu) const;
    [[nodiscard]] double distance(const Tensor& a, const Tensor& b) const;

    /// Uniform (area measure) sample.
    [[nodiscard]] Tensor sample(RandomSource& rs) const;
    /// Deterministic low-discrepancy sample of n points.
    [[nodiscard]] std::vector<Tensor> dense_sample(std::size_t n) const;

private:
    AnalyticManifold(Kind kind, std::vector<double> radii);
    Kind kind_;
    std::vector<double> radii_;
};

/// mu + T v.
Tensor first_order_approx(const Tensor& mu, const Tensor& frame, const Tensor& v);

struct ErrorProfileRow {
    double radius;
    double error;
};

/// Sup over a 64-direction x 16-magnitude grid of |exp(mu, T c) - (mu + T c)|
/// with |c| <= r. Radii must be positive and descending.
std::vector<ErrorProfileRow> approx_error_profile(const AnalyticManifold& m, const Tensor& mu, const std::vector<double>& radii);

struct SkeletonSet {
    AnalyticManifold manifold;
    double radius = 0.0;
    std::vector<RepresentativePair> pairs;
};

inline constexpr std::size_t kSkeletonBuildSamples = 10000;

/// Greedy farthest-point covering of the dense sample; the first center is
/// picked by rs. Radii at or above the diameter give a single pair.
SkeletonSet build_skeleton(const AnalyticManifold& m, double r, RandomSource& rs,
                           std::size_t build_samples = kSkeletonBuildSamples);

struct CoverageReport {
    std::size_t samples = 0;
    std::size_t covered = 0;
    double fraction = 0.0;
    /// Worst |x - (mu + T T^T log_mu(x))| against the nearest center.
    double worst_reconstruction_error = 0.0;
};

CoverageReport coverage_check(const SkeletonSet& s, const std::vector<Tensor>& points);
CoverageReport coverage_check(const SkeletonSet& s, std::size_t n, RandomSource& rs);

nlohmann::json skeleton_to_json(const SkeletonSet& s);
SkeletonSet skeleton_from_json(const nlohmann::json& doc);

}  // namespace noisegeo
