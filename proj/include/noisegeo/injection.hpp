#pragma once

#include <array>
#include <functional>
#include <span>
#include <string_view>

#include "noisegeo/random.hpp"
#include "noisegeo/tape.hpp"
#include "noisegeo/tensor.hpp"

namespace noisegeo {

// Feature maps are (..., c, h, w); spatial maps such as the noise, the
// semantic coefficients and sigma are (..., h, w). Leading axes are batch
// axes and every map is processed independently.

enum class RniVariant { full, no_normalization, no_stabilization, no_decomposition, cnn_sigma };

inline constexpr std::array<RniVariant, 5> kAllRniVariants{RniVariant::full, RniVariant::no_normalization,
                                                           RniVariant::no_stabilization, RniVariant::no_decomposition,
                                                           RniVariant::cnn_sigma};

std::string_view variant_name(RniVariant v);
/// Inverse of variant_name; throws on unknown names.
RniVariant parse_variant(std::string_view name);

/// Additive noise with a learnable scalar strength: o = mu + a * eps.
struct EniParams {
    double a = 0.0;
};

struct RniParams {
    Tensor A;                       // (h,w)
    Tensor b;                       // (h,w)
    double r = 1.0;
    double alpha = 0.0;             // in [0,1]
    RniVariant variant = RniVariant::full;
    Tensor conv_weight;             // (1,c,3,3), cnn-sigma only
    Tensor conv_bias;               // (1), cnn-sigma only

    /// A = 1, b = 0, alpha = 0, r = sqrt(h*w); cnn-sigma weights drawn from rs.
    static RniParams initial(std::size_t channels, std::size_t height, std::size_t width, RniVariant variant,
                             RandomSource* rs = nullptr);
};

Tensor eni_forward(const Tensor& mu, const EniParams& p, const Tensor& eps);

/// (..., c, h, w) -> (..., h, w).
Tensor channel_sum(const Tensor& mu);
/// Per map: (x - mean) / max|x - mean|. A constant map yields all zeros.
Tensor semantic_normalize(const Tensor& summed);
/// Elementwise A * s + b with A, b shaped (h,w).
Tensor affine_decompose(const Tensor& s, const Tensor& A, const Tensor& b);
/// Per map: s' = alpha * s_d + (1 - alpha), sigma = s' / ||s'||_F.
Tensor stabilize_normalize(const Tensor& sd, double alpha);
/// Per map division by the Frobenius norm.
Tensor frobenius_normalize(const Tensor& m);
/// o = r * sigma * mu + r * sigma * eps, sigma and eps broadcast across channels.
Tensor rni_combine(const Tensor& mu, const Tensor& sigma, const Tensor& eps, double r);

/// sigma for a feature map, honouring the variant.
Tensor rni_sigma(const Tensor& mu, const RniParams& p);
Tensor rni_forward(const Tensor& mu, const RniParams& p, const Tensor& eps);

/// Center, orthonormal tangent frame (ambient x d) and radius.
struct RepresentativePair {
    Tensor mu;
    Tensor frame;
    double r = 0.0;

    /// Throws unless T^T T = I within 1e-8, r > 0 and shapes agree.
    void validate() const;
};

/// mu + r * T * eps for a given tangent-space eps.
Tensor sample_from_pair(const RepresentativePair& p, const Tensor& eps);
/// As above with eps standard normal drawn from rs.
Tensor sample_from_pair(const RepresentativePair& p, RandomSource& rs);

using Metric = std::function<double(const Tensor&, const Tensor&)>;
using Similarity = std::function<double(const Tensor&, const Tensor&)>;

double euclidean_distance(const Tensor& x, const Tensor& y);

/// exp(-d(x, y)). Throws if d returns a negative value.
double fuzzy_similarity(const Metric& d, const Tensor& x, const Tensor& y);

struct TEquivalenceReport {
    std::size_t points = 0;
    std::size_t triples_checked = 0;
    std::size_t reflexivity_violations = 0;
    std::size_t symmetry_violations = 0;
    std::size_t transitivity_violations = 0;
    /// max over triples of E(x,y) E(y,z) - E(x,z).
    double worst_transitivity_gap = 0.0;

    [[nodiscard]] bool holds() const {
        return reflexivity_violations == 0 && symmetry_violations == 0 && transitivity_violations == 0;
    }
};

/// Checks reflexivity, symmetry and product t-norm transitivity
/// E(x,y) * E(y,z) <= E(x,z) over every ordered triple of `points`.
TEquivalenceReport verify_t_equivalence(const Similarity& similarity, std::span<const Tensor> points,
                                        double tolerance = 1e-12);

namespace ad {

Var channel_sum(Var mu);
Var semantic_normalize(Var summed);
Var affine_decompose(Var s, Var A, Var b);
Var stabilize_normalize(Var sd, Var alpha);
Var frobenius_normalize(Var m);
Var rni_combine(Var mu, Var sigma, Var eps, Var r);
Var eni_combine(Var mu, Var eps, Var a);

}  // namespace ad

}  // namespace noisegeo
