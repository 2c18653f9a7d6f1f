#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "noisegeo/layers.hpp"
#include "noisegeo/random.hpp"
#include "noisegeo/tensor.hpp"

namespace noisegeo {

/// Batched mapping: (B, n) -> (B, m).
using BatchMap = std::function<Tensor(const Tensor&)>;
/// Draws `count` inputs as a (count, n) matrix.
using InputSampler = std::function<Tensor(RandomSource&, std::size_t count)>;

/// Deterministic forward pass of `net` on flattened inputs and outputs.
BatchMap network_map(const Network& net);
/// Standard normal inputs of the network's flattened input size.
InputSampler gaussian_sampler(std::size_t dim);

/// Jacobian of the flattened output with respect to the flattened input, one
/// row per output component. Noise must be deterministic or pinned (one
/// (1,h,w) map per injection layer); stochastic noise is rejected.
Tensor jacobian(const Network& net, const Tensor& z, Noise noise = Noise::deterministic());
/// Jacobians at every row of zs (B, n) in deterministic mode.
std::vector<Tensor> jacobians(const Network& net, const Tensor& zs);

/// Singular values above threshold * s_max. The zero matrix has rank 0.
std::size_t estimate_rank(const Tensor& m, double threshold = 0.01);

struct RankProfileEntry {
    std::size_t depth;  // layers applied
    std::size_t rank;   // median over samples
    std::vector<double> spectrum;  // singular values at the first sample, divided by the largest
};

struct RankProfile {
    std::vector<RankProfileEntry> entries;

    /// Each rank at most `tolerance` above the previous one.
    [[nodiscard]] bool non_increasing(std::size_t tolerance = 0) const;
};

/// Entry for every depth 1..net.size().
RankProfile layer_rank_profile(const Network& net, const std::vector<Tensor>& zs);

struct IntrinsicDimOptions {
    std::size_t samples = 51200;
    double threshold = 0.01;
    /// When set, inputs are center + scale * N(0, I) instead of N(0, I).
    Tensor center;
    double scale = 1.0;
    /// Fresh injected noise per sample instead of eps = 0.
    bool stochastic = false;
};

/// Count of activation PCA strengths above threshold * max at `depth` layers
/// in (depth 0 is the input).
std::size_t feature_intrinsic_dim(const Network& net, std::size_t depth, RandomSource& rs,
                                  const IntrinsicDimOptions& options = {});
/// Same count for an explicit point cloud (n, m).
std::size_t cloud_intrinsic_dim(const Tensor& cloud, double threshold = 0.01);

struct ConditionOptions {
    std::size_t pairs = 50000;
    double perturbation_variance = 1e-4;
    std::size_t top_k = 1000;
    unsigned threads = 1;
};

struct ConditionReport {
    double mc = 0.0;
    double ttmc = 0.0;
    std::size_t pairs = 0;
    std::size_t discarded_pairs = 0;
    double perturbation_variance = 0.0;
};

/// Evaluates f at x and at the perturbed y with any internal randomness
/// shared between the two: (x, y, stream) -> (f(x), f(y)).
using PairedMap = std::function<std::pair<Tensor, Tensor>(const Tensor&, const Tensor&, RandomSource&)>;

/// Per pair c = (|f(x) - f(x + dx)| / |f(x)|) / (|dx| / |x|). Pairs with
/// |f(x)| < 1e-12 or x = 0 are discarded and counted.
ConditionReport condition_metrics(const BatchMap& f, const InputSampler& sampler, RandomSource& rs,
                                  const ConditionOptions& options = {});
ConditionReport condition_metrics(const PairedMap& f, const InputSampler& sampler, RandomSource& rs,
                                  const ConditionOptions& options = {});

/// Histogram Jensen-Shannon divergence (natural log) of two (n, d) sample
/// sets, d <= 3, over the joint bounding box expanded by 5%.
double js_histogram(const Tensor& p, const Tensor& q, std::size_t bins = 64);

/// |m1 - m2|^2 + tr(C1 + C2 - 2 (C1 C2)^(1/2)) of the fitted Gaussians.
double frechet_gaussian(const Tensor& p, const Tensor& q);

struct PathLengthOptions {
    std::size_t paths = 100000;
    double step = 1e-4;
    unsigned threads = 1;
};

/// Mean |f(lerp(z1,z2,t+e)) - f(lerp(z1,z2,t))|^2 / e^2 with z1, z2 standard
/// normal in latent_dim dimensions and t uniform in [0,1).
double path_length(const BatchMap& f, std::size_t latent_dim, RandomSource& rs, const PathLengthOptions& options = {});
double path_length(const Network& gen, RandomSource& rs, const PathLengthOptions& options = {});

/// Mapping that draws its own noise: (B, n) -> (B, m).
using StochasticMap = std::function<Tensor(const Tensor&, RandomSource&)>;

struct LipschitzOptions {
    std::size_t pairs = 256;
    std::size_t draws = 64;  // noise draws per pair
    double max_separation = 1.0;
    double sigma_inf = 0.0;  // echoed into the report
    unsigned threads = 1;
};

struct LipschitzReport {
    double lipschitz = 0.0;  // least-squares slope of E|g(x) - g(y)| on |x - y|
    double intercept = 0.0;
    double slack = 0.0;      // max over pairs of E|g(x) - g(y)| - lipschitz |x - y|, floored at 0
    double sigma_inf = 0.0;
};

/// Pairs are x ~ sampler and y = x + s u with u a random unit vector and s
/// evenly spaced in [0, max_separation]. Each pair uses its own noise stream.
LipschitzReport lipschitz_slack_probe(const StochasticMap& g, const InputSampler& sampler, RandomSource& rs,
                                      const LipschitzOptions& options = {});

/// Largest singular value estimate of J from 8 power iterations on J^T J.
double spectral_norm_estimate(const Tensor& j, RandomSource& rs, int iterations = 8);
/// Max spectral_norm_estimate of the generator Jacobian over the rows of probes.
double gradient_proxy(const Network& gen, const Tensor& probes, RandomSource& rs);

nlohmann::json rank_profile_to_json(const RankProfile& p);
nlohmann::json condition_to_json(const ConditionReport& r);

}  // namespace noisegeo
