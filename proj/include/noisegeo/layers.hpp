#pragma once

#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "noisegeo/injection.hpp"
#include "noisegeo/random.hpp"
#include "noisegeo/tape.hpp"
#include "noisegeo/tensor.hpp"

namespace noisegeo {

struct Dense {
    Tensor weight;  // (out, in)
    Tensor bias;    // (out)
};

struct LeakyRelu {};

struct Reshape {
    Shape target;
};

/// 3x3 kernels, stride 1, zero padding 1.
struct Conv2D {
    Tensor weight;  // (out, in, 3, 3)
    Tensor bias;    // (out)
};

struct Upsample2x {};

enum class InjectionMode { none, eni, rni };

std::string_view mode_name(InjectionMode m);
InjectionMode parse_mode(std::string_view name);

/// Noise injection attached to a (c,h,w) feature map. Flat inputs of length c
/// are treated as (c,1,1).
struct Inject {
    InjectionMode mode = InjectionMode::eni;
    RniVariant variant = RniVariant::full;
    Shape feature;  // (c,h,w)

    Tensor a;            // eni strength, (1)
    Tensor A;            // (h,w)
    Tensor b;            // (h,w)
    Tensor r;            // (1)
    Tensor alpha_logit;  // (1); alpha = sigmoid(alpha_logit)
    Tensor conv_weight;  // (1,c,3,3), cnn-sigma
    Tensor conv_bias;    // (1), cnn-sigma

    static Inject eni(Shape feature, double strength = 1.0);
    static Inject rni(Shape feature, RniVariant variant, RandomSource& rs);

    [[nodiscard]] EniParams eni_params() const;
    [[nodiscard]] RniParams rni_params() const;
};

using LayerSpec = std::variant<Dense, LeakyRelu, Reshape, Conv2D, Upsample2x, Inject>;

std::string_view layer_kind(const LayerSpec& layer);

/// Dense layer with N(0, 1/in) weights and zero bias.
Dense make_dense(std::size_t in, std::size_t out, RandomSource& rs);
/// Conv2D with N(0, 1/(9 in)) weights and zero bias.
Conv2D make_conv(std::size_t in_channels, std::size_t out_channels, RandomSource& rs);

struct ParamRef {
    std::size_t layer;
    std::string name;
    Tensor* tensor;
};

struct ConstParamRef {
    std::size_t layer;
    std::string name;
    const Tensor* tensor;
};

/// Ordered layer stack. Construction infers every intermediate shape and
/// rejects stacks whose consecutive layers do not conform.
class Network {
public:
    Network() = default;
    Network(Shape input_shape, std::vector<LayerSpec> layers);

    [[nodiscard]] const Shape& input_shape() const noexcept { return input_shape_; }
    /// Output shape of layer k (unbatched).
    [[nodiscard]] const Shape& output_shape(std::size_t k) const { return shapes_.at(k); }
    [[nodiscard]] const Shape& output_shape() const { return shapes_.empty() ? input_shape_ : shapes_.back(); }
    [[nodiscard]] std::size_t size() const noexcept { return layers_.size(); }
    [[nodiscard]] const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    [[nodiscard]] LayerSpec& layer(std::size_t k) { return layers_.at(k); }

    /// Registry of learnable tensors in (layer, declaration) order.
    [[nodiscard]] std::vector<ParamRef> parameters();
    [[nodiscard]] std::vector<ConstParamRef> parameters() const;
    [[nodiscard]] std::size_t parameter_count() const;

    /// Layers [0, k].
    [[nodiscard]] Network prefix(std::size_t k) const;
    [[nodiscard]] std::size_t injection_count() const;

private:
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> shapes_;
};

/// Where injected noise comes from during a forward pass.
class Noise {
public:
    enum class Kind { deterministic, stochastic, pinned };

    /// Every injected eps is zero.
    static Noise deterministic() { return Noise(Kind::deterministic); }
    /// Fresh standard normal eps drawn from rs.
    static Noise stochastic(RandomSource& rs);
    /// Caller-supplied eps, one (B,h,w) tensor per injection layer in stack order.
    static Noise pinned(std::vector<Tensor> eps);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::vector<Tensor>& pinned_values() const noexcept { return pinned_; }
    Tensor draw(std::size_t injection_index, const Shape& eps_shape);

private:
    explicit Noise(Kind kind) : kind_(kind) {}
    Kind kind_;
    RandomSource* rs_ = nullptr;
    std::vector<Tensor> pinned_;
};

/// Tape leaves for every registry entry.
struct BoundParameters {
    std::vector<ConstParamRef> refs;
    std::vector<Var> vars;

    [[nodiscard]] Var get(std::size_t layer, std::string_view name) const;
    void set(std::size_t layer, std::string_view name, Var v);
};

BoundParameters bind_parameters(Tape& tape, const Network& net);

struct TapeForward {
    Var output;
    std::vector<Var> activations;
    std::vector<Tensor> noise;
};

/// Forward pass of a batched input (B, ...input_shape) on `tape`.
TapeForward forward_on_tape(const Network& net, const BoundParameters& params, Var input, Noise& noise);

struct ForwardResult {
    Tensor output;
    std::vector<Tensor> activations;
};

/// Accepts a single input or a batch with a leading axis; results match.
ForwardResult forward(const Network& net, const Tensor& input, Noise noise = Noise::deterministic());
/// Output of layer k in deterministic mode.
Tensor forward_at(const Network& net, const Tensor& input, std::size_t k);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

}  // namespace noisegeo
