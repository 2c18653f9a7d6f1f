#include "noisegeo/layers.hpp"

#include <cmath>

#include "noisegeo/nn_kernels.hpp"

namespace noisegeo {

namespace {

constexpr double kInitialAlphaLogit = -4.0;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void layer_fail(std::size_t k, std::string_view kind, const std::string& detail) {
    throw ShapeError("layer " + std::to_string(k) + " (" + std::string(kind) + "): " + detail);
}

Shape infer_shape(std::size_t k, const LayerSpec& layer, const Shape& in) {
    return std::visit(
        overloaded{
            [&](const Dense& d) -> Shape {
                if (d.weight.rank() != 2 || d.bias.shape() != Shape{d.weight.dim(0)})
                    layer_fail(k, "dense", "weight " + to_string(d.weight.shape()) + " and bias " + to_string(d.bias.shape()) + " disagree");
                if (in.size() != 1 || in[0] != d.weight.dim(1))
                    layer_fail(k, "dense", "input " + to_string(in) + " does not match weight " + to_string(d.weight.shape()));
                return {d.weight.dim(0)};
            },
            [&](const LeakyRelu&) -> Shape { return in; },
            [&](const Reshape& r) -> Shape {
                if (shape_size(r.target) != shape_size(in))
                    layer_fail(k, "reshape", "cannot reshape " + to_string(in) + " to " + to_string(r.target));
                return r.target;
            },
            [&](const Conv2D& c) -> Shape {
                if (c.weight.rank() != 4 || c.weight.dim(2) != 3 || c.weight.dim(3) != 3 || c.bias.shape() != Shape{c.weight.dim(0)})
                    layer_fail(k, "conv2d", "weight " + to_string(c.weight.shape()) + " is not (out,in,3,3) with matching bias");
                if (in.size() != 3 || in[0] != c.weight.dim(1))
                    layer_fail(k, "conv2d", "input " + to_string(in) + " does not match weight " + to_string(c.weight.shape()));
                return {c.weight.dim(0), in[1], in[2]};
            },
            [&](const Upsample2x&) -> Shape {
                if (in.size() != 3) layer_fail(k, "upsample2x", "input " + to_string(in) + " is not (c,h,w)");
                return {in[0], 2 * in[1], 2 * in[2]};
            },
            [&](const Inject& j) -> Shape {
                if (j.feature.size() != 3) layer_fail(k, "inject", "feature shape " + to_string(j.feature) + " is not (c,h,w)");
                const bool flat_ok = in.size() == 1 && j.feature[1] == 1 && j.feature[2] == 1 && in[0] == j.feature[0];
                if (in != j.feature && !flat_ok)
                    layer_fail(k, "inject", "input " + to_string(in) + " does not match feature shape " + to_string(j.feature));
                const Shape spatial{j.feature[1], j.feature[2]};
                if (j.mode == InjectionMode::rni && j.variant != RniVariant::cnn_sigma && j.variant != RniVariant::no_decomposition &&
                    (j.A.shape() != spatial || j.b.shape() != spatial))
                    layer_fail(k, "inject", "A/b do not match the spatial shape " + to_string(spatial));
                return in;
            },
        },
        layer);
}

Tensor flat_data(std::initializer_list<const Tensor*> parts) {
    std::vector<double> d;
    for (const Tensor* t : parts)
        if (!t->is_null()) d.insert(d.end(), t->data().begin(), t->data().end());
    if (d.empty()) return {};
    const std::size_t n = d.size();
    return Tensor({n}, std::move(d));
}

}  // namespace

std::string_view mode_name(InjectionMode m) {
    switch (m) {
        case InjectionMode::none: return "none";
        case InjectionMode::eni: return "eni";
        case InjectionMode::rni: return "rni";
    }
    return "none";
}

InjectionMode parse_mode(std::string_view name) {
    if (name == "none") return InjectionMode::none;
    if (name == "eni") return InjectionMode::eni;
    if (name == "rni") return InjectionMode::rni;
    throw Error("unknown injection mode '" + std::string(name) + "'");
}

Inject Inject::eni(Shape feature, double strength) {
    Inject j;
    j.mode = InjectionMode::eni;
    j.feature = std::move(feature);
    j.a = Tensor::scalar(strength);
    return j;
}

Inject Inject::rni(Shape feature, RniVariant variant, RandomSource& rs) {
    if (feature.size() != 3) throw ShapeError("inject: feature shape " + to_string(feature) + " is not (c,h,w)");
    const RniParams init = RniParams::initial(feature[0], feature[1], feature[2], variant, &rs);
    Inject j;
    j.mode = InjectionMode::rni;
    j.variant = variant;
    j.feature = std::move(feature);
    j.r = Tensor::scalar(init.r);
    if (variant == RniVariant::cnn_sigma) {
        j.conv_weight = init.conv_weight;
        j.conv_bias = init.conv_bias;
        return j;
    }
    if (variant != RniVariant::no_decomposition) {
        j.A = init.A;
        j.b = init.b;
    }
    if (variant != RniVariant::no_stabilization) j.alpha_logit = Tensor::scalar(kInitialAlphaLogit);
    return j;
}

EniParams Inject::eni_params() const { return EniParams{a.item()}; }

RniParams Inject::rni_params() const {
    RniParams p;
    const Shape spatial{feature[1], feature[2]};
    p.A = A.is_null() ? Tensor(spatial, 1.0) : A;
    p.b = b.is_null() ? Tensor(spatial, 0.0) : b;
    p.r = r.item();
    p.alpha = alpha_logit.is_null() ? 1.0 : 1.0 / (1.0 + std::exp(-alpha_logit.item()));
    p.variant = variant;
    p.conv_weight = conv_weight;
    p.conv_bias = conv_bias;
    return p;
}

std::string_view layer_kind(const LayerSpec& layer) {
    return std::visit(overloaded{[](const Dense&) { return std::string_view("dense"); },
                                 [](const LeakyRelu&) { return std::string_view("leaky_relu"); },
                                 [](const Reshape&) { return std::string_view("reshape"); },
                                 [](const Conv2D&) { return std::string_view("conv2d"); },
                                 [](const Upsample2x&) { return std::string_view("upsample2x"); },
                                 [](const Inject&) { return std::string_view("inject"); }},
                      layer);
}

Dense make_dense(std::size_t in, std::size_t out, RandomSource& rs) {
    return Dense{scale(rs.gaussian({out, in}), 1.0 / std::sqrt(static_cast<double>(in))), Tensor({out}, 0.0)};
}

Conv2D make_conv(std::size_t in_channels, std::size_t out_channels, RandomSource& rs) {
    return Conv2D{scale(rs.gaussian({out_channels, in_channels, 3, 3}), 1.0 / std::sqrt(9.0 * static_cast<double>(in_channels))),
                  Tensor({out_channels}, 0.0)};
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers) : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (input_shape_.empty() || shape_size(input_shape_) == 0) throw ShapeError("network: invalid input shape " + to_string(input_shape_));
    Shape current = input_shape_;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        current = infer_shape(k, layers_[k], current);
        shapes_.push_back(current);
    }
}

std::vector<ParamRef> Network::parameters() {
    std::vector<ParamRef> out;
    for (const ConstParamRef& c : std::as_const(*this).parameters())
        out.push_back(ParamRef{c.layer, c.name, const_cast<Tensor*>(c.tensor)});
    return out;
}

std::vector<ConstParamRef> Network::parameters() const {
    std::vector<ConstParamRef> out;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        auto add = [&](const char* name, const Tensor& t) {
            if (!t.is_null()) out.push_back(ConstParamRef{k, name, &t});
        };
        std::visit(overloaded{[&](const Dense& d) {
                                  add("W", d.weight);
                                  add("b", d.bias);
                              },
                              [&](const Conv2D& c) {
                                  add("W", c.weight);
                                  add("b", c.bias);
                              },
                              [&](const Inject& j) {
                                  add("a", j.a);
                                  add("A", j.A);
                                  add("b", j.b);
                                  add("r", j.r);
                                  add("alpha", j.alpha_logit);
                                  add("conv_W", j.conv_weight);
                                  add("conv_b", j.conv_bias);
                              },
                              [](const auto&) {}},
                   layers_[k]);
    }
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const ConstParamRef& p : parameters()) n += p.tensor->size();
    return n;
}

Network Network::prefix(std::size_t k) const {
    if (k >= layers_.size()) throw Error("depth " + std::to_string(k) + " out of range for a " + std::to_string(layers_.size()) + "-layer network");
    return Network(input_shape_, std::vector<LayerSpec>(layers_.begin(), layers_.begin() + static_cast<std::ptrdiff_t>(k + 1)));
}

std::size_t Network::injection_count() const {
    std::size_t n = 0;
    for (const LayerSpec& l : layers_) n += std::holds_alternative<Inject>(l) ? 1 : 0;
    return n;
}

Noise Noise::stochastic(RandomSource& rs) {
    Noise n(Kind::stochastic);
    n.rs_ = &rs;
    return n;
}

Noise Noise::pinned(std::vector<Tensor> eps) {
    Noise n(Kind::pinned);
    n.pinned_ = std::move(eps);
    return n;
}

Tensor Noise::draw(std::size_t injection_index, const Shape& eps_shape) {
    switch (kind_) {
        case Kind::deterministic: return Tensor(eps_shape, 0.0);
        case Kind::stochastic: return rs_->gaussian(eps_shape);
        case Kind::pinned: {
            if (injection_index >= pinned_.size()) throw Error("pinned noise: no eps supplied for injection layer " + std::to_string(injection_index));
            const Tensor& e = pinned_[injection_index];
            if (e.size() != shape_size(eps_shape))
                throw ShapeError("pinned noise: eps " + to_string(e.shape()) + " does not match " + to_string(eps_shape));
            return e.reshaped(eps_shape);
        }
    }
    return {};
}

Var BoundParameters::get(std::size_t layer, std::string_view name) const {
    for (std::size_t i = 0; i < refs.size(); ++i)
        if (refs[i].layer == layer && refs[i].name == name) return vars[i];
    throw Error("no parameter '" + std::string(name) + "' on layer " + std::to_string(layer));
}

void BoundParameters::set(std::size_t layer, std::string_view name, Var v) {
    for (std::size_t i = 0; i < refs.size(); ++i)
        if (refs[i].layer == layer && refs[i].name == name) {
            vars[i] = v;
            return;
        }
    throw Error("no parameter '" + std::string(name) + "' on layer " + std::to_string(layer));
}

BoundParameters bind_parameters(Tape& tape, const Network& net) {
    BoundParameters bound;
    bound.refs = net.parameters();
    for (const ConstParamRef& p : bound.refs) bound.vars.push_back(tape.leaf(*p.tensor));
    return bound;
}

TapeForward forward_on_tape(const Network& net, const BoundParameters& params, Var input, Noise& noise) {
    Tape& tape = *input.tape;
    {
        Shape expected = net.input_shape();
        const Shape& got = input.shape();
        if (got.size() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), got.begin() + 1))
            throw ShapeError("forward: input " + to_string(got) + " does not match network input " + to_string(expected) + " with a batch axis");
    }
    const std::size_t batch = input.shape()[0];
    TapeForward result;
    Var x = input;
    std::size_t injection_index = 0;
    for (std::size_t k = 0; k < net.size(); ++k) {
        const LayerSpec& layer = net.layers()[k];
        auto batched = [batch](const Shape& s) {
            Shape b{batch};
            b.insert(b.end(), s.begin(), s.end());
            return b;
        };
        std::visit(overloaded{
                       [&](const Dense&) { x = ad::dense(x, params.get(k, "W"), params.get(k, "b")); },
                       [&](const LeakyRelu&) { x = ad::leaky_relu(x, kLeakySlope); },
                       [&](const Reshape& r) { x = ad::reshape(x, batched(r.target)); },
                       [&](const Conv2D&) { x = ad::conv2d(x, params.get(k, "W"), params.get(k, "b")); },
                       [&](const Upsample2x&) { x = ad::upsample2x(x); },
                       [&](const Inject& j) {
                           const Shape in_shape = x.shape();
                           Var mu = ad::reshape(x, batched(j.feature));
                           Tensor eps = noise.draw(injection_index++, {batch, j.feature[1], j.feature[2]});
                           Var eps_var = tape.leaf(eps);
                           result.noise.push_back(std::move(eps));
                           Var out;
                           if (j.mode == InjectionMode::eni) {
                               out = ad::eni_combine(mu, eps_var, params.get(k, "a"));
                           } else {
                               Var sigma;
                               if (j.variant == RniVariant::cnn_sigma) {
                                   Var conv = ad::conv2d(mu, params.get(k, "conv_W"), params.get(k, "conv_b"));
                                   sigma = ad::frobenius_normalize(ad::reshape(conv, {batch, j.feature[1], j.feature[2]}));
                               } else {
                                   sigma = ad::channel_sum(mu);
                                   if (j.variant != RniVariant::no_normalization) sigma = ad::semantic_normalize(sigma);
                                   if (j.variant != RniVariant::no_decomposition)
                                       sigma = ad::affine_decompose(sigma, params.get(k, "A"), params.get(k, "b"));
                                   if (j.variant != RniVariant::no_stabilization)
                                       sigma = ad::stabilize_normalize(sigma, ad::sigmoid(params.get(k, "alpha")));
                               }
                               out = ad::rni_combine(mu, sigma, eps_var, params.get(k, "r"));
                           }
                           x = ad::reshape(out, in_shape);
                       },
                   },
                   layer);
        result.activations.push_back(x);
    }
    result.output = x;
    return result;
}

ForwardResult forward(const Network& net, const Tensor& input, Noise noise) {
    const bool single = input.rank() == net.input_shape().size();
    Tensor batched = input;
    if (single) {
        Shape s = input.shape();
        s.insert(s.begin(), 1);
        batched = input.reshaped(std::move(s));
    }
    Tape tape;
    const BoundParameters params = bind_parameters(tape, net);
    const TapeForward f = forward_on_tape(net, params, tape.leaf(batched), noise);
    auto unbatch = [single](const Tensor& t) {
        if (!single) return t;
        Shape s(t.shape().begin() + 1, t.shape().end());
        return t.reshaped(std::move(s));
    };
    ForwardResult out;
    out.output = unbatch(f.output.value());
    for (Var a : f.activations) out.activations.push_back(unbatch(a.value()));
    if (net.size() == 0) out.output = input;
    return out;
}

Tensor forward_at(const Network& net, const Tensor& input, std::size_t k) {
    if (k >= net.size()) throw Error("forward_at: depth " + std::to_string(k) + " out of range for " + std::to_string(net.size()) + " layers");
    return forward(net.prefix(k), input).output;
}

nlohmann::json network_to_json(const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& layer : net.layers()) {
        nlohmann::json entry;
        entry["kind"] = layer_kind(layer);
        std::visit(overloaded{
                       [&](const Dense& d) {
                           entry["shape"] = d.weight.shape();
                           entry["data"] = flat_data({&d.weight, &d.bias}).values();
                       },
                       [&](const LeakyRelu&) {
                           entry["shape"] = nlohmann::json::array();
                           entry["data"] = nlohmann::json::array();
                       },
                       [&](const Reshape& r) {
                           entry["shape"] = r.target;
                           entry["data"] = nlohmann::json::array();
                       },
                       [&](const Conv2D& c) {
                           entry["shape"] = c.weight.shape();
                           entry["data"] = flat_data({&c.weight, &c.bias}).values();
                       },
                       [&](const Upsample2x&) {
                           entry["shape"] = nlohmann::json::array();
                           entry["data"] = nlohmann::json::array();
                       },
                       [&](const Inject& j) {
                           entry["shape"] = j.feature;
                           entry["mode"] = mode_name(j.mode);
                           if (j.mode == InjectionMode::rni) entry["variant"] = variant_name(j.variant);
                           const Tensor flat = flat_data({&j.a, &j.A, &j.b, &j.r, &j.alpha_logit, &j.conv_weight, &j.conv_bias});
                           entry["data"] = flat.is_null() ? std::vector<double>{} : flat.values();
                       },
                   },
                   layer);
        layers.push_back(std::move(entry));
    }
    return nlohmann::json{{"input_shape", net.input_shape()}, {"layers", std::move(layers)}};
}

Network network_from_json(const nlohmann::json& doc) {
    try {
        const Shape input_shape = doc.at("input_shape").get<Shape>();
        std::vector<LayerSpec> layers;
        for (const auto& entry : doc.at("layers")) {
            const std::string kind = entry.at("kind").get<std::string>();
            const Shape shape = entry.at("shape").get<Shape>();
            const std::vector<double> data = entry.at("data").get<std::vector<double>>();
            std::size_t offset = 0;
            auto take = [&](Shape s) {
                const std::size_t n = shape_size(s);
                if (offset + n > data.size()) throw Error("network json: layer '" + kind + "' has too little data");
                std::vector<double> part(data.begin() + static_cast<std::ptrdiff_t>(offset), data.begin() + static_cast<std::ptrdiff_t>(offset + n));
                offset += n;
                return Tensor(std::move(s), std::move(part));
            };
            if (kind == "dense") {
                Dense d;
                d.weight = take(shape);
                d.bias = take({shape.at(0)});
                layers.emplace_back(std::move(d));
            } else if (kind == "leaky_relu") {
                layers.emplace_back(LeakyRelu{});
            } else if (kind == "reshape") {
                layers.emplace_back(Reshape{shape});
            } else if (kind == "conv2d") {
                Conv2D c;
                c.weight = take(shape);
                c.bias = take({shape.at(0)});
                layers.emplace_back(std::move(c));
            } else if (kind == "upsample2x") {
                layers.emplace_back(Upsample2x{});
            } else if (kind == "inject") {
                Inject j;
                j.mode = parse_mode(entry.at("mode").get<std::string>());
                j.feature = shape;
                if (j.mode == InjectionMode::eni) {
                    j.a = take({1});
                } else if (j.mode == InjectionMode::rni) {
                    j.variant = parse_variant(entry.at("variant").get<std::string>());
                    const Shape spatial{shape.at(1), shape.at(2)};
                    const bool decomposed = j.variant != RniVariant::no_decomposition && j.variant != RniVariant::cnn_sigma;
                    if (decomposed) {
                        j.A = take(spatial);
                        j.b = take(spatial);
                    }
                    j.r = take({1});
                    if (j.variant != RniVariant::no_stabilization && j.variant != RniVariant::cnn_sigma) j.alpha_logit = take({1});
                    if (j.variant == RniVariant::cnn_sigma) {
                        j.conv_weight = take({1, shape.at(0), 3, 3});
                        j.conv_bias = take({1});
                    }
                } else {
                    throw Error("network json: injection mode 'none' is not a layer");
                }
                layers.emplace_back(std::move(j));
            } else {
                throw Error("network json: unknown layer kind '" + kind + "'");
            }
            if (offset != data.size()) throw Error("network json: layer '" + kind + "' has " + std::to_string(data.size() - offset) + " unused values");
        }
        return Network(input_shape, std::move(layers));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("network json: ") + e.what());
    }
}

}  // namespace noisegeo
