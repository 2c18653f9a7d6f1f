#include <cmath>

#include "doctest.h"
#include "noisegeo/layers.hpp"
#include "oracles.hpp"
#include "random_networks.hpp"

using namespace noisegeo;
using namespace testnets;

TEST_CASE("empty network is the identity") {
    const Network net({3}, {});
    const Tensor x = Tensor::vector({1, -2, 3});
    CHECK(forward(net, x).output == x);
    CHECK(net.output_shape() == Shape{3});
    CHECK(net.parameter_count() == 0);
}

TEST_CASE("dense identity then leaky relu") {
    const Network net({2}, {Dense{Tensor::identity(2), Tensor::vector({0, 0})}, LeakyRelu{}});
    const Tensor y = forward(net, Tensor::vector({-1, 2})).output;
    CHECK(y[0] == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(y[1] == 2.0);
    CHECK(forward(net, Tensor::vector({-1, 2})).output == y);
}

TEST_CASE("single and batched inputs agree") {
    RandomSource rs(21);
    const Network net = random_network(rs, 3);
    const Tensor batch = rs.gaussian({5, 3});
    const Tensor out = forward(net, batch).output;
    for (std::size_t i = 0; i < 5; ++i) CHECK(max_abs_diff(forward(net, slice(batch, i)).output, slice(out, i)) < 1e-14);
}

TEST_CASE("forward_at") {
    RandomSource rs(22);
    std::vector<LayerSpec> layers;
    for (int i = 0; i < 4; ++i) {
        layers.push_back(make_dense(4, 4, rs));
        layers.push_back(LeakyRelu{});
    }
    const Network net({4}, layers);
    const Tensor x = rs.gaussian({4});
    CHECK(forward_at(net, x, net.size() - 1) == forward(net, x).output);

    const Dense& first = std::get<Dense>(net.layers()[0]);
    CHECK(forward_at(net, x, 0) == add(matmul(first.weight, x.reshaped({4, 1})).reshaped({4}), first.bias));

    const Network head({4}, std::vector<LayerSpec>(layers.begin(), layers.begin() + 4));
    const Network tail({4}, std::vector<LayerSpec>(layers.begin() + 4, layers.end()));
    CHECK(max_abs_diff(forward(tail, forward(head, x).output).output, forward(net, x).output) < 1e-14);
    CHECK_THROWS_AS(forward_at(net, x, net.size()), Error);
}

TEST_CASE("linear stack equals the product of its weights") {
    RandomSource rs(23);
    std::vector<LayerSpec> layers;
    Tensor product = Tensor::identity(3);
    for (int i = 0; i < 5; ++i) {
        Dense d = make_dense(3, 3, rs);
        product = oracle::naive_matmul(d.weight, product);
        layers.push_back(std::move(d));
    }
    const Network net({3}, layers);
    for (int t = 0; t < 20; ++t) {
        const Tensor x = rs.gaussian({3});
        const Tensor expected = oracle::naive_matmul(product, x.reshaped({3, 1})).reshaped({3});
        CHECK(max_abs_diff(forward(net, x).output, expected) <= 1e-12 * (1.0 + max_abs(expected)));
    }
}

TEST_CASE("shape inference rejects mismatched stacks") {
    RandomSource rs(24);
    CHECK_THROWS_WITH_AS(Network({3}, {make_dense(3, 4, rs), make_dense(5, 2, rs)}),
                         doctest::Contains("layer 1 (dense)"), ShapeError);
    CHECK_THROWS_AS(Network({4}, {Reshape{{3}}}), ShapeError);
    CHECK_THROWS_AS(Network({2, 4, 4}, {make_conv(3, 1, rs)}), ShapeError);
    CHECK_THROWS_AS(Network({4}, {Upsample2x{}}), ShapeError);
    CHECK_THROWS_AS(Network({2, 2, 2}, {Inject::eni({2, 3, 3})}), ShapeError);
    const Network ok({2, 3, 3}, {Upsample2x{}, make_conv(2, 5, rs)});
    CHECK(ok.output_shape() == Shape{5, 6, 6});
    CHECK_THROWS_AS(forward(ok, rs.gaussian({3, 3})), ShapeError);
}

TEST_CASE("parameter registry covers exactly the learnable tensors") {
    RandomSource rs(25);
    const Network net({4}, {make_dense(4, 8, rs), LeakyRelu{}, Reshape{{2, 2, 2}}, Inject::rni({2, 2, 2}, RniVariant::full, rs),
                            make_conv(2, 1, rs), Inject::eni({1, 2, 2}), Reshape{{4}}});
    std::vector<std::string> names;
    std::size_t count = 0;
    for (const ConstParamRef& p : net.parameters()) {
        names.push_back(std::to_string(p.layer) + ":" + p.name);
        count += p.tensor->size();
    }
    CHECK(names == std::vector<std::string>{"0:W", "0:b", "3:A", "3:b", "3:r", "3:alpha", "4:W", "4:b", "5:a"});
    CHECK(count == 32 + 8 + 4 + 4 + 1 + 1 + 18 + 1 + 1);
    CHECK(net.parameter_count() == count);
    CHECK(net.injection_count() == 2);

    const Network cnn({1, 2, 2}, {Inject::rni({1, 2, 2}, RniVariant::cnn_sigma, rs)});
    std::vector<std::string> cnn_names;
    for (const ConstParamRef& p : cnn.parameters()) cnn_names.push_back(p.name);
    CHECK(cnn_names == std::vector<std::string>{"r", "conv_W", "conv_b"});
}

TEST_CASE("noise sources") {
    RandomSource rs(26);
    const Network net({2}, {make_dense(2, 4, rs), Reshape{{1, 2, 2}}, Inject::eni({1, 2, 2}), Reshape{{4}}});
    const Tensor x = rs.gaussian({2});
    const Tensor clean = forward(net, x).output;
    const Tensor eps = rs.gaussian({1, 2, 2});
    const Tensor pinned = forward(net, x, Noise::pinned({eps})).output;
    CHECK(max_abs_diff(subtract(pinned, clean), eps.reshaped({4})) < 1e-15);

    RandomSource a(99), b(99);
    CHECK(forward(net, x, Noise::stochastic(a)).output == forward(net, x, Noise::stochastic(b)).output);
    CHECK_THROWS_AS(forward(net, x, Noise::pinned({})), Error);
    CHECK_THROWS_AS(forward(net, x, Noise::pinned({rs.gaussian({1, 3, 2})})), ShapeError);
}

TEST_CASE("random mixed networks: parameter and input gradients match finite differences") {
    RandomSource rs(27);
    for (int trial = 0; trial < 20; ++trial) {
        CAPTURE(trial);
        Network net = random_network(rs, 3);
        const Tensor x = rs.gaussian({2, 3});
        std::vector<Tensor> eps;
        for (const LayerSpec& l : net.layers())
            if (const auto* j = std::get_if<Inject>(&l)) eps.push_back(rs.gaussian({2, j->feature[1], j->feature[2]}));
        const Tensor weights = rs.gaussian({2, 2});

        Tape tape;
        const BoundParameters params = bind_parameters(tape, net);
        Var input = tape.leaf(x);
        Noise noise = Noise::pinned(eps);
        const TapeForward f = forward_on_tape(net, params, input, noise);
        std::vector<Var> wrt = params.vars;
        wrt.push_back(input);
        const auto analytic = tape.grad(ad::sum(ad::mul(f.output, tape.leaf(weights))), wrt);

        std::vector<Tensor> inputs = parameter_values(net);
        inputs.push_back(x);
        const auto numeric = oracle::finite_difference_grad(
            [&](const std::vector<Tensor>& in) {
                Network copy = net;
                assign_parameters(copy, std::vector<Tensor>(in.begin(), in.end() - 1));
                const Tensor y = forward(copy, in.back(), Noise::pinned(eps)).output;
                double s = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
                return s;
            },
            inputs);
        CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);
    }
}

TEST_CASE("json roundtrip") {
    RandomSource rs(28);
    for (int t = 0; t < 10; ++t) {
        const Network net = random_network(rs, 2);
        const nlohmann::json doc = network_to_json(net);
        const Network back = network_from_json(nlohmann::json::parse(doc.dump()));
        CHECK(network_to_json(back) == doc);
        const Tensor x = rs.gaussian({2});
        CHECK(forward(back, x).output == forward(net, x).output);
    }
    nlohmann::json bad = network_to_json(random_network(rs, 2));
    bad["layers"][0]["data"].push_back(1.0);
    CHECK_THROWS_AS(network_from_json(bad), Error);
    bad["layers"][0]["kind"] = "mystery";
    CHECK_THROWS_AS(network_from_json(bad), Error);
}
