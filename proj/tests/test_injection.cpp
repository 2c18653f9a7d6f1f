#include <cmath>

#include "doctest.h"
#include "noisegeo/injection.hpp"
#include "oracles.hpp"

using namespace noisegeo;

namespace {

Tensor map(std::size_t h, std::size_t w, std::vector<double> v) { return Tensor({h, w}, std::move(v)); }

}  // namespace

TEST_CASE("eni_forward") {
    RandomSource rs(1);
    const Tensor mu = rs.gaussian({3, 2, 2});
    const Tensor eps = rs.gaussian({2, 2});
    CHECK(eni_forward(mu, EniParams{0.0}, eps) == mu);

    const Tensor zero({3, 2, 2}, 0.0);
    const Tensor o = eni_forward(zero, EniParams{1.0}, eps);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t j = 0; j < 4; ++j) CHECK(o[c * 4 + j] == eps[j]);

    CHECK(eni_forward(Tensor({1, 1, 2}, {1, 2}), EniParams{2.0}, map(1, 2, {0.5, -0.5})) == Tensor({1, 1, 2}, {2, 1}));
    CHECK_THROWS_AS(eni_forward(mu, EniParams{1.0}, rs.gaussian({3, 2})), ShapeError);
}

TEST_CASE("channel_sum") {
    CHECK(channel_sum(Tensor({2, 1, 2}, {1, 2, 3, 4})) == map(1, 2, {4, 6}));
    RandomSource rs(2);
    const Tensor one = rs.gaussian({1, 3, 3});
    CHECK(channel_sum(one) == one.reshaped({3, 3}));
    CHECK(channel_sum(Tensor({4, 2, 2}, 0.0)) == Tensor({2, 2}, 0.0));
}

TEST_CASE("semantic_normalize") {
    CHECK(semantic_normalize(map(1, 2, {4, 6})) == map(1, 2, {-1, 1}));
    CHECK(semantic_normalize(map(1, 2, {5, 5})) == map(1, 2, {0, 0}));
    // mean 4/3, centered (-4/3, -1/3, 5/3), peak 5/3.
    const Tensor s = semantic_normalize(map(1, 3, {0, 1, 3}));
    CHECK(s[0] == doctest::Approx(-0.8).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(s[2] == doctest::Approx(1.0).epsilon(1e-15));

    RandomSource rs(3);
    for (int t = 0; t < 50; ++t) {
        const Tensor r = semantic_normalize(rs.gaussian({4, 5}));
        CHECK(max_abs(r) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(std::abs(mean(r)) < 1e-15);
    }
}

TEST_CASE("affine_decompose") {
    RandomSource rs(4);
    const Tensor s = rs.gaussian({2, 3});
    CHECK(affine_decompose(s, Tensor({2, 3}, 1.0), Tensor({2, 3}, 0.0)) == s);
    CHECK(affine_decompose(s, Tensor({2, 3}, 0.0), Tensor({2, 3}, 0.25)) == Tensor({2, 3}, 0.25));
    CHECK(affine_decompose(map(1, 2, {-1, 1}), map(1, 2, {2, 0}), map(1, 2, {1, 1})) == map(1, 2, {-1, 1}));
    CHECK_THROWS_AS(affine_decompose(s, Tensor({3, 2}, 1.0), Tensor({2, 3}, 0.0)), ShapeError);
}

TEST_CASE("stabilize_normalize") {
    RandomSource rs(5);
    CHECK(stabilize_normalize(rs.gaussian({2, 2}), 0.0) == Tensor({2, 2}, 0.5));
    CHECK(stabilize_normalize(rs.gaussian({1, 1}), 0.0) == Tensor({1, 1}, 1.0));
    const Tensor half = stabilize_normalize(Tensor({3, 4}, 0.0), 0.5);
    for (double v : half.data()) CHECK(v == doctest::Approx(1.0 / std::sqrt(12.0)).epsilon(1e-15));
    CHECK_THROWS_WITH_AS(stabilize_normalize(Tensor({2, 2}, 0.0), 1.0), "degenerate stabilized map", Error);
    CHECK_THROWS_AS(stabilize_normalize(Tensor({2, 2}, 0.0), 1.5), Error);

    SUBCASE("unit Frobenius norm on random inputs") {
        for (int t = 0; t < 1000; ++t) {
            const double alpha = rs.uniform();
            const Tensor sigma = stabilize_normalize(rs.gaussian({1 + rs.below(6), 1 + rs.below(6)}), alpha);
            CHECK(std::abs(norm(sigma) - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("rni_forward") {
    SUBCASE("single pixel arithmetic") {
        RniParams p = RniParams::initial(1, 1, 1, RniVariant::full);
        p.r = 2.0;
        const Tensor mu({1, 1, 1}, 3.0);
        CHECK(rni_forward(mu, p, map(1, 1, {0.5})) == Tensor({1, 1, 1}, 7.0));
        p.alpha = 1.0;  // s = 0 and A s + b = 0, nothing left to normalize
        CHECK_THROWS_WITH_AS(rni_forward(mu, p, map(1, 1, {0.5})), "degenerate stabilized map", Error);
    }
    SUBCASE("zero noise gives r sigma mu") {
        RandomSource rs(6);
        RniParams p = RniParams::initial(3, 4, 4, RniVariant::full);
        p.A = rs.gaussian({4, 4});
        p.b = rs.gaussian({4, 4});
        p.alpha = 0.6;
        p.r = 1.7;
        const Tensor mu = rs.gaussian({3, 4, 4});
        const Tensor o = rni_forward(mu, p, Tensor({4, 4}, 0.0));
        const Tensor sigma = rni_sigma(mu, p);
        Tensor expected(mu.shape());
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t j = 0; j < 16; ++j) expected[c * 16 + j] = p.r * sigma[j] * mu[c * 16 + j];
        CHECK(o == expected);
    }
    SUBCASE("initialization reduces to mu + eps") {
        RandomSource rs(7);
        const RniParams p = RniParams::initial(2, 3, 3, RniVariant::full);
        const Tensor mu = rs.gaussian({2, 3, 3}), eps = rs.gaussian({3, 3});
        CHECK(max_abs_diff(rni_forward(mu, p, eps), eni_forward(mu, EniParams{1.0}, eps)) < 1e-14);
    }
    SUBCASE("variants skip their stage") {
        RandomSource rs(8);
        RniParams p = RniParams::initial(2, 3, 3, RniVariant::full, &rs);
        p.A = rs.gaussian({3, 3});
        p.b = rs.gaussian({3, 3});
        p.alpha = 0.4;
        const Tensor mu = rs.gaussian({2, 3, 3});
        const Tensor summed = channel_sum(mu);
        p.variant = RniVariant::no_normalization;
        CHECK(rni_sigma(mu, p) == stabilize_normalize(affine_decompose(summed, p.A, p.b), p.alpha));
        p.variant = RniVariant::no_decomposition;
        CHECK(rni_sigma(mu, p) == stabilize_normalize(semantic_normalize(summed), p.alpha));
        p.variant = RniVariant::no_stabilization;
        CHECK(rni_sigma(mu, p) == affine_decompose(semantic_normalize(summed), p.A, p.b));
        RniParams cnn = RniParams::initial(2, 3, 3, RniVariant::cnn_sigma, &rs);
        const Tensor sigma = rni_sigma(mu, cnn);
        CHECK(sigma.shape() == Shape{3, 3});
        CHECK(norm(sigma) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(variant_name(parse_variant("no-stabilization")) == "no-stabilization");
        CHECK_THROWS_AS(parse_variant("no-such-thing"), Error);
    }
}

TEST_CASE("rni stage gradients match finite differences") {
    RandomSource rs(9);
    for (RniVariant variant : kAllRniVariants) {
        CAPTURE(variant_name(variant));
        // Inputs: mu, A, b, r, alpha, eps, conv weight, conv bias.
        std::vector<Tensor> inputs{rs.gaussian({2, 3, 4, 4}), add(Tensor({4, 4}, 1.0), scale(rs.gaussian({4, 4}), 0.3)),
                                   scale(rs.gaussian({4, 4}), 0.3), Tensor::scalar(1.3), Tensor::scalar(0.45),
                                   rs.gaussian({2, 4, 4}), scale(rs.gaussian({1, 3, 3, 3}), 0.3), Tensor::scalar(0.1)};
        auto output = [variant](const std::vector<Var>& v) {
            Var sigma;
            if (variant == RniVariant::cnn_sigma) {
                sigma = ad::frobenius_normalize(ad::reshape(ad::conv2d(v[0], v[6], v[7]), {2, 4, 4}));
            } else {
                sigma = ad::channel_sum(v[0]);
                if (variant != RniVariant::no_normalization) sigma = ad::semantic_normalize(sigma);
                if (variant != RniVariant::no_decomposition) sigma = ad::affine_decompose(sigma, v[1], v[2]);
                if (variant != RniVariant::no_stabilization) sigma = ad::stabilize_normalize(sigma, v[4]);
            }
            return ad::rni_combine(v[0], sigma, v[5], v[3]);
        };
        auto loss = [&output](Tape& tape, const std::vector<Var>& v) {
            Var o = output(v);
            Tensor w(o.shape());
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::cos(0.3 * static_cast<double>(i));
            return ad::sum(ad::mul(o, tape.leaf(w)));
        };
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
        const auto analytic = tape.grad(loss(tape, vars), vars);
        const auto numeric = oracle::finite_difference_grad(
            [&](const std::vector<Tensor>& in) {
                Tape t;
                std::vector<Var> vs;
                for (const Tensor& x : in) vs.push_back(t.leaf(x));
                return loss(t, vs).value()[0];
            },
            inputs);
        CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);

        // The tape forward agrees with the pure pipeline.
        RniParams p;
        p.A = inputs[1];
        p.b = inputs[2];
        p.r = 1.3;
        p.alpha = 0.45;
        p.variant = variant;
        p.conv_weight = inputs[6];
        p.conv_bias = inputs[7];
        Tape check;
        std::vector<Var> cv;
        for (const Tensor& t : inputs) cv.push_back(check.leaf(t));
        const Tensor batched = output(cv).value();
        for (std::size_t n = 0; n < 2; ++n) {
            const Tensor mu = slice(inputs[0], n), eps = slice(inputs[5], n);
            CHECK(max_abs_diff(rni_forward(mu, p, eps), slice(batched, n)) < 1e-12);
        }
    }
}

TEST_CASE("eni gradient matches finite differences") {
    RandomSource rs(10);
    std::vector<Tensor> inputs{rs.gaussian({2, 3, 2, 2}), rs.gaussian({2, 2, 2}), Tensor::scalar(0.7)};
    auto loss = [](Tape& tape, const std::vector<Var>& v) {
        Var o = ad::eni_combine(v[0], v[1], v[2]);
        Tensor w(o.shape());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.7 * static_cast<double>(i) + 0.1);
        return ad::sum(ad::mul(o, tape.leaf(w)));
    };
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    const auto analytic = tape.grad(loss(tape, vars), vars);
    const auto numeric = oracle::finite_difference_grad(
        [&](const std::vector<Tensor>& in) {
            Tape t;
            std::vector<Var> vs;
            for (const Tensor& x : in) vs.push_back(t.leaf(x));
            return loss(t, vs).value()[0];
        },
        inputs);
    CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);
}

TEST_CASE("sample_from_pair") {
    RepresentativePair p{Tensor::vector({0, 0}), Tensor::identity(2), 1.0};
    p.validate();
    CHECK(sample_from_pair(p, Tensor::vector({1, 0})) == Tensor::vector({1, 0}));

    RandomSource rs(11);
    RepresentativePair tiny{rs.gaussian({3}), Tensor::matrix(3, 1, {0, 0, 1}), 1e-300};
    CHECK(max_abs_diff(sample_from_pair(tiny, rs), tiny.mu) < 1e-290);
    RepresentativePair zero_r = tiny;
    zero_r.r = 0.0;
    CHECK(sample_from_pair(zero_r, rs.gaussian({1})) == zero_r.mu);
    CHECK_THROWS_AS(zero_r.validate(), Error);
    CHECK_THROWS_AS((RepresentativePair{Tensor::vector({0, 0}), Tensor::matrix(2, 1, {1, 1}), 1.0}.validate()), Error);

    SUBCASE("identity frame reproduces eni bit for bit") {
        for (int t = 0; t < 100; ++t) {
            const std::size_t h = 1 + rs.below(4), w = 1 + rs.below(4);
            const Tensor mu = rs.gaussian({1, h, w});
            const Tensor eps = rs.gaussian({h, w});
            const double a = rs.normal();
            const RepresentativePair pair{mu.reshaped({h * w}), Tensor::identity(h * w), a};
            CHECK(sample_from_pair(pair, eps.reshaped({h * w})) == eni_forward(mu, EniParams{a}, eps).reshaped({h * w}));
        }
    }
}

TEST_CASE("fuzzy similarity") {
    const Metric d = euclidean_distance;
    const Tensor x = Tensor::vector({0.0}), y = Tensor::vector({1.0});
    CHECK(fuzzy_similarity(d, x, x) == 1.0);
    CHECK(fuzzy_similarity(d, x, y) == doctest::Approx(0.367879).epsilon(1e-6));
    RandomSource rs(12);
    for (int t = 0; t < 100; ++t) {
        const Tensor a = rs.gaussian({3}), b = rs.gaussian({3});
        CHECK(fuzzy_similarity(d, a, b) == fuzzy_similarity(d, b, a));
    }
    CHECK_THROWS_AS(fuzzy_similarity([](const Tensor&, const Tensor&) { return -1.0; }, x, y), Error);
}

TEST_CASE("t-equivalence verification") {
    RandomSource rs(13);
    std::vector<Tensor> points;
    for (int i = 0; i < 100; ++i) points.push_back(rs.gaussian({2}));

    const TEquivalenceReport metric = verify_t_equivalence(
        [](const Tensor& a, const Tensor& b) { return fuzzy_similarity(euclidean_distance, a, b); }, points);
    CHECK(metric.holds());
    CHECK(metric.triples_checked == 1000000);

    CHECK(verify_t_equivalence([](const Tensor&, const Tensor&) { return 1.0; }, points).holds());

    // exp(+d): E(x,y) E(y,z) = exp(d(x,y) + d(y,z)) >= exp(d(x,z)), so every
    // non-degenerate triple breaks transitivity. Count them by brute force.
    const TEquivalenceReport broken =
        verify_t_equivalence([](const Tensor& a, const Tensor& b) { return std::exp(euclidean_distance(a, b)); }, points);
    CHECK_FALSE(broken.holds());
    std::size_t expected = 0;
    for (const Tensor& a : points)
        for (const Tensor& b : points)
            for (const Tensor& c : points) {
                const double gap = std::exp(euclidean_distance(a, b)) * std::exp(euclidean_distance(b, c)) - std::exp(euclidean_distance(a, c));
                expected += gap > 1e-12 ? 1 : 0;
            }
    CHECK(broken.transitivity_violations == expected);
    CHECK(broken.transitivity_violations > 0);
}
