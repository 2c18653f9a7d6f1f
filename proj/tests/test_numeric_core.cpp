#include <cmath>
#include <thread>

#include "doctest.h"
#include "noisegeo/linalg.hpp"
#include "noisegeo/parallel.hpp"
#include "noisegeo/random.hpp"
#include "noisegeo/tape.hpp"
#include "oracles.hpp"

using namespace noisegeo;

TEST_CASE("kernel suite") {
    CHECK(multiply(Tensor::vector({1, 2}), Tensor::vector({3, 4})) == Tensor::vector({3, 8}));
    CHECK(norm(Tensor::vector({3, 4})) == 5.0);

    RandomSource rs(3);
    const Tensor m = rs.gaussian({3, 5});
    CHECK(matmul(Tensor::identity(3), m) == m);
    CHECK(max_abs_diff(matmul(m, transpose(m)), matmul_transposed(m, m)) < 1e-14);
    CHECK(max_abs_diff(matmul(transpose(m), m), transposed_matmul(m, m)) < 1e-14);

    const Tensor a = rs.gaussian({4, 6}), b = rs.gaussian({6, 3});
    CHECK(max_abs_diff(matmul(a, b), oracle::naive_matmul(a, b)) < 1e-13);

    SUBCASE("broadcast expands a missing leading axis") {
        const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
        CHECK(broadcast_add(x, Tensor::vector({10, 20})) == Tensor::matrix(2, 2, {11, 22, 13, 24}));
        CHECK_THROWS_AS(broadcast_add(x, Tensor::vector({1, 2, 3})), ShapeError);
    }
    SUBCASE("reshape keeps the buffer") {
        const Tensor r = reshape(a, {2, 12});
        CHECK(std::equal(r.data().begin(), r.data().end(), a.data().begin()));
        CHECK_THROWS_AS(reshape(a, {5, 5}), ShapeError);
    }
    SUBCASE("reductions") {
        const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
        CHECK(reduce_sum(x, 0) == Tensor::vector({5, 7, 9}));
        CHECK(reduce_sum(x, -1) == Tensor::vector({6, 15}));
        CHECK(mean(x) == 3.5);
    }
    SUBCASE("shape mismatch names the kernel and both shapes") {
        try {
            (void)add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3}));
            FAIL("expected ShapeError");
        } catch (const ShapeError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("add") != std::string::npos);
            CHECK(msg.find("(2)") != std::string::npos);
            CHECK(msg.find("(3)") != std::string::npos);
        }
        CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}), Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6})), ShapeError);
    }
}

TEST_CASE("kernel outputs fill their shapes") {
    RandomSource rs(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rs.below(5), k = 1 + rs.below(5), n = 1 + rs.below(5);
        const Tensor a = rs.gaussian({m, k}), b = rs.gaussian({k, n});
        for (const Tensor& t : {matmul(a, b), transpose(a), reduce_sum(a, 0), reduce_sum(a, 1), add(a, a), scale(a, 2.0)})
            CHECK(t.size() == shape_size(t.shape()));
    }
}

TEST_CASE("gaussian sampling") {
    RandomSource rs(42, 0);
    CHECK(rs.gaussian({2, 3}).shape() == Shape{2, 3});
    CHECK_THROWS_AS(rs.gaussian({0, 3}), ShapeError);
    CHECK_THROWS_AS(rs.gaussian({}), ShapeError);

    SUBCASE("pinned first draw") {
        RandomSource golden(42, 0);
        CHECK(golden.normal() == -0.94010827041454115);
    }
    SUBCASE("law of large numbers") {
        RandomSource big(7);
        const Tensor t = big.gaussian({1000000});
        CHECK(std::abs(mean(t)) < 0.005);
        double var = 0.0;
        for (double v : t.data()) var += v * v;
        CHECK(var / 1e6 == doctest::Approx(1.0).epsilon(0.01));
        // Unclipped: a million draws reach beyond 4 sigma.
        CHECK(max_abs(t) > 4.0);
    }
    SUBCASE("identical seed and label reproduce bitwise") {
        RandomSource a(99, 3), b(99, 3);
        CHECK(a.gaussian({257}) == b.gaussian({257}));
    }
    SUBCASE("child streams are order independent and distinct") {
        RandomSource parent(5);
        RandomSource c1 = parent.child(1);
        RandomSource c2 = parent.child(2);
        const Tensor second_first = c2.gaussian({8});
        RandomSource parent2(5);
        (void)parent2.gaussian({100});  // advancing the parent does not move children
        RandomSource d2 = parent2.child(2);
        RandomSource d1 = parent2.child(1);
        CHECK(d2.gaussian({8}) == second_first);
        CHECK(d1.gaussian({8}) == c1.gaussian({8}));
        CHECK(parent.child(1).gaussian({8}) != parent.child(2).gaussian({8}));

        // Sample correlation between sibling streams is at noise level.
        RandomSource s1 = parent.child(10), s2 = parent.child(11);
        double corr = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) corr += s1.normal() * s2.normal();
        CHECK(std::abs(corr / n) < 0.01);
    }
}

TEST_CASE("tape gradients") {
    SUBCASE("d(x^2)/dx at 3") {
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(3.0));
        Var y = ad::square(x);
        CHECK(tape.grad(y, std::vector<Var>{x})[0][0] == 6.0);
    }
    SUBCASE("d(sum(A x))/dx is the column sums of A") {
        RandomSource rs(1);
        const Tensor A = rs.gaussian({4, 3});
        Tape tape;
        Var a = tape.leaf(A);
        Var x = tape.leaf(rs.gaussian({3, 1}));
        Var y = ad::sum(ad::matmul(a, x));
        const Tensor g = tape.grad(y, std::vector<Var>{x})[0];
        const Tensor cols = reduce_sum(A, 0);
        for (std::size_t j = 0; j < 3; ++j) CHECK(g[j] == doctest::Approx(cols[j]).epsilon(1e-14));
    }
    SUBCASE("non-scalar output is rejected") {
        Tape tape;
        Var x = tape.leaf(Tensor::vector({1, 2}));
        CHECK_THROWS_AS((void)tape.grad(ad::square(x), std::vector<Var>{x}), Error);
    }
    SUBCASE("disconnected input receives zero gradient") {
        Tape tape;
        Var x = tape.leaf(Tensor::vector({1, 2}));
        Var unused = tape.leaf(Tensor::vector({5, 6, 7}));
        const auto g = tape.grad(ad::sum(ad::square(x)), std::vector<Var>{x, unused});
        CHECK(g[1] == Tensor({3}, 0.0));
    }
    SUBCASE("parents precede children and replay reproduces values") {
        RandomSource rs(2);
        Tape tape;
        Var x = tape.leaf(rs.gaussian({5, 4}));
        Var w = tape.leaf(rs.gaussian({3, 4}));
        Var b = tape.leaf(rs.gaussian({3}));
        Var y = ad::mean(ad::softplus(ad::leaky_relu(ad::dense(x, w, b))));
        (void)y;
        for (std::size_t i = 0; i < tape.size(); ++i)
            for (std::size_t p : tape.parents(i)) CHECK(p < i);
        const auto replayed = tape.replay();
        for (std::size_t i = 0; i < tape.size(); ++i) CHECK(replayed[i] == tape.value(Var{&tape, i}));
    }
}

TEST_CASE("elementwise and dense ops match finite differences") {
    RandomSource rs(17);
    struct Case {
        const char* name;
        std::function<Var(Tape&, const std::vector<Var>&)> build;
        std::vector<Shape> shapes;
    };
    const std::vector<Case> cases = {
        {"dense", [](Tape&, const auto& v) { return ad::dense(v[0], v[1], v[2]); }, {{4, 3}, {5, 3}, {5}}},
        {"matmul", [](Tape&, const auto& v) { return ad::matmul(v[0], v[1]); }, {{3, 4}, {4, 2}}},
        {"mul", [](Tape&, const auto& v) { return ad::mul(v[0], v[1]); }, {{6}, {6}}},
        {"sub", [](Tape&, const auto& v) { return ad::sub(v[0], v[1]); }, {{6}, {6}}},
        {"mul_scalar", [](Tape&, const auto& v) { return ad::mul_scalar(v[0], v[1]); }, {{2, 3}, {1}}},
        {"softplus", [](Tape&, const auto& v) { return ad::softplus(v[0]); }, {{7}}},
        {"sigmoid", [](Tape&, const auto& v) { return ad::sigmoid(v[0]); }, {{7}}},
        {"leaky_relu", [](Tape&, const auto& v) { return ad::leaky_relu(v[0]); }, {{9}}},
        {"conv2d", [](Tape&, const auto& v) { return ad::conv2d(v[0], v[1], v[2]); }, {{2, 2, 4, 3}, {3, 2, 3, 3}, {3}}},
        {"upsample2x", [](Tape&, const auto& v) { return ad::upsample2x(v[0]); }, {{1, 2, 2, 3}}},
        {"row_sum", [](Tape&, const auto& v) { return ad::row_sum(v[0]); }, {{3, 2, 2}}},
    };
    for (const Case& c : cases) {
        CAPTURE(c.name);
        std::vector<Tensor> inputs;
        for (const Shape& s : c.shapes) inputs.push_back(rs.gaussian(s));
        // Weighted sum so every output entry contributes a distinct amount.
        auto build_loss = [&](Tape& tape, const std::vector<Var>& vars) {
            Var out = c.build(tape, vars);
            Tensor weights(out.shape());
            for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::sin(1.0 + static_cast<double>(i));
            return ad::sum(ad::mul(out, tape.leaf(weights)));
        };
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
        const auto analytic = tape.grad(build_loss(tape, vars), vars);
        const auto numeric = oracle::finite_difference_grad(
            [&](const std::vector<Tensor>& in) {
                Tape t;
                std::vector<Var> vs;
                for (const Tensor& x : in) vs.push_back(t.leaf(x));
                return build_loss(t, vs).value()[0];
            },
            inputs);
        CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);
    }
}

TEST_CASE("leaky relu derivative at zero uses the left slope") {
    Tape tape;
    Var x = tape.leaf(Tensor::vector({0.0, 1.0, -1.0}));
    const Tensor g = tape.grad(ad::sum(ad::leaky_relu(x)), std::vector<Var>{x})[0];
    CHECK(g == Tensor::vector({0.2, 1.0, 0.2}));
}

TEST_CASE("svd") {
    auto check_svd = [](const Tensor& m) {
        const Svd d = svd(m);
        const std::size_t k = d.singular_values.size();
        for (std::size_t i = 0; i + 1 < k; ++i) CHECK(d.singular_values[i] >= d.singular_values[i + 1]);
        for (double s : d.singular_values) CHECK(s >= 0.0);
        Tensor us = d.u;
        for (std::size_t i = 0; i < us.dim(0); ++i)
            for (std::size_t j = 0; j < k; ++j) us(i, j) *= d.singular_values[j];
        const Tensor rebuilt = matmul_transposed(us, d.v);
        CHECK(max_abs_diff(rebuilt, m) <= 1e-8 * (1.0 + max_abs(m)));
        CHECK(max_abs_diff(transposed_matmul(d.u, d.u), Tensor::identity(k)) <= 1e-8);
        CHECK(max_abs_diff(transposed_matmul(d.v, d.v), Tensor::identity(k)) <= 1e-8);
        return d;
    };
    CHECK(check_svd(Tensor::matrix(2, 2, {3, 0, 0, 1})).singular_values == std::vector<double>{3, 1});
    CHECK(check_svd(Tensor::identity(4)).singular_values == std::vector<double>{1, 1, 1, 1});
    RandomSource rs(5);
    check_svd(rs.gaussian({5, 3}));
    check_svd(rs.gaussian({3, 7}));
    check_svd(Tensor({3, 3}, 0.0));
    // Rank-deficient input keeps orthonormal factors.
    const Svd low = check_svd(matmul(rs.gaussian({6, 2}), rs.gaussian({2, 6})));
    CHECK(low.singular_values[2] < 1e-12 * low.singular_values[0]);
    CHECK_THROWS_AS(svd(Tensor::vector({1, 2, 3})), ShapeError);

    SUBCASE("random matrices up to 40x40") {
        for (int t = 0; t < 10; ++t) check_svd(rs.gaussian({1 + rs.below(40), 1 + rs.below(40)}));
    }
}

TEST_CASE("symmetric eigen decomposition") {
    RandomSource rs(8);
    const Tensor g = rs.gaussian({5, 5});
    const Tensor s = add(g, transpose(g));
    const SymmetricEigen e = symmetric_eigen(s);
    Tensor vl = e.vectors;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) vl(i, j) *= e.values[j];
    CHECK(max_abs_diff(matmul_transposed(vl, e.vectors), s) < 1e-10);
    for (std::size_t i = 0; i + 1 < 5; ++i) CHECK(e.values[i] >= e.values[i + 1]);
}

TEST_CASE("pca strengths") {
    RandomSource rs(21);
    SUBCASE("samples on a 2-plane in 5-space") {
        const Tensor basis = rs.gaussian({2, 5});
        const Tensor pts = matmul(rs.gaussian({500, 2}), basis);
        const auto s = pca_strengths(pts);
        CHECK(s.size() == 5);
        CHECK(s[1] > 1e-3);
        for (std::size_t i = 2; i < 5; ++i) CHECK(s[i] <= 1e-10);
    }
    SUBCASE("isotropic gaussian") {
        const auto s = pca_strengths(rs.gaussian({100000, 3}));
        for (double v : s) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(0.03));
        double total = 0.0;
        for (double v : s) total += v;
        CHECK(std::abs(total - 1.0) <= 1e-12);
        CHECK(s[0] >= s[1]);
        CHECK(s[1] >= s[2]);
    }
    SUBCASE("degenerate inputs") {
        CHECK_THROWS_WITH_AS(pca_strengths(Tensor({10, 3}, 0.7)), doctest::Contains("degenerate covariance"), Error);
        CHECK_THROWS_AS(pca_strengths(Tensor({1, 3}, 0.7)), Error);
    }
}

TEST_CASE("parallel_for results are independent of thread count") {
    auto run = [](unsigned threads) {
        std::vector<double> slots(64);
        parallel_for(slots.size(), threads, [&](std::size_t i) {
            RandomSource rs = RandomSource(9).child(i);
            slots[i] = mean(rs.gaussian({100}));
        });
        return slots;
    };
    CHECK(run(1) == run(4));
    CHECK_THROWS_AS(parallel_for(4, 2, [](std::size_t i) { if (i == 2) throw Error("boom"); }), Error);
}
