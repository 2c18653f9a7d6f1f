#include <cmath>
#include <numbers>

#include "doctest.h"
#include "noisegeo/harness.hpp"
#include "noisegeo/linalg.hpp"

using namespace noisegeo;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.generator_widths = {8, 8};
    cfg.channels = 2;
    cfg.discriminator_widths = {8, 8};
    cfg.batch_size = 16;
    cfg.steps = 20;
    cfg.metric_every = 10;
    cfg.eval_samples = 400;
    cfg.path_length_paths = 200;
    cfg.grad_probes = 16;
    cfg.condition_pairs = 2000;
    return cfg;
}

double squared_distance(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

Tensor output_at(const Network& gen, const Tensor& z) { return forward(gen, z).output; }

}  // namespace

TEST_CASE("annulus samples lie between the radii") {
    RandomSource rs(1);
    const Tensor x = sample_dataset(DatasetSpec::annulus(1.0, 2.0), 5000, rs);
    CHECK(x.shape() == Shape{5000, 2});
    std::size_t inner_half = 0;
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        const double r = std::hypot(x(i, 0), x(i, 1));
        CHECK(r >= 1.0);
        CHECK(r <= 2.0);
        inner_half += r < std::sqrt(2.5) ? 1 : 0;
    }
    // uniform by area: half the mass below sqrt((1 + 4) / 2)
    CHECK(std::abs(static_cast<double>(inner_half) / 5000.0 - 0.5) < 0.03);
}

TEST_CASE("embedded sphere spans three ambient directions") {
    RandomSource rs(2);
    const Tensor x = sample_dataset(DatasetSpec::embedded_sphere(2, 5), 3000, rs);
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        CHECK(std::hypot(x(i, 0), x(i, 1), x(i, 2)) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(x(i, 3) == 0.0);
        CHECK(x(i, 4) == 0.0);
    }
    CHECK(cloud_intrinsic_dim(x) == 3);
}

TEST_CASE("gaussian ring samples cluster at the mode centers") {
    RandomSource rs(3);
    const DatasetSpec spec = DatasetSpec::gaussian_ring(8, 0.05);
    const Tensor x = sample_dataset(spec, 10000, rs);
    const Tensor centers = mode_centers(spec);
    std::size_t near = 0;
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        bool hit = false;
        for (std::size_t k = 0; k < 8; ++k) hit = hit || std::hypot(x(i, 0) - centers(k, 0), x(i, 1) - centers(k, 1)) <= 4 * 0.05;
        near += hit ? 1 : 0;
    }
    CHECK(static_cast<double>(near) >= 0.99 * 10000);
    CHECK(modes_hit(spec, x) == 8);
    Tensor one_mode({100, 2});
    for (std::size_t i = 0; i < 100; ++i) one_mode(i, 0) = 1.0;
    CHECK(modes_hit(spec, one_mode) == 1);
}

TEST_CASE("dataset and config validation") {
    RandomSource rs(4);
    CHECK_THROWS_AS((void)sample_dataset(DatasetSpec::annulus(2.0, 1.0), 10, rs), Error);
    CHECK_THROWS_AS((void)sample_dataset(DatasetSpec::gaussian_ring(1), 10, rs), Error);
    CHECK_THROWS_AS((void)sample_dataset(DatasetSpec::embedded_sphere(3, 3), 10, rs), Error);
    CHECK_THROWS_AS((void)sample_dataset(DatasetSpec::annulus(), 0, rs), Error);
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_NOTHROW(experiment_preset().validate());
}

TEST_CASE("generator and discriminator shapes") {
    RandomSource rs(5);
    TrainConfig cfg = tiny_config();
    for (InjectionMode mode : {InjectionMode::none, InjectionMode::eni, InjectionMode::rni}) {
        cfg.injection = mode;
        const Network g = build_generator(cfg, 3, rs);
        CHECK(g.input_shape() == Shape{2});
        CHECK(g.output_shape() == Shape{3});
        CHECK(generate(g, 7, rs).shape() == Shape{7, 3});
    }
    CHECK(build_discriminator(cfg, 3, rs).output_shape() == Shape{1});
    cfg.injection = InjectionMode::rni;
    cfg.variant = RniVariant::cnn_sigma;
    CHECK(injection_label(cfg) == "rni-cnn-sigma");
}

TEST_CASE("adam") {
    Tensor x({2}, 0.0);
    Adam opt(0.1, 0.9, 0.999);
    opt.step({&x}, {Tensor({2}, std::vector<double>{3.0, -0.5})});
    // the first bias-corrected step has magnitude lr in every coordinate
    CHECK(x[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(x[1] == doctest::Approx(0.1).epsilon(1e-6));
    for (int i = 0; i < 2000; ++i) {
        Tensor g({2});
        g[0] = 2.0 * (x[0] - 1.0);
        g[1] = 2.0 * (x[1] + 2.0);
        opt.step({&x}, {g});
    }
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-3));
    CHECK_THROWS_AS(opt.step({&x}, {Tensor({3})}), ShapeError);
}

TEST_CASE("zero training steps reports initial metrics only") {
    TrainConfig cfg = tiny_config();
    cfg.steps = 0;
    const TrainReport r = train_gan(cfg, DatasetSpec::annulus());
    REQUIRE(r.timeline.size() == 1);
    CHECK(r.timeline[0].step == 0);
    CHECK(r.steps_completed == 0);
    CHECK(r.d_losses.empty());
    CHECK_FALSE(r.diverged);
    CHECK(std::isfinite(r.timeline[0].js));
    CHECK(std::isfinite(r.condition.mc));
}

TEST_CASE("training timeline and determinism") {
    TrainConfig cfg = tiny_config();
    cfg.injection = InjectionMode::rni;
    const TrainReport a = train_gan(cfg, DatasetSpec::annulus());
    CHECK(a.steps_completed == 20);
    CHECK(a.d_losses.size() == 20);
    REQUIRE(a.timeline.size() == 3);
    for (std::size_t i = 1; i < a.timeline.size(); ++i) CHECK(a.timeline[i].step > a.timeline[i - 1].step);
    for (const MetricSnapshot& m : a.timeline) {
        CHECK(std::isfinite(m.js));
        CHECK(m.js >= 0.0);
        CHECK(m.js <= std::numbers::ln2);
        CHECK(std::isfinite(m.frechet));
        CHECK(std::isfinite(m.path_length));
        CHECK(m.grad_proxy > 0.0);
    }
    CHECK(a.condition.ttmc >= a.condition.mc);

    cfg.threads = 3;
    const TrainReport b = train_gan(cfg, DatasetSpec::annulus());
    CHECK(train_report_to_json(a).dump() == train_report_to_json(b).dump());
    CHECK(timeline_csv(a) == timeline_csv(b));
    cfg.seed = 1;
    CHECK(train_report_to_json(train_gan(cfg, DatasetSpec::annulus())).dump() != train_report_to_json(a).dump());
}

TEST_CASE("report serialization") {
    TrainConfig cfg = tiny_config();
    cfg.steps = 10;
    const TrainReport r = train_gan(cfg, DatasetSpec::gaussian_ring());
    const nlohmann::json doc = train_report_to_json(r);
    for (const char* key : {"config", "data", "diverged", "js", "frechet", "path_length", "mc", "ttmc", "discarded_pairs", "timeline", "generator"})
        CHECK(doc.contains(key));
    CHECK(doc["data"]["kind"] == "gaussian-ring");
    const std::string csv = timeline_csv(r);
    CHECK(csv.rfind("step,d_loss,g_loss,js,frechet,path_length,grad_proxy\n", 0) == 0);
    TrainReport empty;
    CHECK(timeline_csv(empty) == "step,d_loss,g_loss,js,frechet,path_length,grad_proxy\n");

    const Network g = network_from_json(doc["generator"]);
    RandomSource rs(6);
    const Tensor z = rs.gaussian({2});
    CHECK(output_at(g, z) == output_at(r.generator, z));
}

TEST_CASE("config json") {
    TrainConfig cfg = experiment_preset();
    cfg.injection = InjectionMode::rni;
    cfg.variant = RniVariant::no_stabilization;
    cfg.generator_widths = {5, 6, 7};
    cfg.seed = 99;
    const TrainConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK(back.variant == RniVariant::no_stabilization);
    CHECK_THROWS_AS((void)config_from_json(nlohmann::json{{"stepz", 3}}), Error);
    CHECK_THROWS_AS((void)config_from_json(nlohmann::json{{"steps", "many"}}), Error);
    CHECK_THROWS_AS((void)config_from_json(nlohmann::json{{"batch_size", 0}}), Error);
    CHECK_THROWS_AS((void)config_from_json(nlohmann::json{{"variant", "partial"}}), Error);
    CHECK(config_from_json(nlohmann::json{{"threads", 4}}).threads == 4);

    for (const DatasetSpec& d : {DatasetSpec::annulus(0.5, 3.0), DatasetSpec::gaussian_ring(5, 0.1), DatasetSpec::embedded_sphere(3, 6, 0.01)})
        CHECK(dataset_to_json(dataset_from_json(dataset_to_json(d))) == dataset_to_json(d));
    CHECK_THROWS_AS((void)dataset_from_json(nlohmann::json{{"kind", "torus"}}), Error);
    CHECK_THROWS_AS((void)dataset_from_json(nlohmann::json{{"kind", "annulus"}, {"r_inner", 3.0}}), Error);
}

TEST_CASE("collapse rule and tables") {
    CHECK(collapse_flag(0.0, 5.0));
    CHECK(collapse_flag(0.0, 0.0));
    CHECK(collapse_flag(std::nan(""), 5.0));
    CHECK(collapse_flag(4e-3, 5.0));
    CHECK_FALSE(collapse_flag(6e-3, 5.0));
    CHECK_FALSE(collapse_flag(5.0, 5.0));

    std::vector<ComparisonRow> rows{{"full", 1.5, 0.1, 0.2, 1.0, 2.0, false, false},
                                    {"no-stabilization", 0.0, 0.3, 0.6, 0.5, 0.7, true, false}};
    const std::string csv = table_csv(rows, "variant");
    CHECK(csv == "variant,path_length,frechet,js,mc,ttmc,collapse,diverged\n"
                 "full,1.5,0.10000000000000001,0.20000000000000001,1,2,false,false\n"
                 "no-stabilization,0,0.29999999999999999,0.59999999999999998,0.5,0.69999999999999996,true,false\n");
    CHECK(table_csv(rows, "mode").rfind("mode,path_length,frechet,js,mc,ttmc\nfull,", 0) == 0);
    CHECK(table_to_json(rows)[1]["name"] == "no-stabilization");
}

TEST_CASE("fnv1a") {
    CHECK(fnv1a("") == 14695981039346656037ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("linear inversion recovers the latent") {
    RandomSource rs(7);
    const Tensor a = rs.gaussian({4, 3});
    const Network g({3}, {Dense{a, rs.gaussian({4})}});
    const Tensor z_star({3}, std::vector<double>{0.5, -1.0, 0.25});
    const Tensor target = output_at(g, z_star);

    InversionOptions none;
    none.steps = 0;
    const InversionReport r0 = invert_latent(g, target, none);
    REQUIRE(r0.mse.size() == 1);
    CHECK(r0.final_mse == doctest::Approx(squared_distance(output_at(g, Tensor({3}, 0.0)), target)).epsilon(1e-12));

    const InversionReport r = invert_latent(g, target);
    CHECK(r.mse.size() == 501);
    CHECK(r.final_mse <= 1e-8);
    CHECK(max_abs_diff(r.latent, z_star) < 1e-3);
    for (double v : r.mse) CHECK(v >= 0.0);
    CHECK_FALSE(r.aborted);
    CHECK_THROWS_AS((void)invert_latent(g, Tensor({3})), ShapeError);
}

TEST_CASE("nonlinear inversion") {
    RandomSource rs(8);
    const Network g({2}, {make_dense(2, 16, rs), LeakyRelu{}, make_dense(16, 16, rs), LeakyRelu{}, make_dense(16, 3, rs)});
    const Tensor z_star({2}, std::vector<double>{0.6, -0.4});
    const InversionReport r = invert_latent(g, output_at(g, z_star));
    CHECK(r.final_mse <= 1e-3);
    CHECK(r.final_mse < r.mse.front());
}

TEST_CASE("inversion with alpha reparameterization") {
    RandomSource rs(9);
    TrainConfig cfg = tiny_config();
    cfg.injection = InjectionMode::rni;
    const Network g = build_generator(cfg, 2, rs);
    const Tensor target({2}, std::vector<double>{0.3, -0.2});
    InversionOptions o;
    o.steps = 50;
    o.optimize_alpha = true;
    const InversionReport r = invert_latent(g, target, o);
    CHECK(r.t != 1.0);
    CHECK(r.final_mse <= r.mse.front());
    o.optimize_alpha = false;
    CHECK(invert_latent(g, target, o).t == 1.0);

    Tensor bad({2}, 0.0);
    bad[0] = std::nan("");
    const InversionReport aborted = invert_latent(g, bad, o);
    CHECK(aborted.aborted);
    CHECK(aborted.mse.size() == 1);
}

TEST_CASE("generator condition pins injected noise per pair") {
    RandomSource rs(10);
    TrainConfig cfg = tiny_config();
    cfg.injection = InjectionMode::eni;
    const Network g = build_generator(cfg, 2, rs);
    ConditionOptions o;
    o.pairs = 3000;
    RandomSource a(11), b(11);
    const ConditionReport r = generator_condition(g, a, o);
    CHECK(std::isfinite(r.mc));
    CHECK(r.ttmc >= r.mc);
    // with unpinned noise the output change would be dominated by the noise
    CHECK(r.mc < 50.0);
    o.threads = 2;
    CHECK(generator_condition(g, b, o).mc == r.mc);
}

TEST_CASE("trained generator condition golden values") {
    TrainConfig cfg = tiny_config();
    cfg.steps = 50;
    cfg.seed = 42;
    cfg.injection = InjectionMode::rni;
    const TrainReport r = train_gan(cfg, DatasetSpec::annulus());
    CHECK(r.condition.mc == doctest::Approx(0.21312688542313044).epsilon(1e-9));
    CHECK(r.condition.ttmc == doctest::Approx(0.36001558346758422).epsilon(1e-9));
}

TEST_CASE("deterministic generator covers every ring mode") {
    TrainConfig cfg = experiment_preset();
    cfg.metric_every = cfg.steps;
    cfg.condition_pairs = 100;
    const DatasetSpec ring = DatasetSpec::gaussian_ring();
    const TrainReport r = train_gan(cfg, ring);
    RandomSource rs(12);
    CHECK(modes_hit(ring, generate(r.generator, 10000, rs)) == 8);
}
