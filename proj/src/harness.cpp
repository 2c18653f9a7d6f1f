#include "noisegeo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "noisegeo/parallel.hpp"

namespace noisegeo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Tensor*> parameter_pointers(Network& net) {
    std::vector<Tensor*> out;
    for (const ParamRef& p : net.parameters()) out.push_back(p.tensor);
    return out;
}

Var mean_softplus(Var logits, double sign) { return ad::mean(ad::softplus(ad::scale(logits, sign))); }

Tensor first_columns(const Tensor& m, std::size_t k) {
    if (m.dim(1) <= k) return m;
    Tensor out({m.dim(0), k});
    for (std::size_t i = 0; i < m.dim(0); ++i)
        for (std::size_t j = 0; j < k; ++j) out(i, j) = m(i, j);
    return out;
}

std::vector<Shape> injection_shapes(const Network& gen) {
    std::vector<Shape> out;
    for (const LayerSpec& l : gen.layers())
        if (const auto* j = std::get_if<Inject>(&l)) out.push_back({j->feature[1], j->feature[2]});
    return out;
}

Tensor flat_forward(const Network& gen, const Tensor& zs, Noise noise) {
    const std::size_t b = zs.dim(0);
    Shape s{b};
    s.insert(s.end(), gen.input_shape().begin(), gen.input_shape().end());
    const Tensor out = forward(gen, zs.reshaped(s), std::move(noise)).output;
    return out.reshaped({b, out.size() / b});
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

MetricSnapshot evaluate(const Network& gen, const DatasetSpec& data, const TrainConfig& cfg, RandomSource es) {
    MetricSnapshot m;
    RandomSource sample_stream = es.child(1), data_stream = es.child(2), pl_stream = es.child(3), probe_stream = es.child(4);
    const Tensor fake = generate(gen, cfg.eval_samples, sample_stream);
    if (!fake.all_finite()) {
        m.js = m.frechet = m.path_length = m.grad_proxy = kNaN;
        return m;
    }
    const Tensor real = sample_dataset(data, cfg.eval_samples, data_stream);
    m.js = js_histogram(first_columns(real, 3), first_columns(fake, 3));
    m.frechet = frechet_gaussian(real, fake);
    PathLengthOptions pl;
    pl.paths = cfg.path_length_paths;
    pl.threads = cfg.threads;
    m.path_length = path_length(gen, pl_stream, pl);
    m.grad_proxy = gradient_proxy(gen, probe_stream.gaussian({cfg.grad_probes, cfg.latent_dim}), probe_stream);
    return m;
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

DatasetSpec DatasetSpec::annulus(double r_inner, double r_outer) {
    DatasetSpec s;
    s.kind = Kind::annulus;
    s.r_inner = r_inner;
    s.r_outer = r_outer;
    return s;
}

DatasetSpec DatasetSpec::gaussian_ring(std::size_t modes, double mode_std) {
    DatasetSpec s;
    s.kind = Kind::gaussian_ring;
    s.modes = modes;
    s.mode_std = mode_std;
    return s;
}

DatasetSpec DatasetSpec::embedded_sphere(std::size_t d, std::size_t m, double noise_std) {
    DatasetSpec s;
    s.kind = Kind::embedded_sphere;
    s.sphere_dim = d;
    s.ambient = m;
    s.noise_std = noise_std;
    return s;
}

void DatasetSpec::validate() const {
    switch (kind) {
        case Kind::annulus:
            if (!(r_inner >= 0.0 && r_inner < r_outer)) throw Error("annulus: need 0 <= r_inner < r_outer");
            break;
        case Kind::gaussian_ring:
            if (modes < 2) throw Error("gaussian ring: need at least two modes");
            if (!(mode_std > 0.0) || !(ring_radius > 0.0)) throw Error("gaussian ring: std and radius must be positive");
            break;
        case Kind::embedded_sphere:
            if (sphere_dim < 1 || sphere_dim >= ambient) throw Error("embedded sphere: need 1 <= d < m");
            if (!(noise_std >= 0.0)) throw Error("embedded sphere: negative noise");
            break;
    }
}

std::size_t DatasetSpec::ambient_dim() const { return kind == Kind::embedded_sphere ? ambient : 2; }

std::string_view DatasetSpec::name() const {
    switch (kind) {
        case Kind::annulus: return "annulus";
        case Kind::gaussian_ring: return "gaussian-ring";
        case Kind::embedded_sphere: return "embedded-sphere";
    }
    return "?";
}

Tensor sample_dataset(const DatasetSpec& spec, std::size_t n, RandomSource& rs) {
    spec.validate();
    if (n == 0) throw Error("sample_dataset: n must be at least 1");
    const double two_pi = 2.0 * std::numbers::pi;
    Tensor out({n, spec.ambient_dim()}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        switch (spec.kind) {
            case DatasetSpec::Kind::annulus: {
                const double r = std::sqrt(rs.uniform(spec.r_inner * spec.r_inner, spec.r_outer * spec.r_outer));
                const double t = two_pi * rs.uniform();
                out(i, 0) = r * std::cos(t);
                out(i, 1) = r * std::sin(t);
                break;
            }
            case DatasetSpec::Kind::gaussian_ring: {
                const double t = two_pi * static_cast<double>(rs.below(spec.modes)) / static_cast<double>(spec.modes);
                out(i, 0) = spec.ring_radius * std::cos(t) + spec.mode_std * rs.normal();
                out(i, 1) = spec.ring_radius * std::sin(t) + spec.mode_std * rs.normal();
                break;
            }
            case DatasetSpec::Kind::embedded_sphere: {
                const std::size_t k = spec.sphere_dim + 1;
                double len = 0.0;
                while (len < 1e-12) {
                    len = 0.0;
                    for (std::size_t j = 0; j < k; ++j) {
                        out(i, j) = rs.normal();
                        len += out(i, j) * out(i, j);
                    }
                    len = std::sqrt(len);
                }
                for (std::size_t j = 0; j < k; ++j) out(i, j) /= len;
                if (spec.noise_std > 0.0)
                    for (std::size_t j = 0; j < spec.ambient; ++j) out(i, j) += spec.noise_std * rs.normal();
                break;
            }
        }
    }
    return out;
}

Tensor mode_centers(const DatasetSpec& spec) {
    if (spec.kind != DatasetSpec::Kind::gaussian_ring) throw Error("mode_centers: not a gaussian ring");
    Tensor out({spec.modes, 2});
    for (std::size_t k = 0; k < spec.modes; ++k) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.modes);
        out(k, 0) = spec.ring_radius * std::cos(t);
        out(k, 1) = spec.ring_radius * std::sin(t);
    }
    return out;
}

std::size_t modes_hit(const DatasetSpec& spec, const Tensor& samples, double min_fraction) {
    const Tensor centers = mode_centers(spec);
    std::vector<std::size_t> counts(spec.modes, 0);
    const double radius = 3.0 * spec.mode_std;
    for (std::size_t i = 0; i < samples.dim(0); ++i)
        for (std::size_t k = 0; k < spec.modes; ++k)
            if (std::hypot(samples(i, 0) - centers(k, 0), samples(i, 1) - centers(k, 1)) <= radius) ++counts[k];
    std::size_t hit = 0;
    for (std::size_t c : counts) hit += static_cast<double>(c) >= min_fraction * static_cast<double>(samples.dim(0)) ? 1 : 0;
    return hit;
}

void TrainConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw Error(std::string("config: ") + name + " must be positive");
    };
    positive(latent_dim, "latent_dim");
    positive(channels, "channels");
    positive(batch_size, "batch_size");
    positive(metric_every, "metric_every");
    positive(eval_samples, "eval_samples");
    positive(path_length_paths, "path_length_paths");
    positive(grad_probes, "grad_probes");
    positive(condition_pairs, "condition_pairs");
    if (generator_widths.empty() || discriminator_widths.empty()) throw Error("config: layer widths must not be empty");
    for (std::size_t w : generator_widths) positive(w, "generator width");
    for (std::size_t w : discriminator_widths) positive(w, "discriminator width");
    if (!(learning_rate > 0.0)) throw Error("config: learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw Error("config: moment decays must lie in (0, 1)");
    if (eval_samples < 4) throw Error("config: eval_samples must be at least 4");
}

TrainConfig experiment_preset() {
    TrainConfig cfg;
    cfg.learning_rate = 2e-4;
    cfg.beta1 = 0.5;
    cfg.steps = 6000;
    return cfg;
}

std::string injection_label(const TrainConfig& cfg) {
    if (cfg.injection == InjectionMode::rni) return "rni-" + std::string(variant_name(cfg.variant));
    return std::string(mode_name(cfg.injection));
}

Network build_generator(const TrainConfig& cfg, std::size_t ambient, RandomSource& rs) {
    const std::size_t c = cfg.channels;
    std::vector<LayerSpec> layers;
    std::size_t width = cfg.latent_dim;
    for (std::size_t w : cfg.generator_widths) {
        layers.push_back(make_dense(width, w, rs));
        layers.push_back(LeakyRelu{});
        width = w;
    }
    layers.push_back(make_dense(width, c * 16, rs));
    layers.push_back(LeakyRelu{});
    layers.push_back(Reshape{{c, 4, 4}});
    if (cfg.injection == InjectionMode::eni) layers.push_back(Inject::eni({c, 4, 4}, 1.0));
    if (cfg.injection == InjectionMode::rni) layers.push_back(Inject::rni({c, 4, 4}, cfg.variant, rs));
    layers.push_back(Upsample2x{});
    layers.push_back(make_conv(c, c, rs));
    layers.push_back(LeakyRelu{});
    layers.push_back(Reshape{{c * 64}});
    layers.push_back(make_dense(c * 64, ambient, rs));
    return Network({cfg.latent_dim}, std::move(layers));
}

Network build_discriminator(const TrainConfig& cfg, std::size_t ambient, RandomSource& rs) {
    std::vector<LayerSpec> layers;
    std::size_t width = ambient;
    for (std::size_t w : cfg.discriminator_widths) {
        layers.push_back(make_dense(width, w, rs));
        layers.push_back(LeakyRelu{});
        width = w;
    }
    layers.push_back(make_dense(width, 1, rs));
    return Network({ambient}, std::move(layers));
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw Error("adam: parameter and gradient counts differ");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(p->shape(), 0.0);
            v_.emplace_back(p->shape(), 0.0);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (g.shape() != p.shape()) throw ShapeError("adam: gradient " + to_string(g.shape()) + " does not match " + to_string(p.shape()));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g[i];
            v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g[i] * g[i];
            p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        }
    }
}

Tensor generate(const Network& gen, std::size_t n, RandomSource& rs) {
    const std::size_t block = 4096;
    const std::size_t latent = shape_size(gen.input_shape());
    const std::size_t m = shape_size(gen.output_shape());
    Tensor out({n, m});
    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t count = std::min(block, n - start);
        const Tensor z = rs.gaussian({count, latent});
        const Tensor x = flat_forward(gen, z, Noise::stochastic(rs));
        std::copy(x.data().begin(), x.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * m));
    }
    return out;
}

ConditionReport generator_condition(const Network& gen, RandomSource& rs, const ConditionOptions& options) {
    const std::vector<Shape> shapes = injection_shapes(gen);
    const PairedMap f = [&gen, &shapes](const Tensor& x, const Tensor& y, RandomSource& stream) {
        std::vector<Tensor> eps;
        for (const Shape& s : shapes) eps.push_back(stream.gaussian({x.dim(0), s[0], s[1]}));
        return std::make_pair(flat_forward(gen, x, Noise::pinned(eps)), flat_forward(gen, y, Noise::pinned(eps)));
    };
    return condition_metrics(f, gaussian_sampler(shape_size(gen.input_shape())), rs, options);
}

TrainReport train_gan(const TrainConfig& cfg, const DatasetSpec& data) {
    cfg.validate();
    data.validate();
    const auto started = std::chrono::steady_clock::now();
    const std::size_t ambient = data.ambient_dim();
    const RandomSource root(cfg.seed);
    RandomSource init = root.child(fnv1a("init"));
    RandomSource train = root.child(fnv1a("train"));
    const RandomSource eval = root.child(fnv1a("eval"));

    TrainReport report;
    report.config = cfg;
    report.data = data;
    report.generator = build_generator(cfg, ambient, init);
    report.discriminator = build_discriminator(cfg, ambient, init);
    Network& gen = report.generator;
    Network& disc = report.discriminator;
    Adam gen_opt(cfg.learning_rate, cfg.beta1, cfg.beta2);
    Adam disc_opt(cfg.learning_rate, cfg.beta1, cfg.beta2);

    auto batch_shape = [&](std::size_t b) { return Shape{b, cfg.latent_dim}; };

    auto losses = [&](RandomSource& rs, bool update) {
        const std::size_t b = cfg.batch_size;
        const Tensor real = sample_dataset(data, b, rs);
        const Tensor fake = flat_forward(gen, rs.gaussian(batch_shape(b)), Noise::stochastic(rs));
        double d_loss = 0.0;
        {
            Tape tape;
            const BoundParameters dp = bind_parameters(tape, disc);
            Noise none = Noise::deterministic();
            Var real_logits = forward_on_tape(disc, dp, tape.leaf(real), none).output;
            Var fake_logits = forward_on_tape(disc, dp, tape.leaf(fake), none).output;
            Var loss = ad::add(mean_softplus(real_logits, -1.0), mean_softplus(fake_logits, 1.0));
            d_loss = loss.value()[0];
            if (update && std::isfinite(d_loss)) disc_opt.step(parameter_pointers(disc), tape.grad(loss, dp.vars));
        }
        double g_loss = 0.0;
        {
            Tape tape;
            const BoundParameters gp = bind_parameters(tape, gen);
            const BoundParameters dp = bind_parameters(tape, disc);
            Noise noise = Noise::stochastic(rs);
            Noise none = Noise::deterministic();
            Var out = forward_on_tape(gen, gp, tape.leaf(rs.gaussian(batch_shape(b))), noise).output;
            Var loss = mean_softplus(forward_on_tape(disc, dp, out, none).output, -1.0);
            g_loss = loss.value()[0];
            if (update && std::isfinite(g_loss) && std::isfinite(d_loss)) gen_opt.step(parameter_pointers(gen), tape.grad(loss, gp.vars));
        }
        return std::make_pair(d_loss, g_loss);
    };

    auto snapshot = [&](std::size_t step, double d_loss, double g_loss) {
        MetricSnapshot m = evaluate(gen, data, cfg, eval.child(step));
        m.step = step;
        m.d_loss = d_loss;
        m.g_loss = g_loss;
        report.timeline.push_back(m);
    };

    {
        RandomSource probe = eval.child(fnv1a("initial-loss"));
        const auto [d0, g0] = losses(probe, false);
        snapshot(0, d0, g0);
    }
    double d_sum = 0.0, g_sum = 0.0;
    std::size_t since = 0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const auto [d, g] = losses(train, true);
        report.d_losses.push_back(d);
        report.g_losses.push_back(g);
        const std::vector<ParamRef> gen_params = gen.parameters();
        const bool finite_params = std::all_of(gen_params.begin(), gen_params.end(), [](const ParamRef& p) { return p.tensor->all_finite(); });
        if (!std::isfinite(d) || !std::isfinite(g) || !finite_params) {
            report.diverged = true;
            report.steps_completed = step;
            MetricSnapshot m;
            m.step = step;
            m.d_loss = d;
            m.g_loss = g;
            m.js = m.frechet = m.path_length = m.grad_proxy = kNaN;
            report.timeline.push_back(m);
            break;
        }
        d_sum += d;
        g_sum += g;
        ++since;
        report.steps_completed = step;
        if (step % cfg.metric_every == 0 || step == cfg.steps) {
            snapshot(step, d_sum / static_cast<double>(since), g_sum / static_cast<double>(since));
            d_sum = g_sum = 0.0;
            since = 0;
        }
    }
    if (!report.diverged) {
        for (const MetricSnapshot& m : report.timeline)
            if (!std::isfinite(m.js) || !std::isfinite(m.frechet) || !std::isfinite(m.path_length) || !std::isfinite(m.grad_proxy)) report.diverged = true;
    }
    if (report.diverged) {
        report.condition.mc = report.condition.ttmc = kNaN;
    } else {
        RandomSource cond = root.child(fnv1a("condition"));
        ConditionOptions co;
        co.pairs = cfg.condition_pairs;
        co.threads = cfg.threads;
        try {
            report.condition = generator_condition(gen, cond, co);
        } catch (const Error&) {
            report.condition.mc = report.condition.ttmc = kNaN;
            report.condition.discarded_pairs = cfg.condition_pairs;
        }
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

TrapReport dimension_trap_experiment(const TrainConfig& base, const DatasetSpec& data) {
    struct ArmSpec {
        const char* name;
        std::size_t latent;
        InjectionMode mode;
    };
    const ArmSpec specs[] = {{"deterministic-n1", 1, InjectionMode::none},
                             {"deterministic-n2", 2, InjectionMode::none},
                             {"rni-n1", 1, InjectionMode::rni}};
    TrapReport report;
    report.arms.resize(3);
    parallel_for(3, base.threads, [&](std::size_t k) {
        TrainConfig cfg = base;
        cfg.latent_dim = specs[k].latent;
        cfg.injection = specs[k].mode;
        cfg.variant = RniVariant::full;
        TrapArm& arm = report.arms[k];
        arm.name = specs[k].name;
        arm.report = train_gan(cfg, data);
        arm.js = arm.report.final_metrics().js;
        double peak = 0.0;
        for (const MetricSnapshot& m : arm.report.timeline) peak = std::max(peak, m.grad_proxy);
        const double initial = arm.report.timeline.front().grad_proxy;
        arm.grad_growth = initial > 0.0 ? peak / initial : kNaN;
        if (!arm.report.diverged) {
            RandomSource rs = RandomSource(cfg.seed).child(fnv1a("local-dim"));
            IntrinsicDimOptions o;
            o.samples = 4096;
            o.center = rs.gaussian({cfg.latent_dim});
            o.scale = 1e-3;
            o.stochastic = cfg.injection != InjectionMode::none;
            arm.output_intrinsic_dim = feature_intrinsic_dim(arm.report.generator, arm.report.generator.size(), rs, o);
        }
    });
    const TrapArm& det1 = report.arms[0];
    const TrapArm& rni1 = report.arms[2];
    report.trap_floor_respected = det1.js >= std::numbers::ln2 / 2.0 - kTrapJsMargin || det1.grad_growth > kTrapGrowth;
    report.injection_escapes = rni1.js <= det1.js - kEscapeMargin;
    return report;
}

namespace {

ComparisonRow summarize(const std::string& name, const TrainReport& r) {
    const MetricSnapshot& f = r.final_metrics();
    return {name, f.path_length, f.frechet, f.js, r.condition.mc, r.condition.ttmc, false, r.diverged};
}

}  // namespace

std::vector<ComparisonRow> injection_comparison(const TrainConfig& base, const DatasetSpec& data) {
    const InjectionMode modes[] = {InjectionMode::none, InjectionMode::eni, InjectionMode::rni};
    std::vector<ComparisonRow> rows(3);
    parallel_for(3, base.threads, [&](std::size_t k) {
        TrainConfig cfg = base;
        cfg.injection = modes[k];
        cfg.variant = RniVariant::full;
        rows[k] = summarize(injection_label(cfg), train_gan(cfg, data));
    });
    return rows;
}

bool collapse_flag(double path_length, double reference_path_length) {
    return !std::isfinite(path_length) || path_length == 0.0 || path_length < 1e-3 * reference_path_length;
}

std::vector<ComparisonRow> ablation_suite(const TrainConfig& base, const DatasetSpec& data) {
    std::vector<ComparisonRow> rows(kAllRniVariants.size());
    parallel_for(rows.size(), base.threads, [&](std::size_t k) {
        TrainConfig cfg = base;
        cfg.injection = InjectionMode::rni;
        cfg.variant = kAllRniVariants[k];
        rows[k] = summarize(std::string(variant_name(cfg.variant)), train_gan(cfg, data));
    });
    const double full = rows[0].path_length;
    for (ComparisonRow& r : rows) r.collapse = collapse_flag(r.path_length, full);
    return rows;
}

InversionReport invert_latent(const Network& gen, const Tensor& target, const InversionOptions& options) {
    const std::size_t n = shape_size(gen.input_shape());
    const std::size_t m = shape_size(gen.output_shape());
    if (target.size() != m) throw ShapeError("invert_latent: target " + to_string(target.shape()) + " does not match generator output " + to_string(gen.output_shape()));
    InversionReport report;
    report.target = target;
    Tensor z({1, n}, 0.0);
    Tensor t = Tensor::scalar(1.0);
    std::vector<std::size_t> alpha_layers;
    if (options.optimize_alpha)
        for (std::size_t k = 0; k < gen.size(); ++k)
            if (const auto* j = std::get_if<Inject>(&gen.layers()[k]); j && !j->alpha_logit.is_null()) alpha_layers.push_back(k);
    Adam opt(options.learning_rate, 0.9, 0.999);
    Shape batched{1};
    batched.insert(batched.end(), gen.input_shape().begin(), gen.input_shape().end());
    const Tensor target_row = target.reshaped({1, m});

    for (std::size_t step = 0;; ++step) {
        Tape tape;
        BoundParameters params = bind_parameters(tape, gen);
        Var zv = tape.leaf(z);
        Var tv = tape.leaf(t);
        for (std::size_t k : alpha_layers) params.set(k, "alpha", ad::mul_scalar(params.get(k, "alpha"), tv));
        Noise none = Noise::deterministic();
        Var out = forward_on_tape(gen, params, ad::reshape(zv, batched), none).output;
        Var loss = ad::sum(ad::square(ad::sub(ad::reshape(out, {1, m}), tape.leaf(target_row))));
        const double value = loss.value()[0];
        report.mse.push_back(value);
        if (!std::isfinite(value)) {
            report.aborted = true;
            break;
        }
        if (step == options.steps) break;
        std::vector<Var> wrt{zv};
        if (!alpha_layers.empty()) wrt.push_back(tv);
        std::vector<Tensor> grads = tape.grad(loss, wrt);
        std::vector<Tensor*> ptrs{&z};
        if (!alpha_layers.empty()) ptrs.push_back(&t);
        opt.step(ptrs, grads);
    }
    report.latent = z.reshaped({n});
    report.final_mse = report.mse.back();
    report.t = t[0];
    return report;
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
    return {{"latent_dim", cfg.latent_dim},
            {"generator_widths", cfg.generator_widths},
            {"channels", cfg.channels},
            {"discriminator_widths", cfg.discriminator_widths},
            {"injection", mode_name(cfg.injection)},
            {"variant", variant_name(cfg.variant)},
            {"learning_rate", cfg.learning_rate},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"batch_size", cfg.batch_size},
            {"steps", cfg.steps},
            {"seed", cfg.seed},
            {"metric_every", cfg.metric_every},
            {"eval_samples", cfg.eval_samples},
            {"path_length_paths", cfg.path_length_paths},
            {"grad_probes", cfg.grad_probes},
            {"condition_pairs", cfg.condition_pairs}};
}

TrainConfig config_from_json(const nlohmann::json& doc, TrainConfig cfg) {
    if (!doc.is_object()) throw Error("config: expected a JSON object");
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "latent_dim") cfg.latent_dim = value.get<std::size_t>();
            else if (key == "generator_widths") cfg.generator_widths = value.get<std::vector<std::size_t>>();
            else if (key == "channels") cfg.channels = value.get<std::size_t>();
            else if (key == "discriminator_widths") cfg.discriminator_widths = value.get<std::vector<std::size_t>>();
            else if (key == "injection") cfg.injection = parse_mode(value.get<std::string>());
            else if (key == "variant") cfg.variant = parse_variant(value.get<std::string>());
            else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
            else if (key == "beta1") cfg.beta1 = value.get<double>();
            else if (key == "beta2") cfg.beta2 = value.get<double>();
            else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
            else if (key == "steps") cfg.steps = value.get<std::size_t>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "metric_every") cfg.metric_every = value.get<std::size_t>();
            else if (key == "eval_samples") cfg.eval_samples = value.get<std::size_t>();
            else if (key == "path_length_paths") cfg.path_length_paths = value.get<std::size_t>();
            else if (key == "grad_probes") cfg.grad_probes = value.get<std::size_t>();
            else if (key == "condition_pairs") cfg.condition_pairs = value.get<std::size_t>();
            else if (key == "threads") cfg.threads = value.get<unsigned>();
            else if (key != "data") throw Error("config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json dataset_to_json(const DatasetSpec& spec) {
    nlohmann::json out{{"kind", spec.name()}};
    switch (spec.kind) {
        case DatasetSpec::Kind::annulus:
            out["r_inner"] = spec.r_inner;
            out["r_outer"] = spec.r_outer;
            break;
        case DatasetSpec::Kind::gaussian_ring:
            out["modes"] = spec.modes;
            out["mode_std"] = spec.mode_std;
            out["ring_radius"] = spec.ring_radius;
            break;
        case DatasetSpec::Kind::embedded_sphere:
            out["sphere_dim"] = spec.sphere_dim;
            out["ambient"] = spec.ambient;
            out["noise_std"] = spec.noise_std;
            break;
    }
    return out;
}

DatasetSpec dataset_from_json(const nlohmann::json& doc) {
    try {
        const std::string kind = doc.at("kind").get<std::string>();
        DatasetSpec s;
        if (kind == "annulus") {
            s = DatasetSpec::annulus(doc.value("r_inner", 1.0), doc.value("r_outer", 2.0));
        } else if (kind == "gaussian-ring") {
            s = DatasetSpec::gaussian_ring(doc.value("modes", std::size_t{8}), doc.value("mode_std", 0.05));
            s.ring_radius = doc.value("ring_radius", 1.0);
        } else if (kind == "embedded-sphere") {
            s = DatasetSpec::embedded_sphere(doc.value("sphere_dim", std::size_t{2}), doc.value("ambient", std::size_t{5}), doc.value("noise_std", 0.0));
        } else {
            throw Error("data: unknown dataset kind '" + kind + "'");
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("data: ") + e.what());
    }
}

nlohmann::json train_report_to_json(const TrainReport& r) {
    nlohmann::json timeline = nlohmann::json::array();
    for (const MetricSnapshot& m : r.timeline)
        timeline.push_back({{"step", m.step}, {"d_loss", m.d_loss}, {"g_loss", m.g_loss}, {"js", m.js},
                            {"frechet", m.frechet}, {"path_length", m.path_length}, {"grad_proxy", m.grad_proxy}});
    const MetricSnapshot& f = r.final_metrics();
    return {{"config", config_to_json(r.config)},
            {"data", dataset_to_json(r.data)},
            {"injection", injection_label(r.config)},
            {"diverged", r.diverged},
            {"steps_completed", r.steps_completed},
            {"js", f.js},
            {"frechet", f.frechet},
            {"path_length", f.path_length},
            {"mc", r.condition.mc},
            {"ttmc", r.condition.ttmc},
            {"discarded_pairs", r.condition.discarded_pairs},
            {"timeline", timeline},
            {"d_losses", r.d_losses},
            {"g_losses", r.g_losses},
            {"generator", network_to_json(r.generator)}};
}

std::string timeline_csv(const TrainReport& r) {
    std::ostringstream out;
    out << "step,d_loss,g_loss,js,frechet,path_length,grad_proxy\n";
    for (const MetricSnapshot& m : r.timeline)
        out << m.step << ',' << format_double(m.d_loss) << ',' << format_double(m.g_loss) << ',' << format_double(m.js) << ','
            << format_double(m.frechet) << ',' << format_double(m.path_length) << ',' << format_double(m.grad_proxy) << '\n';
    return out.str();
}

nlohmann::json trap_report_to_json(const TrapReport& r) {
    nlohmann::json arms = nlohmann::json::array();
    for (const TrapArm& a : r.arms) {
        nlohmann::json arm = train_report_to_json(a.report);
        arm["name"] = a.name;
        arm["grad_growth"] = a.grad_growth;
        arm["output_intrinsic_dim"] = a.output_intrinsic_dim;
        arms.push_back(std::move(arm));
    }
    return {{"arms", arms},
            {"trap_floor_respected", r.trap_floor_respected},
            {"injection_escapes", r.injection_escapes},
            {"js_floor", std::numbers::ln2 / 2.0}};
}

nlohmann::json table_to_json(const std::vector<ComparisonRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const ComparisonRow& r : rows)
        out.push_back({{"name", r.name}, {"path_length", r.path_length}, {"frechet", r.frechet}, {"js", r.js},
                       {"mc", r.mc}, {"ttmc", r.ttmc}, {"collapse", r.collapse}, {"diverged", r.diverged}});
    return out;
}

std::string table_csv(const std::vector<ComparisonRow>& rows, std::string_view header_name) {
    const bool ablation = header_name == "variant";
    std::ostringstream out;
    out << header_name << ",path_length,frechet,js,mc,ttmc" << (ablation ? ",collapse,diverged" : "") << '\n';
    for (const ComparisonRow& r : rows) {
        out << r.name << ',' << format_double(r.path_length) << ',' << format_double(r.frechet) << ',' << format_double(r.js) << ','
            << format_double(r.mc) << ',' << format_double(r.ttmc);
        if (ablation) out << ',' << (r.collapse ? "true" : "false") << ',' << (r.diverged ? "true" : "false");
        out << '\n';
    }
    return out.str();
}

nlohmann::json inversion_to_json(const InversionReport& r) {
    return {{"target", r.target.values()}, {"latent", r.latent.values()}, {"mse", r.mse},
            {"final_mse", r.final_mse}, {"t", r.t}, {"aborted", r.aborted}};
}

}  // namespace noisegeo
