#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "noisegeo/diagnostics.hpp"
#include "noisegeo/geometry.hpp"
#include "noisegeo/harness.hpp"

namespace fs = std::filesystem;
using namespace noisegeo;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDiverged = 2;

struct ConfigError : Error {
    using Error::Error;
};

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    unsigned threads = 1;
    std::string format = "both";
};

struct Overrides {
    std::size_t steps = 0, latent_dim = 0, batch_size = 0, metric_every = 0, eval_samples = 0;
    std::string injection, variant, data;
    double learning_rate = 0.0;
};

struct Options {
    CLI::App* app = nullptr;
    Common common;
    Overrides overrides;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON config file");
    app->add_option("--seed", c.seed, "Seed (default 0)");
    app->add_option("--out", c.out, "Output directory (default $NOISEGEO_OUT or ./out)");
    app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--format", c.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
}

void add_training(CLI::App* app, Overrides& o) {
    app->add_option("--steps", o.steps, "Training steps");
    app->add_option("--latent-dim", o.latent_dim, "Latent dimension");
    app->add_option("--batch-size", o.batch_size, "Batch size");
    app->add_option("--metric-every", o.metric_every, "Metric cadence");
    app->add_option("--eval-samples", o.eval_samples, "Samples per metric snapshot");
    app->add_option("--injection", o.injection, "none, eni or rni");
    app->add_option("--variant", o.variant, "rni variant");
    app->add_option("--learning-rate", o.learning_rate, "Adam step size");
    app->add_option("--data", o.data, "annulus, gaussian-ring or embedded-sphere");
}

bool given(const CLI::App* app, const std::string& flag) { return app->count(flag) > 0; }

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse '" + path + "': " + e.what());
    }
}

struct Experiment {
    TrainConfig cfg;
    DatasetSpec data;
};

Experiment resolve(const Options& o, TrainConfig base) {
    Experiment e{base, DatasetSpec::annulus()};
    const CLI::App* app = o.app;
    try {
        if (!o.common.config.empty()) {
            const nlohmann::json doc = read_json(o.common.config);
            e.cfg = config_from_json(doc, e.cfg);
            if (doc.is_object() && doc.contains("data")) e.data = dataset_from_json(doc["data"]);
        }
        const Overrides& v = o.overrides;
        if (given(app, "--steps")) e.cfg.steps = v.steps;
        if (given(app, "--latent-dim")) e.cfg.latent_dim = v.latent_dim;
        if (given(app, "--batch-size")) e.cfg.batch_size = v.batch_size;
        if (given(app, "--metric-every")) e.cfg.metric_every = v.metric_every;
        if (given(app, "--eval-samples")) e.cfg.eval_samples = v.eval_samples;
        if (given(app, "--injection")) e.cfg.injection = parse_mode(v.injection);
        if (given(app, "--variant")) e.cfg.variant = parse_variant(v.variant);
        if (given(app, "--learning-rate")) e.cfg.learning_rate = v.learning_rate;
        if (given(app, "--data")) e.data = dataset_from_json(nlohmann::json{{"kind", v.data}});
        if (given(app, "--seed") || o.common.config.empty()) e.cfg.seed = o.common.seed;
        if (given(app, "--threads")) e.cfg.threads = o.common.threads;
        e.cfg.validate();
        e.data.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& err) {
        throw ConfigError(err.what());
    }
    return e;
}

class Output {
public:
    Output(const Common& c, std::string command) : format_(c.format), command_(std::move(command)) {
        std::string dir = c.out;
        if (dir.empty()) {
            const char* env = std::getenv("NOISEGEO_OUT");
            dir = env != nullptr && *env != '\0' ? env : "out";
        }
        dir_ = dir;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) throw ConfigError("cannot create output directory '" + dir_.string() + "'");
    }

    [[nodiscard]] bool json() const { return format_ != "csv"; }
    [[nodiscard]] bool csv() const { return format_ != "json"; }

    void write(const std::string& name, const std::string& text) const {
        const fs::path path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + path.string() + "'");
        out << text;
        if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    }

    void report(const nlohmann::json& doc) const {
        if (json()) write("report.json", doc.dump(2) + "\n");
    }

    void manifest(std::uint64_t seed, unsigned threads, const nlohmann::json& config) const {
        const std::string canonical = config.dump();
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
        const nlohmann::json doc{{"command", command_}, {"seed", seed},     {"threads", threads},
                                 {"config", config},    {"config_hash", hash}, {"version", kVersion}};
        write("manifest.json", doc.dump(2) + "\n");
    }

private:
    std::string format_;
    std::string command_;
    fs::path dir_;
};

nlohmann::json experiment_config(const Experiment& e) {
    return {{"train", config_to_json(e.cfg)}, {"data", dataset_to_json(e.data)}};
}

int run_train(const Options& o) {
    const Experiment e = resolve(o, TrainConfig{});
    const Output out(o.common, "train");
    const TrainReport r = train_gan(e.cfg, e.data);
    out.report(train_report_to_json(r));
    if (out.csv()) out.write("timeline.csv", timeline_csv(r));
    out.manifest(e.cfg.seed, e.cfg.threads, experiment_config(e));
    std::cout << "train: js " << r.final_metrics().js << " frechet " << r.final_metrics().frechet << " mc " << r.condition.mc
              << (r.diverged ? " (diverged)" : "") << "\n";
    return r.diverged ? kDiverged : kOk;
}

int run_trap(const Options& o) {
    const Experiment e = resolve(o, experiment_preset());
    const Output out(o.common, "trap");
    const TrapReport r = dimension_trap_experiment(e.cfg, e.data);
    out.report(trap_report_to_json(r));
    bool diverged = false;
    for (const TrapArm& arm : r.arms) {
        if (out.csv()) out.write("timeline-" + arm.name + ".csv", timeline_csv(arm.report));
        diverged = diverged || arm.report.diverged;
        std::cout << arm.name << ": js " << arm.js << " grad growth " << arm.grad_growth << " output dim "
                  << arm.output_intrinsic_dim << "\n";
    }
    std::cout << "trap floor respected: " << (r.trap_floor_respected ? "yes" : "no")
              << ", injection escapes: " << (r.injection_escapes ? "yes" : "no") << "\n";
    out.manifest(e.cfg.seed, e.cfg.threads, experiment_config(e));
    return diverged ? kDiverged : kOk;
}

int run_table(const Options& o, bool ablation) {
    const Experiment e = resolve(o, experiment_preset());
    const Output out(o.common, ablation ? "ablate" : "compare");
    const std::vector<ComparisonRow> rows = ablation ? ablation_suite(e.cfg, e.data) : injection_comparison(e.cfg, e.data);
    out.report(nlohmann::json{{"rows", table_to_json(rows)}});
    const std::string csv = table_csv(rows, ablation ? "variant" : "mode");
    if (out.csv()) out.write("table.csv", csv);
    out.manifest(e.cfg.seed, e.cfg.threads, experiment_config(e));
    std::cout << csv;
    bool diverged = false;
    for (const ComparisonRow& r : rows) diverged = diverged || r.diverged;
    return diverged && !ablation ? kDiverged : kOk;
}

Network load_network(const std::string& path) {
    const nlohmann::json doc = read_json(path);
    try {
        return network_from_json(doc.contains("generator") ? doc["generator"] : doc);
    } catch (const Error& err) {
        throw ConfigError("'" + path + "': " + err.what());
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError("'" + path + "': " + err.what());
    }
}

struct DiagnoseOptions {
    std::string network;
    std::size_t samples = 16;
    std::size_t pairs = 50000;
    std::size_t cloud = 51200;
};

int run_diagnose(const Options& o, const DiagnoseOptions& d) {
    if (d.network.empty()) throw ConfigError("diagnose: --network is required");
    const Network net = load_network(d.network);
    const Output out(o.common, "diagnose");
    const RandomSource root(o.common.seed);
    RandomSource probe = root.child(fnv1a("rank"));
    std::vector<Tensor> zs;
    for (std::size_t i = 0; i < d.samples; ++i) zs.push_back(probe.gaussian(net.input_shape()));
    const RankProfile profile = layer_rank_profile(net, zs);

    nlohmann::json dims = nlohmann::json::array();
    IntrinsicDimOptions io;
    io.samples = d.cloud;
    for (std::size_t depth = 0; depth <= net.size(); ++depth) {
        RandomSource rs = root.child(fnv1a("intrinsic")).child(depth);
        dims.push_back({{"depth", depth}, {"dim", feature_intrinsic_dim(net, depth, rs, io)}});
    }
    ConditionOptions co;
    co.pairs = d.pairs;
    co.threads = o.common.threads;
    RandomSource cond = root.child(fnv1a("condition"));
    const ConditionReport c = generator_condition(net, cond, co);

    nlohmann::json doc = condition_to_json(c);
    doc["rank_profile"] = rank_profile_to_json(profile);
    doc["intrinsic_dims"] = dims;
    out.report(doc);
    if (out.csv()) {
        std::ostringstream csv;
        csv << "depth,rank\n";
        for (const RankProfileEntry& e : profile.entries) csv << e.depth << ',' << e.rank << '\n';
        out.write("table.csv", csv.str());
    }
    out.manifest(o.common.seed, o.common.threads,
                 {{"network", d.network}, {"samples", d.samples}, {"pairs", d.pairs}, {"cloud", d.cloud}});
    std::cout << "diagnose: mc " << c.mc << " ttmc " << c.ttmc << "\n";
    return std::isfinite(c.mc) ? kOk : kDiverged;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": cannot parse '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
    return out;
}

struct GeometryOptions {
    std::string manifold = "circle";
    std::string radii = "1";
    std::string radius_list = "0.2,0.1,0.05";
    double skeleton_radius = 0.0;
    std::size_t coverage_samples = 100000;
};

int run_geometry(const Options& o, const GeometryOptions& g) {
    AnalyticManifold m = AnalyticManifold::circle();
    std::vector<double> radii;
    try {
        m = AnalyticManifold::parse(g.manifold, parse_list(g.radii, "--radii"));
        radii = parse_list(g.radius_list, "--radius-list");
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& err) {
        throw ConfigError(err.what());
    }
    const Output out(o.common, "geometry");
    const Tensor mu = m.dense_sample(1).front();
    std::vector<ErrorProfileRow> profile;
    try {
        profile = approx_error_profile(m, mu, radii);
    } catch (const Error& err) {
        throw ConfigError(err.what());
    }
    std::ostringstream csv;
    csv << "radius,error\n";
    char line[80];
    nlohmann::json rows = nlohmann::json::array();
    for (const ErrorProfileRow& r : profile) {
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", r.radius, r.error);
        csv << line;
        rows.push_back({{"radius", r.radius}, {"error", r.error}});
    }
    nlohmann::json doc{{"manifold", m.name()}, {"radii", m.radii()}, {"base_point", mu.values()}, {"profile", rows}};
    if (g.skeleton_radius > 0.0) {
        const RandomSource root(o.common.seed);
        RandomSource build = root.child(fnv1a("skeleton"));
        RandomSource fresh = root.child(fnv1a("coverage"));
        const SkeletonSet s = build_skeleton(m, g.skeleton_radius, build);
        const CoverageReport c = coverage_check(s, g.coverage_samples, fresh);
        doc["skeleton"] = skeleton_to_json(s);
        doc["coverage"] = {{"samples", c.samples}, {"covered", c.covered}, {"fraction", c.fraction},
                           {"worst_reconstruction_error", c.worst_reconstruction_error}};
        std::cout << "skeleton: " << s.pairs.size() << " centers, coverage " << c.fraction << "\n";
    }
    out.report(doc);
    if (out.csv()) out.write("table.csv", csv.str());
    out.manifest(o.common.seed, o.common.threads,
                 {{"manifold", g.manifold}, {"radii", g.radii}, {"radius_list", g.radius_list},
                  {"skeleton_radius", g.skeleton_radius}, {"coverage_samples", g.coverage_samples}});
    std::cout << csv.str();
    return kOk;
}

struct InvertOptions {
    std::string network;
    std::string target;
    std::string latent;
    std::size_t steps = 500;
    double learning_rate = 0.05;
    bool optimize_alpha = false;
};

int run_invert(const Options& o, const InvertOptions& v) {
    if (v.network.empty()) throw ConfigError("invert: --network is required");
    if (v.target.empty() == v.latent.empty()) throw ConfigError("invert: give exactly one of --target or --latent");
    const Network net = load_network(v.network);
    Tensor target;
    if (!v.target.empty()) {
        const std::vector<double> t = parse_list(v.target, "--target");
        target = Tensor({t.size()}, t);
    } else {
        const std::vector<double> z = parse_list(v.latent, "--latent");
        if (z.size() != shape_size(net.input_shape())) throw ConfigError("invert: --latent has the wrong length");
        const Tensor out = forward(net, Tensor(net.input_shape(), z)).output;
        target = out.reshaped({out.size()});
    }
    if (target.size() != shape_size(net.output_shape())) throw ConfigError("invert: target does not match the network output");
    const Output out(o.common, "invert");
    InversionOptions io;
    io.steps = v.steps;
    io.learning_rate = v.learning_rate;
    io.optimize_alpha = v.optimize_alpha;
    const InversionReport r = invert_latent(net, target, io);
    out.report(inversion_to_json(r));
    if (out.csv()) {
        std::ostringstream csv;
        csv << "step,mse\n";
        char line[48];
        for (std::size_t i = 0; i < r.mse.size(); ++i) {
            std::snprintf(line, sizeof line, "%zu,%.17g\n", i, r.mse[i]);
            csv << line;
        }
        out.write("timeline.csv", csv.str());
    }
    out.manifest(o.common.seed, o.common.threads,
                 {{"network", v.network}, {"target", target.values()}, {"steps", v.steps},
                  {"learning_rate", v.learning_rate}, {"optimize_alpha", v.optimize_alpha}});
    std::cout << "invert: final mse " << r.final_mse << (r.aborted ? " (aborted)" : "") << "\n";
    return r.aborted ? kDiverged : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noise injection and manifold geometry lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    app.failure_message(CLI::FailureMessage::help);

    Options train, trap, compare, ablate, diagnose, geometry, invert;
    train.app = app.add_subcommand("train", "Train one GAN");
    trap.app = app.add_subcommand("trap", "Dimension trap experiment");
    compare.app = app.add_subcommand("compare", "Compare none, eni and rni-full");
    ablate.app = app.add_subcommand("ablate", "Run every rni variant");
    diagnose.app = app.add_subcommand("diagnose", "Rank profile, intrinsic dimensions and condition of a saved network");
    geometry.app = app.add_subcommand("geometry", "Approximation error profile and skeleton coverage");
    invert.app = app.add_subcommand("invert", "Latent inversion of a saved network");

    for (Options* o : {&train, &trap, &compare, &ablate, &diagnose, &geometry, &invert}) add_common(o->app, o->common);
    for (Options* o : {&train, &trap, &compare, &ablate}) add_training(o->app, o->overrides);

    DiagnoseOptions dopt;
    diagnose.app->add_option("--network", dopt.network, "Network or train report JSON");
    diagnose.app->add_option("--samples", dopt.samples, "Latent samples for the rank profile")->check(CLI::PositiveNumber);
    diagnose.app->add_option("--pairs", dopt.pairs, "Condition pairs")->check(CLI::PositiveNumber);
    diagnose.app->add_option("--cloud", dopt.cloud, "Samples for intrinsic dimensions")->check(CLI::PositiveNumber);

    GeometryOptions gopt;
    geometry.app->add_option("--manifold", gopt.manifold, "circle, sphere or torus");
    geometry.app->add_option("--radii", gopt.radii, "Manifold radii, comma separated");
    geometry.app->add_option("--radius-list", gopt.radius_list, "Descending neighbourhood radii");
    geometry.app->add_option("--skeleton-radius", gopt.skeleton_radius, "Build and check a skeleton at this radius");
    geometry.app->add_option("--coverage-samples", gopt.coverage_samples, "Fresh samples for the coverage check");

    InvertOptions iopt;
    invert.app->add_option("--network", iopt.network, "Network or train report JSON");
    invert.app->add_option("--target", iopt.target, "Target output, comma separated");
    invert.app->add_option("--latent", iopt.latent, "Latent whose output becomes the target");
    invert.app->add_option("--steps", iopt.steps, "Optimization steps");
    invert.app->add_option("--learning-rate", iopt.learning_rate, "Adam step size");
    invert.app->add_flag("--optimize-alpha", iopt.optimize_alpha, "Co-optimize the alpha reparameterization");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*train.app) return run_train(train);
        if (*trap.app) return run_trap(trap);
        if (*compare.app) return run_table(compare, false);
        if (*ablate.app) return run_table(ablate, true);
        if (*diagnose.app) return run_diagnose(diagnose, dopt);
        if (*geometry.app) return run_geometry(geometry, gopt);
        if (*invert.app) return run_invert(invert, iopt);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDiverged;
    }
    return kConfigError;
}
