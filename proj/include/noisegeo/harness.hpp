#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "noisegeo/diagnostics.hpp"
#include "noisegeo/layers.hpp"
#include "noisegeo/random.hpp"

namespace noisegeo {

inline constexpr std::string_view kVersion = "0.1.0";

struct DatasetSpec {
    enum class Kind { annulus, gaussian_ring, embedded_sphere };
    Kind kind = Kind::annulus;

    double r_inner = 1.0;  // annulus
    double r_outer = 2.0;
    std::size_t modes = 8;  // gaussian ring, centers on the unit circle
    double mode_std = 0.05;
    double ring_radius = 1.0;
    std::size_t sphere_dim = 2;  // embedded sphere: S^d in the first d+1 of m coordinates
    std::size_t ambient = 5;
    double noise_std = 0.0;

    static DatasetSpec annulus(double r_inner = 1.0, double r_outer = 2.0);
    static DatasetSpec gaussian_ring(std::size_t modes = 8, double mode_std = 0.05);
    static DatasetSpec embedded_sphere(std::size_t d, std::size_t m, double noise_std = 0.0);

    void validate() const;
    [[nodiscard]] std::size_t ambient_dim() const;
    [[nodiscard]] std::string_view name() const;
};

/// n i.i.d. rows (n, ambient).
Tensor sample_dataset(const DatasetSpec& spec, std::size_t n, RandomSource& rs);
/// Mode centers of a gaussian ring (modes, 2).
Tensor mode_centers(const DatasetSpec& spec);
/// Modes receiving at least `min_fraction` of the samples within 3 std.
std::size_t modes_hit(const DatasetSpec& spec, const Tensor& samples, double min_fraction = 0.01);

struct TrainConfig {
    std::size_t latent_dim = 2;
    std::vector<std::size_t> generator_widths{32, 32};
    std::size_t channels = 4;  // feature map (channels, 4, 4)
    std::vector<std::size_t> discriminator_widths{64, 64};
    InjectionMode injection = InjectionMode::none;
    RniVariant variant = RniVariant::full;

    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::size_t batch_size = 64;
    std::size_t steps = 20000;
    std::uint64_t seed = 0;

    std::size_t metric_every = 500;
    std::size_t eval_samples = 20000;
    std::size_t path_length_paths = 10000;
    std::size_t grad_probes = 1024;
    std::size_t condition_pairs = 50000;
    unsigned threads = 1;

    void validate() const;
};

/// Settings used by the trap, comparison and ablation experiments: 6000 steps
/// at step size 2e-4 with first moment decay 0.5.
TrainConfig experiment_preset();

/// "none", "eni" or "rni-<variant>".
std::string injection_label(const TrainConfig& cfg);

Network build_generator(const TrainConfig& cfg, std::size_t ambient, RandomSource& rs);
Network build_discriminator(const TrainConfig& cfg, std::size_t ambient, RandomSource& rs);

/// Adaptive moment estimation over a network's parameter registry.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
    [[nodiscard]] std::size_t steps() const noexcept { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct MetricSnapshot {
    std::size_t step = 0;
    double d_loss = 0.0;  // mean over the steps since the previous snapshot
    double g_loss = 0.0;
    double js = 0.0;
    double frechet = 0.0;
    double path_length = 0.0;
    double grad_proxy = 0.0;
};

struct TrainReport {
    TrainConfig config;
    DatasetSpec data;
    std::vector<double> d_losses;
    std::vector<double> g_losses;
    std::vector<MetricSnapshot> timeline;
    ConditionReport condition;
    Network generator;
    Network discriminator;
    bool diverged = false;
    std::size_t steps_completed = 0;
    double wall_seconds = 0.0;  // informational, never serialized

    [[nodiscard]] const MetricSnapshot& final_metrics() const { return timeline.back(); }
};

/// Alternating non-saturating GAN training. Deterministic given cfg.seed.
TrainReport train_gan(const TrainConfig& cfg, const DatasetSpec& data);

/// Generator samples (n, ambient) with fresh injected noise.
Tensor generate(const Network& gen, std::size_t n, RandomSource& rs);
/// Condition metrics of a generator with injected noise pinned per pair.
ConditionReport generator_condition(const Network& gen, RandomSource& rs, const ConditionOptions& options);

struct TrapArm {
    std::string name;
    TrainReport report;
    double js = 0.0;
    double grad_growth = 0.0;  // max grad proxy over the timeline / initial
    std::size_t output_intrinsic_dim = 0;  // local PCA of the output cloud
};

struct TrapReport {
    std::vector<TrapArm> arms;  // deterministic-n1, deterministic-n2, rni-n1
    bool trap_floor_respected = false;
    bool injection_escapes = false;
};

inline constexpr double kTrapJsMargin = 0.01;
inline constexpr double kTrapGrowth = 10.0;
inline constexpr double kEscapeMargin = 0.1;

TrapReport dimension_trap_experiment(const TrainConfig& base, const DatasetSpec& data = DatasetSpec::annulus());

struct ComparisonRow {
    std::string name;
    double path_length = 0.0;
    double frechet = 0.0;
    double js = 0.0;
    double mc = 0.0;
    double ttmc = 0.0;
    bool collapse = false;
    bool diverged = false;
};

/// Rows for none, eni and rni-full on the same data and budget.
std::vector<ComparisonRow> injection_comparison(const TrainConfig& base, const DatasetSpec& data = DatasetSpec::annulus());
/// path_length zero, non-finite, or below 1e-3 of the reference.
bool collapse_flag(double path_length, double reference_path_length);
/// Rows for every rni variant; collapse judged against the full variant.
std::vector<ComparisonRow> ablation_suite(const TrainConfig& base, const DatasetSpec& data = DatasetSpec::annulus());

struct InversionOptions {
    std::size_t steps = 500;
    double learning_rate = 0.05;
    /// Co-optimize t in alpha = sigmoid(t * logit) for every rni layer.
    bool optimize_alpha = false;
};

struct InversionReport {
    Tensor target;
    Tensor latent;
    std::vector<double> mse;  // |G(z) - target|^2 per step, starting at z = 0
    double final_mse = 0.0;
    double t = 1.0;
    bool aborted = false;
};

InversionReport invert_latent(const Network& gen, const Tensor& target, const InversionOptions& options = {});

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& doc, TrainConfig base = {});
nlohmann::json dataset_to_json(const DatasetSpec& spec);
DatasetSpec dataset_from_json(const nlohmann::json& doc);

nlohmann::json train_report_to_json(const TrainReport& r);
std::string timeline_csv(const TrainReport& r);
nlohmann::json trap_report_to_json(const TrapReport& r);
nlohmann::json table_to_json(const std::vector<ComparisonRow>& rows);
/// header_name is "mode" or "variant".
std::string table_csv(const std::vector<ComparisonRow>& rows, std::string_view header_name);
nlohmann::json inversion_to_json(const InversionReport& r);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

}  // namespace noisegeo
