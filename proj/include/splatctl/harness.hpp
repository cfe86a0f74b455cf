/// @file harness.hpp
/// @brief Scenario files, the optimization/densification loop, metrics and
///        events, comparison experiments and gradient-trace replay.

#pragma once

#include "splatctl/controller.hpp"
#include "splatctl/kernels.hpp"
#include "splatctl/moments.hpp"
#include "splatctl/primitives.hpp"
#include "splatctl/toysplat.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace splatctl {

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct Schedule {
    std::int64_t total_steps = 6000;
    std::int64_t densify_start = -1; ///< -1: one densify interval
    std::int64_t densify_end = -1;   ///< -1: 80% of total_steps
};

/// Full experiment configuration. Every field has a default, so a scenario
/// file only needs the keys it changes.
struct Scenario {
    std::string reference = "builtin:ring";
    TargetMode mode = TargetMode::kGenerative;
    double noise_sigma = 0.2;
    double magnitude_jitter_sigma = 1.5;
    double view_jitter = 0.0;
    GridDims grid;

    InitSpec init;
    Policy controller = Policy::kCadam;
    ControllerConfig control;
    MomentConfig moments;
    OptimizerConfig optimizer;
    Schedule schedule;

    /// When set, tau_pos / tau_momentum are this multiple of the measured
    /// noise floor (see measure_noise_floor) instead of the literal value.
    std::optional<double> tau_pos_floor_multiple;
    std::optional<double> tau_momentum_floor_multiple;
    std::int64_t noise_floor_settle_steps = 500;
    std::int64_t noise_floor_sample_steps = 200;

    std::uint64_t seed = 1;
    double cutoff_sigmas = 4.0;
    bool stop_on_cap = false; ///< end the whole run at a cap hit, not just densification
    std::int64_t log_every = 10;
    std::optional<kernels::Isa> kernels;
    bool write_masks = true;

    std::filesystem::path base_dir; ///< resolves relative reference paths

    [[nodiscard]] std::int64_t densify_start() const;
    [[nodiscard]] std::int64_t densify_end() const;

    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

/// Assigns one key. Throws ConfigError for unknown keys or bad values.
void set_scenario_key(Scenario& s, const std::string& key, const std::string& value);

/// Flat "key = value" text; '#' starts a comment. Errors carry line numbers.
Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Canonical key = value dump (stable key order) that parses back to an
/// equivalent scenario.
std::string format_scenario(const Scenario& s);

/// Every key understood by set_scenario_key, in canonical order.
std::vector<std::string> scenario_keys();

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

inline constexpr int kMetricsSchemaVersion = 1;

struct MetricsRecord {
    std::int64_t step = 0;
    std::size_t n_primitives = 0;
    double loss_vs_reference = 0.0;
    double pseudo_loss = 0.0;
    double lambda = 1.0;
    double grad_norm_mean = 0.0;
    double mhat_mean = 0.0;
    double mhat_median = 0.0;
    double mhat_q90 = 0.0;
    double snr_mean = 0.0;
    double snr_median = 0.0;
    double snr_q90 = 0.0;
    std::size_t n_selected = 0;
    std::size_t n_split = 0;
    std::size_t n_cloned = 0;
    std::size_t n_pruned = 0;
    std::size_t n_reset = 0;
    std::size_t cum_split = 0;
    std::size_t cum_cloned = 0;
    std::size_t cum_pruned = 0;
    std::size_t storage_bytes = 0;
    bool cap_hit = false;
};

/// One densification and/or reset round.
struct RoundEvent {
    std::int64_t step = 0;
    Policy policy = Policy::kNone;
    bool densify = false;
    bool reset = false;
    std::size_t n_selected = 0;
    std::size_t n_split = 0;
    std::size_t n_clone = 0;
    std::size_t n_pruned = 0;
    std::size_t n_reset = 0;
    std::optional<double> quantile_value;
    bool cap_hit = false;
};

/// Selected primitives of one densification round (for mask images).
struct SelectionFootprint {
    std::int64_t step = 0;
    std::vector<Primitive> selected;
};

struct RunResult {
    Scenario scenario; ///< with noise-floor derived thresholds resolved
    Population initial;
    Population final_population;
    MomentBank moments;
    std::vector<MetricsRecord> metrics;
    std::vector<RoundEvent> events;
    std::vector<SelectionFootprint> selections;
    RenderGrid final_render;
    std::optional<double> noise_floor; ///< measured, when a floor multiple was used
    bool cap_hit = false;
    std::int64_t cap_step = -1;
    std::int64_t last_step = 0;
    std::string kernel_name;

    [[nodiscard]] double final_loss() const;
    [[nodiscard]] std::size_t final_count() const { return final_population.size(); }
    [[nodiscard]] std::size_t total_densified() const;
};

/// Per-step callback, mostly for progress output.
using StepObserver = std::function<void(const MetricsRecord&)>;

/// Runs one scenario end to end. Deterministic for a fixed scenario.
/// Throws NumericError if the loss becomes non-finite.
RunResult run(Scenario scenario, const StepObserver& observer = {});

/// Long-run mean positional gradient norm caused by pseudo-target noise
/// alone: the scenario runs controller-free for noise_floor_settle_steps,
/// then the settled population is supervised by its own render plus the
/// scenario noise for noise_floor_sample_steps, averaging |g_i| over steps
/// and primitives. The lambda factor enters through its exact mean
/// exp(sigma_ln^2 / 2) instead of sampled values.
double measure_noise_floor(const Scenario& scenario);

/// Resolves floor-relative thresholds in place; returns the measured floor
/// if one was needed.
std::optional<double> resolve_thresholds(Scenario& scenario);

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRecord>& records);
std::string events_jsonl(const std::vector<RoundEvent>& events);
std::string selections_jsonl(const std::vector<SelectionFootprint>& selections);
std::vector<SelectionFootprint> parse_selections_jsonl(const std::string& text);

/// Binary footprint mask: a pixel is white when it lies within two
/// standard deviations of a selected primitive (the pixel containing the
/// centre is always set).
RenderGrid selection_mask(const std::vector<Primitive>& selected, GridDims dims);

/// Writes round_%04d.pgm files for every densification round; returns the
/// written paths.
std::vector<std::filesystem::path> export_masks(const std::vector<SelectionFootprint>& selections,
                                                GridDims dims, const std::filesystem::path& dir);

std::string run_report(const RunResult& r);

/// Writes metrics.csv, events.jsonl, selections.jsonl, final.ply,
/// final.snap, render_final.pgm, masks/ and report.txt into `dir`.
void write_run_outputs(const RunResult& r, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ComparisonReport {
    std::string label_a;
    std::string label_b;
    RunResult a;
    RunResult b;
    double count_ratio = 1.0; ///< b / a
    double loss_ratio = 1.0;  ///< b / a
    std::string verdict;

    [[nodiscard]] std::string text() const;
    [[nodiscard]] std::string joined_csv() const;
};

/// Throws ConfigError unless the scenarios differ only in the controller
/// (policy, its thresholds, gate and reset variant).
void check_comparable(const Scenario& a, const Scenario& b);

ComparisonReport compare(const Scenario& a, const Scenario& b, int jobs = 1);

struct SweepRow {
    std::string value;
    RunResult result;
};

struct SweepReport {
    std::string axis;
    std::vector<SweepRow> rows;

    [[nodiscard]] std::string table() const;
};

/// Maps the axis aliases tau_Q, tau_SNR, sigma_ln, tau_pos to scenario keys;
/// any other scenario key is accepted verbatim.
std::string sweep_axis_key(const std::string& axis);

SweepReport sweep(const Scenario& base, const std::string& axis, const std::vector<std::string>& values,
                  int jobs = 1);

enum class AblationVariant { kFull, kMomentumOnly, kNoReset };

AblationVariant parse_ablation_variant(const std::string& name);
std::string to_string(AblationVariant v);

Scenario ablation_scenario(const Scenario& base, AblationVariant v);

struct AblationReport {
    std::vector<std::pair<AblationVariant, RunResult>> runs;

    [[nodiscard]] std::string growth_csv() const;
    [[nodiscard]] std::string table() const;
};

AblationReport ablate(const Scenario& base, const std::vector<AblationVariant>& variants, int jobs = 1);

// ---------------------------------------------------------------------------
// Trace replay
// ---------------------------------------------------------------------------

/// Header line {"ids": [...]} followed by one {"step": s, "grads": [[gx, gy], ...]}
/// record per line, grads aligned to the declared ids.
struct GradientTrace {
    std::vector<PrimitiveId> ids;
    std::vector<std::int64_t> steps;
    std::vector<std::vector<Vec2>> grads;
};

/// Throws FormatError naming the offending line on schema violations.
GradientTrace parse_trace(const std::string& text);
GradientTrace load_trace(const std::filesystem::path& path);
std::string format_trace(const GradientTrace& trace);

struct ReplayRecord {
    std::int64_t step = 0;
    std::size_t n_primitives = 0;
    std::size_t n_selected = 0;
    std::optional<double> quantile_value;
    double snr_mean = 0.0;
    double snr_median = 0.0;
    double metric_mean = 0.0; ///< baseline K-mean norm or |m_hat| mean
};

/// Feeds recorded gradients through the controller statistics and runs
/// selection every densify_interval records. No geometry is touched.
std::vector<ReplayRecord> replay_trace(const GradientTrace& trace, Policy policy,
                                       const ControllerConfig& cfg, const MomentConfig& mcfg);

std::string replay_csv(const std::vector<ReplayRecord>& records);

} // namespace splatctl
