/// @file controller.hpp
/// @brief Density-control policies and the shared structural operators.
///
/// Two selection policies are provided:
///  - baseline: mean gradient norm over a K-step window against a fixed
///    threshold tau_pos;
///  - cadam: bias-corrected momentum norm above the population quantile at
///    level tau_Q, intersected with intrinsic SNR above tau_SNR.
///
/// Selections become split (scale > tau_scale) or clone actions; prune and
/// opacity reset run on their own schedule. Structural operators return a
/// Remap so per-primitive side state can follow the population.

#pragma once

#include "splatctl/moments.hpp"
#include "splatctl/primitives.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace splatctl {

enum class Policy { kNone, kBaseline, kCadam };

Policy parse_policy(const std::string& name);
std::string to_string(Policy policy);

/// Selection rule of the cadam policy; momentum_only is the ablation that
/// compares |m_hat| against a fixed threshold with no quantile or SNR gate.
enum class CadamGate { kQuantileSnr, kMomentumOnly };

struct ControllerConfig {
    double tau_q = 0.9;
    double tau_snr = 0.1;
    double tau_pos = 2e-3;      ///< baseline threshold on the K-mean gradient norm
    double tau_momentum = 2e-3; ///< momentum_only threshold on |m_hat|
    double tau_scale = 0.02;    ///< split when scale > tau_scale, clone otherwise
    int densify_interval = 100; ///< K
    double prune_opacity = 0.005;
    double prune_scale_max = 0.5;
    int reset_interval = 1000;
    int warmup_steps = 500;
    std::size_t max_primitives = 200000;
    double split_factor = 1.6;
    double reset_opacity = 0.01;
    CadamGate gate = CadamGate::kQuantileSnr;
    bool selective_reset = true;

    /// Throws ConfigError when a threshold is out of range.
    void validate() const;
};

/// Running sums behind the baseline accumulation metric.
struct BaselineState {
    std::vector<double> accum_norm;
    std::vector<std::uint32_t> accum_count;

    explicit BaselineState(std::size_t n = 0) : accum_norm(n, 0.0), accum_count(n, 0) {}

    [[nodiscard]] std::size_t size() const { return accum_norm.size(); }
    void remap(const Remap& r);

    /// accum_norm / accum_count, 0 where nothing has been accumulated.
    [[nodiscard]] std::vector<double> metric() const;
};

/// accum_norm += |g_i|, accum_count += 1. Throws AlignmentError on a
/// length mismatch. Non-finite gradients are skipped.
void baseline_accumulate(BaselineState& state, std::span<const Vec2> grads);

/// mask_i = eligible_i && metric_i > tau_pos; resets the state afterwards.
/// An empty `eligible` span means every primitive is eligible.
Mask baseline_select(BaselineState& state, const ControllerConfig& cfg,
                     std::span<const std::uint8_t> eligible = {});

struct ControllerDecision {
    std::int64_t step = 0;
    std::vector<PrimitiveId> ids; ///< ids of the population the masks refer to
    Mask densify;
    Mask split;
    Mask clone;
    Mask prune;
    Mask reset;
    double quantile_value = 0.0; ///< NaN when the policy has no quantile
    std::vector<double> snr_values;
    std::vector<double> momentum_norms;
    bool cap_hit = false;

    [[nodiscard]] std::size_t count(const Mask& m) const;
};

/// CAdam selection from bias-corrected moments.
///
/// densify_i = eligible_i && |m_hat_i| > Q && SNR_i > tau_SNR, where Q is
/// the linear-interpolation quantile of |m_hat| at level tau_Q over every
/// state with steps >= 1. With gate == kMomentumOnly the mask is just
/// |m_hat_i| > tau_momentum. Throws Error if no state has been updated.
ControllerDecision cadam_select(const MomentBank& moments, const MomentConfig& mcfg,
                                const ControllerConfig& cfg,
                                std::span<const std::uint8_t> eligible = {});

ControllerDecision cadam_select(std::span<const MomentState> moments, const MomentConfig& mcfg,
                                const ControllerConfig& cfg,
                                std::span<const std::uint8_t> eligible = {});

/// Partitions decision.densify into split (scale > tau_scale) and clone.
void decide_actions(ControllerDecision& decision, const Population& pop,
                    const ControllerConfig& cfg);

struct StructuralResult {
    Remap remap;
    std::size_t applied = 0;
    std::size_t skipped = 0; ///< selections dropped by the growth cap
};

/// Appends an exact copy (age 0) of every masked primitive. Copies are
/// made in id order until the population reaches max_primitives.
StructuralResult apply_clone(Population& pop, const Mask& mask, const ControllerConfig& cfg);

/// Replaces each masked parent by two children sampled from the parent
/// Gaussian, scale divided by split_factor, same opacity, age 0. Children
/// are appended in parent id order; parents are removed.
StructuralResult apply_split(Population& pop, const Mask& mask, const ControllerConfig& cfg,
                             std::mt19937_64& rng);

/// Primitives with opacity < prune_opacity or scale > prune_scale_max.
Mask prune_mask(const Population& pop, const ControllerConfig& cfg);

StructuralResult prune(Population& pop, const ControllerConfig& cfg);

/// Sets opacity to reset_opacity wherever SNR < tau_SNR (states with
/// steps == 0 are left alone). No-op before warmup_steps. Returns the
/// primitives that were reset.
Mask selective_opacity_reset(Population& pop, const MomentBank& moments, const MomentConfig& mcfg,
                             const ControllerConfig& cfg, std::int64_t step);

/// opacity <- min(opacity, reset_opacity) for everyone. No-op before
/// warmup_steps. Returns the primitives whose opacity changed.
Mask global_opacity_reset(Population& pop, const ControllerConfig& cfg, std::int64_t step);

/// Composes two remaps: first `a`, then `b`.
Remap compose(const Remap& a, const Remap& b);

} // namespace splatctl
