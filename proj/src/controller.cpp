#include "splatctl/controller.hpp"

#include "splatctl/error.hpp"
#include "splatctl/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatctl {

Policy parse_policy(const std::string& name) {
    if (name == "none") return Policy::kNone;
    if (name == "baseline") return Policy::kBaseline;
    if (name == "cadam") return Policy::kCadam;
    throw ConfigError("unknown controller '" + name + "' (expected none, baseline or cadam)");
}

std::string to_string(Policy policy) {
    switch (policy) {
    case Policy::kNone: return "none";
    case Policy::kBaseline: return "baseline";
    case Policy::kCadam: return "cadam";
    }
    return "unknown";
}

void ControllerConfig::validate() const {
    if (!(tau_q > 0.0 && tau_q < 1.0)) throw ConfigError("tau_Q must lie in (0,1)");
    // tau_SNR = 0 is allowed: it disables the SNR gate in sweeps.
    if (!(tau_snr >= 0.0)) throw ConfigError("tau_SNR must be >= 0");
    if (!(tau_pos >= 0.0)) throw ConfigError("tau_pos must be >= 0");
    if (!(tau_momentum >= 0.0)) throw ConfigError("tau_momentum must be >= 0");
    if (!(tau_scale > 0.0)) throw ConfigError("tau_scale must be > 0");
    if (densify_interval < 1) throw ConfigError("densify_interval must be >= 1");
    if (!(prune_opacity >= 0.0)) throw ConfigError("prune_opacity must be >= 0");
    if (!(prune_scale_max > 0.0)) throw ConfigError("prune_scale_max must be > 0");
    if (reset_interval < 0) throw ConfigError("reset_interval must be >= 0 (0 disables resets)");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (max_primitives < 1) throw ConfigError("max_primitives must be >= 1");
    if (!(split_factor > 1.0)) throw ConfigError("split_factor must be > 1");
    if (!(reset_opacity > 0.0 && reset_opacity < 1.0)) throw ConfigError("reset_opacity must lie in (0,1)");
}

// ---------------------------------------------------------------------------
// Baseline
// ---------------------------------------------------------------------------

void BaselineState::remap(const Remap& r) {
    accum_norm = remap_channel(accum_norm, r, 0.0);
    accum_count = remap_channel(accum_count, r, std::uint32_t{0});
}

std::vector<double> BaselineState::metric() const {
    std::vector<double> out(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
        if (accum_count[i] > 0) out[i] = accum_norm[i] / static_cast<double>(accum_count[i]);
    }
    return out;
}

void baseline_accumulate(BaselineState& state, std::span<const Vec2> grads) {
    if (grads.size() != state.size()) {
        throw AlignmentError("baseline_accumulate: " + std::to_string(grads.size()) +
                             " gradients for " + std::to_string(state.size()) + " primitives");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const double n = std::hypot(grads[i].x, grads[i].y);
        if (!std::isfinite(n)) continue;
        state.accum_norm[i] += n;
        state.accum_count[i] += 1;
    }
}

Mask baseline_select(BaselineState& state, const ControllerConfig& cfg,
                     std::span<const std::uint8_t> eligible) {
    if (!eligible.empty() && eligible.size() != state.size()) {
        throw AlignmentError("baseline_select: eligibility mask size mismatch");
    }
    const std::vector<double> a = state.metric();
    Mask mask(state.size(), 0);
    for (std::size_t i = 0; i < state.size(); ++i) {
        const bool ok = eligible.empty() || eligible[i];
        mask[i] = (ok && state.accum_count[i] > 0 && a[i] > cfg.tau_pos) ? 1 : 0;
    }
    std::fill(state.accum_norm.begin(), state.accum_norm.end(), 0.0);
    std::fill(state.accum_count.begin(), state.accum_count.end(), 0u);
    return mask;
}

// ---------------------------------------------------------------------------
// CAdam
// ---------------------------------------------------------------------------

std::size_t ControllerDecision::count(const Mask& m) const {
    return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](std::uint8_t b) { return b != 0; }));
}

namespace {

ControllerDecision select_from_stats(std::vector<double> norms, std::vector<double> snr,
                                     std::span<const std::uint8_t> active,
                                     const ControllerConfig& cfg,
                                     std::span<const std::uint8_t> eligible) {
    const std::size_t n = norms.size();
    if (!eligible.empty() && eligible.size() != n) {
        throw AlignmentError("cadam_select: eligibility mask size mismatch");
    }
    ControllerDecision d;
    d.densify.assign(n, 0);
    d.quantile_value = std::numeric_limits<double>::quiet_NaN();

    std::vector<double> pool;
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (active[i]) pool.push_back(norms[i]);
    }
    if (pool.empty()) throw Error("cadam_select: no primitive has moment history");

    if (cfg.gate == CadamGate::kMomentumOnly) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool ok = active[i] && (eligible.empty() || eligible[i]);
            d.densify[i] = (ok && norms[i] > cfg.tau_momentum) ? 1 : 0;
        }
    } else {
        const double q = quantile_linear(pool, cfg.tau_q);
        d.quantile_value = q;
        for (std::size_t i = 0; i < n; ++i) {
            const bool ok = active[i] && (eligible.empty() || eligible[i]);
            d.densify[i] = (ok && norms[i] > q && snr[i] > cfg.tau_snr) ? 1 : 0;
        }
    }
    d.snr_values = std::move(snr);
    d.momentum_norms = std::move(norms);
    return d;
}

} // namespace

ControllerDecision cadam_select(const MomentBank& moments, const MomentConfig& mcfg,
                                const ControllerConfig& cfg, std::span<const std::uint8_t> eligible) {
    const std::size_t n = moments.size();
    std::vector<double> norms(n);
    std::vector<double> snr(n);
    moments.corrected_stats(mcfg, norms, snr);
    Mask active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = moments.get(i).steps > 0 ? 1 : 0;
    return select_from_stats(std::move(norms), std::move(snr), active, cfg, eligible);
}

ControllerDecision cadam_select(std::span<const MomentState> moments, const MomentConfig& mcfg,
                                const ControllerConfig& cfg, std::span<const std::uint8_t> eligible) {
    return cadam_select(MomentBank::from_states(moments), mcfg, cfg, eligible);
}

void decide_actions(ControllerDecision& decision, const Population& pop, const ControllerConfig& cfg) {
    if (decision.densify.size() != pop.size()) {
        throw AlignmentError("decide_actions: mask covers " + std::to_string(decision.densify.size()) +
                             " of " + std::to_string(pop.size()) + " primitives");
    }
    decision.ids = pop.ids();
    decision.split.assign(pop.size(), 0);
    decision.clone.assign(pop.size(), 0);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (!decision.densify[i]) continue;
        if (pop[i].scale > cfg.tau_scale) {
            decision.split[i] = 1;
        } else {
            decision.clone[i] = 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Structural operators
// ---------------------------------------------------------------------------

namespace {

void check_mask(const Population& pop, const Mask& mask, const char* op) {
    if (mask.size() != pop.size()) {
        throw AlignmentError(std::string(op) + ": mask covers " + std::to_string(mask.size()) +
                             " of " + std::to_string(pop.size()) + " primitives");
    }
}

std::size_t growth_budget(const Population& pop, const ControllerConfig& cfg) {
    return pop.size() >= cfg.max_primitives ? 0 : cfg.max_primitives - pop.size();
}

} // namespace

StructuralResult apply_clone(Population& pop, const Mask& mask, const ControllerConfig& cfg) {
    check_mask(pop, mask, "apply_clone");
    StructuralResult res;
    res.remap = Remap::identity(pop.size());
    std::size_t budget = growth_budget(pop, cfg);
    const std::size_t n = pop.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        if (budget == 0) {
            ++res.skipped;
            continue;
        }
        Primitive copy = pop[i];
        copy.age = 0;
        pop.append(copy);
        res.remap.source.push_back(-1);
        ++res.applied;
        --budget;
    }
    return res;
}

StructuralResult apply_split(Population& pop, const Mask& mask, const ControllerConfig& cfg,
                             std::mt19937_64& rng) {
    check_mask(pop, mask, "apply_split");
    StructuralResult res;
    std::size_t budget = growth_budget(pop, cfg);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Primitive> children;
    Mask remove(pop.size(), 0);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (!mask[i]) continue;
        if (budget == 0) {
            ++res.skipped;
            continue;
        }
        const Primitive& parent = pop[i];
        for (int c = 0; c < 2; ++c) {
            Primitive child = parent;
            child.position.x = parent.position.x + parent.scale * normal(rng);
            child.position.y = parent.position.y + parent.scale * normal(rng);
            child.scale = parent.scale / cfg.split_factor;
            child.age = 0;
            children.push_back(child);
        }
        remove[i] = 1;
        ++res.applied;
        --budget;
    }
    res.remap = pop.remove_if(remove);
    for (const Primitive& c : children) {
        pop.append(c);
        res.remap.source.push_back(-1);
    }
    return res;
}

Mask prune_mask(const Population& pop, const ControllerConfig& cfg) {
    Mask m(pop.size(), 0);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        m[i] = (pop[i].opacity < cfg.prune_opacity || pop[i].scale > cfg.prune_scale_max) ? 1 : 0;
    }
    return m;
}

StructuralResult prune(Population& pop, const ControllerConfig& cfg) {
    const Mask m = prune_mask(pop, cfg);
    StructuralResult res;
    res.applied = static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
    res.remap = pop.remove_if(m);
    return res;
}

Mask selective_opacity_reset(Population& pop, const MomentBank& moments, const MomentConfig& mcfg,
                             const ControllerConfig& cfg, std::int64_t step) {
    if (moments.size() != pop.size()) {
        throw AlignmentError("selective_opacity_reset: moment bank size mismatch");
    }
    Mask reset(pop.size(), 0);
    if (step < cfg.warmup_steps) return reset;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const MomentState s = moments.get(i);
        if (s.steps == 0) continue;
        if (intrinsic_snr(s, mcfg) < cfg.tau_snr) {
            pop[i].opacity = cfg.reset_opacity;
            reset[i] = 1;
        }
    }
    return reset;
}

Mask global_opacity_reset(Population& pop, const ControllerConfig& cfg, std::int64_t step) {
    Mask changed(pop.size(), 0);
    if (step < cfg.warmup_steps) return changed;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (pop[i].opacity > cfg.reset_opacity) {
            pop[i].opacity = cfg.reset_opacity;
            changed[i] = 1;
        }
    }
    return changed;
}

Remap compose(const Remap& a, const Remap& b) {
    Remap out;
    out.source.reserve(b.source.size());
    for (const std::int64_t s : b.source) {
        out.source.push_back(s < 0 ? -1 : a.source[static_cast<std::size_t>(s)]);
    }
    return out;
}

} // namespace splatctl
