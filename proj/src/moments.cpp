#include "splatctl/moments.hpp"

#include "splatctl/error.hpp"
#include "splatctl/kernels.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace splatctl {

namespace {

bool finite(Vec2 g) {
    return std::isfinite(g.x) && std::isfinite(g.y);
}

std::uint64_t bump(std::uint64_t steps) {
    return steps == std::numeric_limits<std::uint64_t>::max() ? steps : steps + 1;
}

double correction(double beta, std::uint64_t steps) {
    // Past ~1e6 steps beta^t underflows to 0 for any beta < 1 - 1e-3 anyway.
    return 1.0 - std::pow(beta, static_cast<double>(steps));
}

} // namespace

void MomentConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

MomentState update(const MomentState& state, Vec2 g, const MomentConfig& cfg) {
    if (!finite(g)) throw PoisonedGradientError("non-finite gradient offered to moment update");
    const double c1 = 1.0 - cfg.beta1;
    const double c2 = 1.0 - cfg.beta2;
    MomentState out;
    out.m.x = cfg.beta1 * state.m.x + c1 * g.x;
    out.m.y = cfg.beta1 * state.m.y + c1 * g.y;
    out.v.x = cfg.beta2 * state.v.x + c2 * (g.x * g.x);
    out.v.y = cfg.beta2 * state.v.y + c2 * (g.y * g.y);
    out.steps = bump(state.steps);
    return out;
}

CorrectedMoments bias_corrected(const MomentState& state, const MomentConfig& cfg) {
    if (state.steps == 0) {
        throw UndefinedCorrectionError("bias correction requested for a state with no updates");
    }
    const double c1 = correction(cfg.beta1, state.steps);
    const double c2 = correction(cfg.beta2, state.steps);
    return {{state.m.x / c1, state.m.y / c1}, {state.v.x / c2, state.v.y / c2}};
}

double momentum_norm(const MomentState& state, const MomentConfig& cfg) {
    const CorrectedMoments c = bias_corrected(state, cfg);
    return std::hypot(c.m_hat.x, c.m_hat.y);
}

double intrinsic_snr(const MomentState& state, const MomentConfig& cfg) {
    const CorrectedMoments c = bias_corrected(state, cfg);
    return std::hypot(c.m_hat.x, c.m_hat.y) / (std::sqrt(c.v_hat.x + c.v_hat.y) + cfg.epsilon);
}

std::vector<MomentState> batch_update(std::span<const MomentState> states,
                                      std::span<const Vec2> grads, const MomentConfig& cfg) {
    if (states.size() != grads.size()) {
        throw AlignmentError("batch_update: " + std::to_string(states.size()) + " states vs " +
                             std::to_string(grads.size()) + " gradients");
    }
    std::vector<MomentState> out;
    out.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        out.push_back(update(states[i], grads[i], cfg));
    }
    return out;
}

// ---------------------------------------------------------------------------
// MomentBank
// ---------------------------------------------------------------------------

MomentBank::MomentBank(std::size_t n) : m_(2 * n, 0.0), v_(2 * n, 0.0), steps_(n, 0) {}

MomentState MomentBank::get(std::size_t i) const {
    return {{m_[2 * i], m_[2 * i + 1]}, {v_[2 * i], v_[2 * i + 1]}, steps_[i]};
}

void MomentBank::set(std::size_t i, const MomentState& s) {
    m_[2 * i] = s.m.x;
    m_[2 * i + 1] = s.m.y;
    v_[2 * i] = s.v.x;
    v_[2 * i + 1] = s.v.y;
    steps_[i] = s.steps;
}

std::size_t MomentBank::update_all(std::span<const Vec2> grads, const MomentConfig& cfg,
                                   const kernels::KernelTable& k, std::span<std::uint8_t> poisoned) {
    const std::size_t n = size();
    if (grads.size() != n || poisoned.size() != n) {
        throw AlignmentError("MomentBank::update_all: " + std::to_string(grads.size()) +
                             " gradients for " + std::to_string(n) + " states");
    }
    std::size_t n_poisoned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        poisoned[i] = finite(grads[i]) ? 0 : 1;
        n_poisoned += poisoned[i];
    }
    static_assert(sizeof(Vec2) == 2 * sizeof(double));
    if (n_poisoned == 0) {
        k.ema_update(m_.data(), v_.data(), reinterpret_cast<const double*>(grads.data()), 2 * n,
                     cfg.beta1, cfg.beta2);
        for (auto& s : steps_) s = bump(s);
        return 0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!poisoned[i]) set(i, update(get(i), grads[i], cfg));
    }
    return n_poisoned;
}

void MomentBank::remap(const Remap& r) {
    std::vector<double> m(2 * r.source.size(), 0.0);
    std::vector<double> v(2 * r.source.size(), 0.0);
    std::vector<std::uint64_t> steps(r.source.size(), 0);
    for (std::size_t i = 0; i < r.source.size(); ++i) {
        const std::int64_t s = r.source[i];
        if (s < 0) continue;
        const auto j = static_cast<std::size_t>(s);
        m[2 * i] = m_[2 * j];
        m[2 * i + 1] = m_[2 * j + 1];
        v[2 * i] = v_[2 * j];
        v[2 * i + 1] = v_[2 * j + 1];
        steps[i] = steps_[j];
    }
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = std::move(steps);
}

void MomentBank::corrected_stats(const MomentConfig& cfg, std::span<double> m_hat_norm,
                                 std::span<double> snr) const {
    const std::size_t n = size();
    if (m_hat_norm.size() != n || snr.size() != n) {
        throw AlignmentError("MomentBank::corrected_stats: output size mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (steps_[i] == 0) {
            m_hat_norm[i] = 0.0;
            snr[i] = 0.0;
            continue;
        }
        const MomentState s = get(i);
        m_hat_norm[i] = momentum_norm(s, cfg);
        snr[i] = intrinsic_snr(s, cfg);
    }
}

std::vector<MomentState> MomentBank::to_states() const {
    std::vector<MomentState> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = get(i);
    return out;
}

MomentBank MomentBank::from_states(std::span<const MomentState> states) {
    MomentBank b(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) b.set(i, states[i]);
    return b;
}

} // namespace splatctl
