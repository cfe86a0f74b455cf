/// @file moments.hpp
/// @brief Streaming first/second raw moments of positional gradients with
///        per-primitive (age based) bias correction and the intrinsic SNR.
///
/// These statistics only observe gradients; they never drive parameter
/// updates.

#pragma once

#include "splatctl/primitives.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace splatctl {

namespace kernels {
struct KernelTable;
}

struct MomentConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Throws ConfigError unless 0 < beta1, beta2 < 1 and epsilon > 0.
    void validate() const;
};

struct MomentState {
    Vec2 m;                  ///< EMA of gradients
    Vec2 v;                  ///< EMA of element-wise squared gradients
    std::uint64_t steps = 0; ///< number of updates, saturating

    friend bool operator==(const MomentState&, const MomentState&) = default;
};

struct CorrectedMoments {
    Vec2 m_hat;
    Vec2 v_hat;
};

/// One EMA step. Throws PoisonedGradientError (state untouched) if `g`
/// is not finite.
MomentState update(const MomentState& state, Vec2 g, const MomentConfig& cfg);

/// m / (1 - beta1^steps), v / (1 - beta2^steps). Throws
/// UndefinedCorrectionError when steps == 0.
CorrectedMoments bias_corrected(const MomentState& state, const MomentConfig& cfg);

/// |m_hat|_2 / (sqrt(|v_hat|_1) + epsilon).
double intrinsic_snr(const MomentState& state, const MomentConfig& cfg);

/// |m_hat|_2.
double momentum_norm(const MomentState& state, const MomentConfig& cfg);

/// Element-wise `update` over aligned sequences. Throws AlignmentError on a
/// length mismatch and PoisonedGradientError on the first non-finite
/// gradient.
std::vector<MomentState> batch_update(std::span<const MomentState> states,
                                      std::span<const Vec2> grads, const MomentConfig& cfg);

/// Structure-of-arrays moment storage used by the training loop.
///
/// m and v are interleaved (x0, y0, x1, y1, ...) so the EMA runs as one
/// contiguous vector kernel.
class MomentBank {
public:
    MomentBank() = default;
    explicit MomentBank(std::size_t n);

    [[nodiscard]] std::size_t size() const { return steps_.size(); }

    [[nodiscard]] MomentState get(std::size_t i) const;
    void set(std::size_t i, const MomentState& s);

    /// Updates every state whose gradient is finite. Entries with a
    /// non-finite gradient keep their state and get poisoned[i] = 1.
    /// Returns the number of poisoned entries.
    std::size_t update_all(std::span<const Vec2> grads, const MomentConfig& cfg,
                           const kernels::KernelTable& k, std::span<std::uint8_t> poisoned);

    /// Applies a population remap; new slots start from zero state.
    void remap(const Remap& r);

    /// Writes |m_hat| and SNR for every state; entries with steps == 0 get 0.
    void corrected_stats(const MomentConfig& cfg, std::span<double> m_hat_norm,
                         std::span<double> snr) const;

    [[nodiscard]] std::vector<MomentState> to_states() const;
    static MomentBank from_states(std::span<const MomentState> states);

private:
    std::vector<double> m_;
    std::vector<double> v_;
    std::vector<std::uint64_t> steps_;
};

} // namespace splatctl
