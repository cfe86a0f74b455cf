/// @file toysplat.hpp
/// @brief Differentiable additive 2D Gaussian splatting with analytic
///        gradients, a stochastic pseudo-target generator and the Adam
///        parameter optimizer.
///
/// Image model: I(p) = sum_i a_i exp(-|p - mu_i|^2 / (2 s_i^2)) evaluated at
/// pixel centres ((k + 0.5)/W, (j + 0.5)/H). The Gaussian factorizes per
/// axis, so each primitive costs one profile per axis plus a rank-1 update
/// (render) or row reductions (gradients) over its footprint box of
/// +-cutoff_sigmas * s.

#pragma once

#include "splatctl/controller.hpp"
#include "splatctl/primitives.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace splatctl {

namespace kernels {
struct KernelTable;
}

struct GridDims {
    int width = 64;
    int height = 64;

    friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Parses "WxH" (e.g. "64x64").
GridDims parse_grid(const std::string& text);
std::string to_string(GridDims dims);

struct RenderGrid {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; ///< row-major, height rows of width values

    RenderGrid() = default;
    explicit RenderGrid(GridDims d, double fill = 0.0);

    [[nodiscard]] GridDims dims() const { return {width, height}; }
    [[nodiscard]] double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const RenderGrid&, const RenderGrid&) = default;
};

struct RenderOptions {
    double cutoff_sigmas = 4.0;
    const kernels::KernelTable* kernels = nullptr; ///< nullptr selects the best variant
};

RenderGrid render(const Population& pop, GridDims dims, const RenderOptions& opts = {});

/// Mean squared difference of two equally sized grids.
double mse(const RenderGrid& a, const RenderGrid& b);

struct PrimitiveGrad {
    Vec2 position;
    double scale = 0.0;
    double opacity = 0.0;
};

struct LossAndGrads {
    double loss = 0.0;
    std::vector<PrimitiveGrad> grads;
};

/// L = mean (I - T)^2 and its analytic gradient per primitive, rendered on
/// the target's grid.
LossAndGrads loss_and_grads(const Population& pop, const RenderGrid& target,
                            const RenderOptions& opts = {});

/// Gradients of mean(r^2) for an externally computed residual r = I - T.
std::vector<PrimitiveGrad> residual_grads(const Population& pop, const RenderGrid& residual,
                                          const RenderOptions& opts = {});

// ---------------------------------------------------------------------------
// Pseudo-targets
// ---------------------------------------------------------------------------

enum class TargetMode { kReconstruction, kGenerative };

TargetMode parse_target_mode(const std::string& name);
std::string to_string(TargetMode mode);

struct TargetModel {
    RenderGrid reference;               ///< clean shape in [0,1]
    double noise_sigma = 0.2;           ///< per-pixel white noise std
    double magnitude_jitter_sigma = 1.5;///< log-std of the gradient scale lambda
    double view_jitter = 0.0;           ///< affine perturbation amplitude
    TargetMode mode = TargetMode::kGenerative;

    void validate() const;
};

struct PseudoTarget {
    RenderGrid target;
    double lambda = 1.0;
};

/// Deterministic in (model, step, seed). Generative mode: optional affine
/// jitter of the reference, plus sigma_n * N(0,1) per pixel (unclipped) and
/// lambda ~ lognormal(0, sigma_ln^2). Reconstruction mode returns the
/// reference with lambda = 1.
PseudoTarget sample_pseudo_target(const TargetModel& model, std::int64_t step, std::uint64_t seed);

/// Expected per-primitive gradient-norm floor E[lambda] * E|xi_i| for pure
/// target noise, averaged over the population. E|xi_i| uses the isotropic
/// Rayleigh mean sqrt(pi/2) * sqrt(tr(C_i)/2) of the exact discrete
/// noise covariance C_i.
double predicted_noise_floor(const Population& pop, GridDims dims, const TargetModel& model,
                             const RenderOptions& opts = {});

// ---------------------------------------------------------------------------
// Reference images and PGM
// ---------------------------------------------------------------------------

/// Names accepted by builtin_reference.
std::vector<std::string> builtin_reference_names();

/// Antialiased procedural shapes: disk, ring, two-bar, checker-corner.
RenderGrid builtin_reference(const std::string& name, GridDims dims);

/// "builtin:<name>" or a path to a P5 PGM whose size must equal `dims`.
RenderGrid load_reference(const std::string& spec, GridDims dims,
                          const std::filesystem::path& base_dir = {});

/// Reads an 8-bit binary PGM (P5) into [0,1].
RenderGrid read_pgm(const std::filesystem::path& path);

/// Writes a P5 PGM with linear [0,1] -> [0,255] quantization (clamped).
void write_pgm(const std::filesystem::path& path, const RenderGrid& grid);
std::string encode_pgm(const RenderGrid& grid);
RenderGrid decode_pgm(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Parameter optimizer
// ---------------------------------------------------------------------------

/// Adam on (mu_x, mu_y, log s, logit a). Position learning rate decays
/// log-linearly from lr_position to lr_position_final over total_steps.
struct OptimizerConfig {
    double lr_position = 2e-3;
    double lr_position_final = 2e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 2e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    std::int64_t total_steps = 1;

    void validate() const;
    [[nodiscard]] double position_lr(std::int64_t step) const;
};

class Optimizer {
public:
    static constexpr int kParams = 4;

    struct Slot {
        double m[kParams] = {0.0, 0.0, 0.0, 0.0};
        double v[kParams] = {0.0, 0.0, 0.0, 0.0};
        std::uint64_t t = 0;
    };

    Optimizer() = default;
    Optimizer(std::size_t n, OptimizerConfig cfg);

    /// One descent step. A parameter whose update is exactly zero is left
    /// bit-identical (no round trip through log/logit).
    void step(Population& pop, std::span<const PrimitiveGrad> grads, std::int64_t step);

    void remap(const Remap& r);

    /// Clears the opacity moments of masked primitives (after a reset).
    void clear_opacity_state(const Mask& mask);

    [[nodiscard]] std::size_t size() const { return slots_.size(); }

private:
    OptimizerConfig cfg_;
    std::vector<Slot> slots_;
};

} // namespace splatctl
