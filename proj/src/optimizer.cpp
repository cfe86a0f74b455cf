#include "splatctl/error.hpp"
#include "splatctl/toysplat.hpp"

#include <algorithm>
#include <cmath>

namespace splatctl {

void OptimizerConfig::validate() const {
    if (!(lr_position >= 0.0 && lr_position_final >= 0.0 && lr_scale >= 0.0 && lr_opacity >= 0.0)) {
        throw ConfigError("learning rates must be >= 0");
    }
    if (lr_position > 0.0 && !(lr_position_final > 0.0)) {
        throw ConfigError("lr_position_final must be > 0 when lr_position > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer betas must lie in [0,1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be > 0");
}

double OptimizerConfig::position_lr(std::int64_t step) const {
    if (lr_position == lr_position_final || total_steps <= 1) return lr_position;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
    return std::exp((1.0 - t) * std::log(lr_position) + t * std::log(lr_position_final));
}

Optimizer::Optimizer(std::size_t n, OptimizerConfig cfg) : cfg_(cfg), slots_(n) {
    cfg_.validate();
}

namespace {

double logit(double a) {
    return std::log(a / (1.0 - a));
}

double sigmoid(double u) {
    return 1.0 / (1.0 + std::exp(-u));
}

} // namespace

void Optimizer::step(Population& pop, std::span<const PrimitiveGrad> grads, std::int64_t step) {
    if (grads.size() != pop.size() || slots_.size() != pop.size()) {
        throw AlignmentError("optimizer step: " + std::to_string(grads.size()) + " gradients, " +
                             std::to_string(slots_.size()) + " slots, " + std::to_string(pop.size()) +
                             " primitives");
    }
    const double lr[kParams] = {cfg_.position_lr(step), cfg_.position_lr(step), cfg_.lr_scale,
                                cfg_.lr_opacity};
    for (std::size_t i = 0; i < pop.size(); ++i) {
        Primitive& p = pop[i];
        const PrimitiveGrad& g = grads[i];
        // Gradients with respect to the unconstrained parameters.
        const double gu[kParams] = {g.position.x, g.position.y, g.scale * p.scale,
                                    g.opacity * p.opacity * (1.0 - p.opacity)};
        if (!std::isfinite(gu[0]) || !std::isfinite(gu[1]) || !std::isfinite(gu[2]) ||
            !std::isfinite(gu[3])) {
            continue;
        }
        Slot& s = slots_[i];
        ++s.t;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
        double delta[kParams];
        for (int k = 0; k < kParams; ++k) {
            s.m[k] = cfg_.beta1 * s.m[k] + (1.0 - cfg_.beta1) * gu[k];
            s.v[k] = cfg_.beta2 * s.v[k] + (1.0 - cfg_.beta2) * gu[k] * gu[k];
            const double mh = s.m[k] / bc1;
            const double vh = s.v[k] / bc2;
            delta[k] = lr[k] * mh / (std::sqrt(vh) + cfg_.epsilon);
        }
        if (delta[0] != 0.0) p.position.x -= delta[0];
        if (delta[1] != 0.0) p.position.y -= delta[1];
        if (delta[2] != 0.0) p.scale = std::exp(std::log(p.scale) - delta[2]);
        if (delta[3] != 0.0) {
            // Keep opacity strictly inside (0,1) so logit stays finite.
            const double a = sigmoid(logit(std::clamp(p.opacity, 1e-12, 1.0 - 1e-12)) - delta[3]);
            p.opacity = std::clamp(a, 1e-12, 1.0 - 1e-12);
        }
    }
}

void Optimizer::remap(const Remap& r) {
    slots_ = remap_channel(slots_, r, Slot{});
}

void Optimizer::clear_opacity_state(const Mask& mask) {
    if (mask.size() != slots_.size()) throw AlignmentError("clear_opacity_state: mask size mismatch");
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        if (mask[i]) {
            slots_[i].m[3] = 0.0;
            slots_[i].v[3] = 0.0;
        }
    }
}

} // namespace splatctl
