#include "splatctl/error.hpp"
#include "splatctl/harness.hpp"
#include "splatctl/quantile.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace splatctl {

double RunResult::final_loss() const {
    return metrics.empty() ? 0.0 : metrics.back().loss_vs_reference;
}

std::size_t RunResult::total_densified() const {
    std::size_t n = 0;
    for (const RoundEvent& e : events) n += e.n_split + e.n_clone;
    return n;
}

namespace {

struct Stats {
    double mean = 0.0;
    double median = 0.0;
    double q90 = 0.0;
};

Stats summarize(std::vector<double> v) {
    Stats s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.median = quantile_linear(v, 0.5);
    s.q90 = quantile_linear(v, 0.9);
    return s;
}

constexpr const char* kRenderInit = "render:init";

TargetModel make_target(const Scenario& s) {
    TargetModel m;
    if (s.reference == kRenderInit) {
        // Fixed-point target: the initial population's own render.
        if (s.init.layout == InitLayout::kDensity) {
            throw ConfigError("reference render:init cannot be combined with init_layout = density");
        }
        const RenderOptions opts{s.cutoff_sigmas, &kernels::select(s.kernels)};
        m.reference = render(spawn_initial(s.init, s.seed), s.grid, opts);
    } else {
        m.reference = load_reference(s.reference, s.grid, s.base_dir);
    }
    m.noise_sigma = s.noise_sigma;
    m.magnitude_jitter_sigma = s.magnitude_jitter_sigma;
    m.view_jitter = s.view_jitter;
    m.mode = s.mode;
    m.validate();
    return m;
}

Population initial_population(const Scenario& s, const TargetModel& model) {
    return spawn_initial(s.init, s.seed, model.reference.pixels, model.reference.width, model.reference.height);
}

OptimizerConfig optimizer_config(const Scenario& s) {
    OptimizerConfig c = s.optimizer;
    c.total_steps = s.schedule.total_steps;
    return c;
}

std::vector<Vec2> positions_of(const std::vector<PrimitiveGrad>& g) {
    std::vector<Vec2> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].position;
    return out;
}

std::string diagnostic(std::int64_t step, const Population& pop, double loss, double lambda) {
    std::size_t bad = 0;
    double max_opacity = 0.0;
    double min_scale = pop.empty() ? 0.0 : pop[0].scale;
    for (const Primitive& p : pop.primitives()) {
        if (!std::isfinite(p.position.x) || !std::isfinite(p.position.y) || !std::isfinite(p.scale) ||
            !std::isfinite(p.opacity)) {
            ++bad;
        }
        max_opacity = std::max(max_opacity, p.opacity);
        min_scale = std::min(min_scale, p.scale);
    }
    return "non-finite loss at step " + std::to_string(step) + ": loss=" + text::format_double(loss) +
           " lambda=" + text::format_double(lambda) + " primitives=" + std::to_string(pop.size()) +
           " non-finite primitives=" + std::to_string(bad) + " min scale=" + text::format_double(min_scale) +
           " max opacity=" + text::format_double(max_opacity);
}

} // namespace

double measure_noise_floor(const Scenario& scenario) {
    scenario.validate();
    const TargetModel model = make_target(scenario);
    const kernels::KernelTable& k = kernels::select(scenario.kernels);
    const RenderOptions opts{scenario.cutoff_sigmas, &k};

    Population pop = initial_population(scenario, model);
    Optimizer opt(pop.size(), optimizer_config(scenario));
    for (std::int64_t step = 1; step <= scenario.noise_floor_settle_steps; ++step) {
        const PseudoTarget pt = sample_pseudo_target(model, step, scenario.seed);
        LossAndGrads lg = loss_and_grads(pop, pt.target, opts);
        for (PrimitiveGrad& g : lg.grads) {
            g.position.x *= pt.lambda;
            g.position.y *= pt.lambda;
            g.scale *= pt.lambda;
            g.opacity *= pt.lambda;
        }
        opt.step(pop, lg.grads, step);
    }

    // Supervise the frozen population by its own render plus target noise:
    // the residual is pure noise, so the gradient has no drift term.
    std::seed_seq seq{static_cast<std::uint32_t>(scenario.seed), static_cast<std::uint32_t>(scenario.seed >> 32),
                      0x0f100du};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    RenderGrid residual(scenario.grid);
    double total = 0.0;
    for (std::int64_t t = 0; t < scenario.noise_floor_sample_steps; ++t) {
        for (double& r : residual.pixels) r = -scenario.noise_sigma * normal(rng);
        const std::vector<PrimitiveGrad> g = residual_grads(pop, residual, opts);
        double sum = 0.0;
        for (const PrimitiveGrad& x : g) sum += std::hypot(x.position.x, x.position.y);
        total += sum / static_cast<double>(g.size());
    }
    const double lambda_mean =
        std::exp(0.5 * scenario.magnitude_jitter_sigma * scenario.magnitude_jitter_sigma);
    return lambda_mean * total / static_cast<double>(scenario.noise_floor_sample_steps);
}

std::optional<double> resolve_thresholds(Scenario& scenario) {
    if (!scenario.tau_pos_floor_multiple && !scenario.tau_momentum_floor_multiple) return std::nullopt;
    const double floor = measure_noise_floor(scenario);
    if (scenario.tau_pos_floor_multiple) {
        scenario.control.tau_pos = *scenario.tau_pos_floor_multiple * floor;
        scenario.tau_pos_floor_multiple.reset();
    }
    if (scenario.tau_momentum_floor_multiple) {
        scenario.control.tau_momentum = *scenario.tau_momentum_floor_multiple * floor;
        scenario.tau_momentum_floor_multiple.reset();
    }
    return floor;
}

RunResult run(Scenario scenario, const StepObserver& observer) {
    scenario.validate();
    RunResult res;
    res.noise_floor = resolve_thresholds(scenario);
    res.scenario = scenario;

    const Scenario& s = res.scenario;
    const ControllerConfig& cc = s.control;
    const TargetModel model = make_target(s);
    const kernels::KernelTable& k = kernels::select(s.kernels);
    res.kernel_name = k.name;
    const RenderOptions opts{s.cutoff_sigmas, &k};

    Population pop = initial_population(s, model);
    res.initial = pop;
    Optimizer opt(pop.size(), optimizer_config(s));
    MomentBank bank(pop.size());
    BaselineState base(pop.size());
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32), 0x5917u};
    std::mt19937_64 split_rng(seq);

    const std::int64_t K = cc.densify_interval;
    const std::int64_t start = s.densify_start();
    const std::int64_t end = s.densify_end();
    bool densify_open = s.controller != Policy::kNone;
    std::size_t cum_split = 0, cum_clone = 0, cum_pruned = 0;
    std::vector<std::uint8_t> poisoned;

    auto apply_remap = [&](const Remap& r) {
        bank.remap(r);
        opt.remap(r);
        base.remap(r);
    };

    for (std::int64_t step = 1; step <= s.schedule.total_steps; ++step) {
        const PseudoTarget pt = sample_pseudo_target(model, step, s.seed);
        RenderGrid img = render(pop, s.grid, opts);
        const double ref_loss = mse(img, model.reference);
        double pseudo_loss = 0.0;
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            img.pixels[i] -= pt.target.pixels[i];
            pseudo_loss += img.pixels[i] * img.pixels[i];
        }
        pseudo_loss /= static_cast<double>(img.pixels.size());
        if (!std::isfinite(ref_loss) || !std::isfinite(pseudo_loss)) {
            throw NumericError(diagnostic(step, pop, std::isfinite(ref_loss) ? pseudo_loss : ref_loss, pt.lambda));
        }
        std::vector<PrimitiveGrad> grads = residual_grads(pop, img, opts);
        for (PrimitiveGrad& g : grads) {
            g.position.x *= pt.lambda;
            g.position.y *= pt.lambda;
            g.scale *= pt.lambda;
            g.opacity *= pt.lambda;
        }
        const std::vector<Vec2> pos = positions_of(grads);
        poisoned.assign(pop.size(), 0);
        bank.update_all(pos, s.moments, k, poisoned);
        if (s.controller == Policy::kBaseline) baseline_accumulate(base, pos);
        opt.step(pop, grads, step);
        for (Primitive& p : pop.primitives()) ++p.age;

        MetricsRecord rec;
        rec.step = step;
        rec.loss_vs_reference = ref_loss;
        rec.pseudo_loss = pseudo_loss;
        rec.lambda = pt.lambda;
        double gsum = 0.0;
        for (const Vec2& g : pos) gsum += std::hypot(g.x, g.y);
        rec.grad_norm_mean = pos.empty() ? 0.0 : gsum / static_cast<double>(pos.size());

        RoundEvent ev;
        ev.step = step;
        ev.policy = s.controller;

        const bool on_grid = step % K == 0 && step >= start && step <= end;
        if (densify_open && on_grid) {
            ev.densify = true;
            Mask eligible(pop.size(), 0);
            for (std::size_t i = 0; i < pop.size(); ++i) {
                eligible[i] = (pop[i].age >= static_cast<std::uint64_t>(K) && !poisoned[i]) ? 1 : 0;
            }
            ControllerDecision d;
            if (s.controller == Policy::kBaseline) {
                d.densify = baseline_select(base, cc, eligible);
            } else {
                d = cadam_select(bank, s.moments, cc, eligible);
                if (std::isfinite(d.quantile_value)) ev.quantile_value = d.quantile_value;
            }
            decide_actions(d, pop, cc);
            ev.n_selected = d.count(d.densify);

            SelectionFootprint fp;
            fp.step = step;
            for (std::size_t i = 0; i < pop.size(); ++i) {
                if (d.densify[i]) fp.selected.push_back(pop[i]);
            }
            res.selections.push_back(std::move(fp));

            StructuralResult cl = apply_clone(pop, d.clone, cc);
            apply_remap(cl.remap);
            Mask split = remap_channel(d.split, cl.remap, std::uint8_t{0});
            StructuralResult sp = apply_split(pop, split, cc, split_rng);
            apply_remap(sp.remap);
            StructuralResult pr = prune(pop, cc);
            apply_remap(pr.remap);

            ev.n_clone = cl.applied;
            ev.n_split = sp.applied;
            ev.n_pruned = pr.applied;
            cum_clone += cl.applied;
            cum_split += sp.applied;
            cum_pruned += pr.applied;
            if (cl.skipped + sp.skipped > 0 || pop.size() + pr.applied >= cc.max_primitives) {
                ev.cap_hit = true;
                res.cap_hit = true;
                res.cap_step = step;
                densify_open = false;
            }
            rec.n_selected = ev.n_selected;
            rec.n_split = ev.n_split;
            rec.n_cloned = ev.n_clone;
            rec.n_pruned = ev.n_pruned;
        }

        const bool reset_step = cc.reset_interval > 0 && step % cc.reset_interval == 0 &&
                                step >= cc.warmup_steps && step <= end;
        if (reset_step && s.controller != Policy::kNone) {
            Mask changed;
            if (s.controller == Policy::kBaseline) {
                changed = global_opacity_reset(pop, cc, step);
            } else if (cc.selective_reset) {
                changed = selective_opacity_reset(pop, bank, s.moments, cc, step);
            }
            if (!changed.empty()) {
                ev.reset = true;
                ev.n_reset = static_cast<std::size_t>(std::count(changed.begin(), changed.end(), std::uint8_t{1}));
                opt.clear_opacity_state(changed);
                rec.n_reset = ev.n_reset;
            }
        }

        rec.n_primitives = pop.size();
        rec.cum_split = cum_split;
        rec.cum_cloned = cum_clone;
        rec.cum_pruned = cum_pruned;
        rec.storage_bytes = storage_bytes(pop);
        rec.cap_hit = res.cap_hit;

        const bool is_event = ev.densify || ev.reset;
        if (is_event) res.events.push_back(ev);
        const bool stop = res.cap_hit && s.stop_on_cap;
        const bool last = step == s.schedule.total_steps || stop;
        if (is_event || last || step % s.log_every == 0) {
            std::vector<double> norms(pop.size());
            std::vector<double> snr(pop.size());
            bank.corrected_stats(s.moments, norms, snr);
            const Stats m = summarize(norms);
            const Stats q = summarize(snr);
            rec.mhat_mean = m.mean;
            rec.mhat_median = m.median;
            rec.mhat_q90 = m.q90;
            rec.snr_mean = q.mean;
            rec.snr_median = q.median;
            rec.snr_q90 = q.q90;
            // Logged loss is that of the post-update population, so the last
            // record matches the returned geometry.
            rec.loss_vs_reference = mse(render(pop, s.grid, opts), model.reference);
            res.metrics.push_back(rec);
            if (observer) observer(rec);
        }
        res.last_step = step;
        if (stop) break;
    }

    res.final_render = render(pop, s.grid, opts);
    res.final_population = std::move(pop);
    res.moments = std::move(bank);
    return res;
}

} // namespace splatctl
