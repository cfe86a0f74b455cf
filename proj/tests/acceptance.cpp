// Acceptance checks, one line per criterion.
//
// Usage: splatctl_acceptance [criterion numbers...]   (default: all)
// Exit status is 0 only when every selected criterion passes.

#include "splatctl/harness.hpp"
#include "splatctl/kernels.hpp"
#include "splatctl/moments.hpp"
#include "splatctl/quantile.hpp"
#include "splatctl/toysplat.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace splatctl;

namespace {

// Pinned tolerances.
constexpr double kSnrTolerance = 1e-6;
constexpr double kVarianceTolerance = 0.05;
constexpr std::int64_t kVarianceSteps = 100000;
constexpr std::size_t kVariancePrimitives = 1000;
constexpr int kGradConfigs = 100;
constexpr double kGradStep = 1e-5;
constexpr double kGradTolerance = 1e-4;
constexpr int kQuantilePopulations = 1000;
constexpr double kQuantileTolerance = 1e-12;
constexpr double kLowFloorMultiple = 0.5;
constexpr double kHighFloorMultiple = 2.0;
constexpr std::size_t kHighMaxDensifications = 5;
constexpr double kHighLossFactor = 2.0;
constexpr int kTerminationSeeds = 20;
constexpr double kTerminationRoundFraction = 0.05;
constexpr double kTerminationSeedFraction = 0.95;
constexpr double kCompactCountRatio = 0.2;
constexpr double kCompactLossRatio = 1.5;
// 0.5x the gradient floor seen through the first-moment EMA of white noise:
// 0.5 * sqrt((1 - b1) / (1 + b1)) ~= 0.11.
constexpr double kMomentumOnlyFloorMultiple = 0.1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Scenario default_scenario() {
    Scenario s = load_scenario(std::filesystem::path(SPLATCTL_SOURCE_DIR) / "scenarios/default_generative.scn");
    s.write_masks = false;
    return s;
}

// Shared by criteria 5 and 7.
struct DefaultRuns {
    bool done = false;
    RunResult cadam, low, high;
};
DefaultRuns g_runs;

const DefaultRuns& default_runs() {
    if (g_runs.done) return g_runs;
    const Scenario s = default_scenario();
    g_runs.cadam = run(s);
    Scenario b = s;
    b.controller = Policy::kBaseline;
    b.tau_pos_floor_multiple = kLowFloorMultiple;
    g_runs.low = run(b);
    b.tau_pos_floor_multiple = kHighFloorMultiple;
    g_runs.high = run(b);
    g_runs.done = true;
    return g_runs;
}

Outcome constant_snr() {
    const MomentConfig cfg;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::acos(-1.0));
    std::uniform_real_distribution<double> log_mag(std::log(1e-2), std::log(1e3));
    double worst = 0.0;
    for (int stream = 0; stream < 1000; ++stream) {
        const double a = angle(rng);
        const double r = std::exp(log_mag(rng));
        Vec2 g{r * std::cos(a), r * std::sin(a)};
        if (stream % 10 == 0) g = {0.0, r}; // single-axis streams
        MomentState s;
        for (int t = 1; t <= 1000; ++t) {
            s = update(s, g, cfg);
            worst = std::max(worst, std::abs(intrinsic_snr(s, cfg) - 1.0));
        }
    }
    return {worst <= kSnrTolerance,
            "1000 streams, |g| in [1e-2, 1e3], t = 1..1000: max |snr - 1| = " + fmt("%.3g", worst) +
                " (tol " + fmt("%g", kSnrTolerance) + ")"};
}

Outcome momentum_variance() {
    const MomentConfig cfg;
    const double sigma = 1.0;
    const std::size_t n = kVariancePrimitives;
    MomentBank bank(n);
    const kernels::KernelTable& k = kernels::select(std::nullopt);
    std::vector<Vec2> g(n);
    std::vector<std::uint8_t> poisoned(n);
    std::mt19937_64 rng(202);
    std::normal_distribution<double> noise(0.0, sigma);
    const std::int64_t burn_in = 200;
    double sum = 0.0, sum2 = 0.0;
    double count = 0.0;
    for (std::int64_t t = 0; t < kVarianceSteps; ++t) {
        for (Vec2& x : g) x = {noise(rng), noise(rng)};
        bank.update_all(g, cfg, k, poisoned);
        if (t < burn_in) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const MomentState s = bank.get(i);
            sum += s.m.x + s.m.y;
            sum2 += s.m.x * s.m.x + s.m.y * s.m.y;
        }
        count += 2.0 * static_cast<double>(n);
    }
    const double mean = sum / count;
    const double var = sum2 / count - mean * mean;
    const double expected = sigma * sigma * (1.0 - cfg.beta1) / (1.0 + cfg.beta1);
    const double rel = std::abs(var / expected - 1.0);
    return {rel <= kVarianceTolerance, "var(m) = " + fmt("%.6g", var) + " vs " + fmt("%.6g", expected) +
                                           ", rel err " + fmt("%.3g", rel) + " (tol " +
                                           fmt("%g", kVarianceTolerance) + ")"};
}

Outcome gradient_check() {
    // Wide cutoff: the +-h probe must not move a pixel across the footprint
    // boundary, which would make the truncated loss jump.
    RenderOptions opts;
    opts.cutoff_sigmas = 10.0;
    const GridDims dims{32, 32};
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> pos(0.1, 0.9), sc(1e-3, 0.15), op(0.0, 1.0), px(0.0, 1.0);
    std::uniform_int_distribution<int> count(1, 5);
    double worst = 0.0;
    int failures = 0;
    for (int c = 0; c < kGradConfigs; ++c) {
        Population pop;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) {
            Primitive p;
            // Scales below a pixel are bounded to 1e-3 and still checked.
            p.position = {pos(rng), pos(rng)};
            p.scale = std::max(1e-3, sc(rng));
            p.opacity = op(rng);
            pop.append(p);
        }
        RenderGrid target(dims);
        for (double& v : target.pixels) v = px(rng);
        const LossAndGrads an = loss_and_grads(pop, target, opts);
        auto probe = [&](std::size_t i, int which) {
            Population a = pop, b = pop;
            double* pa[4] = {&a[i].position.x, &a[i].position.y, &a[i].scale, &a[i].opacity};
            double* pb[4] = {&b[i].position.x, &b[i].position.y, &b[i].scale, &b[i].opacity};
            *pa[which] += kGradStep;
            *pb[which] -= kGradStep;
            return (loss_and_grads(a, target, opts).loss - loss_and_grads(b, target, opts).loss) / (2.0 * kGradStep);
        };
        // Relative error of each parameter group (position, scale, opacity)
        // as a vector over the configuration's primitives.
        double err2[3] = {0.0, 0.0, 0.0};
        double ref2[3] = {0.0, 0.0, 0.0};
        for (std::size_t i = 0; i < pop.size(); ++i) {
            const double analytic[4] = {an.grads[i].position.x, an.grads[i].position.y, an.grads[i].scale,
                                        an.grads[i].opacity};
            for (int w = 0; w < 4; ++w) {
                const int group = w < 2 ? 0 : w - 1;
                const double diff = analytic[w] - probe(i, w);
                err2[group] += diff * diff;
                ref2[group] += analytic[w] * analytic[w];
            }
        }
        bool ok = true;
        for (int gi = 0; gi < 3; ++gi) {
            const double rel = ref2[gi] > 0.0 ? std::sqrt(err2[gi] / ref2[gi]) : std::sqrt(err2[gi]);
            worst = std::max(worst, rel);
            ok = ok && rel < kGradTolerance;
        }
        failures += ok ? 0 : 1;
    }
    return {failures == 0, std::to_string(kGradConfigs) + " configurations, h = " + fmt("%g", kGradStep) +
                               ": max rel err " + fmt("%.3g", worst) + " (tol " + fmt("%g", kGradTolerance) +
                               "), failing configurations " + std::to_string(failures)};
}

Outcome quantile_oracle() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> len(1, 2000);
    std::uniform_real_distribution<double> lvl(0.0, 1.0);
    std::lognormal_distribution<double> val(0.0, 3.0);
    double worst = 0.0;
    for (int p = 0; p < kQuantilePopulations; ++p) {
        std::vector<double> v(static_cast<std::size_t>(len(rng)));
        for (double& x : v) x = val(rng);
        const double level = (p % 50 == 0) ? 0.9 : lvl(rng);
        const double got = quantile_linear(v, level);
        std::sort(v.begin(), v.end());
        const double h = (static_cast<double>(v.size()) - 1.0) * level;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const double want = lo + 1 < v.size() ? v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]) : v[lo];
        worst = std::max(worst, std::abs(got - want) / std::max(std::abs(want), 1e-300));
    }
    return {worst <= kQuantileTolerance, std::to_string(kQuantilePopulations) +
                                             " populations: max rel err " + fmt("%.3g", worst) + " (tol " +
                                             fmt("%g", kQuantileTolerance) + ")"};
}

Outcome threshold_regimes() {
    const DefaultRuns& r = default_runs();
    const bool low_cap = r.low.cap_hit;
    const std::size_t high_dens = r.high.total_densified();
    const double loss_factor = r.high.final_loss() / r.cadam.final_loss();
    const bool pass = low_cap && high_dens < kHighMaxDensifications && loss_factor >= kHighLossFactor;
    std::string d = "floor " + fmt("%.4g", *r.low.noise_floor) + "; 0.5x: " +
                    (low_cap ? "cap hit at step " + std::to_string(r.low.cap_step) : std::string("no cap")) +
                    " (count " + std::to_string(r.low.final_count()) + "); 2x: " + std::to_string(high_dens) +
                    " densifications (need < " + std::to_string(kHighMaxDensifications) + "), loss " +
                    fmt("%.4g", r.high.final_loss()) + " = " + fmt("%.3g", loss_factor) + "x cadam (need >= " +
                    fmt("%g", kHighLossFactor) + ")";
    return {pass, d};
}

/// Largest and final-third round sizes of one run.
struct RoundProfile {
    std::size_t peak = 0;
    std::size_t late_max = 0;
    int late_rounds = 0;
};

RoundProfile round_profile(const RunResult& r) {
    RoundProfile p;
    const std::int64_t late_from = (2 * r.scenario.schedule.total_steps) / 3;
    for (const RoundEvent& e : r.events) {
        if (!e.densify) continue;
        const std::size_t n = e.n_split + e.n_clone;
        p.peak = std::max(p.peak, n);
        // Only rounds that were actually held count; densification closes at
        // densify_end, and rounds after that are trivially empty.
        if (e.step >= late_from) {
            p.late_max = std::max(p.late_max, n);
            ++p.late_rounds;
        }
    }
    return p;
}

Outcome soft_termination() {
    const Scenario base = default_scenario();
    int ok = 0;
    std::string per_seed;
    for (int seed = 1; seed <= kTerminationSeeds; ++seed) {
        Scenario s = base;
        s.seed = static_cast<std::uint64_t>(seed);
        const RunResult r = run(s);
        const RoundProfile p = round_profile(r);
        const bool pass = p.late_rounds > 0 && static_cast<double>(p.late_max) <=
                                                   kTerminationRoundFraction * static_cast<double>(p.peak);
        ok += pass ? 1 : 0;
        per_seed += (seed > 1 ? " " : "") + std::to_string(p.late_max) + "/" + std::to_string(p.peak);
    }
    const double frac = static_cast<double>(ok) / kTerminationSeeds;
    return {frac >= kTerminationSeedFraction,
            std::to_string(ok) + "/" + std::to_string(kTerminationSeeds) +
                " seeds with final-third rounds <= 5% of peak (need >= 95%); late max/peak per seed: " + per_seed};
}

Outcome compactness() {
    const DefaultRuns& r = default_runs();
    const double count_ratio = static_cast<double>(r.cadam.final_count()) / static_cast<double>(r.low.final_count());
    const double loss_ratio = r.cadam.final_loss() / r.low.final_loss();
    return {count_ratio <= kCompactCountRatio && loss_ratio <= kCompactLossRatio,
            "cadam " + std::to_string(r.cadam.final_count()) + " vs baseline(0.5x floor) " +
                std::to_string(r.low.final_count()) + ": count ratio " + fmt("%.4g", count_ratio) + " (<= " +
                fmt("%g", kCompactCountRatio) + "), loss ratio " + fmt("%.4g", loss_ratio) + " (<= " +
                fmt("%g", kCompactLossRatio) + ")"};
}

Outcome monotonicity() {
    const Scenario base = default_scenario();
    bool pass = true;
    std::string d;
    for (const auto& [axis, values] : std::vector<std::pair<std::string, std::vector<std::string>>>{
             {"tau_Q", {"0.5", "0.9", "0.99"}}, {"tau_SNR", {"0.0", "0.1", "0.5"}}}) {
        const SweepReport rep = sweep(base, axis, values);
        d += (d.empty() ? "" : "; ") + axis + ":";
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            d += " " + rep.rows[i].value + "->" + std::to_string(rep.rows[i].result.final_count());
            if (i > 0 && rep.rows[i].result.final_count() > rep.rows[i - 1].result.final_count()) pass = false;
        }
    }
    return {pass, "final counts " + d};
}

Outcome ablation_signatures() {
    Scenario base = default_scenario();
    base.tau_momentum_floor_multiple = kMomentumOnlyFloorMultiple;
    const AblationReport rep = ablate(base, {AblationVariant::kMomentumOnly, AblationVariant::kNoReset});
    const RunResult& mo = rep.runs[0].second;
    const RunResult& nr = rep.runs[1].second;
    // Count must never rise over the final half and must end lower than it
    // started.
    const std::int64_t half = base.schedule.total_steps / 2;
    std::size_t first = 0, last = 0, rises = 0, prev = 0;
    bool started = false;
    for (const MetricsRecord& m : nr.metrics) {
        if (m.step < half) continue;
        if (!started) {
            first = prev = m.n_primitives;
            started = true;
        }
        if (m.n_primitives > prev) ++rises;
        prev = last = m.n_primitives;
    }
    const bool decay = started && rises == 0 && last < first;
    return {mo.cap_hit && decay,
            "momentum_only (tau = " + fmt("%g", kMomentumOnlyFloorMultiple) + "x floor): " +
                (mo.cap_hit ? "cap hit at step " + std::to_string(mo.cap_step) : "no cap, count " +
                                                                                   std::to_string(mo.final_count())) +
                "; no_reset final half: " + std::to_string(first) + " -> " + std::to_string(last) + " with " +
                std::to_string(rises) + " rising intervals" + (decay ? "" : " (not a monotone decay)")};
}

Outcome determinism() {
    const Scenario s = default_scenario();
    const auto dir = std::filesystem::temp_directory_path() / "splatctl_acceptance_determinism";
    std::filesystem::remove_all(dir);
    write_run_outputs(run(s), dir / "a");
    write_run_outputs(run(s), dir / "b");
    bool same = true;
    for (const char* f : {"metrics.csv", "events.jsonl"}) {
        same = same && read_file(dir / "a" / f) == read_file(dir / "b" / f);
    }
    const std::size_t bytes = read_file(dir / "a" / "metrics.csv").size();
    std::filesystem::remove_all(dir);
    return {same, std::string(same ? "byte-identical" : "different") + " metrics.csv (" + std::to_string(bytes) +
                      " bytes) and events.jsonl across two runs"};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {1, "constant-signal SNR fixed point", constant_snr},
        {2, "first-moment variance under white noise", momentum_variance},
        {3, "analytic gradients vs finite differences", gradient_check},
        {4, "quantile vs sorted oracle", quantile_oracle},
        {5, "fixed-threshold regimes around the noise floor", threshold_regimes},
        {6, "soft termination over 20 seeds", soft_termination},
        {7, "compactness at matched quality", compactness},
        {8, "threshold monotonicity", monotonicity},
        {9, "ablation signatures", ablation_signatures},
        {10, "determinism", determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    std::printf("kernels: %s\n", kernels::select(std::nullopt).name);
    int failed = 0;
    for (const Criterion& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2d %s  %s: %s [%.1fs]\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
