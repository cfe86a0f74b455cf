#include "splatctl/controller.hpp"
#include "splatctl/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace splatctl;

namespace {

std::size_t ones(const Mask& m) {
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

Population line_of(std::size_t n, double scale = 0.01, double opacity = 0.5) {
    Population pop;
    for (std::size_t i = 0; i < n; ++i) {
        Primitive p;
        p.position = {(static_cast<double>(i) + 0.5) / static_cast<double>(n), 0.5};
        p.scale = scale;
        p.opacity = opacity;
        p.age = 200;
        pop.append(p);
    }
    return pop;
}

/// States fed `steps` copies of g_i (coherent, SNR 1).
std::vector<MomentState> coherent(const std::vector<double>& mags, int steps, const MomentConfig& mcfg) {
    std::vector<MomentState> out(mags.size());
    for (std::size_t i = 0; i < mags.size(); ++i) {
        for (int t = 0; t < steps; ++t) out[i] = update(out[i], {mags[i], 0.0}, mcfg);
    }
    return out;
}

} // namespace

TEST_CASE("policy names round trip") {
    for (const Policy p : {Policy::kNone, Policy::kBaseline, Policy::kCadam}) CHECK(parse_policy(to_string(p)) == p);
    CHECK_THROWS_AS(parse_policy("adc"), ConfigError);
}

TEST_CASE("config validation") {
    ControllerConfig c;
    CHECK_NOTHROW(c.validate());
    c.tau_q = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.tau_snr = 0.0;
    CHECK_NOTHROW(c.validate());
    c.tau_snr = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.split_factor = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("quantile gate is strict") {
    const MomentConfig mcfg;
    ControllerConfig cfg;
    cfg.tau_q = 0.5;
    // Magnitudes 1..4: median 2.5, so only 3 and 4 pass.
    const auto states = coherent({1.0, 2.0, 3.0, 4.0}, 5, mcfg);
    const ControllerDecision d = cadam_select(states, mcfg, cfg);
    CHECK(d.quantile_value == doctest::Approx(2.5));
    CHECK(d.densify == Mask{0, 0, 1, 1});

    // Equal magnitudes equal the quantile and nobody passes.
    const auto flat = coherent({2.0, 2.0, 2.0}, 5, mcfg);
    CHECK(ones(cadam_select(flat, mcfg, cfg).densify) == 0);
}

TEST_CASE("snr gate rejects oscillating gradients") {
    const MomentConfig mcfg;
    ControllerConfig cfg;
    cfg.tau_q = 0.5;
    std::vector<MomentState> s(4);
    for (int t = 0; t < 200; ++t) {
        s[0] = update(s[0], {0.1, 0.0}, mcfg);
        s[1] = update(s[1], {0.2, 0.0}, mcfg);
        s[2] = update(s[2], {(t % 2) ? 50.0 : -50.0, 0.0}, mcfg); // big, incoherent
        s[3] = update(s[3], {0.5, 0.5}, mcfg);
    }
    const ControllerDecision d = cadam_select(s, mcfg, cfg);
    CHECK(d.snr_values[2] < cfg.tau_snr);
    CHECK(d.momentum_norms[2] > d.quantile_value);
    CHECK(d.densify == Mask{0, 0, 0, 1});
}

TEST_CASE("fresh states are ignored by the quantile and never selected") {
    const MomentConfig mcfg;
    ControllerConfig cfg;
    cfg.tau_q = 0.5;
    auto states = coherent({1.0, 2.0, 3.0}, 3, mcfg);
    states.push_back({});
    const ControllerDecision d = cadam_select(states, mcfg, cfg);
    CHECK(d.quantile_value == doctest::Approx(2.0));
    CHECK(d.densify == Mask{0, 0, 1, 0});
    CHECK_THROWS_AS(cadam_select(std::vector<MomentState>(3), mcfg, cfg), Error);
}

TEST_CASE("eligibility masks selections") {
    const MomentConfig mcfg;
    ControllerConfig cfg;
    cfg.tau_q = 0.1;
    const auto states = coherent({1.0, 2.0, 3.0, 4.0, 5.0}, 3, mcfg);
    const Mask eligible = {1, 1, 0, 1, 0};
    const ControllerDecision d = cadam_select(states, mcfg, cfg, eligible);
    CHECK(d.densify == Mask{0, 1, 0, 1, 0});
    CHECK_THROWS_AS(cadam_select(states, mcfg, cfg, Mask{1, 1}), AlignmentError);
}

TEST_CASE("raising either threshold never adds selections") {
    const MomentConfig mcfg;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n01;
    std::lognormal_distribution<double> scale(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<MomentState> s(60);
        for (int t = 0; t < 40; ++t) {
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double drift = 0.02 * static_cast<double>(i % 7);
                s[i] = update(s[i], {drift + scale(rng) * n01(rng), scale(rng) * n01(rng)}, mcfg);
            }
        }
        Mask prev(s.size(), 1);
        for (const double q : {0.1, 0.5, 0.9, 0.99}) {
            ControllerConfig cfg;
            cfg.tau_q = q;
            const Mask m = cadam_select(s, mcfg, cfg).densify;
            for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] <= prev[i]);
            prev = m;
        }
        prev.assign(s.size(), 1);
        for (const double snr : {0.0, 0.1, 0.3, 0.6}) {
            ControllerConfig cfg;
            cfg.tau_snr = snr;
            const Mask m = cadam_select(s, mcfg, cfg).densify;
            for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] <= prev[i]);
            prev = m;
        }
    }
}

TEST_CASE("momentum only gate uses the fixed threshold") {
    const MomentConfig mcfg;
    ControllerConfig cfg;
    cfg.gate = CadamGate::kMomentumOnly;
    cfg.tau_momentum = 1.5;
    const auto states = coherent({1.0, 2.0, 3.0}, 3, mcfg);
    const ControllerDecision d = cadam_select(states, mcfg, cfg);
    CHECK(d.densify == Mask{0, 1, 1});
    CHECK(std::isnan(d.quantile_value));
}

TEST_CASE("baseline averages over the window and resets") {
    ControllerConfig cfg;
    cfg.tau_pos = 1.0;
    BaselineState st(3);
    baseline_accumulate(st, std::vector<Vec2>{{3.0, 4.0}, {0.5, 0.0}, {0.0, 0.0}});
    baseline_accumulate(st, std::vector<Vec2>{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.0}});
    CHECK(st.metric() == std::vector<double>{2.5, 0.5, 0.0});
    CHECK(baseline_select(st, cfg) == Mask{1, 0, 0});
    CHECK(st.metric() == std::vector<double>{0.0, 0.0, 0.0});
    CHECK_THROWS_AS(baseline_accumulate(st, std::vector<Vec2>(2)), AlignmentError);
}

TEST_CASE("baseline below the noise floor selects most of a noise-only population") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> noise(0.0, 1.0);
    ControllerConfig cfg;
    const double floor = std::sqrt(std::acos(-1.0) / 2.0); // E|g| for unit 2D normal
    cfg.tau_pos = 0.5 * floor;
    BaselineState st(500);
    for (int t = 0; t < 100; ++t) {
        std::vector<Vec2> g(500);
        for (auto& x : g) x = {noise(rng), noise(rng)};
        baseline_accumulate(st, g);
    }
    CHECK(ones(baseline_select(st, cfg)) > 250);
}

TEST_CASE("split or clone by scale") {
    ControllerConfig cfg;
    Population pop = line_of(3);
    pop[0].scale = 0.05;
    pop[1].scale = 0.02; // not strictly above tau_scale: clone
    pop[2].scale = 0.01;
    ControllerDecision d;
    d.densify = {1, 1, 0};
    decide_actions(d, pop, cfg);
    CHECK(d.split == Mask{1, 0, 0});
    CHECK(d.clone == Mask{0, 1, 0});
    CHECK(d.ids == pop.ids());
}

TEST_CASE("clone appends exact copies with fresh age") {
    ControllerConfig cfg;
    Population pop = line_of(3);
    const auto res = apply_clone(pop, Mask{0, 1, 1}, cfg);
    CHECK(res.applied == 2);
    REQUIRE(pop.size() == 5);
    CHECK(pop.ids() == std::vector<PrimitiveId>{0, 1, 2, 3, 4});
    CHECK(pop[3].position == pop[1].position);
    CHECK(pop[3].scale == pop[1].scale);
    CHECK(pop[3].opacity == pop[1].opacity);
    CHECK(pop[3].age == 0);
    CHECK(pop[1].age == 200);
    CHECK(res.remap.source == std::vector<std::int64_t>{0, 1, 2, -1, -1});
}

TEST_CASE("split replaces parents by two smaller children") {
    ControllerConfig cfg;
    Population pop = line_of(3, 0.1, 0.4);
    std::mt19937_64 rng(1);
    const auto res = apply_split(pop, Mask{1, 0, 1}, cfg, rng);
    CHECK(res.applied == 2);
    REQUIRE(pop.size() == 5);
    CHECK(pop.ids() == std::vector<PrimitiveId>{1, 3, 4, 5, 6});
    CHECK(res.remap.source == std::vector<std::int64_t>{1, -1, -1, -1, -1});
    for (std::size_t i = 1; i < 5; ++i) {
        CHECK(pop[i].scale == doctest::Approx(0.1 / 1.6));
        CHECK(pop[i].opacity == 0.4);
        CHECK(pop[i].age == 0);
    }
}

TEST_CASE("growth cap truncates in id order") {
    ControllerConfig cfg;
    cfg.max_primitives = 4;
    Population pop = line_of(3);
    const auto res = apply_clone(pop, Mask{1, 1, 1}, cfg);
    CHECK(res.applied == 1);
    CHECK(res.skipped == 2);
    CHECK(pop.size() == 4);
    CHECK(pop[3].position == pop[0].position);

    std::mt19937_64 rng(1);
    Population full = line_of(4, 0.1);
    const auto sres = apply_split(full, Mask{1, 1, 0, 0}, cfg, rng);
    CHECK(sres.applied == 0);
    CHECK(sres.skipped == 2);
    CHECK(full.size() == 4);
}

TEST_CASE("prune by opacity and scale") {
    ControllerConfig cfg;
    Population pop = line_of(4);
    pop[0].opacity = 0.004;
    pop[1].opacity = 0.005; // at the threshold survives
    pop[2].scale = 0.6;
    const auto res = prune(pop, cfg);
    CHECK(res.applied == 2);
    CHECK(pop.ids() == std::vector<PrimitiveId>{1, 3});
    CHECK(res.remap.source == std::vector<std::int64_t>{1, 3});
}

TEST_CASE("selective reset only touches low snr primitives after warmup") {
    const MomentConfig mcfg;
    ControllerConfig cfg;
    Population pop = line_of(3, 0.01, 0.7);
    MomentBank bank(3);
    MomentState coherent_state, noisy;
    for (int t = 0; t < 100; ++t) {
        coherent_state = update(coherent_state, {1.0, 0.0}, mcfg);
        noisy = update(noisy, {(t % 2) ? 1.0 : -1.0, 0.0}, mcfg);
    }
    bank.set(0, coherent_state);
    bank.set(1, noisy);
    // slot 2 never updated

    Population early = pop;
    CHECK(ones(selective_opacity_reset(early, bank, mcfg, cfg, cfg.warmup_steps - 1)) == 0);
    CHECK(early == pop);

    const Mask reset = selective_opacity_reset(pop, bank, mcfg, cfg, cfg.warmup_steps);
    CHECK(reset == Mask{0, 1, 0});
    CHECK(pop[0].opacity == 0.7);
    CHECK(pop[1].opacity == cfg.reset_opacity);
    CHECK(pop[2].opacity == 0.7);
    CHECK(bank.get(1) == noisy);
}

TEST_CASE("global reset clamps everyone") {
    ControllerConfig cfg;
    Population pop = line_of(3, 0.01, 0.7);
    pop[2].opacity = 0.005;
    CHECK(ones(global_opacity_reset(pop, cfg, 0)) == 0);
    const Mask changed = global_opacity_reset(pop, cfg, cfg.warmup_steps);
    CHECK(changed == Mask{1, 1, 0});
    CHECK(pop[0].opacity == cfg.reset_opacity);
    CHECK(pop[2].opacity == 0.005);
}

TEST_CASE("remaps compose and carry side channels") {
    ControllerConfig cfg;
    Population pop = line_of(4);
    std::vector<int> tag = {10, 11, 12, 13};
    const auto c = apply_clone(pop, Mask{0, 1, 0, 0}, cfg);
    pop[0].opacity = 0.0;
    const auto p = prune(pop, cfg);
    const Remap both = compose(c.remap, p.remap);
    CHECK(both.source == std::vector<std::int64_t>{1, 2, 3, -1});
    CHECK(remap_channel(tag, both, -1) == std::vector<int>{11, 12, 13, -1});
    CHECK(remap_channel(remap_channel(tag, c.remap, -1), p.remap, -1) == remap_channel(tag, both, -1));
}
