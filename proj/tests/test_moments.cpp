#include "splatctl/error.hpp"
#include "splatctl/kernels.hpp"
#include "splatctl/moments.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace splatctl;

TEST_CASE("constant gradient has unit snr at every step") {
    const MomentConfig cfg;
    for (const Vec2 g : {Vec2{1.0, 0.0}, Vec2{0.3, -0.4}, Vec2{-2e-1, 7e-2}, Vec2{40.0, 1e3}}) {
        MomentState s;
        for (int t = 1; t <= 2000; ++t) {
            s = update(s, g, cfg);
            // Only one axis active: |m_hat|_2 / sqrt(|v_hat|_1) is exactly 1.
            // Both active: |g|_2 / sqrt(gx^2 + gy^2) is still 1.
            CHECK(intrinsic_snr(s, cfg) == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("epsilon bounds the snr of tiny gradients") {
    // SNR = |g| / (|g| + eps) for a constant stream.
    const MomentConfig cfg;
    const Vec2 g{-2e-4, 7e-5};
    const double n = std::hypot(g.x, g.y);
    MomentState s;
    for (int t = 0; t < 10; ++t) s = update(s, g, cfg);
    CHECK(intrinsic_snr(s, cfg) == doctest::Approx(n / (n + cfg.epsilon)).epsilon(1e-12));
}

TEST_CASE("bias correction recovers the gradient after one step") {
    const MomentConfig cfg;
    const MomentState s = update({}, {0.5, -1.5}, cfg);
    const CorrectedMoments c = bias_corrected(s, cfg);
    CHECK(c.m_hat.x == doctest::Approx(0.5));
    CHECK(c.m_hat.y == doctest::Approx(-1.5));
    CHECK(c.v_hat.x == doctest::Approx(0.25));
    CHECK(c.v_hat.y == doctest::Approx(2.25));
    CHECK(momentum_norm(s, cfg) == doctest::Approx(std::hypot(0.5, 1.5)));
}

TEST_CASE("zero gradient gives zero snr without dividing by zero") {
    const MomentConfig cfg;
    MomentState s;
    for (int t = 0; t < 10; ++t) s = update(s, {0.0, 0.0}, cfg);
    CHECK(intrinsic_snr(s, cfg) == 0.0);
}

TEST_CASE("bias correction of a fresh state is undefined") {
    const MomentConfig cfg;
    CHECK_THROWS_AS(bias_corrected(MomentState{}, cfg), UndefinedCorrectionError);
    CHECK_THROWS_AS(intrinsic_snr(MomentState{}, cfg), UndefinedCorrectionError);
}

TEST_CASE("non-finite gradient is rejected and leaves state alone") {
    const MomentConfig cfg;
    const MomentState s = update({}, {1.0, 1.0}, cfg);
    CHECK_THROWS_AS(update(s, {std::numeric_limits<double>::quiet_NaN(), 0.0}, cfg), PoisonedGradientError);
    CHECK_THROWS_AS(update(s, {0.0, std::numeric_limits<double>::infinity()}, cfg), PoisonedGradientError);
}

TEST_CASE("config validation") {
    MomentConfig cfg;
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.beta2 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("batch update checks alignment") {
    const MomentConfig cfg;
    std::vector<MomentState> states(3);
    std::vector<Vec2> grads(2);
    CHECK_THROWS_AS(batch_update(states, grads, cfg), AlignmentError);
    grads.assign(3, {1.0, 2.0});
    const auto out = batch_update(states, grads, cfg);
    REQUIRE(out.size() == 3);
    for (const auto& s : out) CHECK(s == update({}, {1.0, 2.0}, cfg));
}

TEST_CASE("step counter saturates instead of wrapping") {
    const MomentConfig cfg;
    MomentState s;
    s.steps = std::numeric_limits<std::uint64_t>::max();
    s = update(s, {1.0, 0.0}, cfg);
    CHECK(s.steps == std::numeric_limits<std::uint64_t>::max());
    CHECK(std::isfinite(intrinsic_snr(s, cfg)));
}

TEST_CASE("bank matches the scalar update on every kernel variant") {
    const MomentConfig cfg;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (const kernels::Isa isa : kernels::available_isas()) {
        const kernels::KernelTable& k = kernels::table(isa);
        const std::size_t n = 37;
        MomentBank bank(n);
        std::vector<MomentState> ref(n);
        std::vector<std::uint8_t> poisoned(n);
        for (int t = 0; t < 50; ++t) {
            std::vector<Vec2> g(n);
            for (auto& x : g) x = {n01(rng), n01(rng)};
            if (t == 10) g[5].x = std::numeric_limits<double>::quiet_NaN();
            std::fill(poisoned.begin(), poisoned.end(), 0);
            const std::size_t bad = bank.update_all(g, cfg, k, poisoned);
            CHECK(bad == (t == 10 ? 1u : 0u));
            for (std::size_t i = 0; i < n; ++i) {
                if (std::isfinite(g[i].x)) ref[i] = update(ref[i], g[i], cfg);
                CHECK(poisoned[i] == (t == 10 && i == 5 ? 1 : 0));
            }
        }
        for (std::size_t i = 0; i < n; ++i) CHECK(bank.get(i) == ref[i]);
    }
}

TEST_CASE("bank remap keeps carried states and zeroes new ones") {
    const MomentConfig cfg;
    MomentBank bank(3);
    for (std::size_t i = 0; i < 3; ++i) bank.set(i, update({}, {double(i + 1), 0.0}, cfg));
    Remap r;
    r.source = {2, -1, 0};
    bank.remap(r);
    REQUIRE(bank.size() == 3);
    CHECK(bank.get(0) == update({}, {3.0, 0.0}, cfg));
    CHECK(bank.get(1) == MomentState{});
    CHECK(bank.get(2) == update({}, {1.0, 0.0}, cfg));

    std::vector<double> norms(3), snr(3);
    bank.corrected_stats(cfg, norms, snr);
    CHECK(norms[1] == 0.0);
    CHECK(snr[1] == 0.0);
    CHECK(norms[0] == doctest::Approx(3.0));
    CHECK(snr[0] == doctest::Approx(1.0));

    const MomentBank copy = MomentBank::from_states(bank.to_states());
    CHECK(copy.to_states() == bank.to_states());
}

TEST_CASE("white noise first moment variance is small") {
    // Smaller version of the acceptance Monte Carlo: var(m) -> s^2 (1-b1)/(1+b1).
    const MomentConfig cfg;
    const double sigma = 0.7;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, sigma);
    MomentState s;
    double sum = 0.0, sum2 = 0.0;
    long count = 0;
    for (int t = 0; t < 200000; ++t) {
        s = update(s, {n(rng), n(rng)}, cfg);
        if (t >= 1000) {
            sum += s.m.x + s.m.y;
            sum2 += s.m.x * s.m.x + s.m.y * s.m.y;
            count += 2;
        }
    }
    const double var = sum2 / count - (sum / count) * (sum / count);
    CHECK(var == doctest::Approx(sigma * sigma * 0.1 / 1.9).epsilon(0.05));
}
