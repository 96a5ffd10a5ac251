#include "ehstack/errors.hpp"
#include "ehstack/ess.hpp"
#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <random>

using namespace ehstack;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

StorageModel lossless(double c, double v0) {
    StorageModel s;
    s.capacitance = c;
    s.esr = 0.0;
    s.leak_resistance = kInf;
    s.v_init = v0;
    return s;
}

}  // namespace

TEST_CASE("harvester power") {
    HarvesterModel lin;
    lin.k_mpp = 1e-3;
    CHECK(harvester_power(lin, 0.0, 2.0).power == 0.0);
    CHECK(harvester_power(lin, 500.0, 2.0).power == Catch::Approx(0.5));

    // a single-point surface at v = 1 V reproduces k_mpp * g exactly
    HarvesterModel iv;
    iv.kind = HarvesterModel::Kind::iv_surface;
    iv.surface.irradiance = {0.0, 1000.0};
    iv.surface.voltage = {1.0};
    iv.surface.current = {0.0, 1.0};
    lin.k_mpp = 1e-3;
    for (double g : {0.0, 123.0, 500.0, 1000.0}) {
        CHECK(std::abs(harvester_power(iv, g, 1.0).power - harvester_power(lin, g, 1.0).power) < 1e-9);
    }
    CHECK(harvester_power(iv, 500.0, 2.0).clamped);
}

TEST_CASE("iv surface interpolation and MPP") {
    const auto s = parse_iv_surface("0,0,0\n0,1,0\n100,0,0.2\n100,1,0.1\n");
    HarvesterModel m;
    m.kind = HarvesterModel::Kind::iv_surface;
    m.surface = s;
    // bilinear at g = 50, v = 0.5: current = 0.5 * (0.15) = 0.075
    CHECK(harvester_power(m, 50.0, 0.5).power == Catch::Approx(0.075 * 0.5));
    CHECK(harvester_mpp(m, 100.0) >= harvester_power(m, 100.0, 1.0).power);
}

TEST_CASE("MPPT hysteresis walk") {
    const MpptModel m;
    MpptMode mode = MpptMode::bypass;
    mode = next_mppt_mode(m, mode, 1.5);
    CHECK(mode == MpptMode::bypass);
    mode = next_mppt_mode(m, mode, 1.8);
    CHECK(mode == MpptMode::tracking);
    mode = next_mppt_mode(m, mode, 1.7);
    CHECK(mode == MpptMode::tracking);
    mode = next_mppt_mode(m, mode, 1.59);
    CHECK(mode == MpptMode::bypass);
    mode = next_mppt_mode(m, mode, 1.79);
    CHECK(mode == MpptMode::bypass);
}

TEST_CASE("MPPT modes follow a reference two-state automaton on random walks") {
    const MpptModel m;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> v(1.4, 2.0);
    for (int walk = 0; walk < 200; ++walk) {
        MpptMode mode = MpptMode::bypass;
        bool ref_bypass = true;
        for (int k = 0; k < 200; ++k) {
            const double x = v(rng);
            if (ref_bypass && x >= 1.8) ref_bypass = false;
            else if (!ref_bypass && x < 1.6) ref_bypass = true;
            mode = next_mppt_mode(m, mode, x);
            REQUIRE((mode == MpptMode::bypass) == ref_bypass);
        }
    }
}

TEST_CASE("MPPT step conserves power and respects v_max") {
    const MpptModel m;
    const auto zero = mppt_step(m, MpptMode::tracking, 2.0, 0.0, 0.1);
    CHECK(zero.p_into_storage == 0.0);
    CHECK(zero.p_loss == 0.0);

    const auto tr = mppt_step(m, MpptMode::tracking, 2.0, 0.01, 0.1);
    CHECK(tr.p_into_storage == Catch::Approx(0.008));
    CHECK(tr.p_into_storage + tr.p_loss == Catch::Approx(0.01).epsilon(1e-15));

    const auto by = mppt_step(m, MpptMode::bypass, 1.0, 0.01, 0.1);
    CHECK(by.p_into_storage == Catch::Approx(0.01));

    // storage at v_max: accept limit from the storage model caps the input
    StorageModel s;
    StorageState st{2.9, 2.9};
    const double lim = storage_accept_limit(s, st, 0.0, 0.1, 2.9);
    const auto sat = mppt_step(m, MpptMode::tracking, 2.9, 0.05, 0.1, lim);
    CHECK(sat.mode == MpptMode::saturated);
    CHECK(sat.p_into_storage <= lim + 1e-15);
    CHECK(sat.p_into_storage + sat.p_loss == Catch::Approx(0.05).epsilon(1e-15));
    const auto after = storage_step(s, st, sat.p_into_storage, 0.0, 0.1);
    CHECK(after.next.v_cap <= 2.9 + 1e-9);
}

TEST_CASE("isolated capacitor keeps its voltage") {
    const StorageModel s = lossless(2.2, 1.3);
    const auto r = storage_step(s, {1.3, 1.3}, 0.0, 0.0, 10.0);
    CHECK(r.next.v_cap == 1.3);
}

TEST_CASE("self-discharge follows RC decay") {
    StorageModel s = lossless(2.2, 2.5);
    s.leak_resistance = 2.0e5;
    StorageState st{2.5, 2.5};
    const double dt = 100.0;
    for (int k = 0; k < 1000; ++k) st = storage_step(s, st, 0.0, 0.0, dt).next;
    const double want = oracle::rc_decay_v(2.5, 1000 * dt, 2.0e5, 2.2);
    CHECK(std::abs(st.v_cap - want) / want < 1e-3);
}

TEST_CASE("constant-power charging matches the analytic curve") {
    const StorageModel s = lossless(0.47, 0.5);
    StorageState st{0.5, 0.5};
    const double p = 2e-3;
    for (int k = 0; k < 1000; ++k) st = storage_step(s, st, p, 0.0, 0.5).next;
    const double want = oracle::cap_charge_v(0.5, p, 500.0, 0.47);
    CHECK(std::abs(st.v_cap - want) / want < 1e-3);
}

TEST_CASE("ESR drop for a 0.15 A load") {
    StorageModel s;
    s.capacitance = 2.2;
    s.esr = 6.9;
    s.buffer_capacitance = 0.0;
    const auto r = storage_step_current(s, {2.0, 2.0}, 0.0, 0.15, 1e-6);
    const double drop = 2.0 - r.v_bus;
    CHECK(std::abs(drop - 6.9 * 0.15) < 1e-12);
    CHECK(std::abs(drop - 1.04) <= 0.005 + 1e-12);  // 1.035 quoted to two decimals
}

TEST_CASE("storage steps close energy exactly") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        StorageModel s;
        s.capacitance = 0.1 + 3.0 * u(rng);
        s.esr = trial % 3 == 0 ? 0.0 : 10.0 * u(rng);
        s.leak_resistance = trial % 4 == 0 ? kInf : 1e3 + 1e6 * u(rng);
        s.buffer_capacitance = trial % 2 == 0 ? 0.0 : 1e-3 * u(rng);
        StorageState st{0.5 + 2.0 * u(rng), 0.0};
        st.v_buf = st.v_cap;
        const double p_in = 0.02 * u(rng);
        const double p_out = 0.02 * u(rng);
        const double dt = 1e-3 + 0.1 * u(rng);
        const auto r = storage_step(s, st, p_in, p_out, dt);
        const double de = stored_energy(s, r.next) - stored_energy(s, st);
        const double flow = r.e_in - r.e_out - r.e_leak - r.e_esr;
        const double scale = std::max({std::abs(de), r.e_in, r.e_out, 1e-12});
        INFO("trial " << trial);
        CHECK(std::abs(de - flow) <= 1e-6 * scale);
        CHECK(r.e_leak >= 0.0);
        CHECK(r.e_esr >= 0.0);
    }
}

TEST_CASE("v_cap is monotone in the input power") {
    StorageModel s;
    const StorageState st{1.5, 1.5};
    double last = 0.0;
    for (double p = 0.0; p <= 0.05; p += 0.005) {
        const double v = storage_step(s, st, p, 0.003, 0.05).next.v_cap;
        CHECK(v >= last);
        last = v;
    }
}

TEST_CASE("converter hysteresis and losses") {
    ConverterModel c;
    CHECK_FALSE(converter_step(c, 1.99, false, 0.0).on);
    CHECK(converter_step(c, 2.0, false, 0.0).on);
    c.efficiency = EfficiencyCurve(0.8);
    const auto on = converter_step(c, 0.8, true, 0.010);
    CHECK(on.on);
    CHECK(on.p_drawn == Catch::Approx(0.0125));
    CHECK(on.p_loss == Catch::Approx(0.0025));
    const auto off = converter_step(c, 0.69, true, 0.010);
    CHECK_FALSE(off.on);
    CHECK(off.p_drawn == 0.0);

    bool state = false;
    for (double v : {2.1, 0.75, 2.1}) {
        state = converter_step(c, v, state, 0.0).on;
        CHECK(state);
    }
}

TEST_CASE("residual energy") {
    StorageModel s;
    CHECK(residual_energy(s, 0.0) == 0.0);
    CHECK(residual_energy(s, 0.7) == Catch::Approx(0.539));
    s.capacitance = 0.54;
    CHECK(residual_energy(s, 2.0) == Catch::Approx(1.08));
    s.capacitance = 2.2;
    CHECK(residual_energy(s, 2.9) == Catch::Approx(9.251));
}

TEST_CASE("efficiency curves interpolate and hold at the ends") {
    const EfficiencyCurve c({{0.0, 0.5}, {1.0, 0.9}});
    CHECK(c(-1.0) == 0.5);
    CHECK(c(0.5) == Catch::Approx(0.7));
    CHECK(c(2.0) == 0.9);
    CHECK_THROWS_AS(EfficiencyCurve({{1.0, 0.5}, {0.0, 0.9}}), ValidationError);
    CHECK_THROWS_AS(EfficiencyCurve(1.5), ValidationError);
}

TEST_CASE("configuration invariants") {
    EssConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.mppt.bypass_engage_v = 1.9;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = EssConfig{};
    cfg.converter.v_off = 2.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = EssConfig{};
    cfg.storage.v_init = 3.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
