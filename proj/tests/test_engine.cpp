#include "ehstack/engine.hpp"
#include "ehstack/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace ehstack;

namespace {

IrradianceTrace day_trace(int days, double peak, std::uint64_t seed = 7) {
    SolarSynthesis s;
    s.days = days;
    s.cadence_s = 60.0;
    s.peak_w_m2 = peak;
    s.cloudiness = 0.3;
    s.seed = seed;
    return synthesize_irradiance(s);
}

IrradianceTrace flat(double g, double duration) { return IrradianceTrace({{0.0, g}, {duration, g}}); }

SimConfig quiet_config() {
    SimConfig c;
    c.record_voltage = false;
    return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("no light, no work") {
    EssConfig ess;
    ess.storage.v_init = 1.5;
    const auto r = simulate(flat(0.0, 6 * 3600.0), nullptr, ess, preset("TMP1"), quiet_config());
    CHECK(r.throughput_bytes == 0);
    CHECK(r.boots == 0);
    CHECK_FALSE(r.final_converter_on);
    const auto& L = r.stack.ledger;
    CHECK(L.activity(Activity::off) > 0.0);
    CHECK(L.sss_total() == Catch::Approx(L.activity(Activity::off)).epsilon(1e-12));
    CHECK(r.on_time == 0.0);
    for (auto b : r.activity.on_off) REQUIRE(b == 0);
}

TEST_CASE("constant-supply TMP1 hour sends 2160 bytes") {
    SimConfig c = quiet_config();
    c.supply_override = 3.3;
    const auto r = simulate(flat(0.0, 3600.0), nullptr, EssConfig{}, preset("TMP1"), c);
    CHECK(r.throughput_bytes == 2160);
    CHECK(r.stack.ledger.external_supply > 0.0);
    CHECK(r.stack.ledger.closure_error() < 1e-9);
}

TEST_CASE("ideal chain conserves energy") {
    auto ess = EssConfig::ideal();
    ess.storage.capacitance = 30.0;  // large enough that nothing is curtailed at v_max
    const auto r = simulate(day_trace(1, 200.0), nullptr, ess, preset("TMP1"), quiet_config());
    const auto& L = r.stack.ledger;
    REQUIRE(r.throughput_bytes > 0);
    REQUIRE(r.final_v_cap < 2.8);
    CHECK(L.mppt_loss == 0.0);
    CHECK(L.converter_loss == 0.0);
    CHECK(L.storage_loss() == 0.0);
    const double in = L.harvest_input + L.storage_initial;
    CHECK(std::abs(in - (L.sss_total() + L.storage_residual)) <= 1e-6 * in);
}

TEST_CASE("lossy runs close and the profile sums to the stack") {
    std::mt19937_64 rng(21);
    const char* apps[] = {"TMP1", "IMU", "TOF", "BIO"};
    for (int trial = 0; trial < 6; ++trial) {
        EssConfig ess;
        ess.storage.capacitance = 0.1 + 1.0 * static_cast<double>(rng() % 100) / 100.0;
        ess.storage.buffer_capacitance = trial % 2 ? 400e-6 : 0.0;
        ess.storage.v_init = 0.5 + 1.5 * static_cast<double>(rng() % 100) / 100.0;
        const auto app = preset(apps[trial % 4]);
        const auto r = simulate(day_trace(1, 300.0 + 100.0 * trial, rng()), nullptr, ess, app, quiet_config());
        const auto& L = r.stack.ledger;
        INFO("trial " << trial);
        CHECK(L.closure_error() <= 1e-3);

        StackBin sum;
        for (const auto& b : r.profile.bins) {
            sum.harvested += b.harvested;
            sum.mppt_loss += b.mppt_loss;
            sum.storage_loss += b.storage_loss;
            sum.converter_loss += b.converter_loss;
            sum.soc += b.soc;
            sum.sensor += b.sensor;
            sum.storage_delta += b.storage_delta;
            REQUIRE(std::abs(b.imbalance()) <= 1e-9 * std::max(1e-3, b.harvested + b.soc + b.sensor));
        }
        CHECK(rel(sum.harvested, L.harvest_input) <= 1e-9);
        CHECK(rel(sum.mppt_loss, L.mppt_loss) <= 1e-9);
        CHECK(rel(sum.storage_loss, L.storage_loss()) <= 1e-9);
        CHECK(rel(sum.converter_loss, L.converter_loss) <= 1e-9);
        CHECK(rel(sum.soc + sum.sensor, L.sss_total()) <= 1e-9);
        CHECK(rel(sum.storage_delta, L.storage_residual - L.storage_initial) <= 1e-9);
        CHECK(r.profile.bins.size() == r.activity.size());
        CHECK(r.activity.size() == static_cast<std::size_t>(std::ceil(r.duration / 0.2 - 1e-9)));
    }
}

TEST_CASE("identical inputs give identical results") {
    EssConfig ess;
    const auto tr = day_trace(1, 500.0);
    const auto a = simulate(tr, nullptr, ess, preset("TOF"), quiet_config());
    const auto b = simulate(tr, nullptr, ess, preset("TOF"), quiet_config());
    CHECK(a.throughput_bytes == b.throughput_bytes);
    CHECK(a.steps == b.steps);
    CHECK(a.stack.ledger.storage_residual == b.stack.ledger.storage_residual);
    CHECK(a.activity.on_off == b.activity.on_off);
    REQUIRE(a.profile.bins.size() == b.profile.bins.size());
    for (std::size_t k = 0; k < a.profile.bins.size(); ++k) REQUIRE(a.profile.bins[k].soc == b.profile.bins[k].soc);
}

TEST_CASE("fine and multi-rate stepping agree") {
    EssConfig ess;
    ess.storage.capacitance = 0.5;
    ess.storage.v_init = 1.9;
    const auto tr = flat(400.0, 2 * 3600.0);
    const auto app = preset("TMP1");
    const auto coarse = simulate(tr, nullptr, ess, app, quiet_config());
    SimConfig fine = quiet_config();
    fine.dt_quiescent = fine.dt_active;
    const auto ref = simulate(tr, nullptr, ess, app, fine);
    REQUIRE(ref.throughput_bytes > 0);
    CHECK(coarse.steps < ref.steps / 5);
    CHECK(rel(static_cast<double>(coarse.throughput_bytes), static_cast<double>(ref.throughput_bytes)) <= 0.01);
    const auto& a = coarse.stack.ledger;
    const auto& b = ref.stack.ledger;
    CHECK(rel(a.harvest_input, b.harvest_input) <= 0.01);
    CHECK(rel(a.mppt_loss, b.mppt_loss) <= 0.01);
    CHECK(rel(a.converter_loss, b.converter_loss) <= 0.01);
    CHECK(rel(a.storage_loss(), b.storage_loss()) <= 0.01);
    CHECK(rel(a.storage_residual, b.storage_residual) <= 0.01);
    for (std::size_t k = 0; k < kActivityCount; ++k) {
        INFO(to_string(static_cast<Activity>(k)));
        CHECK(std::abs(a.sss_by_activity[k] - b.sss_by_activity[k]) <= 0.01 * b.sss_total());
    }
}

TEST_CASE("skip-nights without dark spans changes nothing") {
    EssConfig ess;
    ess.storage.v_init = 1.9;
    const auto tr = flat(300.0, 3 * 3600.0);
    const auto a = simulate(tr, nullptr, ess, preset("TMP1"), quiet_config());
    const auto b = run_with_skip_nights(tr, nullptr, ess, preset("TMP1"), quiet_config());
    CHECK(b.skipped_time == 0.0);
    CHECK(a.throughput_bytes == b.throughput_bytes);
    CHECK(a.stack.ledger.storage_residual == b.stack.ledger.storage_residual);
}

TEST_CASE("skipping an all-dark trace matches stepping through it") {
    EssConfig ess;
    ess.storage.v_init = 1.5;
    const auto tr = flat(0.0, 2 * 86400.0);
    const auto a = simulate(tr, nullptr, ess, preset("TMP1"), quiet_config());
    const auto b = run_with_skip_nights(tr, nullptr, ess, preset("TMP1"), quiet_config());
    CHECK(b.skipped_time > 0.99 * tr.duration());
    CHECK(b.steps * 10 < a.steps);
    CHECK(rel(a.final_v_cap, b.final_v_cap) <= 1e-3);
    CHECK(rel(a.stack.ledger.storage_leak, b.stack.ledger.storage_leak) <= 1e-3);
    CHECK(rel(a.stack.ledger.activity(Activity::off), b.stack.ledger.activity(Activity::off)) <= 1e-3);
    CHECK(b.activity.size() == a.activity.size());
}

TEST_CASE("dark spans with the converter on are not skipped") {
    EssConfig ess;
    ess.storage.v_init = 2.5;
    const auto tr = flat(0.0, 600.0);
    const auto r = run_with_skip_nights(tr, nullptr, ess, preset("TMP1"), quiet_config());
    REQUIRE(r.on_time > 0.0);
    CHECK(r.throughput_bytes > 0);
    CHECK(r.skipped_time <= tr.duration() - r.on_time + 1e-9);
}

TEST_CASE("drain policy runs on past the trace end") {
    EssConfig ess;
    ess.storage.capacitance = 0.2;
    ess.storage.v_init = 2.5;
    SimConfig c = quiet_config();
    c.end_policy = EndPolicy::drain_until_converter_off;
    const auto r = simulate(flat(0.0, 60.0), nullptr, ess, preset("TMP1"), c);
    CHECK(r.duration > 60.0);
    CHECK_FALSE(r.final_converter_on);
    CHECK(r.final_v_cap < ess.converter.v_off + 0.05);
    CHECK(r.stack.ledger.storage_residual == Catch::Approx(0.5 * 0.2 * r.final_v_cap * r.final_v_cap));
}

TEST_CASE("finalize books the residual and checks closure") {
    StorageModel s;
    EnergyLedger L;
    L.storage_initial = 9.251;
    const auto st = finalize_stack(L, s, {2.9, 2.9}, 1.0);
    CHECK(st.ledger.storage_residual == Catch::Approx(9.251));
    L.storage_initial = 0.0;
    CHECK(finalize_stack(L, s, {0.0, 0.0}, 1.0).ledger.storage_residual == 0.0);
    L.storage_initial = 1.0;
    CHECK_THROWS_AS(finalize_stack(L, s, {2.0, 2.0}, 1.0), ConsistencyError);
}

TEST_CASE("invalid step configuration is a config error") {
    SimConfig c;
    c.dt_active = 0.5;
    CHECK_THROWS_AS(c.validate(preset("TMP1")), ConfigError);
    c = SimConfig{};
    c.aggregation_step = 0.25;
    CHECK_THROWS_AS(c.validate(preset("TMP1")), ConfigError);
    c = SimConfig{};
    c.dt_active = 0.2;
    c.dt_quiescent = 0.2;
    CHECK_THROWS_AS(c.validate(preset("TMP1")), ConfigError);  // coarser than half the boot
}
