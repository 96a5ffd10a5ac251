#include "ehstack/app.hpp"
#include "ehstack/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

using namespace ehstack;

namespace {

struct Totals {
    AppState state;
    std::uint64_t bytes = 0;
    std::uint64_t comms = 0;
    std::uint64_t samples = 0;
    std::array<double, kActivityCount> energy{};
    double e_parts = 0.0;
};

// Fixed-step driver at constant supply voltage v.
Totals drive(const AppSpec& spec, double duration, double dt, double v = 3.3) {
    Totals out;
    const auto steps = static_cast<long>(std::llround(duration / dt));
    for (long k = 0; k < steps; ++k) {
        const Phase before = out.state.phase;
        const auto r = app_step(spec, out.state, true, v, 0, dt);
        if (before != Phase::sampling && r.state.phase == Phase::sampling) ++out.samples;
        out.bytes += r.bytes_emitted;
        out.comms += r.comms_completed;
        for (std::size_t a = 0; a < kActivityCount; ++a) out.energy[a] += r.energy[a];
        out.e_parts += r.total_energy();
        out.state = r.state;
    }
    return out;
}

}  // namespace

TEST_CASE("power loss forces the off phase") {
    const auto spec = preset("TMP1");
    AppState st;
    st = app_step(spec, st, true, 3.3, 0, 0.5).state;
    REQUIRE(st.phase != Phase::off);
    for (Phase p : {Phase::booting, Phase::idle, Phase::sampling, Phase::communicating, Phase::backup}) {
        AppState s = st;
        s.phase = p;
        s.phase_remaining = 0.5;
        const auto r = app_step(spec, s, false, 3.3, 0, 0.01);
        CHECK(r.state.phase == Phase::off);
        CHECK(r.energy[static_cast<std::size_t>(Activity::off)] == Catch::Approx(spec.p_off_residual * 0.01));
    }
}

TEST_CASE("rising power starts a boot, first sample follows it") {
    const auto spec = preset("TMP1");
    auto r = app_step(spec, AppState{}, true, 3.3, 0, 0.1);
    CHECK(r.state.phase == Phase::booting);
    CHECK(r.state.boots == 1);
    r = app_step(spec, r.state, true, 3.3, 0, 0.25);  // boot ends at 0.3 s
    CHECK(r.state.phase == Phase::sampling);
}

TEST_CASE("TMP1 sends one 12 byte message per sample") {
    const auto spec = preset("TMP1");
    const auto t = drive(spec, 200.0, 0.01);
    CHECK(t.samples == 10);
    CHECK(t.comms == t.samples);
    CHECK(t.bytes == 12 * t.comms);
}

TEST_CASE("TMP1 over one hour sends 2160 bytes") {
    const auto t = drive(preset("TMP1"), 3600.0, 0.01);
    CHECK(t.bytes == 180 * 12);
}

TEST_CASE("batched communication waits for n_S samples") {
    auto spec = preset("TMP2");
    const auto t = drive(spec, 20.0 * 65 + 1.0, 0.01);
    CHECK(t.samples == 66);
    CHECK(t.comms == 2);
    CHECK(t.bytes == 24);
}

TEST_CASE("throughput is proportional to runtime") {
    for (const char* name : {"TMP1", "IMU", "PMS", "BIO"}) {
        const auto spec = preset(name);
        for (double duration : {1000.0, 2500.0, 7200.0}) {
            const auto t = drive(spec, duration, 0.01);
            const double period = spec.t_sample_period * spec.n_per_comm;
            const double ideal = duration / period * static_cast<double>(spec.bytes_per_comm);
            INFO(name << " " << duration);
            CHECK(std::abs(static_cast<double>(t.bytes) - ideal) <= static_cast<double>(spec.bytes_per_comm));
        }
    }
}

TEST_CASE("per-activity energy adds up to the SoC and sensor split") {
    const auto t = drive(preset("TOF"), 600.0, 0.001);
    const double sum = std::accumulate(t.energy.begin(), t.energy.end(), 0.0);
    CHECK(sum == Catch::Approx(t.e_parts).epsilon(1e-9));  // summation order only
    const auto spec = preset("TOF");
    // sampling energy: every burst holds the peak for t_peak and p_sample for the rest
    const double burst = spec.p_peak * spec.t_peak + spec.p_sample * (spec.t_sample - spec.t_peak);
    CHECK(t.energy[static_cast<std::size_t>(Activity::sampling_processing)] ==
          Catch::Approx(static_cast<double>(t.samples) * burst).epsilon(1e-9));
}

TEST_CASE("checkpoint runs once per active period below the threshold") {
    const auto spec = preset("TMP1");
    auto t = drive(spec, 100.0, 0.01, 1.65);
    CHECK(t.state.checkpoints == 1);
    CHECK(t.energy[static_cast<std::size_t>(Activity::backup_restore)] == Catch::Approx(spec.e_backup));
    t = drive(spec, 100.0, 0.01, 1.75);
    CHECK(t.state.checkpoints == 0);

    // power cycle: the checkpoint is restored after the next boot
    AppState st = drive(spec, 10.0, 0.01, 1.65).state;
    st = app_step(spec, st, false, 0.5, 0, 1.0).state;
    st = app_step(spec, st, true, 3.3, 0, spec.t_boot + 0.001).state;
    CHECK(st.phase == Phase::restore);
}

TEST_CASE("reactive app reports pending events after a sample") {
    auto spec = preset("PARKING");
    AppState st;
    st = app_step(spec, st, true, 3.3, 0, 0.3).state;  // boot
    auto r = app_step(spec, st, true, 3.3, 2, spec.t_sample);
    CHECK(r.observed_event);
    CHECK(r.state.phase == Phase::communicating);
    r = app_step(spec, r.state, true, 3.3, 0, spec.t_comm);
    CHECK(r.events_detected == 2);
    CHECK(r.bytes_emitted == spec.event_bytes);

    // without events a reactive-only app never communicates
    const auto quiet = drive(spec, 1200.0, 0.01);
    CHECK(quiet.comms == 0);
}

TEST_CASE("frequency scaling") {
    const auto tmp1 = preset("TMP1");
    CHECK(apply_frequency_scaling(tmp1, 1.0).t_sample_period == tmp1.t_sample_period);
    const auto tof = apply_frequency_scaling(preset("TOF"), 12.3);
    CHECK(tof.t_sample_period == Catch::Approx(9.756).margin(5e-4));
    CHECK(tof.t_sample == preset("TOF").t_sample);
    const double bound = tmp1.max_frequency_scale();
    CHECK(bound == Catch::Approx(4.0));
    CHECK_NOTHROW(apply_frequency_scaling(tmp1, bound));
    CHECK_THROWS_AS(apply_frequency_scaling(tmp1, bound * (1.0 + 1e-9)), ScheduleError);
    CHECK_THROWS_AS(apply_frequency_scaling(tmp1, 0.5), ScheduleError);
}

TEST_CASE("presets are valid and match the benchmark table") {
    for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name).validate());
    for (const auto& row : benchmark_table()) {
        const auto a = preset(row.name);
        CHECK(a.t_sample_period == row.t_sample_period);
        CHECK(a.bytes_per_comm == row.bytes_per_comm);
        CHECK(a.n_per_comm == row.n_per_comm);
        CHECK(preset_irradiance_scale(row.name) == row.s_i);
        // every published S_f must be admissible
        CHECK(row.s_f <= a.max_frequency_scale());
    }
    CHECK_THROWS_AS(preset("NOPE"), ConfigError);
}

TEST_CASE("schedulability is validated") {
    auto a = preset("TMP1");
    a.t_comm = 19.5;
    CHECK_THROWS_AS(a.validate(), ScheduleError);
}
