#include "ehstack/errors.hpp"
#include "ehstack/scaling.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace ehstack;

namespace {

PowerProfile make_profile(double t_app, double t_a, double p_a, double p_i) {
    PowerProfile p;
    p.app_name = "synthetic";
    p.t_app_period = t_app;
    p.t_active = t_a;
    p.p_active_avg = p_a;
    p.p_idle_avg = p_i;
    p.t_profiling = 3600.0;
    return p;
}

// Scaled average power written out directly, then solved for S_f by bisection.
double scaled_power_ref(double t_app, double t_a, double p_a, double p_i, double s_f) {
    return s_f * p_a + p_i * (t_app - s_f * t_a) / (t_app - t_a);
}

double solve_sf_ref(double t_app, double t_a, double p_a, double p_i, double target) {
    double lo = 0.0;
    double hi = 1.0;
    while (scaled_power_ref(t_app, t_a, p_a, p_i, hi) < target) hi *= 2.0;
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (scaled_power_ref(t_app, t_a, p_a, p_i, mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

SimResult on_off_result(const std::vector<std::uint8_t>& bits, double len) {
    SimResult r;
    r.activity.step_len = len;
    r.activity.on_off = bits;
    r.activity.labels.assign(bits.size(), Activity::off);
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k]) r.activity.labels[k] = Activity::idle;
        r.activity.on_fraction.push_back(bits[k]);
    }
    r.profile.step_len = len;
    for (std::size_t k = 0; k < bits.size(); ++k) {
        StackBin b;
        b.harvested = 0.01 * static_cast<double>(k % 7);
        b.sensor = 0.002 * bits[k];
        r.profile.bins.push_back(b);
    }
    r.duration = len * static_cast<double>(bits.size());
    return r;
}

}  // namespace

TEST_CASE("S_f collapses exactly in the trivial cases") {
    const auto p = make_profile(20.0, 1.0, 2e-3, 1e-4);
    CHECK(compute_sf(p, 1.0) == 1.0);
    const auto no_idle = make_profile(20.0, 1.0, 2e-3, 0.0);
    for (double s : {1.0, 2.0, 3.0, 7.5}) CHECK(compute_sf(no_idle, s) == s);
    CHECK_THROWS_AS(compute_sf(p, 0.99), ValidationError);
}

TEST_CASE("S_f for a 20 s app with 1 s active time") {
    const auto p = make_profile(20.0, 1.0, 2e-3, 0.1e-3);
    const double sf = compute_sf(p, 3.0);
    CHECK(sf == Catch::Approx(3.1055).margin(5e-5));
    CHECK(std::abs(sf - solve_sf_ref(20.0, 1.0, 2e-3, 0.1e-3, 6.3e-3)) < 1e-12);
    CHECK(scaled_power_ref(20.0, 1.0, 2e-3, 0.1e-3, sf) == Catch::Approx(6.3e-3).epsilon(1e-12));
    CHECK(scaled_average_power(p, sf) == Catch::Approx(6.3e-3).epsilon(1e-12));
}

TEST_CASE("S_f round trip and monotonicity on random profiles") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const double t_app = 1.0 + 200.0 * u(rng);
        const double t_a = t_app * (0.01 + 0.5 * u(rng));
        const double p_a = 1e-4 + 1e-2 * u(rng);
        const double p_i = p_a * 0.5 * u(rng);
        const auto p = make_profile(t_app, t_a, p_a, p_i);
        double last = 1.0;
        for (double s : {1.0, 1.5, 2.0, 4.0, 9.0}) {
            const double sf = compute_sf(p, s);
            INFO("trial " << trial << " s " << s);
            CHECK(sf >= last);
            last = sf;
            const double want = s * (p_a + p_i);
            CHECK(std::abs(scaled_power_ref(t_app, t_a, p_a, p_i, sf) - want) <= 1e-9 * want);
        }
    }
}

TEST_CASE("idle-dominated profile is degenerate") {
    const auto p = make_profile(20.0, 10.0, 1e-4, 2e-4);
    CHECK_THROWS_AS(compute_sf(p, 2.0), ProfileError);
}

TEST_CASE("profiling a flat synthetic app") {
    AppSpec a;
    a.name = "flat";
    a.t_sample_period = 20.0;
    a.t_sample = 0.5;
    a.t_comm = 0.5;
    a.p_sample = 2e-3;
    a.p_sample_sensor = 0.0;
    a.p_comm = 2e-3;
    a.p_idle = 0.1e-3;
    const auto p = profile_application(a, 3600.0);
    CHECK(p.t_active == 1.0);
    CHECK(p.t_app_period == 20.0);
    CHECK(p.p_active_avg == Catch::Approx(0.1e-3).epsilon(1e-9));
    // 180 active seconds and one 0.3 s boot leave 3419.7 s idle
    CHECK(p.p_idle_avg == Catch::Approx(0.1e-3 * 3419.7 / 3600.0).epsilon(1e-9));
    CHECK(p.p_idle_avg == Catch::Approx(0.095e-3).epsilon(1e-3));
    CHECK(p.theta_profiling == 180 * 12);

    a.p_idle = 0.0;
    CHECK(profile_application(a, 3600.0).p_idle_avg == 0.0);

    const auto again = profile_application(preset("TMP1"), 3600.0);
    CHECK(again.theta_profiling == 2160);
    CHECK(profile_application(preset("TMP1"), 3600.0).p_idle_avg == again.p_idle_avg);
    CHECK_THROWS_AS(profile_application(a, 1.0), ProfileError);
    AppSpec events_only = preset("PARKING");
    events_only.periodic_sampling = false;
    CHECK_THROWS_AS(profile_application(events_only, 3600.0), ProfileError);
}

TEST_CASE("largest admissible speed-up") {
    const auto tmp1 = preset("TMP1");
    const auto prof = profile_application(tmp1);
    const auto sp = max_speedup(prof, tmp1);
    CHECK(sp.s_tp == 3);
    CHECK(sp.binding == "schedulability");
    CHECK(sp.s_f <= tmp1.max_frequency_scale());
    CHECK(compute_sf(prof, 4.0) > tmp1.max_frequency_scale());

    // back-to-back app: nothing faster is admissible
    AppSpec tight = tmp1;
    tight.t_comm = tight.t_sample_period - tight.t_sample;
    const auto none = max_speedup(prof, tight);
    CHECK(none.s_tp == 1);
    CHECK(none.s_f == 1.0);

    const auto capped = max_speedup(prof, tmp1, EnvCap{400.0, 900.0});
    CHECK(capped.s_tp == 2);
    CHECK(capped.binding == "environment");
}

TEST_CASE("plans validate their bounds") {
    const auto tmp1 = preset("TMP1");
    const auto prof = profile_application(tmp1);
    const auto one = make_plan(prof, tmp1, PlanMode::st_sp, 1.0);
    CHECK(one.s_f == 1.0);
    CHECK_THROWS_AS(make_plan(prof, tmp1, PlanMode::st_sp, 4.0), ScheduleError);
    CHECK_THROWS_AS(make_plan(prof, tmp1, PlanMode::st_sp, 3.0, 1.0, EnvCap{400.0, 1000.0}), ScheduleError);
    CHECK(make_plan(prof, tmp1, PlanMode::st_up, 10.0).s_f == 1.0);
    CHECK(make_plan(prof, tmp1, PlanMode::realtime, 10.0).s_tp == 1.0);
    const auto mx = make_max_plan(prof, tmp1, PlanMode::st_sp_sn);
    CHECK(mx.s_tp == 3.0);
    CHECK(mx.binding == "schedulability");

    CHECK(parse_plan_mode("ST_SP_SN") == PlanMode::st_sp_sn);
    CHECK(parse_plan_mode("real-time") == PlanMode::realtime);
    for (auto m : {PlanMode::realtime, PlanMode::st_sp, PlanMode::st_sp_sn, PlanMode::st_up})
        CHECK(parse_plan_mode(to_string(m)) == m);
    CHECK_THROWS_AS(parse_plan_mode("fast"), ConfigError);
}

TEST_CASE("experiments transform trace, events and app") {
    const IrradianceTrace tr({{0, 0}, {600, 300}, {1200, 100}, {1800, 0}});
    EventTrace ev;
    ev.times = {100.0, 900.0};
    const auto app = preset("TMP1");

    ScalingPlan rt;
    rt.s_i = 2.0;
    const auto a = build_experiment(rt, tr, &ev, app);
    CHECK(a.trace.samples()[1].g == 600.0);
    CHECK(a.trace.duration() == tr.duration());
    CHECK(a.events.times == ev.times);
    CHECK(a.app.t_sample_period == app.t_sample_period);

    ScalingPlan up;
    up.mode = PlanMode::st_up;
    up.s_tp = 3.0;
    const auto b = build_experiment(up, tr, &ev, app);
    CHECK(b.trace.duration() == Catch::Approx(600.0));
    CHECK(b.trace.samples()[1].g == 300.0);
    CHECK(b.app.t_sample_period == app.t_sample_period);

    ScalingPlan sp;
    sp.mode = PlanMode::st_sp;
    sp.s_tp = 2.0;
    sp.s_f = 2.5;
    const auto c = build_experiment(sp, tr, &ev, app);
    CHECK(c.trace.integral() == Catch::Approx(tr.integral()).epsilon(1e-12));
    CHECK(c.events.times == std::vector<double>{50.0, 450.0});
    CHECK(c.app.t_sample_period == Catch::Approx(8.0));
    CHECK_FALSE(c.skip_nights);
    sp.mode = PlanMode::st_sp_sn;
    CHECK(build_experiment(sp, tr, nullptr, app).skip_nights);
}

TEST_CASE("predicted throughput") {
    PowerProfile prof = make_profile(20.0, 1.0, 1e-3, 1e-4);
    prof.theta_profiling = 1200.0;
    prof.t_profiling = 3600.0;
    SimResult r;
    r.on_time = 360.0;
    r.throughput_bytes = 77;
    ScalingPlan sp;
    sp.mode = PlanMode::st_sp;
    sp.s_tp = 10.0;
    CHECK(predict_throughput(sp, r, prof) == Catch::Approx(1200.0));
    sp.s_tp = 1.0;
    r.on_time = 3600.0;
    CHECK(predict_throughput(sp, r, prof) == Catch::Approx(1200.0));

    ScalingPlan up;
    up.mode = PlanMode::st_up;
    up.s_tp = 3.0;
    r.throughput_bytes = 100;
    CHECK(predict_throughput(up, r, prof) == 300.0);
    CHECK(predict_throughput(ScalingPlan{}, r, prof) == 100.0);
    prof.t_profiling = 0.0;
    CHECK_THROWS_AS(predict_throughput(sp, r, prof), ProfileError);
}

TEST_CASE("timeline rescaling") {
    std::mt19937_64 rng(4);
    std::vector<std::uint8_t> bits(500);
    for (auto& b : bits) b = rng() % 3 == 0;
    const auto r = on_off_result(bits, 0.2);

    const auto same = rescale_timeline(r, 1.0);
    CHECK(same.activity.on_off == r.activity.on_off);
    CHECK(same.duration == r.duration);

    for (double s : {2.0, 3.0, 2.5, 7.0}) {
        const auto out = rescale_timeline(r, s);
        INFO("s " << s);
        CHECK(out.duration == r.duration * s);
        double on_src = 0.0;
        double on_dst = 0.0;
        for (auto b : bits) on_src += 0.2 * b;
        for (double f : out.activity.on_fraction) on_dst += 0.2 * f;
        CHECK(std::abs(on_dst - s * on_src) <= 0.2);
        CHECK(out.activity.size() == static_cast<std::size_t>(std::ceil(bits.size() * s - 1e-9)));

        double h_src = 0.0;
        double h_dst = 0.0;
        for (const auto& b : r.profile.bins) h_src += b.harvested;
        for (const auto& b : out.profile.bins) h_dst += b.harvested;
        CHECK(h_dst == Catch::Approx(h_src).epsilon(1e-12));
    }
    CHECK_THROWS_AS(rescale_timeline(r, 0.5), ValidationError);
}
