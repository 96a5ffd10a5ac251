#pragma once

// Accelerated evaluation: profile the app, solve for the sampling-frequency
// scale, build the scaled experiment and map its results back to real time.

#include "ehstack/app.hpp"
#include "ehstack/engine.hpp"
#include "ehstack/trace.hpp"

#include <optional>
#include <string>

namespace ehstack {

struct PowerProfile {
    std::string app_name;
    double p_active_avg = 0.0;  ///< sampling + communication energy over the profiling time
    double p_idle_avg = 0.0;    ///< idle energy over the profiling time
    double t_active = 0.0;      ///< t_A = n_S * t_S + t_C
    double t_app_period = 0.0;  ///< T_App
    double theta_profiling = 0.0;  ///< bytes sent while profiling
    double t_profiling = 0.0;

    void validate() const;
};

/// Runs the app from a constant supply for `duration` seconds and extracts
/// the averages. Throws ProfileError if duration is shorter than one period
/// or the app has no periodic task.
[[nodiscard]] PowerProfile profile_application(const AppSpec& app, double duration = 3600.0,
                                               SimConfig cfg = {}, double supply_v = 3.3);

/// Average power after multiplying the sampling frequency by s_f, with idle
/// power shrinking with the idle-time fraction.
[[nodiscard]] double scaled_average_power(const PowerProfile& profile, double s_f) noexcept;

/// Sampling-frequency scale that multiplies the average power by s_tp.
/// Throws ProfileError when idle power dominates the profile.
[[nodiscard]] double compute_sf(const PowerProfile& profile, double s_tp);

/// Upper bound on the environment: s_tp * peak_input must stay <= cap
/// (for example the brightest irradiance a light source can produce).
struct EnvCap {
    double peak_input = 0.0;
    double cap = 0.0;
};

struct Speedup {
    int s_tp = 1;
    double s_f = 1.0;
    double sf_bound = 1.0;  ///< T_S / (t_S + t_C)
    std::string binding;    ///< "schedulability", "environment" or "search_limit"
};

/// Largest integer S_TP admissible under the schedulability bound and the
/// optional environment cap. Returns S_TP = 1 if nothing faster is allowed.
[[nodiscard]] Speedup max_speedup(const PowerProfile& profile, const AppSpec& spec,
                                  std::optional<EnvCap> env_cap = std::nullopt, int search_limit = 100000);

enum class PlanMode { realtime, st_sp, st_sp_sn, st_up };

[[nodiscard]] const char* to_string(PlanMode m) noexcept;
/// Accepts "realtime", "st-sp", "st-sp-sn", "st-up" (or underscores).
[[nodiscard]] PlanMode parse_plan_mode(const std::string& s);

struct ScalingPlan {
    PlanMode mode = PlanMode::realtime;
    double s_tp = 1.0;
    double s_f = 1.0;
    double s_i = 1.0;
    std::string binding;  ///< constraint that limited s_tp, if planned with "max"

    void validate() const;
};

/// Plan for a given S_TP (S_f solved from the profile in the ST-SP modes).
/// Throws ScheduleError listing the violated bound if S_TP is infeasible.
[[nodiscard]] ScalingPlan make_plan(const PowerProfile& profile, const AppSpec& spec, PlanMode mode, double s_tp,
                                    double s_i = 1.0, std::optional<EnvCap> env_cap = std::nullopt);

/// Plan at the largest admissible integer S_TP.
[[nodiscard]] ScalingPlan make_max_plan(const PowerProfile& profile, const AppSpec& spec, PlanMode mode,
                                        double s_i = 1.0, std::optional<EnvCap> env_cap = std::nullopt);

struct Experiment {
    IrradianceTrace trace;
    EventTrace events;
    bool has_events = false;
    AppSpec app;
    bool skip_nights = false;
};

/// Applies a plan to the real-time inputs.
[[nodiscard]] Experiment build_experiment(const ScalingPlan& plan, const IrradianceTrace& trace,
                                          const EventTrace* events, const AppSpec& app);

/// Real-time throughput implied by a scaled run.
[[nodiscard]] double predict_throughput(const ScalingPlan& plan, const SimResult& result,
                                        const PowerProfile& profile);

/// Stretches every time axis of a scaled run by s_tp and re-bins activity and
/// stack profiles onto the original aggregation grid.
[[nodiscard]] SimResult rescale_timeline(const SimResult& result, double s_tp);

}  // namespace ehstack
