#include "ehstack/app.hpp"

#include "ehstack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ehstack {

namespace {

// Phase boundaries closer than this are treated as reached. Keeps float
// drift in the timer from producing sub-nanosecond steps.
constexpr double kTimeEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

double backup_power(const AppSpec& s) { return s.e_backup / s.t_backup; }

bool in_peak(const AppSpec& s, double remaining) {
    if (s.t_peak <= 0.0) return false;
    const double elapsed = s.t_sample - remaining;
    return elapsed >= s.t_peak_start - kTimeEps && elapsed < s.t_peak_start + s.t_peak - kTimeEps;
}

/// Time to the next spike boundary within a burst, or infinity.
double to_peak_edge(const AppSpec& s, double remaining) {
    if (s.t_peak <= 0.0) return kInf;
    const double elapsed = s.t_sample - remaining;
    if (elapsed < s.t_peak_start - kTimeEps) return s.t_peak_start - elapsed;
    if (elapsed < s.t_peak_start + s.t_peak - kTimeEps) return s.t_peak_start + s.t_peak - elapsed;
    return kInf;
}

}  // namespace

const char* to_string(Activity a) noexcept {
    switch (a) {
        case Activity::off: return "off";
        case Activity::boot: return "boot";
        case Activity::sampling_processing: return "sampling_processing";
        case Activity::communicating: return "communicating";
        case Activity::backup_restore: return "backup_restore";
        case Activity::idle: return "idle";
    }
    return "?";
}

const char* to_string(Phase p) noexcept {
    switch (p) {
        case Phase::off: return "off";
        case Phase::booting: return "booting";
        case Phase::restore: return "restore";
        case Phase::idle: return "idle";
        case Phase::sampling: return "sampling";
        case Phase::communicating: return "communicating";
        case Phase::backup: return "backup";
    }
    return "?";
}

Activity activity_of(Phase p) noexcept {
    switch (p) {
        case Phase::off: return Activity::off;
        case Phase::booting: return Activity::boot;
        case Phase::restore:
        case Phase::backup: return Activity::backup_restore;
        case Phase::idle: return Activity::idle;
        case Phase::sampling: return Activity::sampling_processing;
        case Phase::communicating: return Activity::communicating;
    }
    return Activity::off;
}

void AppSpec::validate() const {
    const auto pos = [](double v) { return v > 0.0 && std::isfinite(v); };
    const auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
    if (!pos(t_sample_period) || !pos(t_sample) || !pos(t_comm) || !pos(t_boot) || !pos(t_backup))
        throw ValidationError(name + ": durations must be > 0");
    if (n_per_comm < 1) throw ValidationError(name + ": n_per_comm must be >= 1");
    if (!nonneg(p_sample) || !nonneg(p_sample_sensor) || !nonneg(p_peak) || !nonneg(t_peak) || !nonneg(p_comm) ||
        !nonneg(p_idle) || !nonneg(p_off_residual) || !nonneg(p_boot) || !nonneg(e_backup) || !nonneg(t_peak_start))
        throw ValidationError(name + ": powers and energies must be >= 0");
    if (p_sample_sensor > p_sample) throw ValidationError(name + ": sensor share exceeds sampling power");
    if (t_peak > 0.0 && t_peak_start + t_peak >= t_sample)
        throw ValidationError(name + ": peak must end before the sampling burst does");
    if (t_peak > 0.0 && p_peak < p_sample - p_sample_sensor)
        throw ValidationError(name + ": peak load below the SoC share of sampling power");
    if (min_period() > t_sample_period * (1.0 + 1e-12))
        throw ScheduleError(name + ": t_sample + t_comm exceeds the sampling period");
    if (!periodic_sampling && !reactive) throw ValidationError(name + ": app never does any work");
}

Activity AppStep::label() const noexcept {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kActivityCount; ++k)
        if (time[k] > time[best]) best = k;
    return static_cast<Activity>(best);
}

double phase_power(const AppSpec& s, const AppState& st) noexcept {
    switch (st.phase) {
        case Phase::off: return s.p_off_residual;
        case Phase::booting: return s.p_boot;
        case Phase::restore:
        case Phase::backup: return backup_power(s);
        case Phase::idle: return s.p_idle;
        case Phase::sampling:
            return in_peak(s, st.phase_remaining) ? s.p_peak : s.p_sample;
        case Phase::communicating: return s.p_comm;
    }
    return 0.0;
}

AppState settle_transitions(const AppSpec& s, const AppState& state, double v_storage) noexcept {
    AppState st = state;
    if (st.phase != Phase::idle) return st;
    if (!st.checkpointed && v_storage < s.checkpoint_v) {
        st.phase = Phase::backup;
        st.phase_remaining = s.t_backup;
        st.checkpointed = true;
    } else if (s.periodic_sampling && st.timer <= kTimeEps) {
        st.phase = Phase::sampling;
        st.phase_remaining = s.t_sample;
        st.timer += s.t_sample_period;
        if (st.timer < 0.0) st.timer = 0.0;  // at most one missed sample stays queued
    }
    return st;
}

double time_to_next_transition(const AppSpec& s, const AppState& st) noexcept {
    switch (st.phase) {
        case Phase::off: return kInf;
        case Phase::idle: return s.periodic_sampling ? std::max(0.0, st.timer) : kInf;
        case Phase::sampling: return std::min(st.phase_remaining, to_peak_edge(s, st.phase_remaining));
        default: return st.phase_remaining;
    }
}

AppStep app_step(const AppSpec& s, const AppState& state, bool power_good, double v_storage,
                 std::uint64_t events_pending, double dt) {
    if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
    AppStep out;
    out.state = state;
    AppState& st = out.state;

    const auto book = [&](Activity a, double p, double p_sensor, double h) {
        const auto k = static_cast<std::size_t>(a);
        out.energy[k] += p * h;
        out.time[k] += h;
        out.e_sensor += p_sensor * h;
        out.e_soc += (p - p_sensor) * h;
    };

    if (!power_good) {
        if (st.phase != Phase::off) {
            st.phase = Phase::off;
            st.phase_remaining = 0.0;
            st.inflight_events = 0;
        }
        book(Activity::off, s.p_off_residual, 0.0, dt);
        return out;
    }

    if (st.phase == Phase::off) {
        st.phase = Phase::booting;
        st.phase_remaining = s.t_boot;
        st.checkpointed = false;
        ++st.boots;
    }

    bool pending_consumed = false;
    double remaining = dt;
    while (remaining > 0.0) {
        st = settle_transitions(s, st, v_storage);
        if (st.phase == Phase::idle) {
            const double h = s.periodic_sampling ? std::min(remaining, st.timer) : remaining;
            book(Activity::idle, s.p_idle, 0.0, h);
            st.timer -= h;
            remaining -= h;
            continue;
        }

        // timed phase
        double h = std::min(remaining, st.phase_remaining);
        double p = phase_power(s, st);
        double p_sensor = 0.0;
        if (st.phase == Phase::sampling) {
            const double soc_share = s.p_sample - s.p_sample_sensor;
            h = std::min(h, to_peak_edge(s, st.phase_remaining));
            p_sensor = in_peak(s, st.phase_remaining) ? s.p_peak - soc_share : s.p_sample_sensor;
        }
        book(activity_of(st.phase), p, p_sensor, h);
        remaining -= h;
        st.phase_remaining -= h;
        if (st.phase != Phase::booting && st.phase != Phase::restore) st.timer -= h;
        if (remaining <= kTimeEps) remaining = 0.0;
        if (st.phase_remaining > kTimeEps) continue;

        st.phase_remaining = 0.0;
        switch (st.phase) {
            case Phase::booting:
                if (st.has_checkpoint) {
                    st.phase = Phase::restore;
                    st.phase_remaining = s.t_backup;
                } else {
                    st.phase = Phase::idle;
                    st.timer = 0.0;
                }
                break;
            case Phase::restore:
                st.samples_since_comm = st.saved_samples;
                st.has_checkpoint = false;
                st.phase = Phase::idle;
                st.timer = 0.0;
                break;
            case Phase::backup:
                st.has_checkpoint = true;
                st.saved_samples = st.samples_since_comm;
                ++st.checkpoints;
                st.phase = Phase::idle;
                break;
            case Phase::sampling: {
                ++st.samples_since_comm;
                const bool periodic_due = s.periodic_comm && st.samples_since_comm >= s.n_per_comm;
                const bool event_due = s.reactive && !pending_consumed && events_pending > 0;
                if (event_due) {
                    pending_consumed = true;
                    out.observed_event = true;
                    st.inflight_events += events_pending;
                }
                if (periodic_due || event_due) {
                    st.phase = Phase::communicating;
                    st.phase_remaining = s.t_comm;
                    st.comm_periodic = periodic_due;
                    st.comm_bytes = (periodic_due ? s.bytes_per_comm : 0) + (event_due ? s.event_bytes : 0);
                } else {
                    st.phase = Phase::idle;
                }
                break;
            }
            case Phase::communicating:
                st.bytes_sent += st.comm_bytes;
                out.bytes_emitted += st.comm_bytes;
                ++st.comms_completed;
                ++out.comms_completed;
                if (st.comm_periodic) st.samples_since_comm = 0;
                out.events_detected += st.inflight_events;
                st.inflight_events = 0;
                st.comm_bytes = 0;
                st.comm_periodic = false;
                st.phase = Phase::idle;
                break;
            case Phase::off:
            case Phase::idle: break;
        }
    }
    return out;
}

AppSpec apply_frequency_scaling(const AppSpec& spec, double s_f) {
    if (!(s_f >= 1.0)) throw ScheduleError("frequency scale must be >= 1");
    const double bound = spec.max_frequency_scale();
    if (s_f > bound * (1.0 + 1e-12))
        throw ScheduleError(spec.name + ": S_f=" + std::to_string(s_f) + " exceeds T_S/(t_S+t_C)=" +
                            std::to_string(bound));
    AppSpec out = spec;
    out.t_sample_period = spec.t_sample_period / s_f;
    // the bound check above allows a relative 1e-12 slack; keep the period legal
    out.t_sample_period = std::max(out.t_sample_period, spec.min_period());
    return out;
}

const std::vector<BenchmarkRow>& benchmark_table() {
    static const std::vector<BenchmarkRow> rows = {
        {"TMP1", 20.0, 12, 1, 2.0, 3, 3.4},  {"TMP2", 20.0, 12, 30, 1.5, 2, 2.6},
        {"IMU", 60.0, 180, 5, 1.5, 7, 10.9}, {"PMS", 60.0, 12, 1, 1.5, 6, 10.9},
        {"TOF", 120.0, 12, 1, 2.0, 10, 12.3}, {"BIO", 120.0, 192, 1, 3.0, 10, 10.6},
    };
    return rows;
}

namespace {

AppSpec make(std::string name, double t_s_period, double t_s, double t_c, int n, std::uint64_t d, double p_sample,
             double p_sensor, double p_idle) {
    AppSpec a;
    a.name = std::move(name);
    a.t_sample_period = t_s_period;
    a.t_sample = t_s;
    a.t_comm = t_c;
    a.n_per_comm = n;
    a.bytes_per_comm = d;
    a.p_sample = p_sample;
    a.p_sample_sensor = p_sensor;
    a.p_idle = p_idle;
    a.event_bytes = d;
    return a;
}

}  // namespace

AppSpec preset(std::string_view name) {
    AppSpec a;
    if (name == "TMP1") {
        a = make("TMP1", 20.0, 1.0, 4.0, 1, 12, 1.5e-3, 0.5e-3, 0.1e-3);
    } else if (name == "TMP2") {
        a = make("TMP2", 20.0, 1.2, 4.5, 30, 12, 2.61e-3, 1.2e-3, 0.1e-3);
    } else if (name == "IMU") {
        a = make("IMU", 60.0, 0.9, 4.2, 5, 180, 8.34e-3, 4.0e-3, 0.1e-3);
    } else if (name == "PMS") {
        a = make("PMS", 60.0, 0.8, 4.2, 1, 12, 4.75e-3, 3.0e-3, 0.2e-3);
    } else if (name == "TOF" || name == "PARKING") {
        a = make("TOF", 120.0, 0.5, 4.0, 1, 12, 76.8e-3, 70.0e-3, 0.1e-3);
        a.t_peak = 0.002;
        a.t_peak_start = 0.1;
        a.p_peak = 0.25;
        if (name == "PARKING") {
            a.name = "PARKING";
            a.reactive = true;
            a.periodic_comm = false;
        }
    } else if (name == "BIO") {
        a = make("BIO", 120.0, 4.0, 4.5, 1, 192, 42.7e-3, 36.0e-3, 0.1e-3);
    } else {
        throw ConfigError("unknown app preset '" + std::string(name) + "'");
    }
    return a;
}

std::vector<std::string> preset_names() { return {"TMP1", "TMP2", "IMU", "PMS", "TOF", "BIO", "PARKING"}; }

double preset_irradiance_scale(std::string_view name) {
    for (const auto& row : benchmark_table())
        if (row.name == name) return row.s_i;
    return 1.0;
}

void ActivityProfile::validate() const {
    if (!(step_len > 0.0)) throw ValidationError("activity step length must be > 0");
    if (labels.size() != on_off.size() || (!on_fraction.empty() && on_fraction.size() != on_off.size()))
        throw ValidationError("activity sequences differ in length");
}

double ActivityProfile::on_time() const noexcept {
    double t = 0.0;
    if (!on_fraction.empty()) {
        for (double f : on_fraction) t += f;
    } else {
        for (auto b : on_off) t += b ? 1.0 : 0.0;
    }
    return t * step_len;
}

}  // namespace ehstack
