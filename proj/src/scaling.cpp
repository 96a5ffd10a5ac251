#include "ehstack/scaling.hpp"

#include "ehstack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ehstack {

void PowerProfile::validate() const {
    if (!(t_app_period > 0.0) || !(t_active > 0.0)) throw ProfileError("profile periods must be > 0");
    if (!(t_active < t_app_period)) throw ProfileError("active time must be shorter than the app period");
    if (!(p_active_avg > 0.0)) throw ProfileError("profile has no active power");
    if (!(p_idle_avg >= 0.0)) throw ProfileError("idle power must be >= 0");
    if (!(t_profiling > 0.0)) throw ProfileError("profiling time must be > 0");
}

PowerProfile profile_application(const AppSpec& app, double duration, SimConfig cfg, double supply_v) {
    app.validate();
    if (!app.periodic_sampling) throw ProfileError(app.name + ": purely event-driven apps cannot be planned");
    PowerProfile p;
    p.app_name = app.name;
    if (app.periodic_comm) {
        p.t_active = app.n_per_comm * app.t_sample + app.t_comm;
        p.t_app_period = app.n_per_comm * app.t_sample_period;
    } else {
        p.t_active = app.t_sample;
        p.t_app_period = app.t_sample_period;
    }
    if (!(duration >= p.t_app_period))
        throw ProfileError(app.name + ": profiling duration is shorter than one app period");

    cfg.supply_override = supply_v;
    cfg.skip_nights = false;
    cfg.end_policy = EndPolicy::hard_stop;
    cfg.record_profile = false;
    cfg.record_activity = false;
    cfg.record_voltage = false;
    const IrradianceTrace flat({{0.0, 0.0}, {duration, 0.0}}, "profiling");
    const SimResult r = simulate(flat, nullptr, EssConfig{}, app, cfg);
    const EnergyLedger& l = r.stack.ledger;
    p.p_active_avg = (l.activity(Activity::sampling_processing) + l.activity(Activity::communicating)) / duration;
    p.p_idle_avg = l.activity(Activity::idle) / duration;
    p.theta_profiling = static_cast<double>(r.throughput_bytes);
    p.t_profiling = duration;
    return p;
}

double scaled_average_power(const PowerProfile& p, double s_f) noexcept {
    const double idle_share = (p.t_app_period - p.t_active * s_f) / (p.t_app_period - p.t_active);
    return s_f * p.p_active_avg + idle_share * p.p_idle_avg;
}

double compute_sf(const PowerProfile& p, double s_tp) {
    if (!(s_tp >= 1.0)) throw ValidationError("S_TP must be >= 1");
    const double denom = (p.t_app_period - p.t_active) * p.p_active_avg - p.t_active * p.p_idle_avg;
    if (!(denom > 0.0))
        throw ProfileError("degenerate profile: idle power dominates, no frequency scale reaches the target");
    // Rearranged so that P_I = 0 gives s_tp and s_tp = 1 gives 1 exactly.
    return s_tp + (s_tp - 1.0) * p.t_app_period * p.p_idle_avg / denom;
}

Speedup max_speedup(const PowerProfile& profile, const AppSpec& spec, std::optional<EnvCap> env_cap,
                    int search_limit) {
    Speedup out;
    out.sf_bound = spec.max_frequency_scale();
    out.binding = "schedulability";
    for (int s = 2; s <= search_limit; ++s) {
        const double sf = compute_sf(profile, s);
        if (sf > out.sf_bound * (1.0 + 1e-12)) return out;
        if (env_cap && s * env_cap->peak_input > env_cap->cap * (1.0 + 1e-12)) {
            out.binding = "environment";
            return out;
        }
        out.s_tp = s;
        out.s_f = sf;
    }
    out.binding = "search_limit";
    return out;
}

const char* to_string(PlanMode m) noexcept {
    switch (m) {
        case PlanMode::realtime: return "realtime";
        case PlanMode::st_sp: return "st-sp";
        case PlanMode::st_sp_sn: return "st-sp-sn";
        case PlanMode::st_up: return "st-up";
    }
    return "?";
}

PlanMode parse_plan_mode(const std::string& s) {
    std::string k = s;
    std::replace(k.begin(), k.end(), '_', '-');
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (k == "realtime" || k == "real-time") return PlanMode::realtime;
    if (k == "st-sp") return PlanMode::st_sp;
    if (k == "st-sp-sn") return PlanMode::st_sp_sn;
    if (k == "st-up") return PlanMode::st_up;
    throw ConfigError("unknown plan mode '" + s + "'");
}

void ScalingPlan::validate() const {
    if (!(s_tp >= 1.0)) throw ValidationError("S_TP must be >= 1");
    if (!(s_f >= 1.0)) throw ValidationError("S_f must be >= 1");
    if (!(s_i > 0.0)) throw ValidationError("S_I must be > 0");
    if ((mode == PlanMode::st_up || mode == PlanMode::realtime) && s_f != 1.0)
        throw ValidationError("only the ST-SP modes scale the sampling frequency");
    if (mode == PlanMode::realtime && s_tp != 1.0) throw ValidationError("a real-time plan has S_TP = 1");
}

ScalingPlan make_plan(const PowerProfile& profile, const AppSpec& spec, PlanMode mode, double s_tp, double s_i,
                      std::optional<EnvCap> env_cap) {
    ScalingPlan plan;
    plan.mode = mode;
    plan.s_i = s_i;
    plan.s_tp = mode == PlanMode::realtime ? 1.0 : s_tp;
    if (!(plan.s_tp >= 1.0)) throw ValidationError("S_TP must be >= 1");
    if (env_cap && plan.s_tp * env_cap->peak_input > env_cap->cap * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "S_TP=" << s_tp << " infeasible: environment cap " << env_cap->cap << " < " << plan.s_tp << " x "
            << env_cap->peak_input;
        throw ScheduleError(msg.str());
    }
    if (mode == PlanMode::st_sp || mode == PlanMode::st_sp_sn) {
        if (!spec.periodic_sampling) throw ProfileError(spec.name + ": purely event-driven apps cannot be planned");
        plan.s_f = compute_sf(profile, plan.s_tp);
        const double bound = spec.max_frequency_scale();
        if (plan.s_f > bound * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "S_TP=" << s_tp << " infeasible: schedulability requires S_f=" << plan.s_f
                << " <= T_S/(t_S+t_C)=" << bound;
            throw ScheduleError(msg.str());
        }
    }
    plan.validate();
    return plan;
}

ScalingPlan make_max_plan(const PowerProfile& profile, const AppSpec& spec, PlanMode mode, double s_i,
                          std::optional<EnvCap> env_cap) {
    const Speedup sp = max_speedup(profile, spec, env_cap);
    ScalingPlan plan = make_plan(profile, spec, mode, sp.s_tp, s_i, env_cap);
    plan.binding = sp.binding;
    return plan;
}

Experiment build_experiment(const ScalingPlan& plan, const IrradianceTrace& trace, const EventTrace* events,
                            const AppSpec& app) {
    plan.validate();
    Experiment ex;
    TraceTransform tf;
    switch (plan.mode) {
        case PlanMode::realtime: tf.amplitude_scale = plan.s_i; break;
        case PlanMode::st_up:
            tf.time_scale = plan.s_tp;
            tf.amplitude_scale = plan.s_i;
            break;
        case PlanMode::st_sp:
        case PlanMode::st_sp_sn:
            tf.time_scale = plan.s_tp;
            tf.amplitude_scale = plan.s_i * plan.s_tp;
            break;
    }
    tf.skip_nights = plan.mode == PlanMode::st_sp_sn;
    ex.trace = apply_transform(trace, tf);
    if (events) {
        ex.events = transform_events(*events, tf.time_scale);
        ex.has_events = true;
    }
    ex.app = (plan.mode == PlanMode::st_sp || plan.mode == PlanMode::st_sp_sn) ? apply_frequency_scaling(app, plan.s_f)
                                                                               : app;
    ex.skip_nights = tf.skip_nights;
    return ex;
}

double predict_throughput(const ScalingPlan& plan, const SimResult& result, const PowerProfile& profile) {
    const auto measured = static_cast<double>(result.throughput_bytes);
    switch (plan.mode) {
        case PlanMode::realtime: return measured;
        case PlanMode::st_up: return plan.s_tp * measured;
        case PlanMode::st_sp:
        case PlanMode::st_sp_sn:
            if (!(profile.t_profiling > 0.0)) throw ProfileError("profiling time is zero");
            return plan.s_tp * result.on_time / profile.t_profiling * profile.theta_profiling;
    }
    return measured;
}

SimResult rescale_timeline(const SimResult& r, double s) {
    if (!(s >= 1.0)) throw ValidationError("S_TP must be >= 1");
    SimResult out = r;
    out.duration = r.duration * s;
    out.on_time = r.on_time * s;
    out.skipped_time = r.skipped_time * s;
    out.stack.duration = r.stack.duration * s;
    for (auto& v : out.voltage) v.t *= s;
    for (auto& e : out.events) e.t *= s;
    if (s == 1.0) return out;

    // Source bin i covers [i*L*s, (i+1)*L*s) on the real-time axis.
    const auto rebin = [s](std::size_t n_src, double len, auto&& emit) {
        const double src_len = len * s;
        const auto n_dst = static_cast<std::size_t>(std::ceil(static_cast<double>(n_src) * s - 1e-9));
        std::size_t i = 0;
        for (std::size_t j = 0; j < n_dst; ++j) {
            const double lo = static_cast<double>(j) * len;
            const double hi = lo + len;
            while (i < n_src && static_cast<double>(i + 1) * src_len <= lo + 1e-12 * src_len) ++i;
            for (std::size_t k = i; k < n_src; ++k) {
                const double a = std::max(lo, static_cast<double>(k) * src_len);
                const double b = std::min(hi, static_cast<double>(k + 1) * src_len);
                if (b <= a) break;
                emit(j, k, (b - a) / src_len, (b - a) / len);
            }
        }
        return n_dst;
    };

    const ActivityProfile& src = r.activity;
    if (!src.on_off.empty()) {
        ActivityProfile dst;
        dst.step_len = src.step_len;
        std::vector<double> frac;
        std::vector<double> best_w;
        std::vector<Activity> labels;
        const auto n_dst = rebin(src.size(), src.step_len, [&](std::size_t j, std::size_t k, double, double w_dst) {
            if (frac.size() <= j) {
                frac.resize(j + 1, 0.0);
                best_w.resize(j + 1, -1.0);
                labels.resize(j + 1, Activity::off);
            }
            const double f = src.on_fraction.empty() ? static_cast<double>(src.on_off[k]) : src.on_fraction[k];
            frac[j] += f * w_dst;
            if (w_dst > best_w[j]) {
                best_w[j] = w_dst;
                labels[j] = src.labels[k];
            }
        });
        frac.resize(n_dst, 0.0);
        labels.resize(n_dst, Activity::off);
        dst.on_fraction.reserve(n_dst);
        for (std::size_t j = 0; j < n_dst; ++j) {
            const double f = std::clamp(frac[j], 0.0, 1.0);
            dst.on_fraction.push_back(f);
            dst.on_off.push_back(f >= 0.5 ? 1 : 0);
        }
        dst.labels = std::move(labels);
        out.activity = std::move(dst);
    }

    const auto& bins = r.profile.bins;
    if (!bins.empty()) {
        std::vector<StackBin> dst;
        const auto n_dst = rebin(bins.size(), r.profile.step_len, [&](std::size_t j, std::size_t k, double w_src, double) {
            if (dst.size() <= j) dst.resize(j + 1);
            const StackBin& b = bins[k];
            StackBin& d = dst[j];
            d.harvested += b.harvested * w_src;
            d.external += b.external * w_src;
            d.mppt_loss += b.mppt_loss * w_src;
            d.storage_loss += b.storage_loss * w_src;
            d.converter_loss += b.converter_loss * w_src;
            d.soc += b.soc * w_src;
            d.sensor += b.sensor * w_src;
            d.storage_delta += b.storage_delta * w_src;
        });
        dst.resize(n_dst);
        out.profile.bins = std::move(dst);
    }
    return out;
}

}  // namespace ehstack
