#include "ehstack/engine.hpp"

#include "ehstack/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace ehstack {

namespace {

constexpr double kEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_multiple(double big, double small) {
    const double ratio = big / small;
    return std::abs(ratio - std::round(ratio)) < 1e-9 * std::max(1.0, ratio);
}

bool active_phase(Phase p) {
    return p == Phase::booting || p == Phase::restore || p == Phase::sampling || p == Phase::communicating ||
           p == Phase::backup;
}

class Runner {
public:
    Runner(const IrradianceTrace& trace, const EventTrace* events, const EssConfig& ess, const AppSpec& app,
           const SimConfig& cfg)
        : trace_(trace), ess_cfg_(ess), app_(app), cfg_(cfg), supply_(cfg.supply_override.has_value()) {
        if (events) {
            ev_times_ = events->times;
            hold_ = events->hold_s;
        }
        ess_ = initial_state(ess);
        agg_ = cfg.aggregation_step;
        bin_end_ = agg_;
        res_.profile.step_len = agg_;
        res_.activity.step_len = agg_;
        if (!supply_) ledger_.storage_initial = stored_energy(ess.storage, ess_.storage);
        const auto n_bins = static_cast<std::size_t>(std::ceil(trace.duration() / agg_)) + 1;
        if (cfg.record_profile) res_.profile.bins.reserve(n_bins);
        if (cfg.record_activity) {
            res_.activity.on_off.reserve(n_bins);
            res_.activity.on_fraction.reserve(n_bins);
            res_.activity.labels.reserve(n_bins);
        }
    }

    SimResult run();

private:
    const IrradianceTrace& trace_;
    const EssConfig& ess_cfg_;
    const AppSpec& app_;
    const SimConfig& cfg_;
    const bool supply_;

    double t_ = 0.0;
    double phase_since_ = 0.0;
    std::size_t trace_idx_ = 0;
    EssState ess_;
    AppState app_st_;
    EnergyLedger ledger_;
    SimResult res_;

    double agg_ = 0.2;
    std::size_t bin_index_ = 0;
    double bin_end_ = 0.2;
    StackBin cur_;
    double cur_on_ = 0.0;
    std::array<double, kActivityCount> cur_time_{};

    std::vector<double> ev_times_;
    double hold_ = 0.0;
    std::size_t next_ev_ = 0;
    std::deque<std::size_t> pending_;
    std::vector<std::size_t> inflight_;

    [[nodiscard]] bool powered() const { return supply_ || ess_.converter_on; }
    [[nodiscard]] double v_storage() const { return supply_ ? *cfg_.supply_override : ess_.v_bus; }

    void advance_trace_index() {
        const auto s = trace_.samples();
        while (trace_idx_ + 1 < s.size() && s[trace_idx_ + 1].t <= t_ + kEps) ++trace_idx_;
    }

    [[nodiscard]] double irradiance() const {
        const auto s = trace_.samples();
        const auto& a = s[trace_idx_];
        if (cfg_.interpolation == Interpolation::step || trace_idx_ + 1 >= s.size() || t_ <= a.t) return a.g;
        const auto& b = s[trace_idx_ + 1];
        return a.g + (b.g - a.g) * (t_ - a.t) / (b.t - a.t);
    }

    void process_events() {
        while (next_ev_ < ev_times_.size() && ev_times_[next_ev_] <= t_ + kEps) {
            if (ev_times_[next_ev_] < trace_.duration()) {
                res_.events.push_back({ev_times_[next_ev_], powered(), false});
                if (powered()) ++res_.detected_at_event;
                ++res_.events_offered;
                pending_.push_back(res_.events.size() - 1);
            }
            ++next_ev_;
        }
        while (!pending_.empty() && res_.events[pending_.front()].t + hold_ <= t_ + kEps) pending_.pop_front();
    }

    [[nodiscard]] double next_event_edge() const {
        double edge = kInf;
        if (next_ev_ < ev_times_.size()) edge = ev_times_[next_ev_];
        if (!pending_.empty()) edge = std::min(edge, res_.events[pending_.front()].t + hold_);
        return edge;
    }

    void flush_bin() {
        if (cfg_.record_profile) res_.profile.bins.push_back(cur_);
        if (cfg_.record_activity) {
            const double frac = std::clamp(cur_on_ / agg_, 0.0, 1.0);
            res_.activity.on_fraction.push_back(frac);
            res_.activity.on_off.push_back(frac >= 0.5 ? 1 : 0);
            std::size_t best = 0;
            for (std::size_t k = 1; k < kActivityCount; ++k)
                if (cur_time_[k] > cur_time_[best]) best = k;
            res_.activity.labels.push_back(static_cast<Activity>(best));
        }
        if (cfg_.record_voltage && bin_index_ % cfg_.voltage_stride == 0)
            res_.voltage.push_back({std::min(bin_end_, t_), ess_.storage.v_cap, ess_.v_bus});
        cur_ = StackBin{};
        cur_on_ = 0.0;
        cur_time_.fill(0.0);
        ++bin_index_;
        bin_end_ = static_cast<double>(bin_index_ + 1) * agg_;
    }

    void book_app(const AppStep& a, double scale) {
        for (std::size_t k = 0; k < kActivityCount; ++k) {
            ledger_.sss_by_activity[k] += a.energy[k] * scale;
            cur_time_[k] += a.time[k];
        }
        ledger_.sss_soc += a.e_soc * scale;
        ledger_.sss_sensor += a.e_sensor * scale;
        cur_.soc += a.e_soc * scale;
        cur_.sensor += a.e_sensor * scale;
    }

    void handle_app_events(const AppStep& a) {
        if (a.events_detected > 0) {
            for (std::size_t idx : inflight_) res_.events[idx].reported = true;
            res_.detected_at_next_sample += inflight_.size();
            inflight_.clear();
        }
        if (a.observed_event) {
            inflight_.insert(inflight_.end(), pending_.begin(), pending_.end());
            pending_.clear();
        }
        if (a.state.phase == Phase::off) inflight_.clear();
        res_.throughput_bytes += a.bytes_emitted;
        res_.comms_completed += a.comms_completed;
    }

    StorageStep storage_with_saturation(double& p_into, double p_drawn, double dt, MpptMode& mode) {
        StorageStep s = storage_step(ess_cfg_.storage, ess_.storage, p_into, p_drawn, dt);
        const double v_max = ess_cfg_.mppt.storage_v_max;
        if (s.next.v_cap > v_max && p_into > 0.0) {
            const double limit = storage_accept_limit(ess_cfg_.storage, ess_.storage, p_drawn, dt, v_max);
            if (limit < p_into) {
                p_into = limit;
                if (mode == MpptMode::tracking) mode = MpptMode::saturated;
                s = storage_step(ess_cfg_.storage, ess_.storage, p_into, p_drawn, dt);
            }
        }
        return s;
    }

    void step_supply(double dt) {
        const AppStep a = app_step(app_, app_st_, true, v_storage(), pending_.size(), dt);
        const double e = a.total_energy();
        ledger_.external_supply += e;
        cur_.external += e;
        book_app(a, 1.0);
        cur_on_ += dt;
        res_.on_time += dt;
        app_st_ = a.state;
        handle_app_events(a);
    }

    struct Trial {
        AppStep a;
        StorageStep s;
        MpptMode mode = MpptMode::bypass;
        double p_mpp = 0.0;
        double p_into = 0.0;
        double p_drawn = 0.0;
        bool on = false;
    };

    [[nodiscard]] Trial trial(double g, double dt, bool on) {
        Trial r;
        r.on = on;
        r.p_mpp = harvester_mpp(ess_cfg_.harvester, g);
        r.mode = next_mppt_mode(ess_cfg_.mppt, ess_.mppt_mode, ess_.storage.v_cap);
        r.p_into = r.p_mpp > 0.0 ? r.p_mpp * mppt_efficiency(ess_cfg_.mppt, r.mode, r.p_mpp) : 0.0;
        r.a = app_step(app_, app_st_, on, v_storage(), pending_.size(), dt);
        const double p_load = r.a.total_energy() / dt;
        r.p_drawn = on ? converter_input(ess_cfg_.converter, p_load) : p_load;
        r.s = storage_with_saturation(r.p_into, r.p_drawn, dt, r.mode);
        return r;
    }

    [[nodiscard]] bool browns_out(const Trial& r) const {
        return r.on && (r.s.collapsed || r.s.v_bus < ess_cfg_.converter.v_off);
    }

    // A step that browns out is split: the load runs up to the last instant
    // the bus holds (bisection), the rest of the step runs with the converter
    // off.
    void step_ess(double g, double dt) {
        Trial r = trial(g, dt, ess_.converter_on);
        if (!browns_out(r)) {
            commit(r, dt);
            return;
        }
        double lo = 0.0;
        double hi = dt;
        for (int it = 0; it < 40 && hi - lo > 1e-12 * dt; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (browns_out(trial(g, mid, true))) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if (lo > 0.0) commit(trial(g, lo, true), lo);
        ess_.converter_on = false;
        commit(trial(g, dt - lo, false), dt - lo);
    }

    void commit(const Trial& r, double dt) {
        const AppStep& a = r.a;
        const StorageStep& s = r.s;
        const bool on = r.on;
        const double p_mpp = r.p_mpp;
        const double p_into = r.p_into;
        const double p_drawn = r.p_drawn;
        const MpptMode mode = r.mode;
        const double e_harv = p_mpp * dt;
        const double e_load = a.total_energy();
        double scale = 1.0;
        double conv_loss = 0.0;
        if (on) {
            conv_loss = s.e_out - e_load;
        } else if (e_load > 0.0 && s.e_out < e_load) {
            scale = s.e_out / e_load;  // storage empty: the residual draw is cut short
        }

        ledger_.harvest_input += e_harv;
        ledger_.mppt_loss += e_harv - s.e_in;
        ledger_.storage_leak += s.e_leak;
        ledger_.storage_esr += s.e_esr;
        ledger_.converter_loss += conv_loss;
        book_app(a, scale);

        cur_.harvested += e_harv;
        cur_.mppt_loss += e_harv - s.e_in;
        cur_.storage_loss += s.e_leak + s.e_esr;
        cur_.converter_loss += conv_loss;
        cur_.storage_delta += s.e_in - s.e_out - s.e_leak - s.e_esr;
        if (on) {
            cur_on_ += dt;
            res_.on_time += dt;
        }

        ess_.storage = s.next;
        ess_.v_bus = s.v_bus;
        ess_.mppt_mode = mode;
        ess_.converter_on = on;
        if (ess_cfg_.storage.buffer_capacitance <= 0.0) {
            // algebraic bus: re-evaluate at the end-of-step capacitor voltage
            const double v = bus_voltage(s.next.v_cap, ess_cfg_.storage.esr, p_into, p_drawn);
            if (v >= 0.0) ess_.v_bus = v;
        }
        if (ess_.v_bus < 0.0) ess_.v_bus = 0.0;
        app_st_ = a.state;
        handle_app_events(a);
    }

    /// Fine steps are needed near brownout and while a buffer capacitor
    /// settles after a load change; constant loads elsewhere drift slowly.
    [[nodiscard]] bool needs_fine_step() const {
        if (supply_) return false;
        const StorageModel& st = ess_cfg_.storage;
        if (st.buffer_capacitance > 0.0 && st.esr > 0.0 && t_ - phase_since_ < 10.0 * st.esr * st.buffer_capacitance)
            return true;
        const double p_drawn = converter_input(ess_cfg_.converter, phase_power(app_, app_st_));
        const double vb = bus_voltage(ess_.storage.v_cap, st.esr, 0.0, p_drawn);
        return vb < ess_cfg_.converter.v_off + cfg_.guard_band_v;
    }

    /// End of the dark stretch starting at the current sample, or t_ if the
    /// current sample is lit.
    [[nodiscard]] double dark_until() const {
        const auto s = trace_.samples();
        const double thr = cfg_.dark_threshold;
        if (s[trace_idx_].g > thr) return t_;
        std::size_t j = trace_idx_ + 1;
        while (j < s.size() && s[j].g <= thr) ++j;
        double stop = j < s.size() ? s[j].t : trace_.duration();
        if (cfg_.interpolation == Interpolation::linear && j < s.size()) stop = s[j - 1].t;
        return std::min(stop, trace_.duration());
    }

    void skip_dark(double t_stop) {
        const StorageModel& st = ess_cfg_.storage;
        const double c_eff = st.capacitance + st.buffer_capacitance;
        const double k = std::isfinite(st.leak_resistance) ? 2.0 / (st.leak_resistance * c_eff) : 0.0;
        const double p_r = app_.p_off_residual;
        double e = stored_energy(st, ess_.storage);
        const double full_decay = std::exp(-k * agg_);
        bool first = true;
        while (t_ < t_stop - kEps) {
            const double t_next = std::min(bin_end_, t_stop);
            const double dt = t_next - t_;
            process_events();
            if (first) {
                app_st_ = app_step(app_, app_st_, false, v_storage(), 0, dt).state;
                inflight_.clear();
                first = false;
            }
            double e1 = 0.0;
            double drawn = 0.0;
            if (k > 0.0) {
                const double a = p_r / k;
                e1 = (e + a) * (std::abs(dt - agg_) <= 1e-12 * agg_ ? full_decay : std::exp(-k * dt)) - a;
                if (e1 < 0.0) {
                    const double tz = a > 0.0 ? std::log((e + a) / a) / k : dt;
                    drawn = p_r * std::min(tz, dt);
                    e1 = 0.0;
                } else {
                    drawn = p_r * dt;
                }
            } else {
                drawn = std::min(e, p_r * dt);
                e1 = e - drawn;
            }
            const double leak = std::max(0.0, e - e1 - drawn);
            const auto off = static_cast<std::size_t>(Activity::off);
            ledger_.storage_leak += leak;
            ledger_.sss_by_activity[off] += drawn;
            ledger_.sss_soc += drawn;
            cur_.storage_loss += leak;
            cur_.soc += drawn;
            cur_.storage_delta -= leak + drawn;
            cur_time_[off] += dt;
            // leak was clamped at 0 above; keep the books exact
            const double e_next = e - leak - drawn;
            e = std::max(0.0, e_next);
            const double v = std::sqrt(2.0 * e / c_eff);
            ess_.storage.v_cap = v;
            ess_.storage.v_buf = v;
            ess_.v_bus = v;
            res_.skipped_time += dt;
            t_ = t_next;
            if (t_ >= bin_end_ - kEps) flush_bin();
        }
        ess_.mppt_mode = next_mppt_mode(ess_cfg_.mppt, ess_.mppt_mode, ess_.storage.v_cap);
        process_events();
    }
};

SimResult Runner::run() {
    const auto wall_start = std::chrono::steady_clock::now();
    const double end = trace_.duration();
    const double drain_limit = end + cfg_.max_drain_s;
    const auto samples = trace_.samples();

    while (true) {
        const bool in_trace = t_ < end - kEps;
        if (!in_trace) {
            const bool drain = cfg_.end_policy == EndPolicy::drain_until_converter_off && !supply_ &&
                               ess_.converter_on && t_ < drain_limit - kEps;
            if (!drain) break;
        }
        if (in_trace) advance_trace_index();
        if (!supply_ && !ess_.converter_on && ess_.v_bus >= ess_cfg_.converter.v_on) ess_.converter_on = true;
        process_events();

        if (cfg_.skip_nights && !supply_ && in_trace && !ess_.converter_on) {
            const double stop = dark_until();
            if (stop > t_ + kEps) {
                skip_dark(stop);
                continue;
            }
        }

        const double g = in_trace ? irradiance() : 0.0;
        const bool on = powered();
        if (on && app_st_.phase != Phase::off) app_st_ = settle_transitions(app_, app_st_, v_storage());

        const bool busy = on && (app_st_.phase == Phase::off || active_phase(app_st_.phase)) && needs_fine_step();
        double t_next = t_ + (busy ? cfg_.dt_active : cfg_.dt_quiescent);
        t_next = std::min(t_next, bin_end_);
        if (in_trace) {
            t_next = std::min(t_next, end);
            if (trace_idx_ + 1 < samples.size()) t_next = std::min(t_next, samples[trace_idx_ + 1].t);
        } else {
            t_next = std::min(t_next, drain_limit);
        }
        t_next = std::min(t_next, next_event_edge());
        if (on) {
            const double ttn = app_st_.phase == Phase::off ? app_.t_boot : time_to_next_transition(app_, app_st_);
            if (ttn > kEps) t_next = std::min(t_next, t_ + ttn);
        }
        if (std::abs(bin_end_ - t_next) < kEps) t_next = bin_end_;
        if (!(t_next > t_)) t_next = std::nextafter(t_, kInf);
        const double dt = t_next - t_;
        const Phase before = app_st_.phase;

        if (supply_) {
            step_supply(dt);
        } else {
            step_ess(g, dt);
        }
        ++res_.steps;
        t_ = t_next;
        if (app_st_.phase != before) phase_since_ = t_;
        if (t_ >= bin_end_ - kEps) flush_bin();
    }
    if (t_ > bin_end_ - agg_ + kEps) flush_bin();

    res_.duration = t_;
    res_.boots = app_st_.boots;
    res_.checkpoints = app_st_.checkpoints;
    res_.final_v_cap = ess_.storage.v_cap;
    res_.final_converter_on = ess_.converter_on;
    const StorageState final_state = supply_ ? StorageState{} : ess_.storage;
    res_.stack = finalize_stack(ledger_, ess_cfg_.storage, final_state, t_, cfg_.closure_tolerance);
    res_.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return std::move(res_);
}

}  // namespace

void SimConfig::validate(const AppSpec& app) const {
    if (!(dt_active > 0.0) || !(dt_quiescent > 0.0) || !(aggregation_step > 0.0))
        throw ConfigError("time steps must be > 0");
    if (!(guard_band_v >= 0.0)) throw ConfigError("guard_band_v must be >= 0");
    if (dt_active > dt_quiescent) throw ConfigError("dt_active must not exceed dt_quiescent");
    if (!is_multiple(aggregation_step, dt_quiescent))
        throw ConfigError("aggregation_step must be an integer multiple of dt_quiescent");
    const double guard = std::min({app.t_sample, app.t_comm, app.t_boot}) / 2.0;
    if (dt_active > guard * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "dt_active=" << dt_active << " too coarse for app '" << app.name << "' (limit " << guard << " s)";
        throw ConfigError(msg.str());
    }
    if (supply_override && !(*supply_override > 0.0)) throw ConfigError("supply_override must be > 0");
    if (voltage_stride < 1) throw ConfigError("voltage_stride must be >= 1");
    if (!(closure_tolerance > 0.0)) throw ConfigError("closure_tolerance must be > 0");
    if (!(max_drain_s >= 0.0)) throw ConfigError("max_drain_s must be >= 0");
    if (!(dark_threshold >= 0.0)) throw ConfigError("dark_threshold must be >= 0");
}

double EnergyLedger::sss_total() const noexcept {
    double s = 0.0;
    for (double e : sss_by_activity) s += e;
    return s;
}

double EnergyLedger::outputs() const noexcept {
    return mppt_loss + storage_leak + storage_esr + storage_residual + converter_loss + sss_total();
}

double EnergyLedger::closure_error() const noexcept {
    const double in = inputs();
    if (!(in > 0.0)) return std::abs(outputs());
    return std::abs(in - outputs()) / in;
}

double StackBin::imbalance() const noexcept {
    return harvested + external - (mppt_loss + storage_loss + converter_loss + soc + sensor + storage_delta);
}

EnergyStack finalize_stack(const EnergyLedger& ledger, const StorageModel& storage, const StorageState& final_state,
                           double duration, double tolerance) {
    EnergyStack stack;
    stack.ledger = ledger;
    stack.ledger.storage_residual = stored_energy(storage, final_state);
    stack.duration = duration;
    const double err = stack.ledger.closure_error();
    if (!(err <= tolerance)) {
        std::ostringstream msg;
        msg << "energy ledger does not close: relative error " << err << " > " << tolerance;
        throw ConsistencyError(msg.str());
    }
    return stack;
}

SimResult simulate(const IrradianceTrace& trace, const EventTrace* events, const EssConfig& ess, const AppSpec& app,
                   const SimConfig& cfg) {
    if (trace.empty()) throw ValidationError("simulation needs a non-empty trace");
    ess.validate();
    app.validate();
    cfg.validate(app);
    if (events) events->validate();
    Runner runner(trace, events, ess, app, cfg);
    return runner.run();
}

SimResult run_with_skip_nights(const IrradianceTrace& trace, const EventTrace* events, const EssConfig& ess,
                               const AppSpec& app, SimConfig cfg) {
    cfg.skip_nights = true;
    return simulate(trace, events, ess, app, cfg);
}

}  // namespace ehstack
