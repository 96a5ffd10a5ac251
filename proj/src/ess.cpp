#include "ehstack/ess.hpp"

#include "ehstack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace ehstack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_fraction(double x) { return x > 0.0 && x <= 1.0; }

/// Index i with axis[i] <= x < axis[i+1] and the interpolation weight.
std::pair<std::size_t, double> locate(const std::vector<double>& axis, double x, bool& clamped) {
    if (axis.size() == 1) {
        if (x != axis.front()) clamped = true;
        return {0, 0.0};
    }
    if (x <= axis.front()) {
        if (x < axis.front()) clamped = true;
        return {0, 0.0};
    }
    if (x >= axis.back()) {
        if (x > axis.back()) clamped = true;
        return {axis.size() - 2, 1.0};
    }
    const auto it = std::upper_bound(axis.begin(), axis.end(), x);
    const auto i = static_cast<std::size_t>(it - axis.begin()) - 1;
    return {i, (x - axis[i]) / (axis[i + 1] - axis[i])};
}

double surface_current(const IvSurface& s, double g, double v, bool& clamped) {
    const auto [gi, gw] = locate(s.irradiance, g, clamped);
    const auto [vi, vw] = locate(s.voltage, v, clamped);
    const std::size_t nv = s.voltage.size();
    const std::size_t gi1 = std::min(gi + 1, s.irradiance.size() - 1);
    const std::size_t vi1 = std::min(vi + 1, nv - 1);
    const double c00 = s.current[gi * nv + vi];
    const double c01 = s.current[gi * nv + vi1];
    const double c10 = s.current[gi1 * nv + vi];
    const double c11 = s.current[gi1 * nv + vi1];
    const double lo = c00 + (c01 - c00) * vw;
    const double hi = c10 + (c11 - c10) * vw;
    return lo + (hi - lo) * gw;
}

bool strictly_increasing(const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] > v[k - 1])) return false;
    return true;
}

}  // namespace

EfficiencyCurve::EfficiencyCurve(double flat) : points_{{0.0, flat}} {
    if (!is_fraction(flat)) throw ValidationError("efficiency must be in (0, 1]");
}

EfficiencyCurve::EfficiencyCurve(std::vector<std::pair<double, double>> points) : points_(std::move(points)) {
    if (points_.empty()) throw ValidationError("efficiency curve needs at least one point");
    for (std::size_t k = 0; k < points_.size(); ++k) {
        if (!is_fraction(points_[k].second)) throw ValidationError("efficiency must be in (0, 1]");
        if (k > 0 && !(points_[k].first > points_[k - 1].first))
            throw ValidationError("efficiency curve x must be strictly increasing");
    }
}

double EfficiencyCurve::operator()(double x) const noexcept {
    if (points_.size() == 1 || x <= points_.front().first) return points_.front().second;
    if (x >= points_.back().first) return points_.back().second;
    const auto it = std::upper_bound(points_.begin(), points_.end(), x,
                                     [](double v, const std::pair<double, double>& p) { return v < p.first; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    return a.second + (b.second - a.second) * (x - a.first) / (b.first - a.first);
}

void IvSurface::validate() const {
    if (irradiance.empty() || voltage.empty()) throw ValidationError("IV surface grid is empty");
    if (!strictly_increasing(irradiance) || !strictly_increasing(voltage))
        throw ValidationError("IV surface axes must be strictly increasing");
    if (current.size() != irradiance.size() * voltage.size()) throw ValidationError("IV surface grid is incomplete");
    for (std::size_t i = 0; i < irradiance.size(); ++i) {
        for (std::size_t j = 0; j < voltage.size(); ++j) {
            const double c = current[i * voltage.size() + j];
            if (!(c >= 0.0) || !std::isfinite(c)) throw ValidationError("IV surface current must be >= 0");
            if (j > 0 && c > current[i * voltage.size() + j - 1])
                throw ValidationError("IV surface current must not increase with voltage");
        }
    }
}

void HarvesterModel::validate() const {
    if (kind == Kind::linear_mpp) {
        if (!(k_mpp > 0.0)) throw ValidationError("k_mpp must be > 0");
    } else {
        surface.validate();
    }
}

HarvestPoint harvester_power(const HarvesterModel& model, double g, double v_operating) {
    if (!(g >= 0.0)) throw ValidationError("irradiance must be >= 0");
    if (model.kind == HarvesterModel::Kind::linear_mpp) return {model.k_mpp * g, false};
    HarvestPoint out;
    const double i = surface_current(model.surface, g, v_operating, out.clamped);
    out.power = std::max(0.0, i * v_operating);
    return out;
}

double harvester_mpp(const HarvesterModel& model, double g) {
    if (model.kind == HarvesterModel::Kind::linear_mpp) return model.k_mpp * std::max(0.0, g);
    double best = 0.0;
    for (double v : model.surface.voltage) {
        bool clamped = false;
        best = std::max(best, surface_current(model.surface, g, v, clamped) * v);
    }
    return best;
}

IvSurface parse_iv_surface(const std::string& text) {
    std::map<double, std::map<double, double>> grid;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        for (char& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream row(line);
        double g = 0.0;
        double v = 0.0;
        double i = 0.0;
        if (!(row >> g >> v >> i)) {
            if (grid.empty()) continue;  // header
            throw ParseError(line_no, "expected irradiance, voltage, current");
        }
        grid[g][v] = i;
    }
    IvSurface s;
    if (grid.empty()) throw ValidationError("IV surface is empty");
    for (const auto& [v, _] : grid.begin()->second) s.voltage.push_back(v);
    for (const auto& [g, row] : grid) {
        if (row.size() != s.voltage.size()) throw ValidationError("IV surface grid is not rectangular");
        s.irradiance.push_back(g);
        std::size_t j = 0;
        for (const auto& [v, i] : row) {
            if (v != s.voltage[j++]) throw ValidationError("IV surface grid is not rectangular");
            s.current.push_back(i);
        }
    }
    s.validate();
    return s;
}

const char* to_string(MpptMode mode) noexcept {
    switch (mode) {
        case MpptMode::cold_start: return "cold_start";
        case MpptMode::bypass: return "bypass";
        case MpptMode::tracking: return "tracking";
        case MpptMode::saturated: return "saturated";
    }
    return "?";
}

void MpptModel::validate() const {
    if (!is_fraction(tracking_efficiency) || !is_fraction(cold_start_efficiency) || !is_fraction(bypass_efficiency))
        throw ValidationError("MPPT efficiencies must be in (0, 1]");
    if (!(bypass_engage_v < bypass_release_v)) throw ValidationError("bypass engage voltage must be below release");
    if (!(storage_v_max > bypass_release_v)) throw ValidationError("storage v_max must exceed bypass release");
    if (!(cold_start_below_v > 0.0)) throw ValidationError("cold start threshold must be > 0");
}

MpptMode next_mppt_mode(const MpptModel& mppt, MpptMode mode, double v_cap) noexcept {
    switch (mode) {
        case MpptMode::bypass:
            if (v_cap >= mppt.bypass_release_v)
                return v_cap < mppt.cold_start_below_v ? MpptMode::cold_start : MpptMode::tracking;
            return MpptMode::bypass;
        case MpptMode::cold_start:
            if (v_cap < mppt.bypass_engage_v) return MpptMode::bypass;
            return v_cap >= mppt.cold_start_below_v ? MpptMode::tracking : MpptMode::cold_start;
        case MpptMode::tracking:
        case MpptMode::saturated:
            return v_cap < mppt.bypass_engage_v ? MpptMode::bypass : MpptMode::tracking;
    }
    return mode;
}

double mppt_efficiency(const MpptModel& mppt, MpptMode mode, double p_harvest_mpp) noexcept {
    switch (mode) {
        case MpptMode::bypass: return mppt.bypass_efficiency;
        case MpptMode::cold_start: return mppt.cold_start_efficiency;
        case MpptMode::tracking:
        case MpptMode::saturated: return mppt.tracking_efficiency * mppt.conversion(p_harvest_mpp);
    }
    return 1.0;
}

MpptStep mppt_step(const MpptModel& mppt, MpptMode mode, double v_cap, double p_harvest_mpp, double dt,
                   double p_accept_max) {
    if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
    MpptStep out;
    out.mode = next_mppt_mode(mppt, mode, v_cap);
    if (!(p_harvest_mpp > 0.0)) return out;
    double p = p_harvest_mpp * mppt_efficiency(mppt, out.mode, p_harvest_mpp);
    const double limit = std::max(0.0, p_accept_max);
    if (p > limit) {
        p = limit;
        if (out.mode == MpptMode::tracking) out.mode = MpptMode::saturated;
    }
    out.p_into_storage = p;
    out.p_loss = p_harvest_mpp - p;
    return out;
}

void StorageModel::validate(double v_max) const {
    if (!(capacitance > 0.0)) throw ValidationError("capacitance must be > 0");
    if (!(esr >= 0.0)) throw ValidationError("esr must be >= 0");
    if (!(leak_resistance > 0.0)) throw ValidationError("leak resistance must be > 0");
    if (!(buffer_capacitance >= 0.0)) throw ValidationError("buffer capacitance must be >= 0");
    if (!(v_init >= 0.0 && v_init <= v_max)) throw ValidationError("v_init must be within [0, v_max]");
}

double bus_voltage(double v_cap, double esr, double p_in, double p_out) noexcept {
    const double p_net = p_out - p_in;
    if (esr <= 0.0) return v_cap;
    const double disc = v_cap * v_cap - 4.0 * esr * p_net;
    if (disc < 0.0) return -1.0;
    return 0.5 * (v_cap + std::sqrt(disc));
}

double stored_energy(const StorageModel& storage, const StorageState& state) noexcept {
    double e = 0.5 * storage.capacitance * state.v_cap * state.v_cap;
    if (storage.buffer_capacitance > 0.0 && storage.esr > 0.0)
        e += 0.5 * storage.buffer_capacitance * state.v_buf * state.v_buf;
    else if (storage.buffer_capacitance > 0.0)
        e += 0.5 * storage.buffer_capacitance * state.v_cap * state.v_cap;
    return e;
}

double residual_energy(const StorageModel& storage, double v_cap) noexcept {
    return 0.5 * storage.capacitance * v_cap * v_cap;
}

namespace {

/// Exact exponential self-discharge of an energy E through R_leak on a
/// capacitance c. Returns the energy lost.
double apply_leak(double& energy, double c, double r_leak, double dt) {
    if (!std::isfinite(r_leak) || energy <= 0.0) return 0.0;
    const double lost = -energy * std::expm1(-2.0 * dt / (r_leak * c));
    energy -= lost;
    return lost;
}

template <typename LoadCurrent>
StorageStep buffered_step(const StorageModel& s, const StorageState& state, double p_in, double dt,
                          LoadCurrent&& load_current) {
    StorageStep out;
    const double r = s.esr;
    const double cb = s.buffer_capacitance;
    const double tau = r * cb;
    const double vc = state.v_cap;
    const double vb0 = state.v_buf;
    const double decay = std::exp(-dt / tau);
    const double one_minus = -std::expm1(-dt / tau);
    const double one_minus2 = -std::expm1(-2.0 * dt / tau);

    double vb_est = std::max(vb0, 1e-9);
    double vinf = 0.0;
    double vb1 = 0.0;
    double int_vb = 0.0;
    double i_in = 0.0;
    double i_out = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        i_in = p_in / vb_est;
        i_out = load_current(vb_est);
        vinf = vc + r * (i_in - i_out);
        vb1 = vinf + (vb0 - vinf) * decay;
        int_vb = vinf * dt + (vb0 - vinf) * tau * one_minus;
        const double avg = int_vb / dt;
        if (!(avg > 0.0) || !(vb1 > 0.0)) break;
        if (std::abs(avg - vb_est) <= 1e-14 * avg) {
            converged = true;
            break;
        }
        vb_est = avg;
    }
    if (!converged) {
        // Demand exceeds what the buffer and ESR can deliver over this step.
        out.collapsed = true;
        out.next = state;
        out.v_bus = 0.0;
        out.e_in = p_in * dt;
        out.e_out = 0.0;
        double e_main = 0.5 * s.capacitance * vc * vc + out.e_in;
        out.e_leak = apply_leak(e_main, s.capacitance, s.leak_resistance, dt);
        out.next.v_cap = std::sqrt(2.0 * e_main / s.capacitance);
        return out;
    }
    const double a = i_out - i_in;
    const double b = -(vb0 - vinf) / r;
    out.e_esr = r * (a * a * dt + 2.0 * a * b * tau * one_minus + b * b * 0.5 * tau * one_minus2);
    out.e_in = i_in * int_vb;
    out.e_out = i_out * int_vb;
    const double d_buf = 0.5 * cb * (vb1 * vb1 - vb0 * vb0);
    // energy crossing the ESR into the bus
    const double into_bus = d_buf - out.e_in + out.e_out;
    double e_main = 0.5 * s.capacitance * vc * vc - into_bus - out.e_esr;
    out.next.v_buf = vb1;
    out.v_bus = vb1;
    if (e_main < 0.0) {
        out.collapsed = true;
        out.e_out = std::max(0.0, out.e_out + e_main);
        e_main = 0.0;
    }
    out.e_leak = apply_leak(e_main, s.capacitance, s.leak_resistance, dt);
    out.next.v_cap = std::sqrt(2.0 * e_main / s.capacitance);
    return out;
}

StorageStep merged_step(const StorageModel& s, const StorageState& state, double p_in, double p_out, double dt) {
    StorageStep out;
    const double c = s.capacitance + s.buffer_capacitance;
    out.v_bus = state.v_cap;
    out.e_in = p_in * dt;
    out.e_out = p_out * dt;
    double e = 0.5 * c * state.v_cap * state.v_cap + out.e_in - out.e_out;
    if (e < 0.0) {
        out.e_out = std::max(0.0, out.e_out + e);
        out.collapsed = true;
        e = 0.0;
    }
    out.e_leak = apply_leak(e, c, s.leak_resistance, dt);
    out.next.v_cap = std::sqrt(2.0 * e / c);
    out.next.v_buf = out.next.v_cap;
    return out;
}

}  // namespace

namespace {

/// No-buffer step once the bus voltage is known: the capacitor branch carries
/// (p_out - p_in) / v_bus through the ESR.
StorageStep direct_step(const StorageModel& s, const StorageState& state, double p_in, double p_out, double v_bus,
                        double dt) {
    StorageStep out;
    const double vc = state.v_cap;
    out.e_in = p_in * dt;
    out.e_out = p_out * dt;
    out.v_bus = vc;
    double net = p_out - p_in;
    if (s.esr > 0.0) {
        if (v_bus < 0.0) {
            // Deliver the most the ESR divider allows and flag the collapse.
            out.collapsed = true;
            net = vc * vc / (4.0 * s.esr);
            v_bus = 0.5 * vc;
            out.e_out = (net + p_in) * dt;
        }
        out.v_bus = v_bus;
        if (net != 0.0 && v_bus > 0.0) {
            const double i_c = net / v_bus;
            out.e_esr = i_c * i_c * s.esr * dt;
        }
    }
    double e = 0.5 * s.capacitance * vc * vc - net * dt - out.e_esr;
    if (e < 0.0) {
        out.e_out = std::max(0.0, out.e_out + e);
        out.collapsed = true;
        e = 0.0;
    }
    out.e_leak = apply_leak(e, s.capacitance, s.leak_resistance, dt);
    out.next.v_cap = std::sqrt(2.0 * e / s.capacitance);
    out.next.v_buf = out.next.v_cap;
    return out;
}

}  // namespace

StorageStep storage_step(const StorageModel& s, const StorageState& state, double p_in, double p_out, double dt) {
    if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
    if (s.buffer_capacitance > 0.0) {
        if (s.esr <= 0.0) return merged_step(s, state, p_in, p_out, dt);
        return buffered_step(s, state, p_in, dt, [p_out](double vb) { return p_out / vb; });
    }
    return direct_step(s, state, p_in, p_out, bus_voltage(state.v_cap, s.esr, p_in, p_out), dt);
}

StorageStep storage_step_current(const StorageModel& s, const StorageState& state, double p_in, double i_out,
                                 double dt) {
    if (!(dt > 0.0)) throw ValidationError("dt must be > 0");
    if (!(i_out >= 0.0)) throw ValidationError("load current must be >= 0");
    if (s.buffer_capacitance > 0.0 && s.esr > 0.0)
        return buffered_step(s, state, p_in, dt, [i_out](double) { return i_out; });
    if (s.buffer_capacitance > 0.0 || s.esr <= 0.0)
        return storage_step(s, state, p_in, i_out * state.v_cap, dt);
    // v_bus = v_cap - R * (i_out - p_in / v_bus)
    const double a = state.v_cap - s.esr * i_out;
    const double v_bus = 0.5 * (a + std::sqrt(a * a + 4.0 * s.esr * p_in));
    if (!(v_bus > 0.0)) return direct_step(s, state, p_in, kInf, -1.0, dt);
    return direct_step(s, state, p_in, i_out * v_bus, v_bus, dt);
}

double storage_accept_limit(const StorageModel& s, const StorageState& state, double p_out, double dt,
                            double v_max) {
    const auto v_after = [&](double p_in) { return storage_step(s, state, p_in, p_out, dt).next.v_cap; };
    if (v_after(0.0) >= v_max) return 0.0;
    const double c = s.capacitance + s.buffer_capacitance;
    double hi = (0.5 * c * (v_max * v_max - state.v_cap * state.v_cap)) / dt + p_out;
    hi = std::max(hi, 1e-12);
    while (v_after(hi) < v_max) hi *= 2.0;
    // Illinois regula falsi on f(p) = v_after(p) - v_max, increasing in p.
    // lo always satisfies f <= 0, so the returned input never overshoots.
    double lo = 0.0;
    double f_lo = v_after(lo) - v_max;
    double f_hi = v_after(hi) - v_max;
    int side = 0;
    for (int it = 0; it < 100 && hi - lo > 1e-15 * hi; ++it) {
        if (f_lo > -1e-13 * v_max) break;
        double mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
        const double f_mid = v_after(mid) - v_max;
        if (f_mid <= 0.0) {
            lo = mid;
            f_lo = f_mid;
            if (side == -1) f_hi *= 0.5;
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if (side == 1) f_lo *= 0.5;
            side = 1;
        }
    }
    return lo;
}

void ConverterModel::validate() const {
    if (!(v_off < v_on)) throw ValidationError("converter v_off must be below v_on");
    if (!(v_out > 0.0)) throw ValidationError("converter v_out must be > 0");
}

double converter_input(const ConverterModel& conv, double p_load) noexcept {
    if (!(p_load > 0.0)) return 0.0;
    return p_load / conv.efficiency(p_load);
}

ConverterStep converter_step(const ConverterModel& conv, double v_bus, bool converter_on, double p_load) noexcept {
    ConverterStep out;
    out.on = converter_on ? !(v_bus < conv.v_off) : v_bus >= conv.v_on;
    if (out.on) {
        out.p_drawn = converter_input(conv, p_load);
        out.p_loss = out.p_drawn - std::max(0.0, p_load);
    }
    return out;
}

void EssConfig::validate() const {
    harvester.validate();
    mppt.validate();
    storage.validate(mppt.storage_v_max);
    converter.validate();
    if (converter.v_on > mppt.storage_v_max) throw ValidationError("converter v_on exceeds storage v_max");
}

EssConfig EssConfig::ideal() {
    EssConfig cfg;
    cfg.mppt.tracking_efficiency = 1.0;
    cfg.mppt.conversion = EfficiencyCurve(1.0);
    cfg.mppt.cold_start_efficiency = 1.0;
    cfg.mppt.bypass_efficiency = 1.0;
    cfg.storage.esr = 0.0;
    cfg.storage.leak_resistance = kInf;
    cfg.storage.buffer_capacitance = 0.0;
    cfg.converter.efficiency = EfficiencyCurve(1.0);
    return cfg;
}

EssState initial_state(const EssConfig& cfg) {
    EssState st;
    st.storage.v_cap = cfg.storage.v_init;
    st.storage.v_buf = cfg.storage.v_init;
    st.mppt_mode = cfg.storage.v_init >= cfg.mppt.bypass_release_v ? MpptMode::tracking : MpptMode::bypass;
    st.converter_on = false;
    st.v_bus = cfg.storage.v_init;
    return st;
}

}  // namespace ehstack
