#include "ehstack/config.hpp"

#include "ehstack/errors.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ehstack::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads an object field by field and rejects keys nobody asked for.
class Obj {
public:
    Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }
    ~Obj() = default;
    Obj(const Obj&) = delete;
    Obj& operator=(const Obj&) = delete;

    [[nodiscard]] bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    [[nodiscard]] const json& at(const std::string& key) const { return j_.at(key); }
    [[nodiscard]] std::string path(const std::string& key) const { return where_ + "." + key; }

    void num(const std::string& key, double& out) {
        if (has(key)) out = as_double(at(key), path(key));
    }
    void num(const std::string& key, int& out) {
        if (has(key)) out = static_cast<int>(as_int(at(key), path(key)));
    }
    void num(const std::string& key, std::uint64_t& out) {
        if (has(key)) out = as_int(at(key), path(key));
    }
    void flag(const std::string& key, bool& out) {
        if (!has(key)) return;
        if (!at(key).is_boolean()) throw ConfigError(path(key) + ": expected true or false");
        out = at(key).get<bool>();
    }
    void str(const std::string& key, std::string& out) {
        if (!has(key)) return;
        if (!at(key).is_string()) throw ConfigError(path(key) + ": expected a string");
        out = at(key).get<std::string>();
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
        }
    }

    static double as_double(const json& v, const std::string& where) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        }
        throw ConfigError(where + ": expected a number");
    }
    static std::uint64_t as_int(const json& v, const std::string& where) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
        throw ConfigError(where + ": expected a non-negative integer");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

json num_out(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

std::string resolve(const std::string& p, const std::string& base) {
    if (p.empty()) return p;
    fs::path path(p);
    if (path.is_relative()) path = fs::path(base) / path;
    std::error_code ec;
    if (!fs::exists(path, ec)) throw ConfigError("file not found: " + path.string());
    return fs::weakly_canonical(path).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

EfficiencyCurve read_curve(const json& v, const std::string& where) {
    if (v.is_array()) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : v) {
            if (!p.is_array() || p.size() != 2) throw ConfigError(where + ": points are [x, efficiency] pairs");
            pts.emplace_back(Obj::as_double(p[0], where), Obj::as_double(p[1], where));
        }
        try {
            return EfficiencyCurve(std::move(pts));
        } catch (const ValidationError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    const double flat = Obj::as_double(v, where);
    if (!(flat > 0.0 && flat <= 1.0)) throw ConfigError(where + ": efficiency must be in (0, 1]");
    return EfficiencyCurve(flat);
}

json write_curve(const EfficiencyCurve& c) {
    if (c.points().size() == 1) return c.points().front().second;
    json arr = json::array();
    for (const auto& [x, y] : c.points()) arr.push_back({x, y});
    return arr;
}

SolarSynthesis read_synthesis(const json& j, std::uint64_t default_seed) {
    SolarSynthesis s;
    s.seed = default_seed;
    Obj o(j, "trace.synthetic");
    o.num("days", s.days);
    o.num("cadence_s", s.cadence_s);
    o.num("peak_w_m2", s.peak_w_m2);
    o.num("sunrise_h", s.sunrise_h);
    o.num("sunset_h", s.sunset_h);
    if (o.has("day_scales")) {
        for (const auto& v : o.at("day_scales")) s.day_scales.push_back(Obj::as_double(v, "trace.synthetic.day_scales"));
    }
    o.num("day_variability", s.day_variability);
    o.num("cloudiness", s.cloudiness);
    o.num("cloud_block_s", s.cloud_block_s);
    o.num("seed", s.seed);
    o.finish();
    return s;
}

json write_synthesis(const SolarSynthesis& s) {
    return json{{"days", s.days},
                {"cadence_s", s.cadence_s},
                {"peak_w_m2", s.peak_w_m2},
                {"sunrise_h", s.sunrise_h},
                {"sunset_h", s.sunset_h},
                {"day_scales", s.day_scales},
                {"day_variability", s.day_variability},
                {"cloudiness", s.cloudiness},
                {"cloud_block_s", s.cloud_block_s},
                {"seed", s.seed}};
}

ParkingEventSpec read_parking(const json& j, std::uint64_t default_seed) {
    ParkingEventSpec p;
    p.seed = default_seed;
    Obj o(j, "events.parking");
    o.num("opening_start_h", p.opening_start_h);
    o.num("opening_end_h", p.opening_end_h);
    o.num("peak_h", p.peak_h);
    o.num("events_per_day", p.events_per_day);
    o.num("days", p.days);
    o.num("seed", p.seed);
    o.finish();
    return p;
}

json write_parking(const ParkingEventSpec& p) {
    return json{{"opening_start_h", p.opening_start_h},
                {"opening_end_h", p.opening_end_h},
                {"peak_h", p.peak_h},
                {"events_per_day", p.events_per_day},
                {"days", p.days},
                {"seed", p.seed}};
}

void read_ess(const json& j, HarnessConfig& cfg, const std::string& base) {
    Obj o(j, "ess");
    EssConfig& e = cfg.ess;
    if (o.has("harvester")) {
        Obj h(o.at("harvester"), "ess.harvester");
        std::string kind = e.harvester.kind == HarvesterModel::Kind::iv_surface ? "iv_surface" : "linear_mpp";
        h.str("kind", kind);
        if (kind == "linear_mpp") e.harvester.kind = HarvesterModel::Kind::linear_mpp;
        else if (kind == "iv_surface") e.harvester.kind = HarvesterModel::Kind::iv_surface;
        else throw ConfigError("ess.harvester.kind: expected linear_mpp or iv_surface");
        h.num("k_mpp", e.harvester.k_mpp);
        h.str("iv_surface", cfg.iv_surface_path);
        h.finish();
        cfg.iv_surface_path = resolve(cfg.iv_surface_path, base);
        if (e.harvester.kind == HarvesterModel::Kind::iv_surface) {
            if (cfg.iv_surface_path.empty()) throw ConfigError("ess.harvester.iv_surface: path required");
            try {
                e.harvester.surface = parse_iv_surface(slurp(cfg.iv_surface_path));
            } catch (const ParseError& err) {
                throw ConfigError(cfg.iv_surface_path + ": " + err.what());
            }
        }
    }
    if (o.has("mppt")) {
        Obj m(o.at("mppt"), "ess.mppt");
        m.num("bypass_engage_v", e.mppt.bypass_engage_v);
        m.num("bypass_release_v", e.mppt.bypass_release_v);
        m.num("cold_start_below_v", e.mppt.cold_start_below_v);
        m.num("tracking_efficiency", e.mppt.tracking_efficiency);
        if (m.has("conversion")) e.mppt.conversion = read_curve(m.at("conversion"), "ess.mppt.conversion");
        m.num("cold_start_efficiency", e.mppt.cold_start_efficiency);
        m.num("bypass_efficiency", e.mppt.bypass_efficiency);
        m.num("storage_v_max", e.mppt.storage_v_max);
        m.finish();
    }
    if (o.has("storage")) {
        Obj s(o.at("storage"), "ess.storage");
        s.num("capacitance", e.storage.capacitance);
        s.num("esr", e.storage.esr);
        s.num("leak_resistance", e.storage.leak_resistance);
        s.num("v_init", e.storage.v_init);
        s.num("buffer_capacitance", e.storage.buffer_capacitance);
        s.finish();
    }
    if (o.has("converter")) {
        Obj c(o.at("converter"), "ess.converter");
        c.num("v_on", e.converter.v_on);
        c.num("v_off", e.converter.v_off);
        c.num("v_out", e.converter.v_out);
        if (c.has("efficiency")) e.converter.efficiency = read_curve(c.at("efficiency"), "ess.converter.efficiency");
        c.finish();
    }
    o.finish();
}

json write_ess(const HarnessConfig& cfg) {
    const EssConfig& e = cfg.ess;
    return json{
        {"harvester",
         {{"kind", e.harvester.kind == HarvesterModel::Kind::iv_surface ? "iv_surface" : "linear_mpp"},
          {"k_mpp", e.harvester.k_mpp},
          {"iv_surface", cfg.iv_surface_path}}},
        {"mppt",
         {{"bypass_engage_v", e.mppt.bypass_engage_v},
          {"bypass_release_v", e.mppt.bypass_release_v},
          {"cold_start_below_v", e.mppt.cold_start_below_v},
          {"tracking_efficiency", e.mppt.tracking_efficiency},
          {"conversion", write_curve(e.mppt.conversion)},
          {"cold_start_efficiency", e.mppt.cold_start_efficiency},
          {"bypass_efficiency", e.mppt.bypass_efficiency},
          {"storage_v_max", e.mppt.storage_v_max}}},
        {"storage",
         {{"capacitance", e.storage.capacitance},
          {"esr", e.storage.esr},
          {"leak_resistance", num_out(e.storage.leak_resistance)},
          {"v_init", e.storage.v_init},
          {"buffer_capacitance", e.storage.buffer_capacitance}}},
        {"converter",
         {{"v_on", e.converter.v_on},
          {"v_off", e.converter.v_off},
          {"v_out", e.converter.v_out},
          {"efficiency", write_curve(e.converter.efficiency)}}}};
}

void read_app(const json& j, HarnessConfig& cfg) {
    Obj o(j, "app");
    o.str("preset", cfg.app_preset);
    if (!cfg.app_preset.empty()) cfg.app = preset(cfg.app_preset);
    AppSpec& a = cfg.app;
    o.str("name", a.name);
    o.num("t_sample_period", a.t_sample_period);
    o.num("t_sample", a.t_sample);
    o.num("t_comm", a.t_comm);
    o.num("n_per_comm", a.n_per_comm);
    o.num("bytes_per_comm", a.bytes_per_comm);
    o.num("p_sample", a.p_sample);
    o.num("p_sample_sensor", a.p_sample_sensor);
    o.num("p_peak", a.p_peak);
    o.num("t_peak", a.t_peak);
    o.num("t_peak_start", a.t_peak_start);
    o.num("p_comm", a.p_comm);
    o.num("p_idle", a.p_idle);
    o.num("p_off_residual", a.p_off_residual);
    o.num("t_boot", a.t_boot);
    o.num("p_boot", a.p_boot);
    o.num("t_backup", a.t_backup);
    o.num("e_backup", a.e_backup);
    o.num("checkpoint_v", a.checkpoint_v);
    o.flag("reactive", a.reactive);
    o.num("event_bytes", a.event_bytes);
    o.flag("periodic_comm", a.periodic_comm);
    o.flag("periodic_sampling", a.periodic_sampling);
    o.finish();
}

json write_app(const HarnessConfig& cfg) {
    const AppSpec& a = cfg.app;
    return json{{"preset", cfg.app_preset},
                {"name", a.name},
                {"t_sample_period", a.t_sample_period},
                {"t_sample", a.t_sample},
                {"t_comm", a.t_comm},
                {"n_per_comm", a.n_per_comm},
                {"bytes_per_comm", a.bytes_per_comm},
                {"p_sample", a.p_sample},
                {"p_sample_sensor", a.p_sample_sensor},
                {"p_peak", a.p_peak},
                {"t_peak", a.t_peak},
                {"t_peak_start", a.t_peak_start},
                {"p_comm", a.p_comm},
                {"p_idle", a.p_idle},
                {"p_off_residual", a.p_off_residual},
                {"t_boot", a.t_boot},
                {"p_boot", a.p_boot},
                {"t_backup", a.t_backup},
                {"e_backup", a.e_backup},
                {"checkpoint_v", a.checkpoint_v},
                {"reactive", a.reactive},
                {"event_bytes", a.event_bytes},
                {"periodic_comm", a.periodic_comm},
                {"periodic_sampling", a.periodic_sampling}};
}

void read_sim(const json& j, SimConfig& s) {
    Obj o(j, "sim");
    o.num("dt_active", s.dt_active);
    o.num("dt_quiescent", s.dt_quiescent);
    o.num("aggregation_step", s.aggregation_step);
    o.num("guard_band_v", s.guard_band_v);
    if (o.has("end_policy")) {
        const auto v = o.at("end_policy").get<std::string>();
        if (v == "hard_stop") s.end_policy = EndPolicy::hard_stop;
        else if (v == "drain_until_converter_off") s.end_policy = EndPolicy::drain_until_converter_off;
        else throw ConfigError("sim.end_policy: expected hard_stop or drain_until_converter_off");
    }
    o.num("max_drain_s", s.max_drain_s);
    o.flag("skip_nights", s.skip_nights);
    o.num("dark_threshold", s.dark_threshold);
    if (o.has("supply_override")) s.supply_override = Obj::as_double(o.at("supply_override"), "sim.supply_override");
    if (o.has("interpolation")) {
        const auto v = o.at("interpolation").get<std::string>();
        if (v == "step") s.interpolation = Interpolation::step;
        else if (v == "linear") s.interpolation = Interpolation::linear;
        else throw ConfigError("sim.interpolation: expected step or linear");
    }
    o.num("closure_tolerance", s.closure_tolerance);
    o.flag("record_profile", s.record_profile);
    o.flag("record_activity", s.record_activity);
    o.flag("record_voltage", s.record_voltage);
    o.num("voltage_stride", s.voltage_stride);
    o.finish();
}

json write_sim(const SimConfig& s) {
    return json{{"dt_active", s.dt_active},
                {"dt_quiescent", s.dt_quiescent},
                {"aggregation_step", s.aggregation_step},
                {"guard_band_v", s.guard_band_v},
                {"end_policy", s.end_policy == EndPolicy::hard_stop ? "hard_stop" : "drain_until_converter_off"},
                {"max_drain_s", s.max_drain_s},
                {"skip_nights", s.skip_nights},
                {"dark_threshold", s.dark_threshold},
                {"supply_override", s.supply_override ? json(*s.supply_override) : json(nullptr)},
                {"interpolation", s.interpolation == Interpolation::step ? "step" : "linear"},
                {"closure_tolerance", s.closure_tolerance},
                {"record_profile", s.record_profile},
                {"record_activity", s.record_activity},
                {"record_voltage", s.record_voltage},
                {"voltage_stride", s.voltage_stride}};
}

void read_plan(const json& j, PlanBlock& p, const std::string& base) {
    Obj o(j, "plan");
    if (o.has("mode")) {
        try {
            p.mode = parse_plan_mode(o.at("mode").get<std::string>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("plan.mode: ") + e.what());
        }
    }
    if (o.has("s_tp")) {
        const auto& v = o.at("s_tp");
        if (v.is_string() && v.get<std::string>() == "max") p.s_tp.reset();
        else p.s_tp = Obj::as_double(v, "plan.s_tp");
    }
    o.num("s_i", p.s_i);
    if (o.has("env_cap")) p.env_cap = Obj::as_double(o.at("env_cap"), "plan.env_cap");
    o.num("profile_duration", p.profile_duration);
    o.str("profile", p.profile_path);
    o.finish();
    p.profile_path = resolve(p.profile_path, base);
    if (p.s_tp && !(*p.s_tp >= 1.0)) throw ConfigError("plan.s_tp must be >= 1 or \"max\"");
    if (!(p.s_i > 0.0)) throw ConfigError("plan.s_i must be > 0");
}

json write_plan(const PlanBlock& p) {
    return json{{"mode", to_string(p.mode)},
                {"s_tp", p.s_tp ? json(*p.s_tp) : json("max")},
                {"s_i", p.s_i},
                {"env_cap", p.env_cap ? json(*p.env_cap) : json(nullptr)},
                {"profile_duration", p.profile_duration},
                {"profile", p.profile_path}};
}

void read_sweep(const json& j, SweepBlock& s) {
    Obj o(j, "sweep");
    const auto list = [&](const char* key, std::vector<double>& out) {
        if (!o.has(key)) return;
        if (!o.at(key).is_array()) throw ConfigError(o.path(key) + ": expected a list");
        for (const auto& v : o.at(key)) out.push_back(Obj::as_double(v, o.path(key)));
    };
    list("capacitance", s.capacitance);
    list("s_i", s.s_i);
    o.num("workers", s.workers);
    o.finish();
    if (s.workers < 1) throw ConfigError("sweep.workers must be >= 1");
}

}  // namespace

HarnessConfig parse_config(std::string_view text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    HarnessConfig cfg;
    try {
        Obj root(j, "config");
        root.num("seed", cfg.seed);

        if (root.has("trace")) {
            Obj t(root.at("trace"), "trace");
            t.str("path", cfg.trace.path);
            t.flag("minute_indexed", cfg.trace.minute_indexed);
            if (t.has("synthetic")) cfg.trace.synthetic = read_synthesis(t.at("synthetic"), cfg.seed);
            t.finish();
        }
        cfg.trace.path = resolve(cfg.trace.path, base_dir);
        if (cfg.trace.path.empty() == !cfg.trace.synthetic.has_value())
            throw ConfigError("trace: give exactly one of path or synthetic");

        if (root.has("events")) {
            Obj e(root.at("events"), "events");
            e.str("path", cfg.events.path);
            if (e.has("parking")) cfg.events.parking = read_parking(e.at("parking"), cfg.seed);
            e.num("hold_s", cfg.events.hold_s);
            e.finish();
            cfg.events.path = resolve(cfg.events.path, base_dir);
            if (!cfg.events.path.empty() && cfg.events.parking)
                throw ConfigError("events: give at most one of path or parking");
            if (!(cfg.events.hold_s > 0.0)) throw ConfigError("events.hold_s must be > 0");
        }

        if (root.has("ess")) read_ess(root.at("ess"), cfg, base_dir);
        if (root.has("app")) read_app(root.at("app"), cfg);
        if (root.has("sim")) read_sim(root.at("sim"), cfg.sim);
        if (root.has("plan")) read_plan(root.at("plan"), cfg.plan, base_dir);
        if (root.has("sweep")) read_sweep(root.at("sweep"), cfg.sweep);
        root.finish();

        cfg.ess.validate();
        cfg.app.validate();
        cfg.sim.validate(cfg.app);
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

HarnessConfig load_config(const std::string& path) {
    const std::string text = slurp(path);
    return parse_config(text, fs::absolute(fs::path(path)).parent_path().string());
}

std::string dump_config(const HarnessConfig& cfg) {
    json trace{{"path", cfg.trace.path}, {"minute_indexed", cfg.trace.minute_indexed}};
    trace["synthetic"] = cfg.trace.synthetic ? write_synthesis(*cfg.trace.synthetic) : json(nullptr);
    json events{{"path", cfg.events.path}, {"hold_s", cfg.events.hold_s}};
    events["parking"] = cfg.events.parking ? write_parking(*cfg.events.parking) : json(nullptr);
    const json root{{"seed", cfg.seed},
                    {"trace", trace},
                    {"events", events},
                    {"ess", write_ess(cfg)},
                    {"app", write_app(cfg)},
                    {"sim", write_sim(cfg.sim)},
                    {"plan", write_plan(cfg.plan)},
                    {"sweep", {{"capacitance", cfg.sweep.capacitance}, {"s_i", cfg.sweep.s_i}, {"workers", cfg.sweep.workers}}}};
    return root.dump(2) + "\n";
}

void reseed(HarnessConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    if (cfg.trace.synthetic) cfg.trace.synthetic->seed = seed;
    if (cfg.events.parking) cfg.events.parking->seed = seed;
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[md[k] >> 4]);
        out.push_back(hex[md[k] & 0xf]);
    }
    return out;
}

std::string config_hash(const HarnessConfig& cfg) {
    // Worker count does not change results, so it stays out of the hash.
    HarnessConfig c = cfg;
    c.sweep.workers = 1;
    std::string material = dump_config(c);
    for (const std::string* p : {&cfg.trace.path, &cfg.events.path, &cfg.iv_surface_path, &cfg.plan.profile_path}) {
        if (!p->empty()) material += "\n" + sha256_hex(slurp(*p));
    }
    return sha256_hex(material);
}

}  // namespace ehstack::cli
