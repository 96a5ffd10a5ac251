#include "ehstack/io.hpp"

#include "ehstack/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ehstack::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int digits = 10) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
    return std::string(buf, res.ptr);
}

ordered_json ledger_json(const EnergyLedger& l) {
    ordered_json sss;
    for (std::size_t k = 0; k < kActivityCount; ++k) sss[to_string(static_cast<Activity>(k))] = l.sss_by_activity[k];
    return ordered_json{{"harvest_input", l.harvest_input},
                        {"storage_initial", l.storage_initial},
                        {"external_supply", l.external_supply},
                        {"mppt_loss", l.mppt_loss},
                        {"storage_loss", l.storage_loss()},
                        {"storage_leak", l.storage_leak},
                        {"storage_esr", l.storage_esr},
                        {"storage_residual", l.storage_residual},
                        {"converter_loss", l.converter_loss},
                        {"sss_by_activity", sss},
                        {"sss_soc", l.sss_soc},
                        {"sss_sensor", l.sss_sensor},
                        {"closure_error", l.closure_error()}};
}

EnergyLedger parse_ledger(const json& j) {
    EnergyLedger l;
    l.harvest_input = j.at("harvest_input").get<double>();
    l.storage_initial = j.at("storage_initial").get<double>();
    l.external_supply = j.at("external_supply").get<double>();
    l.mppt_loss = j.at("mppt_loss").get<double>();
    l.storage_leak = j.at("storage_leak").get<double>();
    l.storage_esr = j.at("storage_esr").get<double>();
    l.storage_residual = j.at("storage_residual").get<double>();
    l.converter_loss = j.at("converter_loss").get<double>();
    for (std::size_t k = 0; k < kActivityCount; ++k)
        l.sss_by_activity[k] = j.at("sss_by_activity").at(to_string(static_cast<Activity>(k))).get<double>();
    l.sss_soc = j.at("sss_soc").get<double>();
    l.sss_sensor = j.at("sss_sensor").get<double>();
    return l;
}

ordered_json profile_obj(const PowerProfile& p) {
    return ordered_json{{"app", p.app_name},
                        {"p_active_avg", p.p_active_avg},
                        {"p_idle_avg", p.p_idle_avg},
                        {"t_active", p.t_active},
                        {"t_app_period", p.t_app_period},
                        {"theta_profiling", p.theta_profiling},
                        {"t_profiling", p.t_profiling}};
}

PowerProfile parse_profile_obj(const json& j) {
    PowerProfile p;
    p.app_name = j.at("app").get<std::string>();
    p.p_active_avg = j.at("p_active_avg").get<double>();
    p.p_idle_avg = j.at("p_idle_avg").get<double>();
    p.t_active = j.at("t_active").get<double>();
    p.t_app_period = j.at("t_app_period").get<double>();
    p.theta_profiling = j.at("theta_profiling").get<double>();
    p.t_profiling = j.at("t_profiling").get<double>();
    p.validate();
    return p;
}

ordered_json plan_obj(const ScalingPlan& plan) {
    return ordered_json{{"mode", to_string(plan.mode)},
                        {"s_tp", plan.s_tp},
                        {"s_f", plan.s_f},
                        {"s_i", plan.s_i},
                        {"binding", plan.binding}};
}

ScalingPlan parse_plan_obj(const json& j) {
    ScalingPlan plan;
    plan.mode = parse_plan_mode(j.at("mode").get<std::string>());
    plan.s_tp = j.at("s_tp").get<double>();
    plan.s_f = j.at("s_f").get<double>();
    plan.s_i = j.at("s_i").get<double>();
    plan.binding = j.value("binding", std::string{});
    plan.validate();
    return plan;
}

Activity parse_activity(const std::string& s) {
    for (std::size_t k = 0; k < kActivityCount; ++k) {
        if (s == to_string(static_cast<Activity>(k))) return static_cast<Activity>(k);
    }
    throw ConfigError("unknown activity label '" + s + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string result_json(const SimResult& r, const RunMeta& meta) {
    ordered_json j;
    j["run_id"] = meta.run_id;
    j["config_hash"] = meta.config_hash;
    j["plan"] = plan_obj(meta.plan);
    j["profile"] = meta.profile ? profile_obj(*meta.profile) : ordered_json(nullptr);
    j["duration_s"] = r.duration;
    j["on_time_s"] = r.on_time;
    j["skipped_time_s"] = r.skipped_time;
    j["steps"] = r.steps;
    j["throughput_bytes"] = r.throughput_bytes;
    j["predicted_throughput_bytes"] = meta.predicted_throughput;
    j["comms_completed"] = r.comms_completed;
    j["boots"] = r.boots;
    j["checkpoints"] = r.checkpoints;
    j["events"] = {{"offered", r.events_offered},
                   {"detected_at_event", r.detected_at_event},
                   {"detected_at_next_sample", r.detected_at_next_sample}};
    j["final_v_cap"] = r.final_v_cap;
    j["final_converter_on"] = r.final_converter_on;
    j["stack"] = ledger_json(r.stack.ledger);
    j["aggregation_step_s"] = r.profile.step_len;
    return j.dump(2) + "\n";
}

void write_run(const std::string& dir, const SimResult& r, const RunMeta& meta) {
    fs::create_directories(dir);
    const fs::path d(dir);
    write_file((d / "result.json").string(), result_json(r, meta));
    write_file((d / "timing.json").string(),
               ordered_json{{"run_id", meta.run_id}, {"wall_time_s", r.wall_time}}.dump(2) + "\n");
    std::ostringstream s;
    write_profile_csv(s, r.profile);
    write_file((d / "profile.csv").string(), s.str());
    s.str({});
    write_activity_csv(s, r.activity);
    write_file((d / "activity.csv").string(), s.str());
    s.str({});
    write_voltage_csv(s, r.voltage);
    write_file((d / "voltage.csv").string(), s.str());
    s.str({});
    write_events_csv(s, r.events);
    write_file((d / "events.csv").string(), s.str());
    s.str({});
    write_stack_csv(s, r.stack.ledger);
    write_file((d / "stack.csv").string(), s.str());
}

StoredRun read_run(const std::string& dir) {
    const fs::path d(dir);
    const json j = parse_json(read_file((d / "result.json").string()), (d / "result.json").string());
    StoredRun out;
    try {
        out.meta.run_id = j.at("run_id").get<std::string>();
        out.meta.config_hash = j.at("config_hash").get<std::string>();
        out.meta.plan = parse_plan_obj(j.at("plan"));
        if (!j.at("profile").is_null()) out.meta.profile = parse_profile_obj(j.at("profile"));
        out.meta.predicted_throughput = j.at("predicted_throughput_bytes").get<double>();
        out.ledger = parse_ledger(j.at("stack"));
        out.duration = j.at("duration_s").get<double>();
        out.on_time = j.at("on_time_s").get<double>();
        out.throughput_bytes = j.at("throughput_bytes").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError((d / "result.json").string() + ": " + e.what());
    }
    {
        std::istringstream in(read_file((d / "activity.csv").string()));
        out.activity = read_activity_csv(in);
    }
    {
        std::istringstream in(read_file((d / "profile.csv").string()));
        out.profile = read_profile_csv(in);
    }
    return out;
}

std::string profile_json(const PowerProfile& p) { return profile_obj(p).dump(2) + "\n"; }

PowerProfile parse_profile_json(const std::string& text) {
    const json j = parse_json(text, "profile");
    try {
        return parse_profile_obj(j);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("profile: ") + e.what());
    }
}

std::string plan_json(const ScalingPlan& plan, const std::optional<PowerProfile>& profile) {
    ordered_json j = plan_obj(plan);
    j["profile"] = profile ? profile_obj(*profile) : ordered_json(nullptr);
    // Scaled power assumes idle power shrinks with the idle-time fraction.
    j["idle_power_model"] = "idle_fraction";
    return j.dump(2) + "\n";
}

std::pair<ScalingPlan, std::optional<PowerProfile>> parse_plan_json(const std::string& text) {
    const json j = parse_json(text, "plan");
    try {
        std::optional<PowerProfile> prof;
        if (j.contains("profile") && !j.at("profile").is_null()) prof = parse_profile_obj(j.at("profile"));
        return {parse_plan_obj(j), prof};
    } catch (const json::exception& e) {
        throw ConfigError(std::string("plan: ") + e.what());
    }
}

void write_activity_csv(std::ostream& out, const ActivityProfile& a) {
    out << "# step_len=" << fmt(a.step_len, 17) << "\n";
    out << "t,on,label,on_fraction\n";
    for (std::size_t k = 0; k < a.on_off.size(); ++k) {
        out << fmt(a.step_len * static_cast<double>(k), 12) << ',' << (a.on_off[k] ? 1 : 0) << ','
            << (k < a.labels.size() ? to_string(a.labels[k]) : "off") << ','
            << fmt(k < a.on_fraction.size() ? a.on_fraction[k] : 0.0, 6) << '\n';
    }
}

ActivityProfile read_activity_csv(std::istream& in) {
    ActivityProfile a;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# step_len=", 0) == 0) {
            a.step_len = std::stod(line.substr(11));
            continue;
        }
        if (line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() < 4) throw ParseError(lineno, "expected t,on,label,on_fraction");
        try {
            a.on_off.push_back(std::stoi(cells[1]) ? 1 : 0);
            a.labels.push_back(parse_activity(cells[2]));
            a.on_fraction.push_back(std::stod(cells[3]));
        } catch (const std::logic_error&) {
            throw ParseError(lineno, "bad activity row");
        }
    }
    return a;
}

void write_profile_csv(std::ostream& out, const EnergyStackProfile& p) {
    out << "# step_len=" << fmt(p.step_len, 17) << "\n";
    out << "t,harvested,external,mppt_loss,storage_loss,converter_loss,soc,sensor,storage_delta\n";
    for (std::size_t k = 0; k < p.bins.size(); ++k) {
        const auto& b = p.bins[k];
        out << fmt(p.step_len * static_cast<double>(k), 12) << ',' << fmt(b.harvested) << ',' << fmt(b.external)
            << ',' << fmt(b.mppt_loss) << ',' << fmt(b.storage_loss) << ',' << fmt(b.converter_loss) << ','
            << fmt(b.soc) << ',' << fmt(b.sensor) << ',' << fmt(b.storage_delta) << '\n';
    }
}

EnergyStackProfile read_profile_csv(std::istream& in) {
    EnergyStackProfile p;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# step_len=", 0) == 0) {
            p.step_len = std::stod(line.substr(11));
            continue;
        }
        if (line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        const auto c = split_csv(line);
        if (c.size() < 9) throw ParseError(lineno, "expected 9 profile columns");
        try {
            StackBin b;
            b.harvested = std::stod(c[1]);
            b.external = std::stod(c[2]);
            b.mppt_loss = std::stod(c[3]);
            b.storage_loss = std::stod(c[4]);
            b.converter_loss = std::stod(c[5]);
            b.soc = std::stod(c[6]);
            b.sensor = std::stod(c[7]);
            b.storage_delta = std::stod(c[8]);
            p.bins.push_back(b);
        } catch (const std::logic_error&) {
            throw ParseError(lineno, "bad profile row");
        }
    }
    return p;
}

void write_voltage_csv(std::ostream& out, const std::vector<VoltageSample>& v) {
    out << "t,v_cap,v_bus\n";
    for (const auto& s : v) out << fmt(s.t, 12) << ',' << fmt(s.v_cap, 8) << ',' << fmt(s.v_bus, 8) << '\n';
}

void write_events_csv(std::ostream& out, const std::vector<EventOutcome>& e) {
    out << "t,node_on_at_arrival,reported\n";
    for (const auto& x : e) out << fmt(x.t, 12) << ',' << (x.node_on_at_arrival ? 1 : 0) << ',' << (x.reported ? 1 : 0) << '\n';
}

void write_stack_csv(std::ostream& out, const EnergyLedger& l) {
    const double total = l.inputs();
    const auto row = [&](const std::string& name, double e) {
        out << name << ',' << fmt(e) << ',' << fmt(total > 0.0 ? e / total : 0.0, 6) << '\n';
    };
    out << "category,joules,share\n";
    row("mppt_loss", l.mppt_loss);
    row("storage_loss", l.storage_loss());
    row("converter_loss", l.converter_loss);
    for (std::size_t k = 0; k < kActivityCount; ++k) {
        const auto a = static_cast<Activity>(k);
        row(std::string("sss_") + to_string(a), l.activity(a));
    }
    row("storage_residual", l.storage_residual);
}

}  // namespace ehstack::cli
