#pragma once

// On-disk formats: result/profile/plan JSON and the CSV time series.

#include "ehstack/app.hpp"
#include "ehstack/engine.hpp"
#include "ehstack/scaling.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace ehstack::cli {

struct RunMeta {
    std::string config_hash;
    std::string run_id;
    ScalingPlan plan;
    std::optional<PowerProfile> profile;
    double predicted_throughput = 0.0;  ///< real-time bytes implied by the run
};

/// Deterministic result document. Wall-clock time is left out.
[[nodiscard]] std::string result_json(const SimResult& r, const RunMeta& meta);

/// Writes result.json, timing.json and the CSV companions into dir.
void write_run(const std::string& dir, const SimResult& r, const RunMeta& meta);

/// What compare and stacks need back from a run directory.
struct StoredRun {
    RunMeta meta;
    EnergyLedger ledger;
    double duration = 0.0;
    double on_time = 0.0;
    std::uint64_t throughput_bytes = 0;
    ActivityProfile activity;
    EnergyStackProfile profile;
};

[[nodiscard]] StoredRun read_run(const std::string& dir);

[[nodiscard]] std::string profile_json(const PowerProfile& p);
[[nodiscard]] PowerProfile parse_profile_json(const std::string& text);

[[nodiscard]] std::string plan_json(const ScalingPlan& plan, const std::optional<PowerProfile>& profile);
/// Returns the plan and, if stored with it, the profile it came from.
[[nodiscard]] std::pair<ScalingPlan, std::optional<PowerProfile>> parse_plan_json(const std::string& text);

void write_activity_csv(std::ostream& out, const ActivityProfile& a);
[[nodiscard]] ActivityProfile read_activity_csv(std::istream& in);
void write_profile_csv(std::ostream& out, const EnergyStackProfile& p);
[[nodiscard]] EnergyStackProfile read_profile_csv(std::istream& in);
void write_voltage_csv(std::ostream& out, const std::vector<VoltageSample>& v);
void write_events_csv(std::ostream& out, const std::vector<EventOutcome>& e);

/// Category, joules and share of the total input, one row per stack entry.
void write_stack_csv(std::ostream& out, const EnergyLedger& ledger);

[[nodiscard]] std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace ehstack::cli
