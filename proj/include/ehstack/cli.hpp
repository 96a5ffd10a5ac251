#pragma once

// Experiment orchestration behind the `ehstack` command.

#include "ehstack/config.hpp"
#include "ehstack/io.hpp"
#include "ehstack/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ehstack::cli {

struct Inputs {
    IrradianceTrace trace;
    std::optional<EventTrace> events;
};

/// Loads or synthesizes the traces named by the config.
[[nodiscard]] Inputs load_inputs(const HarnessConfig& cfg);

/// Stored profile if the config names one, otherwise a fresh profiling run.
[[nodiscard]] PowerProfile profile_for(const HarnessConfig& cfg);

/// Plan for the configured mode. The environment cap, if set, is checked
/// against the trace peak times S_I.
[[nodiscard]] ScalingPlan plan_for(const HarnessConfig& cfg, const PowerProfile& profile,
                                   const IrradianceTrace& trace);

struct RunOutput {
    SimResult result;
    RunMeta meta;
};

/// Plans (if scaled), builds the experiment and simulates it. A stored plan
/// overrides the config's plan block.
[[nodiscard]] RunOutput execute(const HarnessConfig& cfg, const std::optional<ScalingPlan>& stored_plan = std::nullopt,
                                const std::optional<PowerProfile>& stored_profile = std::nullopt);

struct CompareReport {
    double baseline_throughput = 0.0;
    double predicted_throughput = 0.0;
    std::optional<double> throughput_error;  ///< unset when the baseline sent nothing
    ApeReport raw;
    ApeReport dtw;
    double s_tp = 1.0;
};

/// Rescales the second run to real time and compares it with the baseline.
[[nodiscard]] CompareReport compare_runs(const StoredRun& baseline, const StoredRun& scaled, double window);
[[nodiscard]] std::string compare_json(const CompareReport& r);

struct SweepCell {
    double capacitance = 0.0;
    double s_i = 1.0;
    std::string status = "ok";
    std::string config_hash;
    std::uint64_t events_offered = 0;
    std::uint64_t detected_at_event = 0;
    std::uint64_t detected_at_next_sample = 0;
    std::uint64_t throughput_bytes = 0;
    std::string result_json;  ///< deterministic payload of the cell run

    [[nodiscard]] double detection_fraction() const noexcept;
};

/// The configuration of one grid cell: capacitance and S_I set, sweep cleared.
[[nodiscard]] HarnessConfig sweep_cell_config(const HarnessConfig& cfg, double capacitance, double s_i);

/// Runs every cell on `workers` threads. Cells are returned in grid order
/// (capacitance major). With out_dir set, each cell writes its own run
/// directory including its config.
[[nodiscard]] std::vector<SweepCell> run_sweep(const HarnessConfig& cfg, int workers,
                                               const std::string& out_dir = {});
[[nodiscard]] std::string heatmap_csv(const std::vector<SweepCell>& cells);

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 success, 2 configuration error, 3 runtime or closure error.
int run(int argc, char** argv);

}  // namespace ehstack::cli
