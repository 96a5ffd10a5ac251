#pragma once

// Discrete-time coupling of trace, ESS and app with a closed energy ledger.

#include "ehstack/app.hpp"
#include "ehstack/ess.hpp"
#include "ehstack/trace.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ehstack {

enum class EndPolicy { hard_stop, drain_until_converter_off };

struct SimConfig {
    double dt_active = 1e-3;
    double dt_quiescent = 0.1;
    double aggregation_step = 0.2;
    /// Active phases use dt_active only while the loaded bus is within this
    /// margin of the converter cut-off (or a buffer transient is settling);
    /// otherwise they advance at dt_quiescent.
    double guard_band_v = 0.05;
    EndPolicy end_policy = EndPolicy::hard_stop;
    double max_drain_s = 30.0 * 86400.0;  ///< cap on the drain phase after the trace ends
    bool skip_nights = false;
    double dark_threshold = 0.0;
    std::optional<double> supply_override;  ///< constant supply voltage; bypasses the ESS
    Interpolation interpolation = Interpolation::step;
    double closure_tolerance = 1e-3;  ///< relative to total energy input

    bool record_profile = true;
    bool record_activity = true;
    bool record_voltage = true;
    std::size_t voltage_stride = 1;  ///< keep every n-th aggregation bin

    /// Throws ConfigError on inconsistent step sizes or a dt_active too coarse
    /// for the app's shortest phase.
    void validate(const AppSpec& app) const;
};

/// Cumulative joules. Inputs are the harvest, the initially stored energy
/// and any external supply; everything else is where that energy went.
struct EnergyLedger {
    double harvest_input = 0.0;
    double storage_initial = 0.0;
    double external_supply = 0.0;
    double mppt_loss = 0.0;
    double storage_leak = 0.0;
    double storage_esr = 0.0;
    double storage_residual = 0.0;
    double converter_loss = 0.0;
    std::array<double, kActivityCount> sss_by_activity{};
    double sss_soc = 0.0;
    double sss_sensor = 0.0;

    [[nodiscard]] double storage_loss() const noexcept { return storage_leak + storage_esr; }
    [[nodiscard]] double sss_total() const noexcept;
    [[nodiscard]] double inputs() const noexcept { return harvest_input + storage_initial + external_supply; }
    [[nodiscard]] double outputs() const noexcept;
    /// |inputs - outputs| / inputs (0 if nothing entered).
    [[nodiscard]] double closure_error() const noexcept;
    [[nodiscard]] double activity(Activity a) const noexcept { return sss_by_activity[static_cast<std::size_t>(a)]; }
};

struct EnergyStack {
    EnergyLedger ledger;
    std::string run_id;
    std::string config_hash;
    double duration = 0.0;
};

/// Energy of one aggregation bin. storage_delta is signed: positive when the
/// stored energy grew.
struct StackBin {
    double harvested = 0.0;
    double external = 0.0;
    double mppt_loss = 0.0;
    double storage_loss = 0.0;
    double converter_loss = 0.0;
    double soc = 0.0;
    double sensor = 0.0;
    double storage_delta = 0.0;

    /// harvested + external - (losses + soc + sensor + storage_delta)
    [[nodiscard]] double imbalance() const noexcept;
};

struct EnergyStackProfile {
    double step_len = 0.2;
    std::vector<StackBin> bins;
};

struct VoltageSample {
    double t = 0.0;
    double v_cap = 0.0;
    double v_bus = 0.0;
};

struct EventOutcome {
    double t = 0.0;
    bool node_on_at_arrival = false;
    bool reported = false;  ///< a communication for this event completed
};

struct SimResult {
    EnergyStack stack;
    EnergyStackProfile profile;
    ActivityProfile activity;
    std::vector<VoltageSample> voltage;
    std::vector<EventOutcome> events;

    std::uint64_t throughput_bytes = 0;
    std::uint64_t comms_completed = 0;
    std::uint64_t boots = 0;
    std::uint64_t checkpoints = 0;
    std::uint64_t events_offered = 0;
    std::uint64_t detected_at_event = 0;
    std::uint64_t detected_at_next_sample = 0;

    double duration = 0.0;      ///< simulated span including any drain phase
    double on_time = 0.0;       ///< time with the SSS powered
    double skipped_time = 0.0;  ///< dark time fast-forwarded
    double final_v_cap = 0.0;
    bool final_converter_on = false;
    std::uint64_t steps = 0;
    double wall_time = 0.0;  ///< seconds of CPU wall clock, not part of the result payload
};

/// Runs one simulation. With supply_override set the app runs from a
/// constant supply and the trace only sets the duration.
[[nodiscard]] SimResult simulate(const IrradianceTrace& trace, const EventTrace* events, const EssConfig& ess,
                                 const AppSpec& app, const SimConfig& cfg);

/// simulate() with skip_nights forced on.
[[nodiscard]] SimResult run_with_skip_nights(const IrradianceTrace& trace, const EventTrace* events,
                                             const EssConfig& ess, const AppSpec& app, SimConfig cfg);

/// Books the stored energy as residual and checks closure. Throws
/// ConsistencyError when the ledger does not close within tolerance.
[[nodiscard]] EnergyStack finalize_stack(const EnergyLedger& ledger, const StorageModel& storage,
                                         const StorageState& final_state, double duration, double tolerance = 1e-3);

}  // namespace ehstack
