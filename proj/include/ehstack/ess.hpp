#pragma once

// Energy supply chain: harvester -> MPPT -> supercapacitor -> DC/DC.

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace ehstack {

/// Piecewise-linear lookup y(x), held constant beyond the end points.
class EfficiencyCurve {
public:
    EfficiencyCurve() : EfficiencyCurve(1.0) {}
    explicit EfficiencyCurve(double flat);
    /// Points must have strictly increasing x and y in (0, 1].
    explicit EfficiencyCurve(std::vector<std::pair<double, double>> points);

    [[nodiscard]] double operator()(double x) const noexcept;
    [[nodiscard]] const std::vector<std::pair<double, double>>& points() const noexcept { return points_; }

private:
    std::vector<std::pair<double, double>> points_;
};

/// Replayed IV surface: current[i * voltage.size() + j] at (irradiance[i], voltage[j]).
struct IvSurface {
    std::vector<double> irradiance;
    std::vector<double> voltage;
    std::vector<double> current;

    void validate() const;
};

struct HarvesterModel {
    enum class Kind { linear_mpp, iv_surface };
    Kind kind = Kind::linear_mpp;
    double k_mpp = 2.0e-5;  ///< W per W/m^2
    IvSurface surface;

    void validate() const;
};

struct HarvestPoint {
    double power = 0.0;
    bool clamped = false;  ///< operating point fell outside the surface grid
};

/// Output power at irradiance g and operating voltage v. For linear_mpp the
/// voltage is ignored (the MPP is assumed).
[[nodiscard]] HarvestPoint harvester_power(const HarvesterModel& model, double g, double v_operating);

/// Maximum power over the operating voltage (what an ideal tracker extracts).
[[nodiscard]] double harvester_mpp(const HarvesterModel& model, double g);

/// Parses "irradiance,voltage,current" rows into a full grid.
[[nodiscard]] IvSurface parse_iv_surface(const std::string& text);

enum class MpptMode { cold_start, bypass, tracking, saturated };

[[nodiscard]] const char* to_string(MpptMode mode) noexcept;

struct MpptModel {
    double bypass_engage_v = 1.6;
    double bypass_release_v = 1.8;
    double cold_start_below_v = 1.77;
    double tracking_efficiency = 1.0;
    EfficiencyCurve conversion{0.80};  ///< keyed on input power (W)
    double cold_start_efficiency = 0.10;
    double bypass_efficiency = 1.0;
    double storage_v_max = 2.9;

    void validate() const;
};

/// Hysteresis on the storage voltage. Cold start is entered only when the
/// tracker re-enables below cold_start_below_v, so with the default
/// thresholds it never occurs.
[[nodiscard]] MpptMode next_mppt_mode(const MpptModel& mppt, MpptMode mode, double v_cap) noexcept;

[[nodiscard]] double mppt_efficiency(const MpptModel& mppt, MpptMode mode, double p_harvest_mpp) noexcept;

struct MpptStep {
    double p_into_storage = 0.0;
    double p_loss = 0.0;
    MpptMode mode = MpptMode::bypass;
};

/// One MPPT step at storage voltage v_cap. p_accept_max is the largest power
/// the storage can take without exceeding storage_v_max; anything above it is
/// curtailed, booked as loss, and reported as the saturated mode.
[[nodiscard]] MpptStep mppt_step(const MpptModel& mppt, MpptMode mode, double v_cap, double p_harvest_mpp, double dt,
                                 double p_accept_max = std::numeric_limits<double>::infinity());

struct StorageModel {
    double capacitance = 2.2;
    double esr = 6.9;
    double leak_resistance = 2.0e5;  ///< infinity disables self-discharge
    double v_init = 0.75;
    double buffer_capacitance = 0.0;

    void validate(double v_max) const;
};

/// Supercapacitor state. v_buf equals the bus voltage and is only tracked
/// when a buffer capacitor is present.
struct StorageState {
    double v_cap = 0.0;
    double v_buf = 0.0;
};

struct StorageStep {
    StorageState next;
    double v_bus = 0.0;      ///< lowest supply-side voltage seen during the step
    double e_in = 0.0;       ///< harvested energy accepted at the bus
    double e_out = 0.0;      ///< energy delivered to the load
    double e_leak = 0.0;
    double e_esr = 0.0;
    bool collapsed = false;  ///< the bus could not deliver the requested power
};

/// Advances the storage by dt with harvest p_in injected at the bus and a
/// constant-power load p_out drawn from it.
///
/// Without a buffer the bus is the algebraic node between the ESR and the
/// load. With a buffer the bus voltage relaxes exponentially toward its
/// steady state with time constant esr * buffer_capacitance. In both cases
/// E(t+dt) - E(t) = e_in - e_out - e_leak - e_esr holds exactly.
[[nodiscard]] StorageStep storage_step(const StorageModel& storage, const StorageState& state, double p_in,
                                       double p_out, double dt);

/// Current-driven variant: the load draws a constant current i_out.
[[nodiscard]] StorageStep storage_step_current(const StorageModel& storage, const StorageState& state, double p_in,
                                               double i_out, double dt);

/// Steady supply voltage at the bus for a load p_out and harvest p_in with no
/// buffer. Returns a negative value if the demand exceeds what the ESR allows.
[[nodiscard]] double bus_voltage(double v_cap, double esr, double p_in, double p_out) noexcept;

/// Energy held by the main and buffer capacitors.
[[nodiscard]] double stored_energy(const StorageModel& storage, const StorageState& state) noexcept;

/// 1/2 C v^2 of the main capacitor.
[[nodiscard]] double residual_energy(const StorageModel& storage, double v_cap) noexcept;

/// Largest harvest power that keeps v_cap at or below v_max over dt, given
/// the load p_out.
[[nodiscard]] double storage_accept_limit(const StorageModel& storage, const StorageState& state, double p_out,
                                          double dt, double v_max);

struct ConverterModel {
    double v_on = 2.0;
    double v_off = 0.7;
    double v_out = 3.3;
    EfficiencyCurve efficiency{0.85};  ///< keyed on load power (W)

    void validate() const;
};

struct ConverterStep {
    bool on = false;
    double p_drawn = 0.0;
    double p_loss = 0.0;
};

/// Hysteresis: off->on when v_bus >= v_on, on->off when v_bus < v_off.
[[nodiscard]] ConverterStep converter_step(const ConverterModel& conv, double v_bus, bool converter_on,
                                           double p_load) noexcept;

/// Input power needed for a given load, ignoring the on/off state.
[[nodiscard]] double converter_input(const ConverterModel& conv, double p_load) noexcept;

struct EssConfig {
    HarvesterModel harvester;
    MpptModel mppt;
    StorageModel storage;
    ConverterModel converter;

    void validate() const;

    /// Lossless chain: unit efficiencies, no ESR, no leakage.
    [[nodiscard]] static EssConfig ideal();
};

struct EssState {
    StorageState storage;
    MpptMode mppt_mode = MpptMode::bypass;
    bool converter_on = false;
    double v_bus = 0.0;
};

[[nodiscard]] EssState initial_state(const EssConfig& cfg);

}  // namespace ehstack
