#pragma once

// SoC + sensor application as a timed power-state machine.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ehstack {

/// Activity categories of the energy ledger.
enum class Activity : std::uint8_t { off, boot, sampling_processing, communicating, backup_restore, idle };
inline constexpr std::size_t kActivityCount = 6;

[[nodiscard]] const char* to_string(Activity a) noexcept;

enum class Phase : std::uint8_t { off, booting, restore, idle, sampling, communicating, backup };

[[nodiscard]] const char* to_string(Phase p) noexcept;
[[nodiscard]] Activity activity_of(Phase p) noexcept;

struct AppSpec {
    std::string name = "custom";
    double t_sample_period = 20.0;  ///< T_S
    double t_sample = 1.0;          ///< t_S, one sampling + processing burst
    double t_comm = 4.0;            ///< t_C
    int n_per_comm = 1;             ///< n_S
    std::uint64_t bytes_per_comm = 12;  ///< d_S

    double p_sample = 1.5e-3;
    double p_sample_sensor = 0.5e-3;  ///< part of p_sample drawn by the sensor
    double p_peak = 0.0;              ///< total load during the current spike of a burst
    double t_peak = 0.0;              ///< spike length
    double t_peak_start = 0.0;        ///< spike onset after the burst starts
    double p_comm = 2.25e-3;
    double p_idle = 0.1e-3;
    double p_off_residual = 2.0e-6;
    double t_boot = 0.3;
    double p_boot = 5.0e-3;
    double t_backup = 0.01;
    double e_backup = 1.0e-4;  ///< joules per checkpoint (and per restore)
    double checkpoint_v = 1.7;

    bool reactive = false;           ///< communicates after a sample that observes a pending event
    std::uint64_t event_bytes = 12;
    bool periodic_comm = true;       ///< communicates every n_S samples
    bool periodic_sampling = true;

    void validate() const;

    [[nodiscard]] double min_period() const noexcept { return t_sample + t_comm; }
    [[nodiscard]] double max_frequency_scale() const noexcept { return t_sample_period / min_period(); }
};

struct AppState {
    Phase phase = Phase::off;
    double phase_remaining = 0.0;
    double timer = 0.0;  ///< time until the next sample is due
    int samples_since_comm = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t comms_completed = 0;
    std::uint64_t boots = 0;
    std::uint64_t checkpoints = 0;
    bool checkpointed = false;  ///< a backup already ran in this active period
    bool has_checkpoint = false;
    int saved_samples = 0;
    std::uint64_t comm_bytes = 0;
    bool comm_periodic = false;
    std::uint64_t inflight_events = 0;  ///< observed events awaiting their communication
};

struct AppStep {
    AppState state;
    std::array<double, kActivityCount> energy{};  ///< joules per activity
    std::array<double, kActivityCount> time{};    ///< seconds per activity
    double e_soc = 0.0;
    double e_sensor = 0.0;
    std::uint64_t bytes_emitted = 0;
    std::uint64_t comms_completed = 0;
    std::uint64_t events_detected = 0;
    bool observed_event = false;  ///< the pending events were consumed

    [[nodiscard]] double total_energy() const noexcept { return e_soc + e_sensor; }
    [[nodiscard]] Activity label() const noexcept;
};

/// Advances the application by dt.
///
/// power_good=false forces the off phase. A rising power_good starts a boot.
/// The sampling timer restarts when boot completes and the first sample runs
/// immediately; samples are then spaced start-to-start by T_S. A reactive
/// app reads the pending-event count at the end of each sampling burst.
/// Below checkpoint_v while idle, one backup phase runs per active period.
[[nodiscard]] AppStep app_step(const AppSpec& spec, const AppState& state, bool power_good, double v_storage,
                               std::uint64_t events_pending, double dt);

/// Applies the zero-duration transitions due at the current instant (a
/// sample whose timer expired, a checkpoint below checkpoint_v) so that
/// time_to_next_transition reports the next real phase change.
[[nodiscard]] AppState settle_transitions(const AppSpec& spec, const AppState& state, double v_storage) noexcept;

/// Time until the next internal phase change assuming power stays good.
[[nodiscard]] double time_to_next_transition(const AppSpec& spec, const AppState& state) noexcept;

/// Instantaneous load of the current phase.
[[nodiscard]] double phase_power(const AppSpec& spec, const AppState& state) noexcept;

/// Divides T_S by s_f. Throws ScheduleError unless 1 <= s_f <= T_S/(t_S+t_C).
[[nodiscard]] AppSpec apply_frequency_scaling(const AppSpec& spec, double s_f);

/// Benchmark parameters and evaluation results of the reference platform.
struct BenchmarkRow {
    std::string name;
    double t_sample_period;
    std::uint64_t bytes_per_comm;
    int n_per_comm;
    double s_i;
    int s_tp;
    double s_f;
};

[[nodiscard]] const std::vector<BenchmarkRow>& benchmark_table();

/// Preset applications: TMP1, TMP2, IMU, PMS, TOF, BIO, PARKING. Power values
/// are synthetic. Throws ConfigError for unknown names.
[[nodiscard]] AppSpec preset(std::string_view name);
[[nodiscard]] std::vector<std::string> preset_names();
/// S_I used with a preset (1 if it has none).
[[nodiscard]] double preset_irradiance_scale(std::string_view name);

/// On/off activity sampled on a fixed grid.
struct ActivityProfile {
    double step_len = 0.2;
    std::vector<std::uint8_t> on_off;
    std::vector<Activity> labels;
    std::vector<double> on_fraction;  ///< fraction of each bin with the SSS powered

    void validate() const;
    [[nodiscard]] std::size_t size() const noexcept { return on_off.size(); }
    [[nodiscard]] double duration() const noexcept { return step_len * static_cast<double>(on_off.size()); }
    [[nodiscard]] double on_time() const noexcept;
};

}  // namespace ehstack
