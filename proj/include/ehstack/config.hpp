#pragma once

// Harness configuration: one JSON document describing inputs, the ESS, the
// application, simulator settings, the scaling plan and an optional sweep.

#include "ehstack/app.hpp"
#include "ehstack/engine.hpp"
#include "ehstack/ess.hpp"
#include "ehstack/scaling.hpp"
#include "ehstack/trace.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ehstack::cli {

struct TraceSource {
    std::string path;  ///< CSV file; empty when synthetic is used
    bool minute_indexed = false;
    std::optional<SolarSynthesis> synthetic;
};

struct EventSource {
    std::string path;
    std::optional<ParkingEventSpec> parking;
    double hold_s = 120.0;

    [[nodiscard]] bool enabled() const noexcept { return !path.empty() || parking.has_value(); }
};

struct PlanBlock {
    PlanMode mode = PlanMode::realtime;
    std::optional<double> s_tp;  ///< unset: largest admissible integer
    double s_i = 1.0;
    std::optional<double> env_cap;  ///< brightest producible irradiance, W/m^2
    double profile_duration = 3600.0;
    std::string profile_path;  ///< reuse a stored profile instead of profiling
};

struct SweepBlock {
    std::vector<double> capacitance;
    std::vector<double> s_i;
    int workers = 1;

    [[nodiscard]] bool enabled() const noexcept { return !capacitance.empty() || !s_i.empty(); }
};

struct HarnessConfig {
    TraceSource trace;
    EventSource events;
    EssConfig ess = EssConfig{};
    std::string iv_surface_path;
    std::string app_preset;  ///< empty for a fully custom app
    AppSpec app;
    SimConfig sim;
    PlanBlock plan;
    SweepBlock sweep;
    std::uint64_t seed = 1;
};

/// Parses a config document. Relative paths are resolved against base_dir
/// and must exist. Throws ConfigError on unknown keys or bad values.
[[nodiscard]] HarnessConfig parse_config(std::string_view json_text, const std::string& base_dir = ".");
[[nodiscard]] HarnessConfig load_config(const std::string& path);

/// Canonical JSON: every field written, keys sorted, paths absolute.
/// parse_config(dump_config(c)) reproduces c.
[[nodiscard]] std::string dump_config(const HarnessConfig& cfg);

/// Applies --seed: the top-level seed and every generator seed.
void reseed(HarnessConfig& cfg, std::uint64_t seed);

/// SHA-256 hex over the canonical dump and the bytes of referenced files.
[[nodiscard]] std::string config_hash(const HarnessConfig& cfg);

[[nodiscard]] std::string sha256_hex(std::string_view data);

}  // namespace ehstack::cli
