#pragma once

// Environment inputs: irradiance and event traces, their time/amplitude
// transforms, and synthetic generators used by fixtures and sweeps.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ehstack {

enum class Interpolation { step, linear };

struct IrradianceSample {
    double t = 0.0;  ///< seconds since trace start
    double g = 0.0;  ///< W/m^2
};

/// Immutable, validated irradiance time series.
///
/// Timestamps are strictly increasing and every value is non-negative. The
/// trace spans [0, t_last]; with step interpolation a sample holds its value
/// until the next timestamp.
class IrradianceTrace {
public:
    IrradianceTrace() = default;
    /// Throws ValidationError if the samples violate the invariants.
    explicit IrradianceTrace(std::vector<IrradianceSample> samples, std::string source = {},
                             double native_interval = 0.0);

    [[nodiscard]] std::span<const IrradianceSample> samples() const noexcept { return samples_; }
    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }
    [[nodiscard]] double duration() const noexcept { return samples_.empty() ? 0.0 : samples_.back().t; }
    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    [[nodiscard]] double native_interval() const noexcept { return native_interval_; }

    /// Index of the sample governing time t (last sample with t_k <= t, or 0).
    [[nodiscard]] std::size_t index_at(double t) const noexcept;
    [[nodiscard]] double value_at(double t, Interpolation mode = Interpolation::step) const noexcept;

    /// Trapezoidal integral of g over the whole trace, in (W/m^2)*s.
    [[nodiscard]] double integral() const noexcept;

private:
    std::vector<IrradianceSample> samples_;
    std::string source_;
    double native_interval_ = 0.0;
};

/// Timestamps of external events (e.g. a car entering a parking space).
///
/// An event raises a level-triggered pending flag for `hold_s` seconds or
/// until the application observes it, whichever comes first.
struct EventTrace {
    std::vector<double> times;
    double hold_s = 120.0;
    std::uint64_t seed = 0;
    std::string descriptor;

    /// Throws ValidationError unless times are strictly increasing and >= 0.
    void validate() const;
};

struct TraceTransform {
    double time_scale = 1.0;       ///< S_TP, >= 1
    double amplitude_scale = 1.0;  ///< S_I * S_TP (or S_I alone for unscaled power)
    bool skip_nights = false;

    void validate() const;
};

struct TraceFormat {
    bool minute_indexed = false;  ///< first column counts minutes rather than seconds
};

/// Parses "seconds,irradiance" rows. '#' starts a comment line; one leading
/// non-numeric header row is skipped; commas, semicolons, tabs or spaces may
/// separate the columns; LF and CRLF are accepted.
[[nodiscard]] IrradianceTrace parse_irradiance(std::istream& in, TraceFormat format = {},
                                               std::string source = {});
[[nodiscard]] IrradianceTrace parse_irradiance(std::string_view text, TraceFormat format = {},
                                               std::string source = {});
[[nodiscard]] IrradianceTrace load_irradiance(const std::string& path, TraceFormat format = {});
void write_irradiance(std::ostream& out, const IrradianceTrace& trace);

/// One event time (seconds) per line; extra columns are ignored.
[[nodiscard]] EventTrace parse_events(std::istream& in, TraceFormat format = {});
[[nodiscard]] EventTrace parse_events(std::string_view text, TraceFormat format = {});
[[nodiscard]] EventTrace load_events(const std::string& path, TraceFormat format = {});
void write_events(std::ostream& out, const EventTrace& events);

[[nodiscard]] IrradianceTrace apply_transform(const IrradianceTrace& trace, const TraceTransform& tf);
[[nodiscard]] EventTrace transform_events(const EventTrace& events, double time_scale);

struct ParkingEventSpec {
    double opening_start_h = 9.0;
    double opening_end_h = 20.0;
    double peak_h = 14.0;
    int events_per_day = 200;
    int days = 5;
    std::uint64_t seed = 1;
};

/// Truncated-Gaussian arrivals over the opening hours of each day. The
/// density is centred on the middle of the peak hour and sigma is a sixth of
/// the opening window. Bit-reproducible for a given spec.
[[nodiscard]] EventTrace generate_parking_events(const ParkingEventSpec& spec);

/// Maximal [t_start, t_end] spans where g <= threshold (step semantics:
/// sample k covers [t_k, t_{k+1})).
[[nodiscard]] std::vector<std::pair<double, double>> find_dark_segments(const IrradianceTrace& trace,
                                                                       double threshold = 0.0);

struct SolarSynthesis {
    int days = 2;
    double cadence_s = 60.0;
    double peak_w_m2 = 600.0;
    double sunrise_h = 7.0;
    double sunset_h = 18.0;
    /// Per-day clear-sky multipliers; days beyond the list draw from
    /// [1 - day_variability, 1].
    std::vector<double> day_scales;
    double day_variability = 0.0;
    /// Piecewise-constant cloud attenuation drawn from [1 - cloudiness, 1].
    double cloudiness = 0.0;
    double cloud_block_s = 900.0;
    std::uint64_t seed = 7;
};

/// Half-sine daylight with seeded day-to-day and intra-day variation.
[[nodiscard]] IrradianceTrace synthesize_irradiance(const SolarSynthesis& spec);

}  // namespace ehstack
