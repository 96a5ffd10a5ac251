#include "ehstack/trace.hpp"

#include "ehstack/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace ehstack {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && line[j] != ',' && line[j] != ';' && line[j] != '\t' && line[j] != ' ') ++j;
        out.push_back(line.substr(i, j - i));
        // swallow one explicit separator plus surrounding blanks
        while (j < line.size() && (line[j] == ' ' || line[j] == '\t')) ++j;
        if (j < line.size() && (line[j] == ',' || line[j] == ';')) ++j;
        i = j;
    }
    return out;
}

bool to_double(std::string_view field, double& value) {
    field = trim(field);
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    return ec == std::errc{} && ptr == field.data() + field.size() && std::isfinite(value);
}

/// Calls row(line_no, fields) for each data row; handles comments, blank
/// lines and a single leading header row.
template <typename RowFn>
void for_each_row(std::istream& in, RowFn&& row) {
    std::string line;
    std::size_t line_no = 0;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = trim(line);
        if (line_no == 1 && view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF) view.remove_prefix(3);
        if (view.empty() || view.front() == '#') continue;
        auto fields = split_fields(view);
        double probe = 0.0;
        if (!seen_data && !fields.empty() && !to_double(fields.front(), probe)) {
            seen_data = true;  // header row
            continue;
        }
        seen_data = true;
        row(line_no, fields);
    }
}

double time_from_column(double raw, const TraceFormat& format) { return format.minute_indexed ? raw * 60.0 : raw; }

}  // namespace

IrradianceTrace::IrradianceTrace(std::vector<IrradianceSample> samples, std::string source, double native_interval)
    : samples_(std::move(samples)), source_(std::move(source)), native_interval_(native_interval) {
    if (samples_.empty()) throw ValidationError("irradiance trace is empty");
    for (std::size_t k = 0; k < samples_.size(); ++k) {
        const auto& s = samples_[k];
        if (!std::isfinite(s.t) || !std::isfinite(s.g)) throw ValidationError("non-finite irradiance sample");
        if (s.t < 0.0) throw ValidationError("negative timestamp in irradiance trace");
        if (s.g < 0.0) throw ValidationError("negative irradiance at t=" + std::to_string(s.t));
        if (k > 0 && !(s.t > samples_[k - 1].t))
            throw ValidationError("irradiance timestamps not strictly increasing at t=" + std::to_string(s.t));
    }
    if (!(duration() > 0.0)) throw ValidationError("irradiance trace has zero duration");
    if (native_interval_ <= 0.0 && samples_.size() > 1)
        native_interval_ = (samples_.back().t - samples_.front().t) / static_cast<double>(samples_.size() - 1);
}

std::size_t IrradianceTrace::index_at(double t) const noexcept {
    auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double v, const IrradianceSample& s) { return v < s.t; });
    if (it == samples_.begin()) return 0;
    return static_cast<std::size_t>(it - samples_.begin()) - 1;
}

double IrradianceTrace::value_at(double t, Interpolation mode) const noexcept {
    if (samples_.empty()) return 0.0;
    const std::size_t k = index_at(t);
    if (mode == Interpolation::step || k + 1 >= samples_.size() || t <= samples_[k].t) return samples_[k].g;
    const auto& a = samples_[k];
    const auto& b = samples_[k + 1];
    return a.g + (b.g - a.g) * (t - a.t) / (b.t - a.t);
}

double IrradianceTrace::integral() const noexcept {
    double sum = 0.0;
    for (std::size_t k = 1; k < samples_.size(); ++k)
        sum += 0.5 * (samples_[k].g + samples_[k - 1].g) * (samples_[k].t - samples_[k - 1].t);
    return sum;
}

void EventTrace::validate() const {
    if (!(hold_s > 0.0)) throw ValidationError("event hold time must be positive");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!std::isfinite(times[k]) || times[k] < 0.0) throw ValidationError("invalid event time");
        if (k > 0 && !(times[k] > times[k - 1])) throw ValidationError("event times not strictly increasing");
    }
}

void TraceTransform::validate() const {
    if (!(time_scale >= 1.0)) throw ValidationError("time scale must be >= 1");
    if (!(amplitude_scale > 0.0)) throw ValidationError("amplitude scale must be > 0");
}

IrradianceTrace parse_irradiance(std::istream& in, TraceFormat format, std::string source) {
    std::vector<IrradianceSample> samples;
    for_each_row(in, [&](std::size_t line_no, const std::vector<std::string_view>& fields) {
        if (fields.size() < 2) throw ParseError(line_no, "expected two columns (time, irradiance)");
        double t = 0.0;
        double g = 0.0;
        if (!to_double(fields[0], t)) throw ParseError(line_no, "bad timestamp '" + std::string(fields[0]) + "'");
        if (!to_double(fields[1], g)) throw ParseError(line_no, "bad irradiance '" + std::string(fields[1]) + "'");
        t = time_from_column(t, format);
        if (!samples.empty() && !(t > samples.back().t))
            throw ParseError(line_no, "timestamp not strictly increasing");
        samples.push_back({t, g});
    });
    const double native = format.minute_indexed ? 60.0 : 0.0;
    return IrradianceTrace(std::move(samples), std::move(source), native);
}

IrradianceTrace parse_irradiance(std::string_view text, TraceFormat format, std::string source) {
    std::istringstream in{std::string(text)};
    return parse_irradiance(in, format, std::move(source));
}

IrradianceTrace load_irradiance(const std::string& path, TraceFormat format) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open irradiance trace '" + path + "'");
    return parse_irradiance(in, format, path);
}

void write_irradiance(std::ostream& out, const IrradianceTrace& trace) {
    out << "# t_s,irradiance_w_m2\n";
    char buf[64];
    for (const auto& s : trace.samples()) {
        auto r1 = std::to_chars(buf, buf + sizeof buf, s.t);
        *r1.ptr++ = ',';
        auto r2 = std::to_chars(r1.ptr, buf + sizeof buf, s.g);
        *r2.ptr++ = '\n';
        out.write(buf, r2.ptr - buf);
    }
}

EventTrace parse_events(std::istream& in, TraceFormat format) {
    EventTrace ev;
    for_each_row(in, [&](std::size_t line_no, const std::vector<std::string_view>& fields) {
        double t = 0.0;
        if (fields.empty() || !to_double(fields[0], t)) throw ParseError(line_no, "bad event time");
        t = time_from_column(t, format);
        if (t < 0.0) throw ParseError(line_no, "negative event time");
        if (!ev.times.empty() && !(t > ev.times.back())) throw ParseError(line_no, "event times not strictly increasing");
        ev.times.push_back(t);
    });
    return ev;
}

EventTrace parse_events(std::string_view text, TraceFormat format) {
    std::istringstream in{std::string(text)};
    return parse_events(in, format);
}

EventTrace load_events(const std::string& path, TraceFormat format) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open event trace '" + path + "'");
    auto ev = parse_events(in, format);
    ev.descriptor = path;
    return ev;
}

void write_events(std::ostream& out, const EventTrace& events) {
    out << "# t_s\n";
    char buf[40];
    for (double t : events.times) {
        auto r = std::to_chars(buf, buf + sizeof buf, t);
        *r.ptr++ = '\n';
        out.write(buf, r.ptr - buf);
    }
}

IrradianceTrace apply_transform(const IrradianceTrace& trace, const TraceTransform& tf) {
    tf.validate();
    std::vector<IrradianceSample> out;
    out.reserve(trace.size());
    for (const auto& s : trace.samples()) out.push_back({s.t / tf.time_scale, s.g * tf.amplitude_scale});
    return IrradianceTrace(std::move(out), trace.source(), trace.native_interval() / tf.time_scale);
}

EventTrace transform_events(const EventTrace& events, double time_scale) {
    if (!(time_scale >= 1.0)) throw ValidationError("time scale must be >= 1");
    EventTrace out = events;
    for (double& t : out.times) t /= time_scale;
    out.hold_s = events.hold_s / time_scale;
    return out;
}

namespace {

/// Uniform in [0, 1) from the top 53 bits; std:: distributions are not
/// specified bit-exactly across standard libraries.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
    double u1 = unit_uniform(rng);
    while (u1 <= 0.0) u1 = unit_uniform(rng);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

EventTrace generate_parking_events(const ParkingEventSpec& spec) {
    if (!(spec.opening_start_h < spec.peak_h && spec.peak_h < spec.opening_end_h))
        throw ValidationError("parking hours must satisfy start < peak < end");
    if (spec.opening_start_h < 0.0 || spec.opening_end_h > 24.0) throw ValidationError("opening hours outside day");
    if (spec.events_per_day < 1) throw ValidationError("events_per_day must be >= 1");
    if (spec.days < 1) throw ValidationError("days must be >= 1");

    std::mt19937_64 rng(spec.seed);
    const double mu = std::min(spec.peak_h + 0.5, spec.opening_end_h);
    const double sigma = (spec.opening_end_h - spec.opening_start_h) / 6.0;

    EventTrace ev;
    ev.seed = spec.seed;
    ev.times.reserve(static_cast<std::size_t>(spec.events_per_day) * static_cast<std::size_t>(spec.days));
    for (int day = 0; day < spec.days; ++day) {
        std::vector<double> hours;
        hours.reserve(static_cast<std::size_t>(spec.events_per_day));
        while (hours.size() < static_cast<std::size_t>(spec.events_per_day)) {
            const double h = mu + sigma * standard_normal(rng);
            if (h >= spec.opening_start_h && h <= spec.opening_end_h) hours.push_back(h);
        }
        std::sort(hours.begin(), hours.end());
        for (double h : hours) {
            double t = (day * 24.0 + h) * 3600.0;
            if (!ev.times.empty() && t <= ev.times.back()) t = std::nextafter(ev.times.back(), t + 1.0);
            ev.times.push_back(t);
        }
    }
    std::ostringstream d;
    d << "parking truncnorm mu_h=" << mu << " sigma_h=" << sigma << " open=[" << spec.opening_start_h << ','
      << spec.opening_end_h << "] per_day=" << spec.events_per_day << " days=" << spec.days;
    ev.descriptor = d.str();
    return ev;
}

std::vector<std::pair<double, double>> find_dark_segments(const IrradianceTrace& trace, double threshold) {
    if (threshold < 0.0) throw ValidationError("dark threshold must be >= 0");
    std::vector<std::pair<double, double>> out;
    const auto s = trace.samples();
    std::size_t k = 0;
    while (k < s.size()) {
        if (s[k].g > threshold) {
            ++k;
            continue;
        }
        const double start = s[k].t;
        while (k < s.size() && s[k].g <= threshold) ++k;
        const double end = k < s.size() ? s[k].t : trace.duration();
        out.emplace_back(start, end);
    }
    return out;
}

IrradianceTrace synthesize_irradiance(const SolarSynthesis& spec) {
    if (spec.days < 1 || !(spec.cadence_s > 0.0) || spec.peak_w_m2 < 0.0 || !(spec.sunrise_h < spec.sunset_h))
        throw ValidationError("invalid solar synthesis parameters");
    std::mt19937_64 rng(spec.seed);
    const double horizon = spec.days * 86400.0;
    const auto n = static_cast<std::size_t>(std::llround(horizon / spec.cadence_s));

    std::vector<double> day_scale(static_cast<std::size_t>(spec.days));
    for (std::size_t d = 0; d < day_scale.size(); ++d) {
        const double drawn = 1.0 - spec.day_variability * unit_uniform(rng);
        day_scale[d] = d < spec.day_scales.size() ? spec.day_scales[d] : drawn;
    }
    const auto blocks = static_cast<std::size_t>(std::ceil(horizon / spec.cloud_block_s)) + 1;
    std::vector<double> cloud(blocks);
    for (auto& c : cloud) c = 1.0 - spec.cloudiness * unit_uniform(rng);

    std::vector<IrradianceSample> samples;
    samples.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * spec.cadence_s;
        const auto day = std::min(static_cast<std::size_t>(t / 86400.0), day_scale.size() - 1);
        const double h = std::fmod(t, 86400.0) / 3600.0;
        double g = 0.0;
        if (h > spec.sunrise_h && h < spec.sunset_h) {
            const double phase = (h - spec.sunrise_h) / (spec.sunset_h - spec.sunrise_h);
            g = spec.peak_w_m2 * std::sin(std::numbers::pi * phase) * day_scale[day] *
                cloud[static_cast<std::size_t>(t / spec.cloud_block_s)];
        }
        samples.push_back({t, std::max(0.0, g)});
    }
    return IrradianceTrace(std::move(samples), "synthetic", spec.cadence_s);
}

}  // namespace ehstack
