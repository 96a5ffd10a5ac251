#pragma once

// Run-to-run comparison: throughput error, activity-profile error, DTW.

#include "ehstack/app.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace ehstack {

/// |predicted - baseline| / baseline. Throws ValidationError if baseline <= 0.
[[nodiscard]] double throughput_error(double predicted, double baseline);

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

/// Consecutive path positions where the aligned sequences disagree.
struct MismatchSpan {
    std::size_t path_begin = 0;
    std::size_t path_end = 0;  ///< exclusive
    std::size_t a_begin = 0, a_end = 0;  ///< inclusive index range in a
    std::size_t b_begin = 0, b_end = 0;
};

struct Alignment {
    std::vector<std::uint8_t> a;  ///< a warped along the path
    std::vector<std::uint8_t> b;
    std::uint64_t cost = 0;       ///< mismatching path cells
    std::uint64_t length = 0;     ///< path cells
    std::vector<MismatchSpan> spans;
};

/// Banded DTW on equal-length boolean sequences with unit mismatch cost.
/// Cells with |i - j| > band are excluded. Among minimum-cost paths the
/// shortest is chosen. Exact; runs in time roughly proportional to
/// (number of value runs) x band, so long sparse on/off profiles are cheap.
[[nodiscard]] Alignment dtw_align(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                                  std::size_t band);

/// Cost and length only (no path reconstruction).
struct DtwCost {
    std::uint64_t cost = 0;
    std::uint64_t length = 0;
};
[[nodiscard]] DtwCost dtw_cost(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                               std::size_t band);

/// Band in steps for a window in seconds; window <= 0 gives 0 (no warping),
/// an infinite window gives kUnbounded.
[[nodiscard]] std::size_t band_steps(double window, double step_len);

/// Pads the shorter on/off sequence with off, then aligns.
[[nodiscard]] Alignment dtw_align(const ActivityProfile& a, const ActivityProfile& b, double window);

struct ApeReport {
    double epsilon = 0.0;        ///< n_diff / n_total along the warping path
    std::uint64_t n_diff = 0;
    std::uint64_t n_total = 0;   ///< path length
    double dtw_window = 0.0;
    std::uint64_t n_grid = 0;    ///< steps of the (padded) raw grid
    double epsilon_grid = 0.0;   ///< n_diff / n_grid
    double epsilon_raw = 0.0;    ///< mismatch fraction without warping
    std::size_t band = 0;
    std::vector<MismatchSpan> spans;
};

/// Activity profile error between two on/off profiles. window = 0 gives the
/// raw error.
[[nodiscard]] ApeReport compute_ape(const ActivityProfile& a, const ActivityProfile& b, double window);

}  // namespace ehstack
