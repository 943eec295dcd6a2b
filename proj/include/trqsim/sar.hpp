#pragma once

#include "trqsim/quant.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

namespace trq {

struct DistributionProfile;

enum class Phase : std::uint8_t { Detect, Search };

/// One comparator cycle. `threshold` is in the units of the converted sample.
struct TraceStep {
    Phase phase = Phase::Search;
    double threshold = 0.0;
    int bit = 0;
    std::int64_t candidate = 0;  ///< code tried in this cycle (search phase only)
};

struct ConversionResult {
    CodeWord code;
    std::int64_t decoded = 0;
    int ops = 0;
    std::vector<TraceStep> trace;
};

struct UniformAdc {
    int k = 8;
    double lsb = 1.0;

    bool operator==(const UniformAdc&) const = default;
};

/// Per-layer register contents: plain uniform search or twin ranges.
using AdcMode = std::variant<UniformAdc, TrqParams>;

void validate(const AdcMode& mode, int r_adc = 8);

/// MSB-first binary search over k bits; comparator fires on x >= (idx - 1/2) lsb.
ConversionResult convert_uniform(double x, int k, double lsb, bool keep_trace = true);

/// Detection phase followed by the R1 or R2 search. x is in grid units.
ConversionResult convert_trq(double x, const TrqParams& p, bool keep_trace = true);

/// Converts an analog bit-line level (v_grid applied for twin-range mode).
ConversionResult convert(const AdcMode& mode, double level, bool keep_trace = false);

/// Analog size of one decoded unit.
double decoded_unit(const AdcMode& mode);

/// Fixed ops for uniform mode; for twin-range mode the count is sample dependent.
int ops_per_conversion(const UniformAdc& mode);

/// Grid-unit value of an integer bit-line level.
inline double to_grid(std::int64_t level, double v_grid) {
    return static_cast<double>(level) / v_grid;
}

/// N*nu + sum of per-sample search lengths, evaluated on the histogram.
std::uint64_t expected_ops(const DistributionProfile& profile, const TrqParams& p);
std::uint64_t expected_ops(const DistributionProfile& profile, const AdcMode& mode);

/// Rebuilds the search payload by pushing the recorded comparator bits through
/// the successive-approximation index schedule.
std::uint32_t replay_payload(std::span<const TraceStep> trace);

/// One line per op: "<phase> <threshold> <bit>".
void write_trace(std::ostream& os, std::span<const TraceStep> trace);

/// Decoded value and op count for every integer level in [0, max_level].
struct ConversionTable {
    std::vector<std::int32_t> decoded;
    std::vector<std::uint8_t> ops;
    double unit = 1.0;
};

ConversionTable make_table(const AdcMode& mode, int max_level);

}  // namespace trq
