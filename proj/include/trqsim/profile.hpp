#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace trq {

/// Histogram of integer bit-line levels observed for one layer.
struct DistributionProfile {
    int layer = -1;
    std::vector<std::uint64_t> histogram;  ///< index = level, size = max_level + 1
    std::uint64_t count = 0;               ///< N_D
    int y_min = 0;
    int y_max = 0;
    double mean = 0.0;
    double variance = 0.0;
    int mode = 0;

    int max_level() const { return static_cast<int>(histogram.size()) - 1; }
    bool operator==(const DistributionProfile&) const = default;
};

/// Fills the summary statistics from a histogram.
DistributionProfile make_profile(std::vector<std::uint64_t> histogram, int layer = -1);

/// Bins raw levels into a histogram of the given size then summarizes it.
DistributionProfile profile_from_samples(std::span<const int> levels, int max_level, int layer = -1);

}  // namespace trq
