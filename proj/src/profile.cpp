#include "trqsim/profile.hpp"

#include "trqsim/common.hpp"

#include <string>

namespace trq {

DistributionProfile make_profile(std::vector<std::uint64_t> histogram, int layer) {
    require(!histogram.empty(), "profile: histogram must cover at least level 0");
    DistributionProfile p;
    p.layer = layer;
    p.histogram = std::move(histogram);

    bool seen = false;
    std::uint64_t best = 0;
    long double sum = 0.0L;
    for (std::size_t level = 0; level < p.histogram.size(); ++level) {
        const auto h = p.histogram[level];
        if (h == 0) {
            continue;
        }
        if (!seen) {
            p.y_min = static_cast<int>(level);
            seen = true;
        }
        p.y_max = static_cast<int>(level);
        p.count += h;
        sum += static_cast<long double>(h) * level;
        if (h > best) {
            best = h;
            p.mode = static_cast<int>(level);
        }
    }
    if (p.count == 0) {
        return p;
    }
    const long double mean = sum / p.count;
    long double var = 0.0L;
    for (std::size_t level = 0; level < p.histogram.size(); ++level) {
        const long double d = static_cast<long double>(level) - mean;
        var += p.histogram[level] * d * d;
    }
    p.mean = static_cast<double>(mean);
    p.variance = static_cast<double>(var / p.count);
    return p;
}

DistributionProfile profile_from_samples(std::span<const int> levels, int max_level, int layer) {
    require(max_level >= 0, "profile: negative level range");
    std::vector<std::uint64_t> hist(static_cast<std::size_t>(max_level) + 1, 0);
    for (int level : levels) {
        require(level >= 0 && level <= max_level,
                "profile: sample level " + std::to_string(level) + " outside [0, " +
                    std::to_string(max_level) + "]");
        ++hist[static_cast<std::size_t>(level)];
    }
    return make_profile(std::move(hist), layer);
}

}  // namespace trq
