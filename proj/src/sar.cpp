#include "trqsim/sar.hpp"

#include "trqsim/profile.hpp"

#include <ostream>

namespace trq {

namespace {

// Successive approximation over `width` bits on the normalized sample u
// (sample divided by the step). Threshold for candidate c sits at c - 1/2.
std::uint32_t binary_search(double u, int width, double origin, double step, Phase phase,
                            std::vector<TraceStep>* trace) {
    std::uint32_t code = 0;
    for (int b = width - 1; b >= 0; --b) {
        const std::uint32_t candidate = code | (1u << b);
        const double rel = static_cast<double>(candidate) - 0.5;
        const int bit = u >= rel ? 1 : 0;
        if (trace) {
            trace->push_back({phase, origin + rel * step, bit, candidate});
        }
        if (bit) {
            code = candidate;
        }
    }
    return code;
}

}  // namespace

void validate(const AdcMode& mode, int r_adc) {
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        require(u->k >= 1 && u->k <= r_adc, "uniform ADC: k must lie in [1, r_adc]");
        require(u->lsb > 0.0, "uniform ADC: lsb must be positive");
    } else {
        validate(std::get<TrqParams>(mode), r_adc);
    }
}

ConversionResult convert_uniform(double x, int k, double lsb, bool keep_trace) {
    ConversionResult r;
    std::vector<TraceStep>* trace = keep_trace ? &r.trace : nullptr;
    const std::uint32_t code = binary_search(x / lsb, k, 0.0, lsb, Phase::Search, trace);
    r.code = {0, code, k};
    r.decoded = code;
    r.ops = k;
    return r;
}

ConversionResult convert_trq(double x, const TrqParams& p, bool keep_trace) {
    ConversionResult r;
    std::vector<TraceStep>* trace = keep_trace ? &r.trace : nullptr;
    const double offset = static_cast<double>(p.offset());
    const double theta = static_cast<double>(p.theta());

    bool r1 = true;
    if (p.bias != 0) {
        const int above_offset = x >= offset ? 1 : 0;
        if (trace) {
            trace->push_back({Phase::Detect, offset, above_offset, 0});
        }
        r1 = above_offset == 1;
        ++r.ops;
    }
    const int above_theta = x >= theta ? 1 : 0;
    if (trace) {
        trace->push_back({Phase::Detect, theta, above_theta, 0});
    }
    ++r.ops;
    r1 = r1 && above_theta == 0;

    if (r1) {
        const double step = static_cast<double>(p.delta_r1);
        const auto payload =
            binary_search((x - offset) / step, p.n_r1, offset, step, Phase::Search, trace);
        r.code = {0, payload, p.n_r1};
        r.ops += p.n_r1;
    } else {
        const double step = static_cast<double>(p.delta_r2());
        const auto payload = binary_search(x / step, p.n_r2, 0.0, step, Phase::Search, trace);
        r.code = {1, payload, p.n_r2};
        r.ops += p.n_r2;
    }
    r.decoded = decode(r.code, p);
    return r;
}

ConversionResult convert(const AdcMode& mode, double level, bool keep_trace) {
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        return convert_uniform(level, u->k, u->lsb, keep_trace);
    }
    const auto& p = std::get<TrqParams>(mode);
    return convert_trq(level / p.v_grid, p, keep_trace);
}

double decoded_unit(const AdcMode& mode) {
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        return u->lsb;
    }
    const auto& p = std::get<TrqParams>(mode);
    return static_cast<double>(p.delta_r1) * p.v_grid;
}

int ops_per_conversion(const UniformAdc& mode) { return mode.k; }

std::uint64_t expected_ops(const DistributionProfile& profile, const TrqParams& p) {
    std::uint64_t total = profile.count * static_cast<std::uint64_t>(p.nu());
    for (std::size_t level = 0; level < profile.histogram.size(); ++level) {
        const auto h = profile.histogram[level];
        if (h == 0) {
            continue;
        }
        const bool r1 = in_r1(to_grid(static_cast<std::int64_t>(level), p.v_grid), p);
        total += h * static_cast<std::uint64_t>(r1 ? p.n_r1 : p.n_r2);
    }
    return total;
}

std::uint64_t expected_ops(const DistributionProfile& profile, const AdcMode& mode) {
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        return profile.count * static_cast<std::uint64_t>(u->k);
    }
    return expected_ops(profile, std::get<TrqParams>(mode));
}

std::uint32_t replay_payload(std::span<const TraceStep> trace) {
    std::uint32_t code = 0;
    int width = 0;
    for (const auto& step : trace) {
        width += step.phase == Phase::Search ? 1 : 0;
    }
    int b = width - 1;
    for (const auto& step : trace) {
        if (step.phase != Phase::Search) {
            continue;
        }
        // idx(k): previously resolved bits, then a trial '1' in the current position.
        const std::uint32_t tried = code | (1u << b);
        if (step.bit) {
            code = tried;
        }
        --b;
    }
    return code;
}

void write_trace(std::ostream& os, std::span<const TraceStep> trace) {
    for (const auto& step : trace) {
        os << (step.phase == Phase::Detect ? "detect" : "search") << ' ' << step.threshold << ' '
           << step.bit << '\n';
    }
}

ConversionTable make_table(const AdcMode& mode, int max_level) {
    ConversionTable table;
    table.unit = decoded_unit(mode);
    table.decoded.resize(static_cast<std::size_t>(max_level) + 1);
    table.ops.resize(static_cast<std::size_t>(max_level) + 1);
    for (int level = 0; level <= max_level; ++level) {
        const auto r = convert(mode, static_cast<double>(level), false);
        table.decoded[level] = static_cast<std::int32_t>(r.decoded);
        table.ops[level] = static_cast<std::uint8_t>(r.ops);
    }
    return table;
}

}  // namespace trq
