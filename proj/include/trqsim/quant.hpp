#pragma once

#include "trqsim/common.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <vector>

namespace trq {

// Twin-range quantizer configuration. Every length-like field is in ADC grid
// units (one unit is v_grid of analog signal); decoded levels are in delta_r1
// units.
struct TrqParams {
    int n_r1 = 0;                ///< payload bits in the fine range R1
    int n_r2 = 1;                ///< payload bits in the coarse range R2
    std::int64_t delta_r1 = 1;   ///< R1 step, grid units
    int m = 0;                   ///< R2 step is delta_r1 << m
    std::int64_t bias = 0;       ///< R1 window index; offset = bias * 2^n_r1 * delta_r1
    double v_grid = 1.0;         ///< analog size of one grid unit

    std::int64_t delta_r2() const { return delta_r1 << m; }
    std::int64_t r1_span() const { return (std::int64_t{1} << n_r1) * delta_r1; }
    std::int64_t offset() const { return bias * r1_span(); }
    std::int64_t theta() const { return offset() + r1_span(); }
    /// Detection comparisons charged per conversion.
    int nu() const { return bias == 0 ? 1 : 2; }

    bool operator==(const TrqParams&) const = default;
};

/// Throws ValidationError unless `p` is realizable on an r_adc-bit SAR ADC.
void validate(const TrqParams& p, int r_adc = 8);

struct CodeWord {
    int msb = 0;                 ///< 0 = R1, 1 = R2
    std::uint32_t payload = 0;
    int width = 0;               ///< payload bits in use

    bool operator==(const CodeWord&) const = default;
};

struct TrqQuantized {
    CodeWord code;
    std::int64_t level = 0;      ///< decoded, delta_r1 units
};

/// floor(u + 1/2) evaluated without the addition, so that the result is >= c
/// exactly when u >= c - 1/2. The SAR comparator model relies on this.
template <std::floating_point T>
std::int64_t round_half_up(T u) {
    const T f = std::floor(u);
    auto r = static_cast<std::int64_t>(f);
    if (u - f >= T(0.5)) {
        ++r;
    }
    return r;
}

/// clamp(round(x / delta), 0, 2^k - 1). k == 0 is accepted and always yields 0.
template <std::floating_point T>
std::int64_t uniform_quantize(T x, int k, T delta) {
    const std::int64_t top = (std::int64_t{1} << k) - 1;
    const std::int64_t r = round_half_up(x / delta);
    return r < 0 ? 0 : (r > top ? top : r);
}

// without a bias there is no lower comparator, so everything under theta is R1
inline bool in_r1(double x, const TrqParams& p) {
    return (p.bias == 0 || x >= static_cast<double>(p.offset())) && x < static_cast<double>(p.theta());
}

/// x is in grid units.
TrqQuantized trq_quantize(double x, const TrqParams& p);

std::int64_t decode(const CodeWord& code, const TrqParams& p);

// Output bitmap: the range flag sits just above the widest payload field.
std::uint32_t pack_code(const CodeWord& code, const TrqParams& p);
CodeWord unpack_code(std::uint32_t word, const TrqParams& p);

/// Sorted, deduplicated representable levels in delta_r1 units.
std::vector<std::int64_t> grid_levels(const TrqParams& p);

/// Parameters under which the twin-range quantizer reproduces a plain k-bit
/// uniform quantizer with the given step.
TrqParams uniform_equivalent(int k, std::int64_t delta, double v_grid = 1.0);

}  // namespace trq
