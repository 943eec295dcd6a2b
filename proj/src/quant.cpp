#include "trqsim/quant.hpp"

#include <algorithm>
#include <string>

namespace trq {

void validate(const TrqParams& p, int r_adc) {
    const std::string ctx = "TrqParams: ";
    require(r_adc >= 2 && r_adc <= 16, ctx + "r_adc out of range");
    require(p.n_r1 >= 0 && p.n_r1 <= r_adc - 1, ctx + "n_r1 must lie in [0, r_adc - 1]");
    require(p.n_r2 >= 1 && p.n_r2 <= r_adc - 1, ctx + "n_r2 must lie in [1, r_adc - 1]");
    require(p.delta_r1 >= 1, ctx + "delta_r1 must be a positive number of grid steps");
    require(p.m >= 0 && p.m <= 7, ctx + "m must lie in [0, 7]");
    require(p.bias >= 0 && p.bias <= (std::int64_t{1} << p.m) - 1, ctx + "bias must lie in [0, 2^m - 1]");
    require(std::isfinite(p.v_grid) && p.v_grid > 0.0, ctx + "v_grid must be positive");
}

TrqQuantized trq_quantize(double x, const TrqParams& p) {
    TrqQuantized out;
    if (in_r1(x, p)) {
        const auto payload = uniform_quantize(x - static_cast<double>(p.offset()), p.n_r1,
                                              static_cast<double>(p.delta_r1));
        out.code = {0, static_cast<std::uint32_t>(payload), p.n_r1};
    } else {
        const auto payload = uniform_quantize(x, p.n_r2, static_cast<double>(p.delta_r2()));
        out.code = {1, static_cast<std::uint32_t>(payload), p.n_r2};
    }
    out.level = decode(out.code, p);
    return out;
}

std::int64_t decode(const CodeWord& code, const TrqParams& p) {
    const std::int64_t payload = code.payload;
    if (code.msb == 0) {
        require(payload < (std::int64_t{1} << p.n_r1), "decode: R1 payload exceeds n_r1 bits");
        return (p.bias << p.n_r1) | payload;
    }
    require(code.msb == 1, "decode: range flag must be 0 or 1");
    require(payload < (std::int64_t{1} << p.n_r2), "decode: R2 payload exceeds n_r2 bits");
    return payload << p.m;
}

std::uint32_t pack_code(const CodeWord& code, const TrqParams& p) {
    const int flag_bit = std::max(p.n_r1, p.n_r2);
    decode(code, p);
    return (static_cast<std::uint32_t>(code.msb) << flag_bit) | code.payload;
}

CodeWord unpack_code(std::uint32_t word, const TrqParams& p) {
    const int flag_bit = std::max(p.n_r1, p.n_r2);
    require((word >> (flag_bit + 1)) == 0, "unpack_code: bits above the range flag are set");
    CodeWord code;
    code.msb = static_cast<int>((word >> flag_bit) & 1u);
    code.width = code.msb == 0 ? p.n_r1 : p.n_r2;
    code.payload = word & ((1u << flag_bit) - 1u);
    decode(code, p);
    return code;
}

std::vector<std::int64_t> grid_levels(const TrqParams& p) {
    std::vector<std::int64_t> levels;
    const std::int64_t base = p.bias << p.n_r1;
    for (std::int64_t c = 0; c < (std::int64_t{1} << p.n_r1); ++c) {
        levels.push_back(base + c);
    }
    for (std::int64_t c = 0; c < (std::int64_t{1} << p.n_r2); ++c) {
        levels.push_back(c << p.m);
    }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return levels;
}

TrqParams uniform_equivalent(int k, std::int64_t delta, double v_grid) {
    TrqParams p;
    p.n_r1 = k;
    p.n_r2 = k;
    p.delta_r1 = delta;
    p.m = 0;
    p.bias = 0;
    p.v_grid = v_grid;
    return p;
}

}  // namespace trq
