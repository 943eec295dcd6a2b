#include "trqsim/xbar.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace trq {

int CrossbarConfig::ideal_resolution() const {
    // log2(S) + 1 for a power-of-two S
    return static_cast<int>(std::bit_width(static_cast<unsigned>(size)));
}

void validate(const CrossbarConfig& cfg) {
    require(cfg.size >= 1 && std::has_single_bit(static_cast<unsigned>(cfg.size)),
            "crossbar size must be a power of two");
    require(cfg.r_cell == 1 && cfg.r_da == 1, "only single-bit cells and DAC are modelled");
    require(cfg.r_adc >= 2 && cfg.r_adc <= 16, "r_adc out of range");
    require(cfg.partial_sum_width >= 2 && cfg.partial_sum_width <= 62, "partial_sum_width out of range");
    require(cfg.accumulator_width >= 2 && cfg.accumulator_width <= 32, "accumulator_width out of range");
}

LevelMatrix TileMap::reassemble() const {
    LevelMatrix w = LevelMatrix::Zero(rows, cols);
    for (const auto& t : tiles) {
        const int sign = t.polarity == Polarity::Positive ? 1 : -1;
        w.block(t.row_begin, t.col_begin, t.cells.rows(), t.cells.cols()) += sign * (t.cells * (1 << t.weight_bit));
    }
    return w;
}

std::uint64_t TileMap::conversions_per_mvm(int input_bits) const {
    std::uint64_t bls = 0;
    for (const auto& t : tiles) {
        bls += static_cast<std::uint64_t>(t.col_end - t.col_begin);
    }
    return bls * static_cast<std::uint64_t>(input_bits);
}

LevelMatrix weight_matrix(const LayerSpec& layer) {
    require(layer.is_mvm() && layer.weights, "weight_matrix: layer " + layer.name + " carries no weights");
    const auto& w = layer.weights->as<std::int8_t>();
    const int fan_in = layer.fan_in();
    const int out = layer.out_channels;
    require(w.size() == static_cast<std::size_t>(fan_in) * out, "weight_matrix: tensor size mismatch");
    LevelMatrix m(fan_in, out);
    for (int o = 0; o < out; ++o) {
        for (int r = 0; r < fan_in; ++r) {
            m(r, o) = w[static_cast<std::size_t>(o) * fan_in + r];
        }
    }
    return m;
}

TileMap map_matrix(const LevelMatrix& w, const CrossbarConfig& cfg, int weight_bits) {
    validate(cfg);
    const std::int32_t limit = 1 << (weight_bits - 1);
    require((w.array() >= -limit).all() && (w.array() < limit).all(),
            "map_matrix: weights exceed the signed " + std::to_string(weight_bits) + "-bit range");
    TileMap map;
    map.rows = static_cast<int>(w.rows());
    map.cols = static_cast<int>(w.cols());
    map.weight_bits = weight_bits;
    map.size = cfg.size;
    map.row_blocks = (map.rows + cfg.size - 1) / cfg.size;
    map.col_blocks = (map.cols + cfg.size - 1) / cfg.size;

    const LevelMatrix pos = w.cwiseMax(0);
    const LevelMatrix neg = (-w).cwiseMax(0);
    for (int rb = 0; rb < map.row_blocks; ++rb) {
        const int r0 = rb * cfg.size;
        const int nr = std::min(cfg.size, map.rows - r0);
        for (int cb = 0; cb < map.col_blocks; ++cb) {
            const int c0 = cb * cfg.size;
            const int nc = std::min(cfg.size, map.cols - c0);
            for (int b = 0; b < weight_bits; ++b) {
                for (auto pol : {Polarity::Positive, Polarity::Negative}) {
                    const LevelMatrix& src = pol == Polarity::Positive ? pos : neg;
                    Tile t;
                    t.row_begin = r0;
                    t.row_end = r0 + nr;
                    t.col_begin = c0;
                    t.col_end = c0 + nc;
                    t.weight_bit = b;
                    t.polarity = pol;
                    t.cells = src.block(r0, c0, nr, nc).unaryExpr([b](std::int32_t v) { return (v >> b) & 1; });
                    map.tiles.push_back(std::move(t));
                }
            }
        }
    }
    return map;
}

TileMap map_layer(const LayerSpec& layer, const CrossbarConfig& cfg) {
    if (!layer.is_mvm()) {
        throw ValidationError(std::string("map_layer: unsupported layer kind ") + layer_kind_name(layer.kind));
    }
    return map_matrix(weight_matrix(layer), cfg, 8);
}

LevelMatrix im2col(const FeatureMap& input, const LayerSpec& layer) {
    require(layer.kind == LayerKind::Conv2d, "im2col: layer is not conv2d");
    require(input.shape.size() == 3 && input.shape[0] == layer.in_channels,
            "im2col: shape mismatch between input and layer");
    const int c_in = input.shape[0];
    const int h = input.shape[1];
    const int w = input.shape[2];
    require(static_cast<std::size_t>(c_in) * h * w == static_cast<std::size_t>(input.values.size()),
            "im2col: value count does not match shape");
    const int k = layer.kernel;
    const int s = layer.stride;
    const int p = layer.padding;
    require(h + 2 * p >= k && w + 2 * p >= k, "im2col: kernel larger than padded input");
    const int oh = (h + 2 * p - k) / s + 1;
    const int ow = (w + 2 * p - k) / s + 1;

    LevelMatrix cols = LevelMatrix::Zero(c_in * k * k, oh * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const int col = y * ow + x;
            for (int c = 0; c < c_in; ++c) {
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = y * s + ky - p;
                    if (iy < 0 || iy >= h) {
                        continue;
                    }
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = x * s + kx - p;
                        if (ix < 0 || ix >= w) {
                            continue;
                        }
                        cols((c * k + ky) * k + kx, col) = input.values[(c * h + iy) * w + ix];
                    }
                }
            }
        }
    }
    return cols;
}

LevelMatrix im2col(const Tensor& input, const LayerSpec& layer) {
    FeatureMap fm;
    fm.shape.assign(input.shape.begin(), input.shape.end());
    fm.values.resize(static_cast<Eigen::Index>(input.size()));
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double v = input.value(i);
        require(v == std::floor(v), "im2col: tensor holds non-integer levels");
        fm.values[static_cast<Eigen::Index>(i)] = static_cast<std::int32_t>(v);
    }
    return im2col(fm, layer);
}

void MvmStats::merge(const MvmStats& other) {
    mvms += other.mvms;
    conversions += other.conversions;
    ops += other.ops;
    partial_sum_saturations += other.partial_sum_saturations;
    accumulator_saturations += other.accumulator_saturations;
    if (histogram.size() < other.histogram.size()) {
        histogram.resize(other.histogram.size(), 0);
    }
    for (std::size_t i = 0; i < other.histogram.size(); ++i) {
        histogram[i] += other.histogram[i];
    }
}

std::int64_t saturating_add(std::int64_t acc, std::int64_t addend, int width, bool& overflow) {
    const std::int64_t hi = (std::int64_t{1} << (width - 1)) - 1;
    const std::int64_t lo = -(std::int64_t{1} << (width - 1));
    const std::int64_t sum = acc + addend;
    if (sum > hi) {
        overflow = true;
        return hi;
    }
    if (sum < lo) {
        overflow = true;
        return lo;
    }
    return sum;
}

MergeResult shift_add_merge(const CodeWord& code, const TrqParams& p, std::int64_t acc, int weight_bit,
                            int input_bit, Polarity polarity, int width) {
    const std::int64_t magnitude = decode(code, p) << (weight_bit + input_bit);
    MergeResult r;
    r.value = saturating_add(acc, polarity == Polarity::Positive ? magnitude : -magnitude, width, r.overflow);
    return r;
}

LevelMatrix mvm_bitserial(const TileMap& tiles, const LevelMatrix& inputs, const CrossbarConfig& cfg,
                          const AdcMode& mode, MvmStats* stats, const BlSink* sink, int input_bits) {
    validate(cfg);
    validate(mode, cfg.r_adc);
    require(inputs.rows() == tiles.rows, "mvm_bitserial: input length " + std::to_string(inputs.rows()) +
                                             " does not match crossbar rows " + std::to_string(tiles.rows));
    require(tiles.size == cfg.size, "mvm_bitserial: tile map built for a different crossbar size");
    const std::int32_t top = (1 << input_bits) - 1;
    require(inputs.size() == 0 || (inputs.minCoeff() >= 0 && inputs.maxCoeff() <= top),
            "mvm_bitserial: activations must be unsigned " + std::to_string(input_bits) + "-bit levels");

    const ConversionTable table = make_table(mode, cfg.size);
    const Eigen::Index n = inputs.cols();
    if (stats && stats->histogram.size() < static_cast<std::size_t>(cfg.size) + 1) {
        stats->histogram.resize(static_cast<std::size_t>(cfg.size) + 1, 0);
    }

    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> acc =
        Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(tiles.cols, n);
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> ps(tiles.cols, n);
    std::uint64_t conversions = 0;
    std::uint64_t ops = 0;
    std::uint64_t ps_sat = 0;
    std::uint64_t acc_sat = 0;

    std::vector<std::uint64_t> hist(static_cast<std::size_t>(cfg.size) + 1, 0);
    const std::int64_t ps_hi = (std::int64_t{1} << (cfg.partial_sum_width - 1)) - 1;
    const std::int64_t ps_lo = -(std::int64_t{1} << (cfg.partial_sum_width - 1));

    std::size_t first = 0;
    for (int rb = 0; rb < tiles.row_blocks; ++rb) {
        std::size_t last = first;
        while (last < tiles.tiles.size() && tiles.tiles[last].row_begin == rb * tiles.size) {
            ++last;
        }
        const int r0 = rb * tiles.size;
        const int nr = tiles.tiles[first].row_end - r0;
        // every tile of this row block side by side: one product per input bit
        Eigen::Index width = 0;
        for (std::size_t ti = first; ti < last; ++ti) {
            width += tiles.tiles[ti].cells.cols();
        }
        LevelMatrix stacked(width, nr);
        Eigen::Index at = 0;
        for (std::size_t ti = first; ti < last; ++ti) {
            const auto& c = tiles.tiles[ti].cells;
            stacked.middleRows(at, c.cols()) = c.transpose();
            at += c.cols();
        }
        for (int bi = 0; bi < input_bits; ++bi) {
            const LevelMatrix bits =
                inputs.middleRows(r0, nr).unaryExpr([bi](std::int32_t v) { return (v >> bi) & 1; });
            const LevelMatrix levels = stacked * bits;
            ensure(levels.size() == 0 || (levels.minCoeff() >= 0 && levels.maxCoeff() <= cfg.size),
                   "bit-line level outside [0, S]");
            ps.setZero();
            for (Eigen::Index s = 0; s < n; ++s) {
                Eigen::Index j0 = 0;
                for (std::size_t ti = first; ti < last; ++ti) {
                    const Tile& t = tiles.tiles[ti];
                    const bool negative = t.polarity == Polarity::Negative;
                    const Eigen::Index nc = t.cells.cols();
                    for (Eigen::Index j = 0; j < nc; ++j) {
                        const std::int32_t level = levels(j0 + j, s);
                        ++hist[static_cast<std::size_t>(level)];
                        if (sink) {
                            (*sink)({level, static_cast<int>(ti), static_cast<int>(j), bi});
                        }
                        ops += table.ops[static_cast<std::size_t>(level)];
                        const std::int64_t mag = static_cast<std::int64_t>(table.decoded[level]) << t.weight_bit;
                        auto& cell = ps(t.col_begin + j, s);
                        std::int64_t sum = negative ? cell - mag : cell + mag;
                        if (sum > ps_hi) {
                            sum = ps_hi;
                            ++ps_sat;
                        } else if (sum < ps_lo) {
                            sum = ps_lo;
                            ++ps_sat;
                        }
                        cell = sum;
                    }
                    j0 += nc;
                }
            }
            conversions += static_cast<std::uint64_t>(levels.size());
            for (Eigen::Index s = 0; s < n; ++s) {
                for (Eigen::Index c = 0; c < tiles.cols; ++c) {
                    bool of = false;
                    acc(c, s) = saturating_add(acc(c, s), ps(c, s) * (std::int64_t{1} << bi), cfg.accumulator_width, of);
                    acc_sat += of ? 1 : 0;
                }
            }
        }
        first = last;
    }
    if (stats) {
        for (std::size_t i = 0; i < hist.size(); ++i) {
            stats->histogram[i] += hist[i];
        }
        stats->mvms += static_cast<std::uint64_t>(n);
        stats->conversions += conversions;
        stats->ops += ops;
        stats->partial_sum_saturations += ps_sat;
        stats->accumulator_saturations += acc_sat;
    }
    return acc.cast<std::int32_t>();
}

LevelVector mvm_bitserial(const TileMap& tiles, const LevelVector& input, const CrossbarConfig& cfg,
                          const AdcMode& mode, MvmStats* stats, const BlSink* sink, int input_bits) {
    const LevelMatrix out = mvm_bitserial(tiles, LevelMatrix(input), cfg, mode, stats, sink, input_bits);
    return out.col(0);
}

FeatureMap forward_layer(const LayerSpec& layer, const TileMap& tiles, const FeatureMap& input,
                         const CrossbarConfig& cfg, const AdcMode& mode, MvmStats* stats, const BlSink* sink) {
    require(layer.is_mvm(), "forward_layer: layer is not conv2d/fc");
    require(input.shape == layer.input_shape || layer.input_shape.empty(),
            "forward_layer: input shape does not match layer");
    constexpr int kBits = 8;
    constexpr std::int32_t kShift = 1 << (kBits - 1);

    LevelMatrix x;
    if (layer.kind == LayerKind::Fc) {
        require(input.values.size() == layer.in_channels, "forward_layer: fc input length mismatch");
        x = input.values;
    } else {
        x = im2col(input, layer);
    }

    const bool shifted = layer.signed_input || (x.size() > 0 && x.minCoeff() < 0);
    if (shifted) {
        require(x.minCoeff() >= -kShift && x.maxCoeff() < kShift, "forward_layer: signed activations exceed 8 bits");
        x.array() += kShift;
    }

    LevelMatrix y = mvm_bitserial(tiles, x, cfg, mode, stats, sink, kBits);
    const double unit = decoded_unit(mode);

    if (shifted) {
        // Digital compensation column: kShift * column sums of W, in decoded units.
        const LevelMatrix w = tiles.reassemble();
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            const std::int64_t corr = static_cast<std::int64_t>(kShift) * w.col(c).cast<std::int64_t>().sum();
            const std::int64_t corr_units =
                unit == 1.0 ? corr : round_half_up(static_cast<double>(corr) / unit);
            y.row(c).array() -= static_cast<std::int32_t>(corr_units);
        }
    }

    FeatureMap out;
    out.scale = layer.weight_scale * input.scale * unit;
    if (layer.kind == LayerKind::Fc) {
        out.shape = {layer.out_channels};
        out.values = y.col(0);
    } else {
        const int positions = static_cast<int>(y.cols());
        const int ow = (input.shape[2] + 2 * layer.padding - layer.kernel) / layer.stride + 1;
        out.shape = {layer.out_channels, positions / ow, ow};
        out.values.resize(static_cast<Eigen::Index>(layer.out_channels) * positions);
        for (int o = 0; o < layer.out_channels; ++o) {
            out.values.segment(static_cast<Eigen::Index>(o) * positions, positions) = y.row(o).transpose();
        }
    }
    return out;
}

void write_bl_header(std::ostream& os) {
    os.write("TRQB", 4);
    const char version = 1;
    os.write(&version, 1);
}

void write_bl_record(std::ostream& os, const BlRecord& r) {
    os.write(reinterpret_cast<const char*>(&r.layer), 4);
    os.write(reinterpret_cast<const char*>(&r.bl), 4);
    os.write(reinterpret_cast<const char*>(&r.level), 2);
}

std::vector<BlRecord> read_bl_dump(std::istream& is) {
    char head[5] = {};
    is.read(head, 5);
    require(is.gcount() == 5 && std::string(head, 4) == "TRQB" && head[4] == 1, "bl dump: bad header");
    std::vector<BlRecord> out;
    char buf[10];
    while (is.read(buf, 10)) {
        BlRecord r;
        std::memcpy(&r.layer, buf, 4);
        std::memcpy(&r.bl, buf + 4, 4);
        std::memcpy(&r.level, buf + 8, 2);
        out.push_back(r);
    }
    require(is.gcount() == 0, "bl dump: truncated record");
    return out;
}

}  // namespace trq
