#pragma once

#include "trqsim/common.hpp"
#include "trqsim/sar.hpp"
#include "trqsim/tensorio.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace trq {

struct CrossbarConfig {
    int size = 128;               ///< rows = columns
    int r_cell = 1;
    int r_da = 1;
    int r_adc = 8;
    int partial_sum_width = 16;   ///< S+A register, per input-bit cycle
    int accumulator_width = 32;   ///< output accumulator across cycles and row tiles

    /// log2(S) + 1 for single-bit cells and DAC.
    int ideal_resolution() const;
};

void validate(const CrossbarConfig& cfg);

enum class Polarity : std::uint8_t { Positive, Negative };

struct Tile {
    int row_begin = 0;
    int row_end = 0;
    int col_begin = 0;
    int col_end = 0;
    int weight_bit = 0;
    Polarity polarity = Polarity::Positive;
    LevelMatrix cells;            ///< (row_end - row_begin) x (col_end - col_begin), 0/1
};

struct TileMap {
    int rows = 0;                 ///< fan-in of the flattened weight matrix
    int cols = 0;                 ///< output channels
    int weight_bits = 8;
    int size = 128;
    int row_blocks = 0;
    int col_blocks = 0;
    std::vector<Tile> tiles;      ///< ordered by row block, column block, weight bit, polarity

    /// sum_b 2^b (W+_b - W-_b)
    LevelMatrix reassemble() const;
    /// Bit lines per (weight bit, polarity) plane.
    int bl_count() const { return row_blocks * cols; }
    /// Conversions needed for one input vector.
    std::uint64_t conversions_per_mvm(int input_bits) const;
};

/// Flattened (fan_in x out_channels) integer weight matrix of a conv or fc layer.
LevelMatrix weight_matrix(const LayerSpec& layer);

TileMap map_matrix(const LevelMatrix& w, const CrossbarConfig& cfg, int weight_bits = 8);
TileMap map_layer(const LayerSpec& layer, const CrossbarConfig& cfg);

/// Dense activation volume with its quantization step.
struct FeatureMap {
    std::vector<int> shape;
    LevelVector values;
    double scale = 1.0;
};

/// Sliding-window unfolding of a (C, H, W) volume; one column per output position.
LevelMatrix im2col(const FeatureMap& input, const LayerSpec& layer);
LevelMatrix im2col(const Tensor& input, const LayerSpec& layer);

struct BlSample {
    int level = 0;
    int tile = 0;
    int bl = 0;
    int input_bit = 0;
};

using BlSink = std::function<void(const BlSample&)>;

struct MvmStats {
    std::uint64_t mvms = 0;               ///< input vectors processed
    std::uint64_t conversions = 0;
    std::uint64_t ops = 0;
    std::uint64_t partial_sum_saturations = 0;
    std::uint64_t accumulator_saturations = 0;
    std::vector<std::uint64_t> histogram;  ///< bit-line level counts, resized to size + 1

    void merge(const MvmStats& other);
};

/// Signed saturating add at the given register width; sets `overflow` on clamp.
std::int64_t saturating_add(std::int64_t acc, std::int64_t addend, int width, bool& overflow);

struct MergeResult {
    std::int64_t value = 0;
    bool overflow = false;
};

/// acc +/- (decode(code) << (weight_bit + input_bit)) in a width-bit register.
MergeResult shift_add_merge(const CodeWord& code, const TrqParams& p, std::int64_t acc, int weight_bit,
                            int input_bit, Polarity polarity, int width = 16);

/// Bit-serial crossbar MVM over a batch of input columns (rows x n). Activations
/// are unsigned input_bits-bit levels. The result is in decoded ADC units.
LevelMatrix mvm_bitserial(const TileMap& tiles, const LevelMatrix& inputs, const CrossbarConfig& cfg,
                          const AdcMode& mode, MvmStats* stats = nullptr, const BlSink* sink = nullptr,
                          int input_bits = 8);

LevelVector mvm_bitserial(const TileMap& tiles, const LevelVector& input, const CrossbarConfig& cfg,
                          const AdcMode& mode, MvmStats* stats = nullptr, const BlSink* sink = nullptr,
                          int input_bits = 8);

/// Conv/fc layer on a quantized input volume. Output values are integer levels
/// with scale = weight_scale * input scale * ADC decoded unit.
FeatureMap forward_layer(const LayerSpec& layer, const TileMap& tiles, const FeatureMap& input,
                         const CrossbarConfig& cfg, const AdcMode& mode, MvmStats* stats = nullptr,
                         const BlSink* sink = nullptr);

// Bit-line dump stream: "TRQB" | version u8 (=1) | records of
// {layer u32, bl u32, level u16}, little endian. bl = tile index * S + column.
struct BlRecord {
    std::uint32_t layer = 0;
    std::uint32_t bl = 0;
    std::uint16_t level = 0;

    bool operator==(const BlRecord&) const = default;
};

void write_bl_header(std::ostream& os);
void write_bl_record(std::ostream& os, const BlRecord& r);
std::vector<BlRecord> read_bl_dump(std::istream& is);

}  // namespace trq
