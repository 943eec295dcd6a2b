#include "support/oracle.hpp"
#include "trqsim/synth.hpp"
#include "trqsim/xbar.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace trq;

namespace {

LevelMatrix random_weights(Rng& rng, int rows, int cols) {
    LevelMatrix w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w(i) = static_cast<std::int32_t>(rng.below(256)) - 128;
    }
    return w;
}

LevelMatrix random_inputs(Rng& rng, int rows, int cols, int top = 255) {
    LevelMatrix x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(top) + 1));
    }
    return x;
}

LayerSpec conv(int c_in, int c_out, int k, int stride = 1, int pad = 0) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in_channels = c_in;
    l.out_channels = c_out;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    return l;
}

FeatureMap volume(std::vector<int> shape, std::vector<std::int32_t> v) {
    FeatureMap fm;
    fm.shape = std::move(shape);
    fm.values = Eigen::Map<LevelVector>(v.data(), static_cast<Eigen::Index>(v.size()));
    return fm;
}

}  // namespace

TEST(Crossbar, DefaultIsIdeal) {
    CrossbarConfig cfg;
    EXPECT_EQ(cfg.ideal_resolution(), 8);
    EXPECT_EQ(cfg.ideal_resolution(), cfg.r_adc);
    cfg.size = 100;
    EXPECT_THROW(validate(cfg), ValidationError);
}

TEST(Mapping, SmallSignedRow) {
    LevelMatrix w(2, 1);
    w << 3, -2;
    const TileMap map = map_matrix(w, {});
    EXPECT_EQ(map.tiles.size(), 16u);
    for (const auto& t : map.tiles) {
        const int r0 = t.cells(0, 0);
        const int r1 = t.cells(1, 0);
        if (t.polarity == Polarity::Positive) {
            EXPECT_EQ(r0, t.weight_bit < 2 ? 1 : 0);
            EXPECT_EQ(r1, 0);
        } else {
            EXPECT_EQ(r0, 0);
            EXPECT_EQ(r1, t.weight_bit == 1 ? 1 : 0);
        }
    }
    EXPECT_EQ(map.reassemble(), w);
}

TEST(Mapping, ReassemblyAcrossBlocks) {
    Rng rng(5);
    const LevelMatrix w = random_weights(rng, 300, 140);
    const TileMap map = map_matrix(w, {});
    EXPECT_EQ(map.row_blocks, 3);
    EXPECT_EQ(map.col_blocks, 2);
    EXPECT_EQ(map.tiles.size(), 3u * 2 * 16);
    EXPECT_EQ(map.reassemble(), w);
    for (const auto& t : map.tiles) {
        EXPECT_LE(t.cells.rows(), 128);
        EXPECT_LE(t.cells.cols(), 128);
        EXPECT_TRUE(((t.cells.array() == 0) || (t.cells.array() == 1)).all());
    }
}

TEST(Mapping, LenetFirstConv) {
    LayerSpec l = conv(1, 6, 5);
    auto w = std::make_shared<Tensor>(make_tensor<std::int8_t>({6, 1, 5, 5}, std::vector<std::int8_t>(150, -3)));
    l.weights = w;
    const TileMap map = map_layer(l, {});
    EXPECT_EQ(map.rows, 25);
    EXPECT_EQ(map.cols, 6);
    EXPECT_EQ(map.tiles.size(), 16u);
    EXPECT_EQ(map.conversions_per_mvm(8), 8u * 8 * 6 * 2);
}

TEST(Mapping, RejectsOutOfRangeWeights) {
    LevelMatrix w(1, 1);
    w << 128;
    EXPECT_THROW(map_matrix(w, {}), ValidationError);
}

TEST(Im2col, SmallWindow) {
    const auto fm = volume({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const LevelMatrix cols = im2col(fm, conv(1, 1, 2));
    ASSERT_EQ(cols.rows(), 4);
    ASSERT_EQ(cols.cols(), 4);
    LevelMatrix expect(4, 4);
    expect << 1, 2, 4, 5,
              2, 3, 5, 6,
              4, 5, 7, 8,
              5, 6, 8, 9;
    EXPECT_EQ(cols, expect);
}

TEST(Im2col, StrideAndPadding) {
    std::vector<std::int32_t> v(25);
    for (int i = 0; i < 25; ++i) {
        v[i] = i + 1;
    }
    const auto fm = volume({1, 5, 5}, v);
    // ceil((5 - 2 + 1) / 2)^2 = 4
    EXPECT_EQ(im2col(fm, conv(1, 1, 2, 2)).cols(), 4);
    EXPECT_EQ(im2col(fm, conv(1, 1, 3, 2)).cols(), 4);
    const LevelMatrix padded = im2col(fm, conv(1, 1, 3, 1, 1));
    EXPECT_EQ(padded.cols(), 25);
    // top-left window: first row and first column come from padding
    EXPECT_EQ(padded(0, 0), 0);
    EXPECT_EQ(padded(3, 0), 0);
    EXPECT_EQ(padded(4, 0), 1);
    EXPECT_EQ(padded(8, 0), 7);
}

TEST(Im2col, TensorOverload) {
    const Tensor t = make_tensor<float>({1, 2, 2}, {1.f, 2.f, 3.f, 4.f});
    EXPECT_EQ(im2col(t, conv(1, 1, 2)).col(0), (LevelVector(4) << 1, 2, 3, 4).finished());
    const Tensor bad = make_tensor<float>({1, 2, 2}, {1.5f, 2.f, 3.f, 4.f});
    EXPECT_THROW(im2col(bad, conv(1, 1, 2)), ValidationError);
}

TEST(Merge, Examples) {
    TrqParams p;
    p.n_r1 = 3;
    p.n_r2 = 2;
    p.m = 1;
    EXPECT_EQ(shift_add_merge({1, 3, 2}, p, 0, 0, 0, Polarity::Positive).value, 6);
    const auto neg = shift_add_merge({0, 5, 3}, p, 10, 2, 0, Polarity::Negative);
    EXPECT_EQ(neg.value, -10);
    EXPECT_FALSE(neg.overflow);
    const auto sat = shift_add_merge({0, 1, 3}, p, 32767, 0, 0, Polarity::Positive);
    EXPECT_EQ(sat.value, 32767);
    EXPECT_TRUE(sat.overflow);
    const auto low = shift_add_merge({0, 1, 3}, p, -32768, 0, 0, Polarity::Negative);
    EXPECT_EQ(low.value, -32768);
    EXPECT_TRUE(low.overflow);
}

TEST(Mvm, SingleCell) {
    LevelMatrix w(1, 1);
    w << 1;
    LevelMatrix x(1, 1);
    x << 1;
    const auto y = mvm_bitserial(map_matrix(w, {}), x, {}, UniformAdc{8, 1.0}, nullptr, nullptr, 1);
    EXPECT_EQ(y(0, 0), 1);
}

TEST(Mvm, ZeroWeightsGiveZeroLevels) {
    const LevelMatrix w = LevelMatrix::Zero(40, 5);
    Rng rng(2);
    MvmStats stats;
    const auto y = mvm_bitserial(map_matrix(w, {}), random_inputs(rng, 40, 3), {}, UniformAdc{8, 1.0}, &stats);
    EXPECT_TRUE((y.array() == 0).all());
    EXPECT_EQ(stats.histogram[0], stats.conversions);
}

TEST(Mvm, LosslessEqualsDirectProduct) {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int rows = 1 + static_cast<int>(rng.below(256));
        const int cols = 1 + static_cast<int>(rng.below(200));
        const LevelMatrix w = random_weights(rng, rows, cols);
        const LevelMatrix x = random_inputs(rng, rows, 3);
        MvmStats stats;
        const auto y = mvm_bitserial(map_matrix(w, {}), x, {}, UniformAdc{8, 1.0}, &stats);
        ASSERT_EQ(y.cast<std::int64_t>(), oracle::direct_mvm(w, x)) << rows << "x" << cols;
        EXPECT_EQ(stats.partial_sum_saturations, 0u);
        EXPECT_EQ(stats.accumulator_saturations, 0u);
        EXPECT_EQ(stats.conversions, map_matrix(w, {}).conversions_per_mvm(8) * 3);
        EXPECT_EQ(stats.ops, stats.conversions * 8);
    }
}

TEST(Mvm, LossyModesMatchSlicedOracle) {
    Rng rng(23);
    TrqParams p;
    p.n_r1 = 4;
    p.n_r2 = 3;
    p.m = 3;
    p.bias = 0;
    p.v_grid = 0.5;
    const std::vector<AdcMode> modes = {UniformAdc{4, 8.0}, UniformAdc{6, 2.0}, p};
    for (const auto& mode : modes) {
        const LevelMatrix w = random_weights(rng, 200, 30);
        const LevelMatrix x = random_inputs(rng, 200, 4, 40);
        MvmStats stats;
        const auto y = mvm_bitserial(map_matrix(w, {}), x, {}, mode, &stats);
        EXPECT_EQ(stats.partial_sum_saturations, 0u);
        EXPECT_EQ(stats.accumulator_saturations, 0u);
        EXPECT_EQ(y.cast<std::int64_t>(), oracle::sliced_mvm(w, x, mode));
    }
}

TEST(Mvm, DoublingDecodedValuesDoublesOutput) {
    Rng rng(29);
    const LevelMatrix w = random_weights(rng, 64, 8);
    const LevelMatrix x = random_inputs(rng, 64, 2, 31);
    const TileMap map = map_matrix(w, {});
    // levels stay below 128, so a half-size LSB decodes every level to exactly twice its value
    const auto y1 = mvm_bitserial(map, x, {}, UniformAdc{8, 1.0});
    const auto y2 = mvm_bitserial(map, x, {}, UniformAdc{8, 0.5});
    EXPECT_EQ(y2, (y1.array() * 2).matrix());

    // the same ranges expressed with delta_r1 = 2 on a half grid decode identically
    TrqParams a;
    a.n_r1 = 3;
    a.n_r2 = 4;
    a.m = 2;
    TrqParams b = a;
    b.delta_r1 = 2;
    b.v_grid = 0.5;
    EXPECT_EQ(mvm_bitserial(map, x, {}, a), mvm_bitserial(map, x, {}, b));
}

TEST(Mvm, PartialSumSaturationIsFlagged) {
    const LevelMatrix w = LevelMatrix::Constant(128, 1, 127);
    const LevelMatrix x = LevelMatrix::Constant(128, 1, 255);
    CrossbarConfig cfg;
    cfg.partial_sum_width = 12;
    MvmStats stats;
    mvm_bitserial(map_matrix(w, cfg), x, cfg, UniformAdc{8, 1.0}, &stats);
    EXPECT_GT(stats.partial_sum_saturations, 0u);
}

TEST(Mvm, AccumulatorSaturationIsFlagged) {
    const LevelMatrix w = LevelMatrix::Constant(256, 1, 127);
    const LevelMatrix x = LevelMatrix::Constant(256, 1, 255);
    CrossbarConfig cfg;
    cfg.accumulator_width = 20;
    MvmStats stats;
    const auto y = mvm_bitserial(map_matrix(w, cfg), x, cfg, UniformAdc{8, 1.0}, &stats);
    EXPECT_GT(stats.accumulator_saturations, 0u);
    EXPECT_EQ(y(0, 0), (1 << 19) - 1);
}

TEST(Mvm, RejectsBadActivations) {
    const LevelMatrix w = LevelMatrix::Ones(4, 1);
    EXPECT_THROW(mvm_bitserial(map_matrix(w, {}), LevelMatrix(LevelMatrix::Constant(4, 1, 256)), {}, UniformAdc{}), ValidationError);
    EXPECT_THROW(mvm_bitserial(map_matrix(w, {}), LevelMatrix(LevelMatrix::Constant(3, 1, 1)), {}, UniformAdc{}), ValidationError);
}

TEST(Forward, OneByOneIdentityConv) {
    LayerSpec l = conv(1, 1, 1);
    l.weights = std::make_shared<Tensor>(make_tensor<std::int8_t>({1, 1, 1, 1}, {1}));
    l.input_shape = {1, 2, 3};
    const auto in = volume({1, 2, 3}, {0, 5, 255, 7, 1, 9});
    const auto out = forward_layer(l, map_layer(l, {}), in, {}, UniformAdc{8, 1.0});
    EXPECT_EQ(out.shape, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(out.values, in.values);
}

TEST(Forward, SignedInputIsCompensated) {
    Rng rng(31);
    LayerSpec l;
    l.kind = LayerKind::Fc;
    l.in_channels = 50;
    l.out_channels = 7;
    l.signed_input = true;
    std::vector<std::int8_t> wv(350);
    for (auto& v : wv) {
        v = static_cast<std::int8_t>(static_cast<int>(rng.below(256)) - 128);
    }
    l.weights = std::make_shared<Tensor>(make_tensor<std::int8_t>({7, 50}, wv));
    FeatureMap in;
    in.shape = {50};
    in.values.resize(50);
    for (auto& v : in.values) {
        v = static_cast<std::int32_t>(rng.below(256)) - 128;
    }
    const auto out = forward_layer(l, map_layer(l, {}), in, {}, UniformAdc{8, 1.0});
    const auto expect = oracle::direct_mvm(weight_matrix(l), in.values);
    EXPECT_EQ(out.values.cast<std::int64_t>(), expect.col(0));
}

TEST(BlDump, RoundTrip) {
    std::stringstream ss;
    write_bl_header(ss);
    const std::vector<BlRecord> recs = {{0, 5, 12}, {3, 1000, 128}};
    for (const auto& r : recs) {
        write_bl_record(ss, r);
    }
    EXPECT_EQ(ss.str().size(), 5u + 2 * 10);
    EXPECT_EQ(read_bl_dump(ss), recs);
    std::stringstream bad("XXXX\x01");
    EXPECT_THROW(read_bl_dump(bad), ValidationError);
}
