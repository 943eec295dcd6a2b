#include "support/fixtures.hpp"
#include "trqsim/tensorio.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace trq;
namespace fs = std::filesystem;

namespace {

std::vector<std::byte> bytes(std::initializer_list<int> v) {
    std::vector<std::byte> out;
    for (int b : v) {
        out.push_back(static_cast<std::byte>(b));
    }
    return out;
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

Tensor i8(std::vector<std::uint32_t> shape, std::vector<std::int8_t> v) {
    return make_tensor(std::move(shape), std::move(v));
}

// 784 -> 64 -> 10 with zero weights
fs::path write_mlp(const fs::path& dir, int fc2_in = 64) {
    save_tensor(i8({64, 784}, std::vector<std::int8_t>(64 * 784, 0)), dir / "fc1.trqt");
    save_tensor(i8({10, static_cast<std::uint32_t>(fc2_in)}, std::vector<std::int8_t>(10 * fc2_in, 0)),
                dir / "fc2.trqt");
    const std::string manifest = R"({
  "name": "mlp", "input_shape": [784],
  "layers": [
    {"kind": "fc", "name": "fc1", "in_features": 784, "out_features": 64, "weights": "fc1.trqt",
     "weight_scale": 0.01, "input_scale": 0.0039},
    {"kind": "relu"},
    {"kind": "fc", "name": "fc2", "in_features": )" + std::to_string(fc2_in) + R"(, "out_features": 10,
     "weights": "fc2.trqt", "weight_scale": 0.01, "input_scale": 0.1}
  ]
})";
    write_file(dir / "model.json", manifest);
    return dir / "model.json";
}

}  // namespace

TEST(TensorCodec, DecodesTwoByTwoInt8) {
    const auto b = bytes({'T', 'R', 'Q', 'T', 1, 1, 2, 2, 0, 0, 0, 2, 0, 0, 0, 1, 2, 3, 4});
    const Tensor t = decode_tensor(b);
    EXPECT_EQ(t.dtype(), DType::I8);
    EXPECT_EQ(t.shape, (std::vector<std::uint32_t>{2, 2}));
    EXPECT_EQ(t.as<std::int8_t>(), (std::vector<std::int8_t>{1, 2, 3, 4}));
}

TEST(TensorCodec, RejectsTruncatedPayload) {
    const auto b = bytes({'T', 'R', 'Q', 'T', 1, 1, 2, 2, 0, 0, 0, 2, 0, 0, 0, 1, 2, 3});
    try {
        decode_tensor(b);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
}

TEST(TensorCodec, RejectsTrailingBytes) {
    const auto b = bytes({'T', 'R', 'Q', 'T', 1, 1, 1, 1, 0, 0, 0, 7, 8});
    EXPECT_THROW(decode_tensor(b), ValidationError);
}

TEST(TensorCodec, ScalarHasRankZero) {
    const auto b = bytes({'T', 'R', 'Q', 'T', 1, 2, 0, 42, 0, 0, 0});
    const Tensor t = decode_tensor(b);
    EXPECT_TRUE(t.shape.empty());
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t.as<std::int32_t>()[0], 42);
}

TEST(TensorCodec, RejectsUnknownDtypeAndBadMagic) {
    EXPECT_THROW(decode_tensor(bytes({'T', 'R', 'Q', 'T', 1, 9, 0, 0})), ValidationError);
    EXPECT_THROW(decode_tensor(bytes({'X', 'R', 'Q', 'T', 1, 1, 0, 0})), ValidationError);
    EXPECT_THROW(decode_tensor(bytes({'T', 'R', 'Q', 'T', 2, 1, 0, 0})), ValidationError);
    EXPECT_THROW(decode_tensor(bytes({'T', 'R', 'Q'})), ValidationError);
}

TEST(TensorCodec, RoundTripsEveryDtype) {
    const std::vector<Tensor> ts = {i8({3}, {-128, 0, 127}),
                                    make_tensor<std::int32_t>({2, 1}, {-7, 1 << 30}),
                                    make_tensor<float>({1, 2, 2}, {0.5f, -1.25f, 3.0f, 1e-7f})};
    for (const auto& t : ts) {
        const Tensor back = decode_tensor(encode_tensor(t));
        EXPECT_EQ(back.shape, t.shape);
        EXPECT_EQ(back.data, t.data);
    }
}

TEST(TensorCodec, FileErrorsAreIoErrors) {
    const auto dir = support::scratch("tensorio_files");
    EXPECT_THROW(load_tensor(dir / "missing.trqt"), IoError);
    EXPECT_THROW(save_tensor(i8({1}, {1}), dir / "no" / "such" / "dir" / "t.trqt"), IoError);
    // parent is a regular file: not writable even for root
    write_file(dir / "plain", "x");
    EXPECT_THROW(write_text(dir / "plain" / "out.json", "{}"), IoError);
}

TEST(Model, LoadsMlpManifest) {
    const auto dir = support::scratch("tensorio_mlp");
    const NetworkGraph g = load_model(write_mlp(dir));
    ASSERT_EQ(g.layers.size(), 3u);
    EXPECT_EQ(g.layers[0].kind, LayerKind::Fc);
    EXPECT_EQ(g.layers[1].kind, LayerKind::Relu);
    EXPECT_EQ(g.layers[2].kind, LayerKind::Fc);
    EXPECT_EQ(g.layers[2].output_shape, std::vector<int>{10});
    EXPECT_EQ(g.mvm_layers(), (std::vector<int>{0, 2}));
}

TEST(Model, ShapeMismatchIsReported) {
    const auto dir = support::scratch("tensorio_mismatch");
    try {
        load_model(write_mlp(dir, 100));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos) << e.what();
    }
}

TEST(Model, LenetStructureLoads) {
    const auto dir = support::scratch("tensorio_lenet");
    save_tensor(i8({6, 1, 5, 5}, std::vector<std::int8_t>(150, 1)), dir / "c1.trqt");
    save_tensor(i8({16, 6, 5, 5}, std::vector<std::int8_t>(2400, 1)), dir / "c2.trqt");
    save_tensor(i8({120, 256}, std::vector<std::int8_t>(120 * 256, 1)), dir / "f1.trqt");
    save_tensor(i8({84, 120}, std::vector<std::int8_t>(84 * 120, 1)), dir / "f2.trqt");
    save_tensor(i8({10, 84}, std::vector<std::int8_t>(840, 1)), dir / "f3.trqt");
    write_file(dir / "m.json", R"({"input_shape": [1, 28, 28], "layers": [
      {"kind": "conv2d", "in_channels": 1, "out_channels": 6, "kernel": 5, "weights": "c1.trqt", "weight_scale": 1, "input_scale": 1},
      {"kind": "relu"}, {"kind": "maxpool", "kernel": 2},
      {"kind": "conv2d", "in_channels": 6, "out_channels": 16, "kernel": 5, "weights": "c2.trqt", "weight_scale": 1, "input_scale": 1},
      {"kind": "maxpool", "kernel": 2}, {"kind": "flatten"},
      {"kind": "fc", "in_features": 256, "out_features": 120, "weights": "f1.trqt", "weight_scale": 1, "input_scale": 1},
      {"kind": "fc", "in_features": 120, "out_features": 84, "weights": "f2.trqt", "weight_scale": 1, "input_scale": 1},
      {"kind": "relu"},
      {"kind": "fc", "in_features": 84, "out_features": 10, "weights": "f3.trqt", "weight_scale": 1, "input_scale": 1}]})");
    const NetworkGraph g = load_model(dir / "m.json");
    EXPECT_EQ(g.layers.size(), 10u);
    EXPECT_EQ(g.layers[3].input_shape, (std::vector<int>{6, 12, 12}));
    EXPECT_EQ(g.layers[5].output_shape, std::vector<int>{256});
}

TEST(Model, TypedErrors) {
    const auto dir = support::scratch("tensorio_errors");
    EXPECT_THROW(load_model(dir / "absent.json"), IoError);
    write_file(dir / "bad.json", "{ not json");
    EXPECT_THROW(load_model(dir / "bad.json"), ValidationError);
    write_file(dir / "kind.json", R"({"input_shape": [4], "layers": [{"kind": "batchnorm"}]})");
    try {
        load_model(dir / "kind.json");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported layer kind"), std::string::npos);
    }
    write_file(dir / "noweights.json", R"({"input_shape": [4], "layers": [
      {"kind": "fc", "in_features": 4, "out_features": 2, "weights": "gone.trqt", "weight_scale": 1, "input_scale": 1}]})");
    EXPECT_THROW(load_model(dir / "noweights.json"), IoError);
    save_tensor(make_tensor<float>({2, 4}, std::vector<float>(8, 0.f)), dir / "f.trqt");
    write_file(dir / "dtype.json", R"({"input_shape": [4], "layers": [
      {"kind": "fc", "in_features": 4, "out_features": 2, "weights": "f.trqt", "weight_scale": 1, "input_scale": 1}]})");
    EXPECT_THROW(load_model(dir / "dtype.json"), ValidationError);
    write_file(dir / "rank.json", R"({"input_shape": [1, 2, 2], "layers": [
      {"kind": "fc", "in_features": 4, "out_features": 2, "weights": "f.trqt", "weight_scale": 1, "input_scale": 1}]})");
    EXPECT_THROW(load_model(dir / "rank.json"), ValidationError);
}

TEST(Model, SaveLoadRoundTrip) {
    const auto dir = support::scratch("tensorio_roundtrip");
    const NetworkGraph g = load_model(write_mlp(dir));
    const auto out = support::scratch("tensorio_roundtrip_out");
    save_model(g, out / "model.json");
    const NetworkGraph h = load_model(out / "model.json");
    ASSERT_EQ(h.layers.size(), g.layers.size());
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        EXPECT_EQ(h.layers[i].kind, g.layers[i].kind);
        EXPECT_EQ(h.layers[i].output_shape, g.layers[i].output_shape);
        EXPECT_EQ(h.layers[i].weight_scale, g.layers[i].weight_scale);
        if (g.layers[i].weights) {
            EXPECT_EQ(h.layers[i].weights->data, g.layers[i].weights->data);
        }
    }
    EXPECT_EQ(read_text(out / "model.json"), read_text(out / "model.json"));
}

TEST(Dataset, RoundTripAndValidation) {
    const auto dir = support::scratch("tensorio_dataset");
    Dataset d;
    d.inputs = make_tensor<float>({3, 2}, {0.f, 1.f, 2.f, 3.f, 4.f, 5.f});
    d.labels = {1, 0, 2};
    save_dataset(d, dir / "set.json");
    const Dataset e = load_dataset(dir / "set.json");
    EXPECT_EQ(e.labels, d.labels);
    EXPECT_EQ(e.inputs.data, d.inputs.data);
    EXPECT_EQ(e.sample(2), (std::vector<double>{4.0, 5.0}));
    const std::vector<std::size_t> idx = {2, 0};
    const Dataset s = d.subset(idx);
    EXPECT_EQ(s.labels, (std::vector<int>{2, 1}));

    d.labels.pop_back();
    EXPECT_THROW(validate(d), ValidationError);
    EXPECT_THROW(load_dataset(dir / "nothing.json"), IoError);
}
