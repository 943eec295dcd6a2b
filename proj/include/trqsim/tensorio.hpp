#pragma once

#include "trqsim/common.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace trq {

enum class DType : std::uint8_t { I8 = 1, I32 = 2, F32 = 3 };

const char* dtype_name(DType t);
std::size_t dtype_size(DType t);

/// Row-major tensor. Rank 0 holds exactly one element.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::variant<std::vector<std::int8_t>, std::vector<std::int32_t>, std::vector<float>> data;

    DType dtype() const;
    std::size_t size() const;
    double value(std::size_t i) const;

    template <typename T>
    const std::vector<T>& as() const {
        return std::get<std::vector<T>>(data);
    }

    bool operator==(const Tensor&) const = default;
};

std::size_t element_count(std::span<const std::uint32_t> shape);

/// Checks shape/payload agreement before wrapping the buffer.
template <typename T>
Tensor make_tensor(std::vector<std::uint32_t> shape, std::vector<T> values) {
    require(element_count(shape) == values.size(), "tensor: shape does not match element count");
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

// Binary layout (little endian):
//   "TRQT" | version u8 (=1) | dtype u8 | rank u8 | rank x u32 dims | payload
std::vector<std::byte> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::byte> bytes);
Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& t, const std::filesystem::path& path);

enum class LayerKind { Conv2d, Fc, Relu, MaxPool, AvgPool, Flatten };

const char* layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::string name;
    int in_channels = 0;    ///< fc: input features
    int out_channels = 0;   ///< fc: output features
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    std::string weight_file;
    std::shared_ptr<const Tensor> weights;  ///< i8, (out, in) or (out, in, k, k)
    double weight_scale = 1.0;              ///< step of the 8-bit weight grid
    double input_scale = 1.0;               ///< step of the 8-bit activation grid feeding this layer
    bool signed_input = false;              ///< activations quantized to [-128, 127]
    std::vector<int> input_shape;
    std::vector<int> output_shape;

    bool is_mvm() const { return kind == LayerKind::Conv2d || kind == LayerKind::Fc; }
    /// Rows of the flattened weight matrix (fan-in).
    int fan_in() const { return kind == LayerKind::Conv2d ? in_channels * kernel * kernel : in_channels; }
};

struct NetworkGraph {
    std::string name;
    std::vector<int> input_shape;
    std::vector<LayerSpec> layers;
    int weight_bits = 8;
    int activation_bits = 8;

    std::vector<int> mvm_layers() const;
};

/// Propagates shapes and checks every layer invariant. Throws ValidationError.
void validate(NetworkGraph& graph);

NetworkGraph load_model(const std::filesystem::path& manifest_path);
/// Writes the manifest plus one tensor file per weighted layer (named after weight_file).
void save_model(const NetworkGraph& graph, const std::filesystem::path& manifest_path);

struct Dataset {
    Tensor inputs;            ///< batch-major
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::vector<int> sample_shape() const;
    std::vector<double> sample(std::size_t i) const;
    Dataset subset(std::span<const std::size_t> indices) const;
};

void validate(const Dataset& d);

// Dataset descriptor: {"inputs": "<tensor file>", "labels": "<tensor file>"}.
Dataset load_dataset(const std::filesystem::path& descriptor);
void save_dataset(const Dataset& d, const std::filesystem::path& descriptor);

std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file so a failed write never leaves a partial output.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace trq
