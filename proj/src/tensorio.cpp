#include "trqsim/tensorio.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace trq {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "tensor codec assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'T', 'R', 'Q', 'T'};
constexpr std::uint8_t kVersion = 1;

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += (i ? "," : "") + std::to_string(s[i]);
    }
    return out + "]";
}

template <typename T>
void append(std::vector<std::byte>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
std::vector<T> read_payload(std::span<const std::byte> bytes, std::size_t n) {
    std::vector<T> v(n);
    if (n) {
        std::memcpy(v.data(), bytes.data(), n * sizeof(T));
    }
    return v;
}

}  // namespace

const char* dtype_name(DType t) {
    switch (t) {
        case DType::I8: return "i8";
        case DType::I32: return "i32";
        case DType::F32: return "f32";
    }
    return "?";
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::I8: return 1;
        case DType::I32: return 4;
        case DType::F32: return 4;
    }
    return 0;
}

std::size_t element_count(std::span<const std::uint32_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

DType Tensor::dtype() const {
    switch (data.index()) {
        case 0: return DType::I8;
        case 1: return DType::I32;
        default: return DType::F32;
    }
}

std::size_t Tensor::size() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
}

double Tensor::value(std::size_t i) const {
    return std::visit([i](const auto& v) { return static_cast<double>(v[i]); }, data);
}

std::vector<std::byte> encode_tensor(const Tensor& t) {
    require(t.shape.size() <= 255, "tensor: rank exceeds 255");
    require(element_count(t.shape) == t.size(), "tensor: shape does not match element count");
    std::vector<std::byte> out;
    for (char c : kMagic) {
        out.push_back(static_cast<std::byte>(c));
    }
    out.push_back(static_cast<std::byte>(kVersion));
    out.push_back(static_cast<std::byte>(t.dtype()));
    out.push_back(static_cast<std::byte>(t.shape.size()));
    for (auto d : t.shape) {
        append(out, d);
    }
    std::visit(
        [&](const auto& v) {
            const auto* p = reinterpret_cast<const std::byte*>(v.data());
            out.insert(out.end(), p, p + v.size() * sizeof(v[0]));
        },
        t.data);
    return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes) {
    constexpr std::size_t fixed = 7;
    require(bytes.size() >= fixed, "tensor: truncated header");
    for (std::size_t i = 0; i < kMagic.size(); ++i) {
        require(static_cast<char>(bytes[i]) == kMagic[i], "tensor: bad magic");
    }
    require(static_cast<std::uint8_t>(bytes[4]) == kVersion, "tensor: unsupported version");
    const auto tag = static_cast<std::uint8_t>(bytes[5]);
    require(tag >= 1 && tag <= 3, "tensor: unknown dtype tag " + std::to_string(tag));
    const auto dtype = static_cast<DType>(tag);
    const std::size_t rank = static_cast<std::uint8_t>(bytes[6]);
    require(bytes.size() >= fixed + 4 * rank, "tensor: truncated dims");

    Tensor t;
    t.shape.resize(rank);
    std::memcpy(t.shape.data(), bytes.data() + fixed, 4 * rank);
    const std::size_t n = element_count(t.shape);
    const auto payload = bytes.subspan(fixed + 4 * rank);
    require(payload.size() == n * dtype_size(dtype),
            "tensor: payload holds " + std::to_string(payload.size()) + " bytes, header declares " +
                std::to_string(n * dtype_size(dtype)) + (payload.size() < n * dtype_size(dtype)
                                                             ? " (truncated)"
                                                             : " (trailing bytes)"));
    switch (dtype) {
        case DType::I8: t.data = read_payload<std::int8_t>(payload, n); break;
        case DType::I32: t.data = read_payload<std::int32_t>(payload, n); break;
        case DType::F32: t.data = read_payload<float>(payload, n); break;
    }
    return t;
}

Tensor load_tensor(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open tensor file " + path.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_tensor(std::as_bytes(std::span(raw)));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_tensor(const Tensor& t, const fs::path& path) {
    const auto bytes = encode_tensor(t);
    write_text(path, std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) {
            throw IoError("write failed for " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move output into place: " + path.string());
    }
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Fc: return "fc";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::Conv2d, LayerKind::Fc, LayerKind::Relu, LayerKind::MaxPool,
                   LayerKind::AvgPool, LayerKind::Flatten}) {
        if (s == layer_kind_name(k)) {
            return k;
        }
    }
    throw ValidationError("unsupported layer kind '" + s + "'");
}

std::vector<int> NetworkGraph::mvm_layers() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].is_mvm()) {
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

void validate(NetworkGraph& graph) {
    require(graph.weight_bits == 8 && graph.activation_bits == 8,
            "model: only 8-bit weights and activations are supported");
    require(graph.input_shape.size() == 1 || graph.input_shape.size() == 3,
            "model input must be rank 1 (features) or rank 3 (C, H, W)");
    for (int d : graph.input_shape) {
        require(d > 0, "model input dimensions must be positive");
    }
    require(!graph.layers.empty(), "model has no layers");

    std::vector<int> shape = graph.input_shape;
    for (std::size_t li = 0; li < graph.layers.size(); ++li) {
        auto& L = graph.layers[li];
        const std::string ctx = "layer " + std::to_string(li) + " (" + layer_kind_name(L.kind) + "): ";
        L.input_shape = shape;
        switch (L.kind) {
            case LayerKind::Conv2d: {
                require(shape.size() == 3, ctx + "expects a (C, H, W) input, got " + shape_str(shape));
                require(L.in_channels == shape[0],
                        ctx + "shape mismatch: in_channels " + std::to_string(L.in_channels) +
                            " vs input " + shape_str(shape));
                require(L.out_channels > 0 && L.kernel > 0 && L.stride > 0 && L.padding >= 0,
                        ctx + "invalid hyperparameters");
                const int h = (shape[1] + 2 * L.padding - L.kernel) / L.stride + 1;
                const int w = (shape[2] + 2 * L.padding - L.kernel) / L.stride + 1;
                require(shape[1] + 2 * L.padding >= L.kernel && shape[2] + 2 * L.padding >= L.kernel,
                        ctx + "kernel larger than padded input");
                shape = {L.out_channels, h, w};
                break;
            }
            case LayerKind::Fc:
                require(shape.size() == 1, ctx + "expects a flat input, got " + shape_str(shape));
                require(L.in_channels == shape[0],
                        ctx + "shape mismatch: in_features " + std::to_string(L.in_channels) +
                            " vs input length " + std::to_string(shape[0]));
                require(L.out_channels > 0, ctx + "out_features must be positive");
                shape = {L.out_channels};
                break;
            case LayerKind::Relu:
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                require(shape.size() == 3, ctx + "expects a (C, H, W) input");
                require(L.kernel > 0 && L.stride > 0 && shape[1] >= L.kernel && shape[2] >= L.kernel,
                        ctx + "invalid pooling window");
                shape = {shape[0], (shape[1] - L.kernel) / L.stride + 1, (shape[2] - L.kernel) / L.stride + 1};
                break;
            case LayerKind::Flatten:
                shape = {shape.size() == 3 ? shape[0] * shape[1] * shape[2] : shape[0]};
                break;
        }
        L.output_shape = shape;

        if (L.is_mvm()) {
            require(L.weights != nullptr, ctx + "missing weight tensor");
            require(L.weights->dtype() == DType::I8, ctx + "weights must be signed 8-bit");
            std::vector<std::uint32_t> want;
            if (L.kind == LayerKind::Fc) {
                want = {static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(L.in_channels)};
            } else {
                want = {static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(L.in_channels),
                        static_cast<std::uint32_t>(L.kernel), static_cast<std::uint32_t>(L.kernel)};
            }
            if (L.weights->shape != want) {
                std::vector<int> got(L.weights->shape.begin(), L.weights->shape.end());
                std::vector<int> exp(want.begin(), want.end());
                throw ValidationError(ctx + "shape mismatch: weight tensor " + shape_str(got) +
                                      ", layer expects " + shape_str(exp));
            }
            require(L.weight_scale > 0.0 && L.input_scale > 0.0, ctx + "scales must be positive");
        }
    }
}

NetworkGraph load_model(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) {
        throw IoError("model manifest not found: " + manifest_path.string());
    }
    json doc;
    try {
        doc = json::parse(read_text(manifest_path));
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    const fs::path base = manifest_path.parent_path();

    NetworkGraph g;
    try {
        require(doc.is_object(), "manifest root must be an object");
        g.name = doc.value("name", std::string{});
        g.input_shape = doc.at("input_shape").get<std::vector<int>>();
        g.weight_bits = doc.value("weight_bits", 8);
        g.activation_bits = doc.value("activation_bits", 8);
        for (const auto& jl : doc.at("layers")) {
            LayerSpec L;
            L.kind = parse_layer_kind(jl.at("kind").get<std::string>());
            L.name = jl.value("name", std::string{});
            switch (L.kind) {
                case LayerKind::Conv2d:
                    L.in_channels = jl.at("in_channels").get<int>();
                    L.out_channels = jl.at("out_channels").get<int>();
                    L.kernel = jl.at("kernel").get<int>();
                    L.stride = jl.value("stride", 1);
                    L.padding = jl.value("padding", 0);
                    break;
                case LayerKind::Fc:
                    L.in_channels = jl.at("in_features").get<int>();
                    L.out_channels = jl.at("out_features").get<int>();
                    break;
                case LayerKind::MaxPool:
                case LayerKind::AvgPool:
                    L.kernel = jl.at("kernel").get<int>();
                    L.stride = jl.value("stride", L.kernel);
                    break;
                default:
                    break;
            }
            if (L.is_mvm()) {
                L.weight_file = jl.at("weights").get<std::string>();
                L.weight_scale = jl.at("weight_scale").get<double>();
                L.input_scale = jl.at("input_scale").get<double>();
                L.signed_input = jl.value("signed_input", false);
                const fs::path wp = base / L.weight_file;
                if (!fs::exists(wp)) {
                    throw IoError("weight tensor not found: " + wp.string());
                }
                L.weights = std::make_shared<const Tensor>(load_tensor(wp));
            }
            g.layers.push_back(std::move(L));
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    validate(g);
    return g;
}

void save_model(const NetworkGraph& graph, const fs::path& manifest_path) {
    const fs::path base = manifest_path.parent_path();
    json doc;
    doc["name"] = graph.name;
    doc["input_shape"] = graph.input_shape;
    doc["weight_bits"] = graph.weight_bits;
    doc["activation_bits"] = graph.activation_bits;
    json layers = json::array();
    for (const auto& L : graph.layers) {
        json jl;
        jl["kind"] = layer_kind_name(L.kind);
        if (!L.name.empty()) {
            jl["name"] = L.name;
        }
        switch (L.kind) {
            case LayerKind::Conv2d:
                jl["in_channels"] = L.in_channels;
                jl["out_channels"] = L.out_channels;
                jl["kernel"] = L.kernel;
                jl["stride"] = L.stride;
                jl["padding"] = L.padding;
                break;
            case LayerKind::Fc:
                jl["in_features"] = L.in_channels;
                jl["out_features"] = L.out_channels;
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                jl["kernel"] = L.kernel;
                jl["stride"] = L.stride;
                break;
            default:
                break;
        }
        if (L.is_mvm()) {
            require(L.weights != nullptr && !L.weight_file.empty(), "save_model: weighted layer without tensor");
            jl["weights"] = L.weight_file;
            jl["weight_scale"] = L.weight_scale;
            jl["input_scale"] = L.input_scale;
            if (L.signed_input) {
                jl["signed_input"] = true;
            }
            save_tensor(*L.weights, base / L.weight_file);
        }
        layers.push_back(std::move(jl));
    }
    doc["layers"] = std::move(layers);
    write_text(manifest_path, doc.dump(2) + "\n");
}

std::vector<int> Dataset::sample_shape() const {
    return {inputs.shape.begin() + 1, inputs.shape.end()};
}

std::vector<double> Dataset::sample(std::size_t i) const {
    const std::size_t per = size() == 0 ? 0 : inputs.size() / size();
    std::vector<double> out(per);
    for (std::size_t j = 0; j < per; ++j) {
        out[j] = inputs.value(i * per + j);
    }
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    const std::size_t per = size() == 0 ? 0 : inputs.size() / size();
    std::vector<float> values;
    values.reserve(indices.size() * per);
    Dataset d;
    for (auto i : indices) {
        require(i < size(), "dataset: subset index out of range");
        for (std::size_t j = 0; j < per; ++j) {
            values.push_back(static_cast<float>(inputs.value(i * per + j)));
        }
        d.labels.push_back(labels[i]);
    }
    auto shape = inputs.shape;
    shape[0] = static_cast<std::uint32_t>(indices.size());
    d.inputs = make_tensor(std::move(shape), std::move(values));
    return d;
}

void validate(const Dataset& d) {
    require(!d.inputs.shape.empty(), "dataset: inputs need a batch dimension");
    require(d.inputs.shape[0] == d.labels.size(), "dataset: batch dimension does not match label count");
}

Dataset load_dataset(const fs::path& descriptor) {
    if (!fs::exists(descriptor)) {
        throw IoError("dataset descriptor not found: " + descriptor.string());
    }
    json doc;
    try {
        doc = json::parse(read_text(descriptor));
        Dataset d;
        const fs::path base = descriptor.parent_path();
        d.inputs = load_tensor(base / doc.at("inputs").get<std::string>());
        const Tensor labels = load_tensor(base / doc.at("labels").get<std::string>());
        require(labels.dtype() == DType::I32 && labels.shape.size() == 1, "dataset: labels must be a rank-1 i32 tensor");
        d.labels.assign(labels.as<std::int32_t>().begin(), labels.as<std::int32_t>().end());
        validate(d);
        return d;
    } catch (const json::exception& e) {
        throw ValidationError("malformed dataset descriptor " + descriptor.string() + ": " + e.what());
    }
}

void save_dataset(const Dataset& d, const fs::path& descriptor) {
    validate(d);
    const std::string stem = descriptor.stem().string();
    const fs::path base = descriptor.parent_path();
    save_tensor(d.inputs, base / (stem + "_inputs.trqt"));
    std::vector<std::int32_t> labels(d.labels.begin(), d.labels.end());
    const auto n = static_cast<std::uint32_t>(labels.size());
    save_tensor(make_tensor({n}, std::move(labels)),
                base / (stem + "_labels.trqt"));
    json doc;
    doc["inputs"] = stem + "_inputs.trqt";
    doc["labels"] = stem + "_labels.trqt";
    write_text(descriptor, doc.dump(2) + "\n");
}

}  // namespace trq
