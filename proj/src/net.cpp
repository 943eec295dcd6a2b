#include "trqsim/net.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace trq {

const AdcMode& InferenceConfig::mode_for(int layer) const {
    const auto it = layers.find(layer);
    return it == layers.end() ? default_mode : it->second;
}

InferenceConfig lossless_config(int r_adc) {
    InferenceConfig cfg;
    cfg.default_mode = UniformAdc{r_adc, 1.0};
    return cfg;
}

void validate(const InferenceConfig& cfg, const NetworkGraph& graph, int r_adc) {
    for (const auto& [layer, mode] : cfg.layers) {
        require(layer >= 0 && layer < static_cast<int>(graph.layers.size()) && graph.layers[layer].is_mvm(),
                "config refers to layer " + std::to_string(layer) + ", which is not a conv/fc layer of the model");
        validate(mode, r_adc);
    }
    validate(cfg.default_mode, r_adc);
}

PreparedNetwork prepare(NetworkGraph graph, const CrossbarConfig& xbar) {
    validate(graph);
    PreparedNetwork net;
    net.xbar = xbar;
    net.tiles.resize(graph.layers.size());
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        if (graph.layers[i].is_mvm()) {
            net.tiles[i] = map_layer(graph.layers[i], xbar);
        }
    }
    net.graph = std::move(graph);
    return net;
}

FeatureMap requantize(const FeatureMap& fm, double step, bool is_signed) {
    const std::int64_t lo = is_signed ? -128 : 0;
    const std::int64_t hi = is_signed ? 127 : 255;
    FeatureMap out;
    out.shape = fm.shape;
    out.scale = step;
    out.values.resize(fm.values.size());
    for (Eigen::Index i = 0; i < fm.values.size(); ++i) {
        const std::int64_t q = round_half_up(static_cast<double>(fm.values[i]) * fm.scale / step);
        out.values[i] = static_cast<std::int32_t>(std::clamp(q, lo, hi));
    }
    return out;
}

FeatureMap quantize_input(const NetworkGraph& graph, std::span<const double> input) {
    std::size_t expect = 1;
    for (int d : graph.input_shape) {
        expect *= static_cast<std::size_t>(d);
    }
    require(input.size() == expect, "input has " + std::to_string(input.size()) + " values, model expects " +
                                        std::to_string(expect));
    double step = 1.0;
    bool is_signed = false;
    for (const auto& L : graph.layers) {
        if (L.is_mvm()) {
            step = L.input_scale;
            is_signed = L.signed_input;
            break;
        }
    }
    FeatureMap out;
    out.shape = graph.input_shape;
    out.scale = step;
    out.values.resize(static_cast<Eigen::Index>(input.size()));
    const std::int64_t lo = is_signed ? -128 : 0;
    const std::int64_t hi = is_signed ? 127 : 255;
    for (std::size_t i = 0; i < input.size(); ++i) {
        out.values[static_cast<Eigen::Index>(i)] =
            static_cast<std::int32_t>(std::clamp(round_half_up(input[i] / step), lo, hi));
    }
    return out;
}

FeatureMap relu(const FeatureMap& fm) {
    FeatureMap out = fm;
    out.values = fm.values.cwiseMax(0);
    return out;
}

FeatureMap pool(const FeatureMap& fm, const LayerSpec& layer) {
    require(fm.shape.size() == 3, "pool: expects a (C, H, W) input");
    const int c_n = fm.shape[0];
    const int h = fm.shape[1];
    const int w = fm.shape[2];
    const int k = layer.kernel;
    const int s = layer.stride;
    const int oh = (h - k) / s + 1;
    const int ow = (w - k) / s + 1;
    const bool is_max = layer.kind == LayerKind::MaxPool;
    FeatureMap out;
    out.shape = {c_n, oh, ow};
    out.scale = is_max ? fm.scale : fm.scale / (k * k);
    out.values.resize(static_cast<Eigen::Index>(c_n) * oh * ow);
    for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                std::int64_t agg = is_max ? std::numeric_limits<std::int64_t>::min() : 0;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const std::int64_t v = fm.values[(c * h + y * s + ky) * w + x * s + kx];
                        agg = is_max ? std::max(agg, v) : agg + v;
                    }
                }
                out.values[(c * oh + y) * ow + x] = static_cast<std::int32_t>(agg);
            }
        }
    }
    return out;
}

FeatureMap flatten(const FeatureMap& fm) {
    FeatureMap out = fm;
    out.shape = {static_cast<int>(fm.values.size())};
    return out;
}

Tensor run_inference(const PreparedNetwork& net, std::span<const double> input, const InferenceConfig& cfg,
                     InferenceStats* stats, const LayerBlSink* sink) {
    const auto& graph = net.graph;
    FeatureMap x = quantize_input(graph, input);
    bool on_grid = true;  // x already sits on the next weighted layer's input grid
    for (std::size_t li = 0; li < graph.layers.size(); ++li) {
        const auto& L = graph.layers[li];
        switch (L.kind) {
            case LayerKind::Conv2d:
            case LayerKind::Fc: {
                if (!on_grid) {
                    x = requantize(x, L.input_scale, L.signed_input);
                }
                MvmStats* ls = stats ? &(*stats)[static_cast<int>(li)] : nullptr;
                BlSink layer_sink;
                if (sink) {
                    layer_sink = [&, li](const BlSample& s) { (*sink)(static_cast<int>(li), s); };
                }
                x = forward_layer(L, net.tiles[li], x, net.xbar, cfg.mode_for(static_cast<int>(li)), ls,
                                  sink ? &layer_sink : nullptr);
                on_grid = false;
                break;
            }
            case LayerKind::Relu:
                x = relu(x);
                break;
            case LayerKind::MaxPool:
                x = pool(x, L);
                break;
            case LayerKind::AvgPool:
                x = pool(x, L);
                on_grid = false;
                break;
            case LayerKind::Flatten:
                x = flatten(x);
                break;
        }
    }
    std::vector<float> logits(static_cast<std::size_t>(x.values.size()));
    for (Eigen::Index i = 0; i < x.values.size(); ++i) {
        logits[static_cast<std::size_t>(i)] = static_cast<float>(x.values[i] * x.scale);
    }
    std::vector<std::uint32_t> shape(x.shape.begin(), x.shape.end());
    return make_tensor(std::move(shape), std::move(logits));
}

Tensor run_inference(const NetworkGraph& graph, std::span<const double> input, const InferenceConfig& cfg) {
    return run_inference(prepare(graph), input, cfg);
}

int argmax(const Tensor& logits) {
    require(logits.size() > 0, "argmax: empty logits");
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits.value(i) > logits.value(static_cast<std::size_t>(best))) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

double evaluate_accuracy(const PreparedNetwork& net, const Dataset& data, const InferenceConfig& cfg,
                         InferenceStats* stats) {
    validate(data);
    require(data.size() > 0, "evaluate_accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.sample(i);
        if (argmax(run_inference(net, x, cfg, stats)) == data.labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace trq
