#pragma once

#include "trqsim/sar.hpp"
#include "trqsim/tensorio.hpp"
#include "trqsim/xbar.hpp"

#include <functional>
#include <map>
#include <span>
#include <vector>

namespace trq {

/// ADC register setting per weighted layer; unlisted layers use default_mode.
struct InferenceConfig {
    std::map<int, AdcMode> layers;
    AdcMode default_mode = UniformAdc{8, 1.0};

    const AdcMode& mode_for(int layer) const;
    bool operator==(const InferenceConfig&) const = default;
};

/// Uniform r_adc-bit conversion with a one-level LSB: lossless at S = 2^(r_adc - 1).
InferenceConfig lossless_config(int r_adc = 8);

void validate(const InferenceConfig& cfg, const NetworkGraph& graph, int r_adc);

/// Graph with every weighted layer already mapped onto crossbar tiles.
struct PreparedNetwork {
    NetworkGraph graph;
    CrossbarConfig xbar;
    std::vector<TileMap> tiles;  ///< indexed by layer; empty for unweighted layers
};

PreparedNetwork prepare(NetworkGraph graph, const CrossbarConfig& xbar = {});

/// Per weighted layer counters gathered while running inference.
using InferenceStats = std::map<int, MvmStats>;

using LayerBlSink = std::function<void(int layer, const BlSample&)>;

/// Requantizes integer levels with `fm.scale` onto an 8-bit grid of step `step`.
FeatureMap requantize(const FeatureMap& fm, double step, bool is_signed);

/// Quantizes a real-valued network input onto the first weighted layer's grid.
FeatureMap quantize_input(const NetworkGraph& graph, std::span<const double> input);

Tensor run_inference(const PreparedNetwork& net, std::span<const double> input, const InferenceConfig& cfg,
                     InferenceStats* stats = nullptr, const LayerBlSink* sink = nullptr);
Tensor run_inference(const NetworkGraph& graph, std::span<const double> input, const InferenceConfig& cfg);

/// Index of the largest logit; ties resolve to the lowest index.
int argmax(const Tensor& logits);

double evaluate_accuracy(const PreparedNetwork& net, const Dataset& data, const InferenceConfig& cfg,
                         InferenceStats* stats = nullptr);

// Layer primitives on integer levels, shared with the reference executor in tests.
FeatureMap relu(const FeatureMap& fm);
FeatureMap pool(const FeatureMap& fm, const LayerSpec& layer);
FeatureMap flatten(const FeatureMap& fm);

}  // namespace trq
