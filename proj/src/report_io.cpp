#include "trqsim/report_io.hpp"

#include <json.hpp>

namespace trq {

using nlohmann::json;

namespace {

json profile_to(const DistributionProfile& p) {
    return {{"layer", p.layer},       {"count", p.count}, {"y_min", p.y_min},         {"y_max", p.y_max},
            {"mean", p.mean},         {"variance", p.variance}, {"mode", p.mode}, {"histogram", p.histogram}};
}

DistributionProfile profile_from(const json& j) {
    auto p = make_profile(j.at("histogram").get<std::vector<std::uint64_t>>(), j.at("layer").get<int>());
    require(p.count == j.at("count").get<std::uint64_t>(), "profile: count does not match the histogram");
    return p;
}

json mode_to(const AdcMode& mode) {
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        return {{"scheme", "uniform"}, {"bits", u->k}, {"lsb", u->lsb}};
    }
    const auto& p = std::get<TrqParams>(mode);
    return {{"scheme", "trq"},         {"n_r1", p.n_r1}, {"n_r2", p.n_r2}, {"delta_r1", p.delta_r1},
            {"delta_r2", p.delta_r2()}, {"m", p.m},       {"bias", p.bias}, {"v_grid", p.v_grid}};
}

AdcMode mode_from(const json& j) {
    const auto scheme = j.at("scheme").get<std::string>();
    if (scheme == "uniform") {
        return UniformAdc{j.at("bits").get<int>(), j.at("lsb").get<double>()};
    }
    require(scheme == "trq", "unknown scheme '" + scheme + "'");
    TrqParams p;
    p.n_r1 = j.at("n_r1").get<int>();
    p.n_r2 = j.at("n_r2").get<int>();
    p.delta_r1 = j.at("delta_r1").get<std::int64_t>();
    p.m = j.at("m").get<int>();
    p.bias = j.at("bias").get<std::int64_t>();
    p.v_grid = j.at("v_grid").get<double>();
    require(p.m >= 0 && p.m < 32, "trq: m out of range");
    if (j.contains("delta_r2")) {
        require(j.at("delta_r2").get<std::int64_t>() == p.delta_r2(), "trq: delta_r2 != delta_r1 * 2^m");
    }
    return p;
}

template <class F>
auto guarded(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ValidationError(what + ": " + e.what());
    }
}

}  // namespace

std::string profile_json(const DistributionProfile& p) { return profile_to(p).dump(2) + "\n"; }

DistributionProfile parse_profile(const std::string& text) {
    return guarded("profile", [&] { return profile_from(json::parse(text)); });
}

std::string mode_json(const AdcMode& mode) { return mode_to(mode).dump(2) + "\n"; }

AdcMode parse_mode(const std::string& text) {
    return guarded("adc mode", [&] { return mode_from(json::parse(text)); });
}

std::string calibration_json(const CalibrationResult& r) {
    json layers = json::array();
    for (const auto& l : r.layers) {
        json e = mode_to(l.mode);
        e["layer"] = l.layer;
        e["name"] = l.name;
        e["class"] = class_name(l.cls);
        e["mse"] = l.mse;
        e["expected_ops"] = l.expected_ops;
        e["conversions"] = l.conversions;
        layers.push_back(e);
    }
    json profiles = json::array();
    for (const auto& [layer, p] : r.profiles) {
        profiles.push_back(profile_to(p));
    }
    const json j = {{"r_adc", r.r_adc},
                    {"acc_threshold", r.acc_threshold},
                    {"n_max", r.n_max},
                    {"baseline_accuracy", r.baseline_accuracy},
                    {"accuracy", r.accuracy},
                    {"warning", r.warning},
                    {"layers", layers},
                    {"profiles", profiles}};
    return j.dump(2) + "\n";
}

CalibrationResult parse_calibration(const std::string& text) {
    return guarded("calibration result", [&] {
        const json j = json::parse(text);
        CalibrationResult r;
        r.r_adc = j.at("r_adc").get<int>();
        r.acc_threshold = j.at("acc_threshold").get<double>();
        r.n_max = j.at("n_max").get<int>();
        r.baseline_accuracy = j.at("baseline_accuracy").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        r.warning = j.at("warning").get<bool>();
        for (const auto& e : j.at("layers")) {
            LayerCalibration l;
            l.layer = e.at("layer").get<int>();
            l.name = e.at("name").get<std::string>();
            l.cls = parse_class(e.at("class").get<std::string>());
            l.mode = mode_from(e);
            l.mse = e.at("mse").get<double>();
            l.expected_ops = e.at("expected_ops").get<std::uint64_t>();
            l.conversions = e.at("conversions").get<std::uint64_t>();
            r.layers.push_back(l);
        }
        if (j.contains("profiles")) {
            for (const auto& e : j.at("profiles")) {
                auto p = profile_from(e);
                r.profiles[p.layer] = std::move(p);
            }
        }
        return r;
    });
}

std::string energy_json(const EnergyReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers) {
        layers.push_back({{"layer", l.layer},
                          {"name", l.name},
                          {"kind", l.kind},
                          {"scheme", l.scheme},
                          {"mvms", l.mvms},
                          {"conversions_per_mvm", l.conversions_per_mvm},
                          {"conversions", l.conversions},
                          {"baseline_ops", l.baseline_ops},
                          {"configured_ops", l.configured_ops},
                          {"baseline_energy", l.baseline_energy},
                          {"configured_energy", l.configured_energy},
                          {"reduction_ratio", l.reduction_ratio()}});
    }
    const json j = {{"r_adc", r.r_adc},
                    {"e_op", r.e_op},
                    {"samples", r.samples},
                    {"layers", layers},
                    {"baseline_ops", r.baseline_ops()},
                    {"configured_ops", r.configured_ops()},
                    {"baseline_energy", r.baseline_energy()},
                    {"configured_energy", r.configured_energy()},
                    {"reduction_ratio", r.reduction_ratio()}};
    return j.dump(2) + "\n";
}

EnergyReport parse_energy(const std::string& text) {
    return guarded("energy report", [&] {
        const json j = json::parse(text);
        EnergyReport r;
        r.r_adc = j.at("r_adc").get<int>();
        r.e_op = j.at("e_op").get<double>();
        r.samples = j.at("samples").get<std::uint64_t>();
        for (const auto& e : j.at("layers")) {
            LayerEnergy l;
            l.layer = e.at("layer").get<int>();
            l.name = e.at("name").get<std::string>();
            l.kind = e.at("kind").get<std::string>();
            l.scheme = e.at("scheme").get<std::string>();
            l.mvms = e.at("mvms").get<std::uint64_t>();
            l.conversions_per_mvm = e.at("conversions_per_mvm").get<std::uint64_t>();
            l.conversions = e.at("conversions").get<std::uint64_t>();
            l.baseline_ops = e.at("baseline_ops").get<std::uint64_t>();
            l.configured_ops = e.at("configured_ops").get<std::uint64_t>();
            l.baseline_energy = e.at("baseline_energy").get<double>();
            l.configured_energy = e.at("configured_energy").get<double>();
            r.layers.push_back(l);
        }
        return r;
    });
}

InferenceConfig load_config(const std::filesystem::path& path, const NetworkGraph& graph) {
    const CalibrationResult r = parse_calibration(read_text(path));
    for (const auto& l : r.layers) {
        require(l.layer >= 0 && l.layer < static_cast<int>(graph.layers.size()) &&
                    graph.layers[l.layer].name == l.name,
                "config layer " + std::to_string(l.layer) + " (" + l.name + ") does not match the model");
    }
    InferenceConfig cfg = r.to_config();
    validate(cfg, graph, r.r_adc);
    return cfg;
}

}  // namespace trq
