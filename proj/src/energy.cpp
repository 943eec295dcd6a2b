#include "trqsim/energy.hpp"

#include "trqsim/sar.hpp"

#include <cmath>
#include <sstream>

namespace trq {

namespace {

double ratio(std::uint64_t base, std::uint64_t conf) {
    return conf == 0 ? (base == 0 ? 1.0 : INFINITY) : static_cast<double>(base) / static_cast<double>(conf);
}

}  // namespace

double LayerEnergy::reduction_ratio() const { return ratio(baseline_ops, configured_ops); }

std::uint64_t EnergyReport::baseline_ops() const {
    std::uint64_t s = 0;
    for (const auto& l : layers) {
        s += l.baseline_ops;
    }
    return s;
}

std::uint64_t EnergyReport::configured_ops() const {
    std::uint64_t s = 0;
    for (const auto& l : layers) {
        s += l.configured_ops;
    }
    return s;
}

double EnergyReport::baseline_energy() const { return e_op * static_cast<double>(baseline_ops()); }
double EnergyReport::configured_energy() const { return e_op * static_cast<double>(configured_ops()); }
double EnergyReport::reduction_ratio() const { return ratio(baseline_ops(), configured_ops()); }

std::uint64_t mvms_per_sample(const LayerSpec& layer) {
    require(layer.is_mvm(), "mvms_per_sample: layer is not conv2d/fc");
    if (layer.kind == LayerKind::Fc) {
        return 1;
    }
    require(layer.output_shape.size() == 3, "mvms_per_sample: conv layer without a propagated output shape");
    return static_cast<std::uint64_t>(layer.output_shape[1]) * static_cast<std::uint64_t>(layer.output_shape[2]);
}

EnergyReport account(const PreparedNetwork& net, const InferenceConfig& cfg,
                     const std::map<int, DistributionProfile>& profiles, std::uint64_t samples, double e_op) {
    EnergyReport rep;
    rep.r_adc = net.xbar.r_adc;
    rep.e_op = e_op;
    rep.samples = samples;
    for (int l : net.graph.mvm_layers()) {
        const auto& spec = net.graph.layers[l];
        const AdcMode& mode = cfg.mode_for(l);
        LayerEnergy le;
        le.layer = l;
        le.name = spec.name;
        le.kind = layer_kind_name(spec.kind);
        le.mvms = mvms_per_sample(spec) * samples;
        le.conversions_per_mvm = net.tiles[l].conversions_per_mvm(net.graph.activation_bits);
        le.conversions = le.mvms * le.conversions_per_mvm;
        le.baseline_ops = le.conversions * static_cast<std::uint64_t>(rep.r_adc);
        if (const auto* u = std::get_if<UniformAdc>(&mode)) {
            le.scheme = "uniform";
            le.configured_ops = le.conversions * static_cast<std::uint64_t>(u->k);
        } else {
            le.scheme = "trq";
            const auto it = profiles.find(l);
            require(it != profiles.end() && it->second.count > 0,
                    "account: no profile for twin-range layer " + std::to_string(l) + " (" + spec.name + ")");
            const std::uint64_t ops = expected_ops(it->second, mode);
            if (it->second.count == le.conversions) {
                le.configured_ops = ops;
            } else {
                const double per = static_cast<double>(ops) / static_cast<double>(it->second.count);
                le.configured_ops = static_cast<std::uint64_t>(std::llround(per * static_cast<double>(le.conversions)));
            }
        }
        le.baseline_energy = e_op * static_cast<double>(le.baseline_ops);
        le.configured_energy = e_op * static_cast<double>(le.configured_ops);
        rep.layers.push_back(le);
    }
    return rep;
}

std::vector<Discrepancy> verify_against_simulation(const EnergyReport& report, const InferenceStats& simulated) {
    std::vector<Discrepancy> out;
    for (const auto& l : report.layers) {
        const auto it = simulated.find(l.layer);
        const MvmStats none;
        const MvmStats& s = it == simulated.end() ? none : it->second;
        if (s.mvms != l.mvms) {
            out.push_back({l.layer, "mvms", l.mvms, s.mvms});
        }
        if (s.conversions != l.conversions) {
            out.push_back({l.layer, "conversions", l.conversions, s.conversions});
        }
        if (s.ops != l.configured_ops) {
            out.push_back({l.layer, "ops", l.configured_ops, s.ops});
        }
    }
    return out;
}

std::string energy_csv(const EnergyReport& report) {
    std::ostringstream os;
    os.precision(10);
    os << "layer,name,kind,scheme,mvms,conversions_per_mvm,conversions,baseline_ops,configured_ops,"
          "baseline_energy,configured_energy,reduction_ratio\n";
    std::uint64_t mvms = 0;
    std::uint64_t conv = 0;
    for (const auto& l : report.layers) {
        os << l.layer << ',' << l.name << ',' << l.kind << ',' << l.scheme << ',' << l.mvms << ','
           << l.conversions_per_mvm << ',' << l.conversions << ',' << l.baseline_ops << ',' << l.configured_ops
           << ',' << l.baseline_energy << ',' << l.configured_energy << ',' << l.reduction_ratio() << '\n';
        mvms += l.mvms;
        conv += l.conversions;
    }
    os << "total,,,," << mvms << ",," << conv << ',' << report.baseline_ops() << ',' << report.configured_ops()
       << ',' << report.baseline_energy() << ',' << report.configured_energy() << ',' << report.reduction_ratio()
       << '\n';
    return os.str();
}

}  // namespace trq
