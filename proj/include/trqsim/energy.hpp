#pragma once

#include "trqsim/net.hpp"
#include "trqsim/profile.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace trq {

struct LayerEnergy {
    int layer = 0;
    std::string name;
    std::string kind;
    std::string scheme;                    ///< "uniform" or "trq"
    std::uint64_t mvms = 0;
    std::uint64_t conversions_per_mvm = 0;
    std::uint64_t conversions = 0;
    std::uint64_t baseline_ops = 0;        ///< r_adc ops per conversion
    std::uint64_t configured_ops = 0;
    double baseline_energy = 0.0;
    double configured_energy = 0.0;

    double reduction_ratio() const;
    bool operator==(const LayerEnergy&) const = default;
};

struct EnergyReport {
    int r_adc = 8;
    double e_op = 1.0;
    std::uint64_t samples = 0;
    std::vector<LayerEnergy> layers;

    std::uint64_t baseline_ops() const;
    std::uint64_t configured_ops() const;
    double baseline_energy() const;
    double configured_energy() const;
    double reduction_ratio() const;
    bool operator==(const EnergyReport&) const = default;
};

/// Input vectors a weighted layer sees per network sample.
std::uint64_t mvms_per_sample(const LayerSpec& layer);

/// Analytic op totals for `samples` network inputs. Twin-range layers take
/// their op counts from the profiles; a profile gathered over exactly the same
/// conversions reproduces the simulated count.
EnergyReport account(const PreparedNetwork& net, const InferenceConfig& cfg,
                     const std::map<int, DistributionProfile>& profiles, std::uint64_t samples, double e_op = 1.0);

struct Discrepancy {
    int layer = 0;
    std::string field;
    std::uint64_t analytic = 0;
    std::uint64_t simulated = 0;
};

std::vector<Discrepancy> verify_against_simulation(const EnergyReport& report, const InferenceStats& simulated);

/// Columns: layer,name,kind,scheme,mvms,conversions_per_mvm,conversions,
/// baseline_ops,configured_ops,baseline_energy,configured_energy,reduction_ratio.
/// The last row holds network totals with layer "total".
std::string energy_csv(const EnergyReport& report);

}  // namespace trq
