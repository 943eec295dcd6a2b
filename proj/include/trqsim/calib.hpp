#pragma once

#include "trqsim/net.hpp"
#include "trqsim/profile.hpp"
#include "trqsim/sar.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace trq {

enum class DistributionClass : std::uint8_t { Ideal, Normal, Other };

const char* class_name(DistributionClass c);
DistributionClass parse_class(const std::string& s);

/// Ideal: mode at 0 and the histogram is non-increasing over the shortest
/// prefix holding >= rho of the mass. Normal: unimodal, mode > 0 and
/// std/mean <= gamma. Everything else is Other.
DistributionClass classify(const DistributionProfile& profile, double rho = 0.8, double gamma = 0.5);

/// C evenly spaced steps over [alpha, beta] * y_max / (2^r_adc - 1), duplicates removed.
std::vector<double> vgrid_candidates(const DistributionProfile& profile, double alpha, double beta, int candidates,
                                     int r_adc);

/// Bits needed to span [y_min, y_max] at the given grid step, clamped to [1, r_adc].
int ideal_resolution(const DistributionProfile& profile, double v_grid, int r_adc);

double energy_objective(const DistributionProfile& profile, const AdcMode& mode, double e_op = 1.0);

/// Histogram-weighted squared error between each level and its reconstruction.
double mse_objective(const DistributionProfile& profile, const AdcMode& mode);

struct SweepBounds {
    double alpha = 0.1;
    double beta = 1.2;
    int candidates = 50;
};

struct LayerChoice {
    AdcMode mode = UniformAdc{};
    double mse = 0.0;
    std::uint64_t ops = 0;   ///< expected ops over the profile
    double energy = 0.0;
    int r_ideal = 0;
};

/// Best twin-range setting for one layer. Candidates are ranked by
/// (mse, ops, v_grid, n_r1, m, bias), smallest first.
LayerChoice search_layer(const DistributionProfile& profile, DistributionClass cls, int r_adc, int n_max,
                         const SweepBounds& bounds = {}, double e_op = 1.0);

/// Best plain k-bit setting over the same grid sweep, ranked by (mse, v_grid).
LayerChoice search_uniform(const DistributionProfile& profile, int bits, int r_adc, const SweepBounds& bounds = {},
                           double e_op = 1.0);

/// Bit-line level histograms of every weighted layer over a dataset.
std::map<int, DistributionProfile> profile_network(const PreparedNetwork& net, const Dataset& data,
                                                   const InferenceConfig& cfg);
DistributionProfile profile_layer(const PreparedNetwork& net, int layer, const Dataset& calib_set);

struct CalibrationOptions {
    int r_adc = 8;
    SweepBounds sweep;
    double acc_threshold = 0.01;  ///< absolute drop in accuracy fraction
    double rho = 0.8;
    double gamma = 0.5;
    double e_op = 1.0;
};

struct LayerCalibration {
    int layer = 0;
    std::string name;
    DistributionClass cls = DistributionClass::Other;
    AdcMode mode = UniformAdc{};
    double mse = 0.0;
    std::uint64_t expected_ops = 0;  ///< on the calibration set under the final config
    std::uint64_t conversions = 0;

    bool operator==(const LayerCalibration&) const = default;
};

struct CalibrationResult {
    int r_adc = 8;
    double acc_threshold = 0.01;
    int n_max = 0;                 ///< N_max of the returned configuration (r_adc when lossless)
    double baseline_accuracy = 0.0;
    double accuracy = 0.0;
    bool warning = false;          ///< no lossy configuration passed the threshold
    std::vector<LayerCalibration> layers;
    std::map<int, DistributionProfile> profiles;  ///< calibration set, final config

    InferenceConfig to_config() const;
    bool operator==(const CalibrationResult&) const = default;
};

/// Descends N_max from r_adc - 1 while the accuracy drop stays within the
/// threshold, then swaps layers to plain uniform where that is cheaper.
CalibrationResult search_network(const PreparedNetwork& net, const Dataset& calib_set, const Dataset& eval_set,
                                 const CalibrationOptions& opt = {}, std::ostream* log = nullptr);

}  // namespace trq
