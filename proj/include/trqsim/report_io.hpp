#pragma once

#include "trqsim/calib.hpp"
#include "trqsim/energy.hpp"
#include "trqsim/profile.hpp"
#include "trqsim/sar.hpp"

#include <filesystem>
#include <string>

namespace trq {

// JSON documents. Keys are written in sorted order so equal objects give
// byte-identical files.
std::string profile_json(const DistributionProfile& p);
DistributionProfile parse_profile(const std::string& text);

std::string mode_json(const AdcMode& mode);
AdcMode parse_mode(const std::string& text);

std::string calibration_json(const CalibrationResult& r);
CalibrationResult parse_calibration(const std::string& text);

std::string energy_json(const EnergyReport& r);
/// Derived totals and ratios are recomputed, not read back.
EnergyReport parse_energy(const std::string& text);

/// Reads a calibration result and checks it against the model.
InferenceConfig load_config(const std::filesystem::path& path, const NetworkGraph& graph);

}  // namespace trq
