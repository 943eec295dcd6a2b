#pragma once

#include "trqsim/calib.hpp"
#include "trqsim/synth.hpp"

#include <filesystem>

namespace support {

std::filesystem::path fixture_dir();

/// Trained, quantized fixtures; built once into the build tree and reused.
const trq::Fixture& mlp();
const trq::Fixture& lenet();

/// 32 seeded training samples, as the CLI draws them.
trq::Dataset calib_subset(const trq::Fixture& f, std::size_t n = 32, std::uint64_t seed = 0);
trq::Dataset head(const trq::Dataset& d, std::size_t n);

enum class Shape { Decaying, Peaked, Bimodal, Flat };

/// Random histogram over [0, max_level] with roughly the given shape.
trq::DistributionProfile random_profile(trq::Rng& rng, Shape shape, int max_level = 128);

/// Fresh scratch directory under the build tree.
std::filesystem::path scratch(const std::string& name);

}  // namespace support
