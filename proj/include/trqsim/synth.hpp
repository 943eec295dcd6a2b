#pragma once

#include "trqsim/tensorio.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace trq {

/// splitmix64; small, seedable and identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    /// [0, 1)
    double uniform();
    double normal();
    /// [0, n)
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t state_;
};

/// k distinct indices out of [0, n), drawn by a seeded partial Fisher-Yates shuffle.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

/// 28x28 seven-segment digits with jitter and noise; inputs f32 in [0, 1],
/// shape (count, 1, 28, 28).
Dataset make_digits(std::size_t count, std::uint64_t seed);

struct TrainOptions {
    int epochs = 4;
    int batch = 16;
    double lr = 0.05;
    std::uint64_t seed = 1;
};

/// flatten, fc 784->hidden, relu, fc hidden->10.
NetworkGraph train_mlp(const Dataset& train, int hidden = 64, const TrainOptions& opt = {});

/// LeNet-5 style: conv5x5(6) relu maxpool conv5x5(16) relu maxpool flatten
/// fc120 relu fc84 relu fc10.
NetworkGraph train_lenet(const Dataset& train, const TrainOptions& opt = {});

struct Fixture {
    NetworkGraph model;
    Dataset train;
    Dataset eval;
};

enum class FixtureKind { Mlp, Lenet };

/// Builds the fixture or loads it from `dir` when a previous run wrote it.
/// Files: model.json (+ weight tensors), train.json, eval.json.
Fixture load_or_make_fixture(FixtureKind kind, const std::filesystem::path& dir);

}  // namespace trq
