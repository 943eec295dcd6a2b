#include "support/fixtures.hpp"

#include <cmath>

namespace support {

namespace fs = std::filesystem;

fs::path fixture_dir() { return TRQ_FIXTURE_DIR; }

const trq::Fixture& mlp() {
    static const trq::Fixture f = trq::load_or_make_fixture(trq::FixtureKind::Mlp, fixture_dir() / "mlp");
    return f;
}

const trq::Fixture& lenet() {
    static const trq::Fixture f = trq::load_or_make_fixture(trq::FixtureKind::Lenet, fixture_dir() / "lenet");
    return f;
}

trq::Dataset calib_subset(const trq::Fixture& f, std::size_t n, std::uint64_t seed) {
    const auto idx = trq::sample_indices(f.train.size(), n, seed);
    return f.train.subset(idx);
}

trq::Dataset head(const trq::Dataset& d, std::size_t n) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min(n, d.size()); ++i) {
        idx.push_back(i);
    }
    return d.subset(idx);
}

trq::DistributionProfile random_profile(trq::Rng& rng, Shape shape, int max_level) {
    std::vector<std::uint64_t> h(static_cast<std::size_t>(max_level) + 1, 0);
    const int top = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_level)));
    const std::uint64_t n = 200 + rng.below(5000);
    for (std::uint64_t i = 0; i < n; ++i) {
        double v = 0.0;
        switch (shape) {
            case Shape::Decaying:
                v = -std::log(1.0 - rng.uniform()) * (1.0 + rng.uniform() * top / 6.0);
                break;
            case Shape::Peaked:
                v = top * 0.6 + rng.normal() * (1.0 + top * 0.05);
                break;
            case Shape::Bimodal:
                v = (rng.uniform() < 0.5 ? top * 0.2 : top * 0.8) + rng.normal() * (1.0 + top * 0.03);
                break;
            case Shape::Flat:
                v = rng.uniform() * (top + 1);
                break;
        }
        const int l = std::clamp(static_cast<int>(std::floor(v)), 0, top);
        ++h[static_cast<std::size_t>(l)];
    }
    return trq::make_profile(std::move(h));
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(TRQ_FIXTURE_DIR).parent_path() / "scratch" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace support
