#include "trqsim/calib.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>

namespace trq {

const char* class_name(DistributionClass c) {
    switch (c) {
        case DistributionClass::Ideal:
            return "ideal";
        case DistributionClass::Normal:
            return "normal";
        case DistributionClass::Other:
            return "other";
    }
    return "?";
}

DistributionClass parse_class(const std::string& s) {
    if (s == "ideal") {
        return DistributionClass::Ideal;
    }
    if (s == "normal") {
        return DistributionClass::Normal;
    }
    if (s == "other") {
        return DistributionClass::Other;
    }
    throw ValidationError("unknown distribution class '" + s + "'");
}

DistributionClass classify(const DistributionProfile& profile, double rho, double gamma) {
    require(profile.count > 0, "classify: empty profile");
    const auto& h = profile.histogram;
    const auto n = static_cast<double>(profile.count);

    if (profile.mode == 0) {
        std::uint64_t cum = 0;
        std::size_t end = 0;
        while (end < h.size()) {
            cum += h[end];
            ++end;
            if (static_cast<double>(cum) >= rho * n) {
                break;
            }
        }
        bool decreasing = true;
        for (std::size_t i = 1; i < end; ++i) {
            decreasing = decreasing && h[i] <= h[i - 1];
        }
        if (decreasing) {
            return DistributionClass::Ideal;
        }
        return DistributionClass::Other;
    }

    const auto lo = static_cast<std::size_t>(profile.y_min);
    const auto hi = static_cast<std::size_t>(profile.y_max);
    const auto peak = static_cast<std::size_t>(profile.mode);
    bool unimodal = true;
    for (std::size_t i = lo + 1; i <= peak; ++i) {
        unimodal = unimodal && h[i] >= h[i - 1];
    }
    for (std::size_t i = peak + 1; i <= hi; ++i) {
        unimodal = unimodal && h[i] <= h[i - 1];
    }
    const double cv = std::sqrt(profile.variance) / profile.mean;
    if (unimodal && cv <= gamma) {
        return DistributionClass::Normal;
    }
    return DistributionClass::Other;
}

std::vector<double> vgrid_candidates(const DistributionProfile& profile, double alpha, double beta, int candidates,
                                     int r_adc) {
    require(candidates >= 1, "vgrid_candidates: need at least one candidate");
    require(alpha > 0.0 && alpha <= beta, "vgrid_candidates: need 0 < alpha <= beta");
    if (profile.y_max == 0) {
        return {1.0};
    }
    const double full = static_cast<double>((std::int64_t{1} << r_adc) - 1);
    const double lo = alpha * profile.y_max / full;
    const double hi = beta * profile.y_max / full;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(candidates));
    for (int i = 0; i < candidates; ++i) {
        const double v = candidates == 1 ? lo : lo + (hi - lo) * i / (candidates - 1);
        if (out.empty() || v != out.back()) {
            out.push_back(v);
        }
    }
    return out;
}

int ideal_resolution(const DistributionProfile& profile, double v_grid, int r_adc) {
    // The R2 grid starts at level 0, so the span is measured from there.
    const double span = profile.y_max / v_grid + 1.0;
    int bits = 1;
    while (bits < r_adc && std::ldexp(1.0, bits) < span) {
        ++bits;
    }
    return bits;
}

double energy_objective(const DistributionProfile& profile, const AdcMode& mode, double e_op) {
    return e_op * static_cast<double>(expected_ops(profile, mode));
}

double mse_objective(const DistributionProfile& profile, const AdcMode& mode) {
    require(profile.count > 0, "mse_objective: empty profile");
    double sum = 0.0;
    for (std::size_t level = 0; level < profile.histogram.size(); ++level) {
        const auto h = profile.histogram[level];
        if (h == 0) {
            continue;
        }
        double rec = 0.0;
        if (const auto* u = std::get_if<UniformAdc>(&mode)) {
            rec = static_cast<double>(uniform_quantize(static_cast<double>(level), u->k, u->lsb)) * u->lsb;
        } else {
            const auto& p = std::get<TrqParams>(mode);
            const auto q = trq_quantize(to_grid(static_cast<std::int64_t>(level), p.v_grid), p);
            rec = static_cast<double>(q.level * p.delta_r1) * p.v_grid;
        }
        const double d = static_cast<double>(level) - rec;
        sum += static_cast<double>(h) * d * d;
    }
    return sum / static_cast<double>(profile.count);
}

LayerChoice search_layer(const DistributionProfile& profile, DistributionClass cls, int r_adc, int n_max,
                         const SweepBounds& bounds, double e_op) {
    require(n_max >= 1 && n_max <= r_adc - 1, "search_layer: n_max must lie in [1, r_adc - 1]");
    std::optional<LayerChoice> best;
    auto consider = [&](const TrqParams& p, int r_ideal) {
        const auto ops = expected_ops(profile, p);
        const double mse = mse_objective(profile, p);
        if (!best || mse < best->mse || (mse == best->mse && ops < best->ops)) {
            best = LayerChoice{p, mse, ops, e_op * static_cast<double>(ops), r_ideal};
        }
    };

    for (double v : vgrid_candidates(profile, bounds.alpha, bounds.beta, bounds.candidates, r_adc)) {
        const int r_ideal = ideal_resolution(profile, v, r_adc);
        const int n_r2 = std::min(n_max, r_ideal);
        if (cls == DistributionClass::Other) {
            for (int m = 0; m <= std::min(7, r_ideal - n_r2); ++m) {
                for (std::int64_t bias = 0; bias < (std::int64_t{1} << m); ++bias) {
                    consider({n_r2, n_r2, std::int64_t{1} << (r_ideal - n_r2 - m), m, bias, v}, r_ideal);
                }
            }
        } else {
            const int m = r_ideal - n_r2;
            const std::int64_t biases = cls == DistributionClass::Ideal ? 1 : (std::int64_t{1} << m);
            for (int n_r1 = 0; n_r1 <= n_max; ++n_r1) {
                for (std::int64_t bias = 0; bias < biases; ++bias) {
                    consider({n_r1, n_r2, 1, m, bias, v}, r_ideal);
                }
            }
        }
    }
    return *best;
}

LayerChoice search_uniform(const DistributionProfile& profile, int bits, int r_adc, const SweepBounds& bounds,
                           double e_op) {
    require(bits >= 1 && bits <= r_adc, "search_uniform: bits must lie in [1, r_adc]");
    std::optional<LayerChoice> best;
    for (double v : vgrid_candidates(profile, bounds.alpha, bounds.beta, bounds.candidates, r_adc)) {
        const int r_ideal = ideal_resolution(profile, v, r_adc);
        const UniformAdc u{bits, std::ldexp(v, std::max(0, r_ideal - bits))};
        const double mse = mse_objective(profile, u);
        if (!best || mse < best->mse) {
            const auto ops = expected_ops(profile, AdcMode{u});
            best = LayerChoice{u, mse, ops, e_op * static_cast<double>(ops), r_ideal};
        }
    }
    return *best;
}

std::map<int, DistributionProfile> profile_network(const PreparedNetwork& net, const Dataset& data,
                                                   const InferenceConfig& cfg) {
    validate(data);
    require(data.size() > 0, "profiling needs a non-empty calibration set");
    InferenceStats stats;
    for (std::size_t i = 0; i < data.size(); ++i) {
        run_inference(net, data.sample(i), cfg, &stats);
    }
    std::map<int, DistributionProfile> out;
    for (int layer : net.graph.mvm_layers()) {
        auto hist = stats[layer].histogram;
        hist.resize(static_cast<std::size_t>(net.xbar.size) + 1, 0);
        out[layer] = make_profile(std::move(hist), layer);
    }
    return out;
}

DistributionProfile profile_layer(const PreparedNetwork& net, int layer, const Dataset& calib_set) {
    require(layer >= 0 && layer < static_cast<int>(net.graph.layers.size()) && net.graph.layers[layer].is_mvm(),
            "profile_layer: layer " + std::to_string(layer) + " is not a conv/fc layer");
    return profile_network(net, calib_set, lossless_config(net.xbar.r_adc)).at(layer);
}

InferenceConfig CalibrationResult::to_config() const {
    InferenceConfig cfg = lossless_config(r_adc);
    for (const auto& l : layers) {
        cfg.layers[l.layer] = l.mode;
    }
    return cfg;
}

namespace {

struct Candidate {
    InferenceConfig cfg;
    std::map<int, LayerChoice> choices;
    double accuracy = 0.0;
    int n_max = 0;
};

void print_mode(std::ostream& os, const AdcMode& mode) {
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        os << "uniform k=" << u->k << " lsb=" << u->lsb;
    } else {
        const auto& p = std::get<TrqParams>(mode);
        os << "trq n_r1=" << p.n_r1 << " n_r2=" << p.n_r2 << " d_r1=" << p.delta_r1 << " m=" << p.m
           << " bias=" << p.bias << " v_grid=" << p.v_grid;
    }
}

}  // namespace

CalibrationResult search_network(const PreparedNetwork& net, const Dataset& calib_set, const Dataset& eval_set,
                                 const CalibrationOptions& opt, std::ostream* log) {
    require(calib_set.size() > 0, "calibration set is empty");
    require(eval_set.size() > 0, "evaluation set is empty");
    require(opt.acc_threshold >= 0.0, "accuracy threshold must be non-negative");
    require(opt.r_adc == net.xbar.r_adc, "r_adc differs from the crossbar configuration");
    const int r_adc = opt.r_adc;
    const auto layers = net.graph.mvm_layers();

    const InferenceConfig lossless = lossless_config(r_adc);
    const auto profiles = profile_network(net, calib_set, lossless);
    std::map<int, DistributionClass> classes;
    for (int l : layers) {
        classes[l] = classify(profiles.at(l), opt.rho, opt.gamma);
    }
    const double base = evaluate_accuracy(net, eval_set, lossless);
    if (log) {
        *log << "baseline accuracy " << base << "\n";
    }
    auto passes = [&](double acc) { return base - acc <= opt.acc_threshold + 1e-12; };

    std::optional<Candidate> passing;
    for (int n = r_adc - 1; n >= 1; --n) {
        Candidate c;
        c.cfg = lossless;
        c.n_max = n;
        for (int l : layers) {
            c.choices[l] = search_layer(profiles.at(l), classes.at(l), r_adc, n, opt.sweep, opt.e_op);
            c.cfg.layers[l] = c.choices[l].mode;
        }
        c.accuracy = evaluate_accuracy(net, eval_set, c.cfg);
        if (log) {
            *log << "n_max " << n << " accuracy " << c.accuracy << "\n";
        }
        if (!passes(c.accuracy)) {
            break;
        }
        passing = std::move(c);
    }

    CalibrationResult res;
    res.r_adc = r_adc;
    res.acc_threshold = opt.acc_threshold;
    res.baseline_accuracy = base;
    InferenceConfig cfg = lossless;
    if (!passing) {
        res.warning = true;
        res.n_max = r_adc;
        res.accuracy = base;
        if (log) {
            *log << "warning: no lossy configuration met the threshold, keeping uniform " << r_adc << "-bit\n";
        }
    } else {
        res.n_max = passing->n_max;
        res.accuracy = passing->accuracy;
        cfg = passing->cfg;
        InferenceConfig swapped = cfg;
        bool any = false;
        for (int l : layers) {
            const LayerChoice& t = passing->choices.at(l);
            const int bits = std::get<TrqParams>(t.mode).n_r2;
            const LayerChoice u = search_uniform(profiles.at(l), bits, r_adc, opt.sweep, opt.e_op);
            if (u.mse <= t.mse && u.ops < t.ops) {
                swapped.layers[l] = u.mode;
                any = true;
            }
        }
        if (any) {
            const double acc = evaluate_accuracy(net, eval_set, swapped);
            if (log) {
                *log << "uniform swaps accuracy " << acc << (passes(acc) ? "" : ", reverted") << "\n";
            }
            if (passes(acc)) {
                cfg = swapped;
                res.accuracy = acc;
            }
        }
    }

    res.profiles = profile_network(net, calib_set, cfg);
    for (int l : layers) {
        LayerCalibration lc;
        lc.layer = l;
        lc.name = net.graph.layers[l].name;
        lc.cls = classes.at(l);
        lc.mode = cfg.mode_for(l);
        lc.mse = mse_objective(profiles.at(l), lc.mode);
        lc.expected_ops = expected_ops(res.profiles.at(l), lc.mode);
        lc.conversions = res.profiles.at(l).count;
        res.layers.push_back(lc);
        if (log) {
            *log << "layer " << l << " " << lc.name << " [" << class_name(lc.cls) << "] ";
            print_mode(*log, lc.mode);
            *log << "\n";
        }
    }
    return res;
}

}  // namespace trq
