// trqsim: profile, calibrate, simulate and sweep twin-range ADC settings.

#include "trqsim/calib.hpp"
#include "trqsim/energy.hpp"
#include "trqsim/net.hpp"
#include "trqsim/report_io.hpp"
#include "trqsim/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace trq;

namespace {

struct RunSpec {
    std::string model;
    std::string calib_set;
    std::string eval_set;
    std::string out;
    std::string config;
    int r_adc = 8;
    double alpha = 0.1;
    double beta = 1.2;
    int candidates = 50;
    double acc_threshold = 0.01;
    double rho = 0.8;
    double gamma = 0.5;
    double e_op = 1.0;
    std::uint64_t seed = 0;
    std::size_t calib_size = 32;
    std::string bits = "8:2";
    std::string dump_bl;
    std::string dump_trace;
    std::size_t trace_limit = 256;
    bool baseline = false;
    std::string fixture = "all";
};

void need(const std::string& value, const char* flag) {
    require(!value.empty(), std::string("missing required option ") + flag);
}

PreparedNetwork open_model(const RunSpec& s) {
    need(s.model, "--model");
    CrossbarConfig xbar;
    xbar.r_adc = s.r_adc;
    return prepare(load_model(s.model), xbar);
}

Dataset open_calib(const RunSpec& s) {
    need(s.calib_set, "--calib-set");
    Dataset d = load_dataset(s.calib_set);
    require(d.size() > 0, "calibration set is empty");
    if (d.size() > s.calib_size) {
        const auto idx = sample_indices(d.size(), s.calib_size, s.seed);
        d = d.subset(idx);
    }
    return d;
}

Dataset open_eval(const RunSpec& s) {
    need(s.eval_set, "--eval-set");
    Dataset d = load_dataset(s.eval_set);
    require(d.size() > 0, "evaluation set is empty");
    return d;
}

fs::path out_dir(const RunSpec& s) {
    need(s.out, "--out");
    return s.out;
}

void make_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

std::string mode_summary(const AdcMode& mode) {
    std::ostringstream os;
    if (const auto* u = std::get_if<UniformAdc>(&mode)) {
        os << "uniform  k=" << u->k << " lsb=" << u->lsb;
    } else {
        const auto& p = std::get<TrqParams>(mode);
        os << "trq      n_r1=" << p.n_r1 << " n_r2=" << p.n_r2 << " d_r1=" << p.delta_r1 << " d_r2=" << p.delta_r2()
           << " m=" << p.m << " bias=" << p.bias << " v_grid=" << p.v_grid;
    }
    return os.str();
}

// Writes collected BL records after the run so a failure leaves nothing behind.
class BlCollector {
public:
    explicit BlCollector(const CrossbarConfig& xbar) : size_(xbar.size) {}

    LayerBlSink sink() {
        return [this](int layer, const BlSample& s) {
            records_.push_back({static_cast<std::uint32_t>(layer),
                                static_cast<std::uint32_t>(s.tile * size_ + s.bl),
                                static_cast<std::uint16_t>(s.level)});
        };
    }

    void write(const fs::path& path) const {
        std::ostringstream os(std::ios::binary);
        write_bl_header(os);
        for (const auto& r : records_) {
            write_bl_record(os, r);
        }
        write_text(path, os.str());
    }

private:
    int size_;
    std::vector<BlRecord> records_;
};

int cmd_profile(const RunSpec& s) {
    const auto net = open_model(s);
    const auto calib = open_calib(s);
    const auto dir = out_dir(s);
    const InferenceConfig cfg = lossless_config(s.r_adc);

    std::map<int, DistributionProfile> profiles;
    BlCollector bl(net.xbar);
    if (!s.dump_bl.empty()) {
        InferenceStats stats;
        const LayerBlSink sink = bl.sink();
        for (std::size_t i = 0; i < calib.size(); ++i) {
            run_inference(net, calib.sample(i), cfg, &stats, &sink);
        }
        for (int l : net.graph.mvm_layers()) {
            auto h = stats[l].histogram;
            h.resize(static_cast<std::size_t>(net.xbar.size) + 1, 0);
            profiles[l] = make_profile(std::move(h), l);
        }
    } else {
        profiles = profile_network(net, calib, cfg);
    }

    make_out(dir);
    std::ostringstream csv;
    csv << "layer,name,count,y_min,y_max,mean,variance,mode,class\n";
    csv.precision(10);
    std::cout << "layer  name        count       y_min y_max mean      mode class\n";
    for (const auto& [l, p] : profiles) {
        const auto& name = net.graph.layers[l].name;
        const auto cls = classify(p, s.rho, s.gamma);
        write_text(dir / ("profile_" + std::to_string(l) + "_" + name + ".json"), profile_json(p));
        csv << l << ',' << name << ',' << p.count << ',' << p.y_min << ',' << p.y_max << ',' << p.mean << ','
            << p.variance << ',' << p.mode << ',' << class_name(cls) << '\n';
        std::cout << std::left << std::setw(7) << l << std::setw(12) << name << std::setw(12) << p.count
                  << std::setw(6) << p.y_min << std::setw(6) << p.y_max << std::setw(10) << std::setprecision(4)
                  << p.mean << std::setw(5) << p.mode << class_name(cls) << '\n';
    }
    write_text(dir / "profiles.csv", csv.str());
    if (!s.dump_bl.empty()) {
        bl.write(s.dump_bl);
    }
    return 0;
}

int cmd_calibrate(const RunSpec& s) {
    const auto net = open_model(s);
    const auto calib = open_calib(s);
    const auto eval = open_eval(s);
    const auto dir = out_dir(s);
    CalibrationOptions opt;
    opt.r_adc = s.r_adc;
    opt.sweep = {s.alpha, s.beta, s.candidates};
    opt.acc_threshold = s.acc_threshold;
    opt.rho = s.rho;
    opt.gamma = s.gamma;
    opt.e_op = s.e_op;

    std::ostringstream log;
    const CalibrationResult res = search_network(net, calib, eval, opt, &log);
    const EnergyReport rep = account(net, res.to_config(), res.profiles, calib.size(), s.e_op);

    make_out(dir);
    write_text(dir / "calibration.json", calibration_json(res));
    write_text(dir / "calibration_energy.csv", energy_csv(rep));
    write_text(dir / "calibration.log", log.str());

    std::cout << "layer  name        class   scheme\n";
    for (const auto& l : res.layers) {
        std::cout << std::left << std::setw(7) << l.layer << std::setw(12) << l.name << std::setw(8)
                  << class_name(l.cls) << mode_summary(l.mode) << '\n';
    }
    std::cout << "baseline accuracy " << res.baseline_accuracy << ", calibrated accuracy " << res.accuracy
              << ", n_max " << res.n_max << '\n';
    std::cout << "A/D ops on calibration set: baseline " << rep.baseline_ops() << ", calibrated "
              << rep.configured_ops() << ", reduction " << rep.reduction_ratio() << "x\n";
    if (res.warning) {
        std::cerr << "warning: no lossy configuration met the accuracy threshold; emitted lossless config\n";
    }
    return 0;
}

int cmd_simulate(const RunSpec& s) {
    const auto net = open_model(s);
    const auto eval = open_eval(s);
    const auto dir = out_dir(s);
    InferenceConfig cfg = lossless_config(s.r_adc);
    std::optional<CalibrationResult> calib_res;
    if (!s.config.empty()) {
        cfg = load_config(s.config, net.graph);
        calib_res = parse_calibration(read_text(s.config));
        require(calib_res->r_adc == s.r_adc, "config was calibrated for a different r_adc");
    }

    InferenceStats stats;
    BlCollector bl(net.xbar);
    std::ostringstream trace;
    std::size_t traced = 0;
    LayerBlSink sink = [&](int layer, const BlSample& b) {
        if (!s.dump_bl.empty()) {
            bl.sink()(layer, b);
        }
        if (!s.dump_trace.empty() && traced < s.trace_limit) {
            const auto r = convert(cfg.mode_for(layer), b.level, true);
            trace << "# layer " << layer << " bl " << b.tile * net.xbar.size + b.bl << " level " << b.level
                  << " decoded " << r.decoded << " ops " << r.ops << '\n';
            write_trace(trace, r.trace);
            ++traced;
        }
    };
    const bool want_sink = !s.dump_bl.empty() || !s.dump_trace.empty();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval.size(); ++i) {
        const auto logits = run_inference(net, eval.sample(i), cfg, &stats, want_sink ? &sink : nullptr);
        correct += argmax(logits) == eval.labels[i] ? 1 : 0;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(eval.size());

    std::map<int, DistributionProfile> observed;
    for (int l : net.graph.mvm_layers()) {
        auto h = stats[l].histogram;
        h.resize(static_cast<std::size_t>(net.xbar.size) + 1, 0);
        observed[l] = make_profile(std::move(h), l);
    }
    const EnergyReport rep = account(net, cfg, observed, eval.size(), s.e_op);

    nlohmann::json summary;
    summary["samples"] = eval.size();
    summary["accuracy"] = acc;
    summary["baseline_ops"] = rep.baseline_ops();
    summary["configured_ops"] = rep.configured_ops();
    summary["reduction_ratio"] = rep.reduction_ratio();
    nlohmann::json sim = nlohmann::json::array();
    for (const auto& [l, st] : stats) {
        sim.push_back({{"layer", l},
                       {"conversions", st.conversions},
                       {"ops", st.ops},
                       {"partial_sum_saturations", st.partial_sum_saturations},
                       {"accumulator_saturations", st.accumulator_saturations}});
    }
    summary["simulated"] = sim;
    if (calib_res) {
        // compare against the calibration-time prediction for this many samples
        const EnergyReport pred = account(net, cfg, calib_res->profiles, eval.size(), s.e_op);
        nlohmann::json disc = nlohmann::json::array();
        for (const auto& d : verify_against_simulation(pred, stats)) {
            disc.push_back({{"layer", d.layer}, {"field", d.field}, {"analytic", d.analytic}, {"simulated", d.simulated}});
        }
        summary["predicted_ops"] = pred.configured_ops();
        summary["predicted_reduction_ratio"] = pred.reduction_ratio();
        summary["discrepancies"] = disc;
    }
    if (s.baseline) {
        summary["baseline_accuracy"] = evaluate_accuracy(net, eval, lossless_config(s.r_adc));
    }

    make_out(dir);
    write_text(dir / "simulation.json", summary.dump(2) + "\n");
    write_text(dir / "energy.csv", energy_csv(rep));
    write_text(dir / "energy.json", energy_json(rep));
    if (!s.dump_bl.empty()) {
        bl.write(s.dump_bl);
    }
    if (!s.dump_trace.empty()) {
        write_text(s.dump_trace, trace.str());
    }
    std::cout << "accuracy " << acc << " over " << eval.size() << " samples\n";
    if (summary.contains("baseline_accuracy")) {
        std::cout << "baseline accuracy " << summary["baseline_accuracy"].get<double>() << '\n';
    }
    std::cout << "A/D ops: baseline " << rep.baseline_ops() << ", configured " << rep.configured_ops()
              << ", reduction " << rep.reduction_ratio() << "x\n";
    return 0;
}

std::pair<int, int> parse_bits(const std::string& text) {
    int hi = 0;
    int lo = 0;
    char sep = 0;
    std::istringstream is(text);
    require(static_cast<bool>(is >> hi >> sep >> lo) && sep == ':' && is.peek() == EOF,
            "--bits expects HI:LO, got '" + text + "'");
    if (hi < lo) {
        std::swap(hi, lo);
    }
    return {hi, lo};
}

int cmd_sweep(const RunSpec& s) {
    const auto net = open_model(s);
    const auto calib = open_calib(s);
    const auto eval = open_eval(s);
    const auto dir = out_dir(s);
    const auto [hi, lo] = parse_bits(s.bits);
    require(lo >= 1 && hi <= s.r_adc, "--bits must lie within [1, r_adc]");

    const InferenceConfig lossless = lossless_config(s.r_adc);
    const auto profiles = profile_network(net, calib, lossless);
    const SweepBounds bounds{s.alpha, s.beta, s.candidates};
    const int full = net.xbar.ideal_resolution();

    std::ostringstream csv;
    csv.precision(10);
    csv << "bits,uniform_accuracy,trq_accuracy,uniform_ops,trq_ops\n";
    std::cout << "bits  uniform_acc  trq_acc  uniform_ops  trq_ops\n";
    for (int k = hi; k >= lo; --k) {
        InferenceConfig uni = lossless;
        InferenceConfig trq = lossless;
        for (int l : net.graph.mvm_layers()) {
            uni.layers[l] = UniformAdc{k, std::ldexp(1.0, std::max(0, full - k))};
            if (k < s.r_adc) {
                const auto& p = profiles.at(l);
                trq.layers[l] = search_layer(p, classify(p, s.rho, s.gamma), s.r_adc, k, bounds, s.e_op).mode;
            }
        }
        InferenceStats us;
        InferenceStats ts;
        const double ua = evaluate_accuracy(net, eval, uni, &us);
        const double ta = evaluate_accuracy(net, eval, trq, &ts);
        std::uint64_t uo = 0;
        std::uint64_t to = 0;
        for (const auto& [l, st] : us) {
            uo += st.ops;
        }
        for (const auto& [l, st] : ts) {
            to += st.ops;
        }
        csv << k << ',' << ua << ',' << ta << ',' << uo << ',' << to << '\n';
        std::cout << std::left << std::setw(6) << k << std::setw(13) << ua << std::setw(9) << ta << std::setw(13)
                  << uo << to << '\n';
    }
    make_out(dir);
    write_text(dir / "sweep.csv", csv.str());
    return 0;
}

int cmd_make_fixtures(const RunSpec& s) {
    const auto dir = out_dir(s);
    require(s.fixture == "mlp" || s.fixture == "lenet" || s.fixture == "all", "--kind must be mlp, lenet or all");
    if (s.fixture != "lenet") {
        load_or_make_fixture(FixtureKind::Mlp, dir / "mlp");
        std::cout << "wrote " << (dir / "mlp").string() << '\n';
    }
    if (s.fixture != "mlp") {
        load_or_make_fixture(FixtureKind::Lenet, dir / "lenet");
        std::cout << "wrote " << (dir / "lenet").string() << '\n';
    }
    return 0;
}

void add_common(CLI::App* c, RunSpec& s) {
    c->add_option("--model", s.model, "model manifest (JSON)");
    c->add_option("--out", s.out, "output directory");
    c->add_option("--r-adc", s.r_adc, "ADC resolution in bits")->capture_default_str();
    c->add_option("--e-op", s.e_op, "energy per A/D op")->capture_default_str();
}

void add_search(CLI::App* c, RunSpec& s) {
    c->add_option("--calib-set", s.calib_set, "calibration dataset descriptor");
    c->add_option("--seed", s.seed, "seed for the calibration subset")->capture_default_str();
    c->add_option("--calib-size", s.calib_size, "calibration samples drawn from --calib-set")->capture_default_str();
    c->add_option("--alpha", s.alpha, "lower V_grid sweep factor")->capture_default_str();
    c->add_option("--beta", s.beta, "upper V_grid sweep factor")->capture_default_str();
    c->add_option("--candidates", s.candidates, "V_grid candidates")->capture_default_str();
    c->add_option("--rho", s.rho, "ideal-class prefix mass")->capture_default_str();
    c->add_option("--gamma", s.gamma, "normal-class coefficient of variation bound")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Twin-range SAR ADC simulator and calibration toolkit"};
    app.require_subcommand(1);
    RunSpec s;

    auto* profile = app.add_subcommand("profile", "bit-line level histograms per weighted layer");
    add_common(profile, s);
    add_search(profile, s);
    profile->add_option("--dump-bl", s.dump_bl, "write raw bit-line samples to this file");

    auto* calibrate = app.add_subcommand("calibrate", "search per-layer ADC settings");
    add_common(calibrate, s);
    add_search(calibrate, s);
    calibrate->add_option("--eval-set", s.eval_set, "evaluation dataset descriptor");
    calibrate->add_option("--acc-threshold", s.acc_threshold, "allowed absolute accuracy drop")->capture_default_str();

    auto* simulate = app.add_subcommand("simulate", "run inference under a configuration");
    add_common(simulate, s);
    simulate->add_option("--eval-set", s.eval_set, "evaluation dataset descriptor");
    simulate->add_option("--config", s.config, "calibration result (default: lossless uniform)");
    simulate->add_flag("--baseline", s.baseline, "also report uniform r_adc-bit accuracy");
    simulate->add_option("--dump-bl", s.dump_bl, "write raw bit-line samples to this file");
    simulate->add_option("--dump-trace", s.dump_trace, "write SAR comparator traces to this file");
    simulate->add_option("--trace-limit", s.trace_limit, "conversions to trace")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "accuracy and ops versus ADC bits, uniform and twin-range");
    add_common(sweep, s);
    add_search(sweep, s);
    sweep->add_option("--eval-set", s.eval_set, "evaluation dataset descriptor");
    sweep->add_option("--bits", s.bits, "bit range HI:LO")->capture_default_str();

    auto* fixtures = app.add_subcommand("make-fixtures", "write the synthetic digit datasets and models");
    fixtures->add_option("--out", s.out, "output directory");
    fixtures->add_option("--kind", s.fixture, "mlp, lenet or all")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*profile) return cmd_profile(s);
        if (*calibrate) return cmd_calibrate(s);
        if (*simulate) return cmd_simulate(s);
        if (*sweep) return cmd_sweep(s);
        if (*fixtures) return cmd_make_fixtures(s);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const InvariantError& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    }
    return 2;
}
