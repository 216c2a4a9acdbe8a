// translock: command-line front end. Every command writes one output
// directory holding config.json, its result files and manifest.json.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "translock/analysis.hpp"
#include "translock/bloch.hpp"
#include "translock/chainsim.hpp"
#include "translock/discriminator.hpp"
#include "translock/error.hpp"
#include "translock/fit.hpp"
#include "translock/io.hpp"

using namespace translock;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

std::string command_line;

// Usage-class failures: the inputs are wrong, not the run.
struct UsageError : Error {
    using Error::Error;
};

struct Common {
    std::string config_path;
    std::string out;
    bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_config) {
    if (with_config) cmd->add_option("--config", c.config_path, "JSON configuration (defaults when omitted)");
    cmd->add_option("--out", c.out, "output directory ($TRANSLOCK_OUTPUT_ROOT prefixes relative paths)")->required();
    cmd->add_flag("--force", c.force, "replace an existing output directory");
}

RunConfig load(const Common& c) { return c.config_path.empty() ? RunConfig{} : load_config(c.config_path); }

// Output directory plus the run bookkeeping that ends up in the manifest.
class Run {
public:
    Run(const Common& c, const json& config)
        : dir_(resolve_output(c.out), c.force), start_(std::chrono::steady_clock::now()) {
        config_text_ = config.dump(2) + "\n";
        dir_.write("config.json", config_text_);
    }
    void write(const std::string& name, const std::string& contents) { dir_.write(name, contents); }
    json& manifest() { return manifest_; }
    void commit() {
        manifest_["tool_version"] = tool_version;
        manifest_["command_line"] = command_line;
        manifest_["config_sha256"] = sha256_hex(config_text_);
        manifest_["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        dir_.commit(manifest_);
        std::cout << "wrote " << dir_.target().string() << "\n";
    }

private:
    OutputDirectory dir_;
    std::chrono::steady_clock::time_point start_;
    std::string config_text_;
    json manifest_ = json::object();
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Plain SVG line plot: one polyline per series, NaN points break the line.
std::string svg_plot(const std::vector<double>& x, const std::vector<std::vector<double>>& ys,
                     const std::string& xlabel, const std::string& ylabel) {
    const double w = 720, h = 420, left = 70, right = 20, top = 20, bottom = 50;
    double x0 = x.front(), x1 = x.back(), y0 = INFINITY, y1 = -INFINITY;
    for (const auto& y : ys)
        for (double v : y)
            if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
    if (!(y1 > y0)) y0 -= 1.0, y1 += 1.0;
    if (!(x1 > x0)) x0 -= 1.0, x1 += 1.0;
    auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
    auto py = [&](double v) { return h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\""
      << h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (std::size_t k = 0; k < ys.size(); ++k) {
        s << "<path fill=\"none\" stroke=\"" << colors[k % 3] << "\" d=\"";
        bool pen = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!std::isfinite(ys[k][i])) {
                pen = false;
                continue;
            }
            s << (pen ? " L" : " M") << px(x[i]) << "," << py(ys[k][i]);
            pen = true;
        }
        s << "\"/>\n";
    }
    auto label = [&](double x_, double y_, const std::string& t, const char* anchor) {
        s << "<text x=\"" << x_ << "\" y=\"" << y_ << "\" font-size=\"12\" text-anchor=\"" << anchor << "\">" << t
          << "</text>\n";
    };
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x0);
    label(left, h - bottom + 16, buf, "start");
    std::snprintf(buf, sizeof buf, "%.4g", x1);
    label(w - right, h - bottom + 16, buf, "end");
    std::snprintf(buf, sizeof buf, "%.4g", y0);
    label(left - 4, h - bottom, buf, "end");
    std::snprintf(buf, sizeof buf, "%.4g", y1);
    label(left - 4, top + 10, buf, "end");
    label((left + w - right) / 2, h - 12, xlabel, "middle");
    label(14, (top + h - bottom) / 2, ylabel, "middle");
    s << "</svg>\n";
    return s.str();
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

double parse_number(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) throw UsageError(what + ": '" + text + "' is not a number");
    return v;
}

// ---- simulate-chain -------------------------------------------------------

struct ChainArgs {
    Common common;
    double duration = -1.0;
    long long seed = -1;
    std::string seeds;
    bool svg = false;
};

int cmd_simulate_chain(const ChainArgs& a) {
    RunConfig config = load(a.common);
    if (a.duration > 0.0) config.chain.duration = a.duration;
    if (a.seed >= 0) config.chain.seed = static_cast<std::uint64_t>(a.seed);
    std::vector<std::uint64_t> seeds{config.chain.seed};
    if (!a.seeds.empty()) {
        const auto dots = a.seeds.find("..");
        if (dots == std::string::npos) throw UsageError("--seeds expects a..b");
        const double lo = parse_number(a.seeds.substr(0, dots), "--seeds");
        const double hi = parse_number(a.seeds.substr(dots + 2), "--seeds");
        if (lo < 0 || hi < lo || lo != std::floor(lo) || hi != std::floor(hi))
            throw UsageError("--seeds expects non-negative integers a..b with a <= b");
        seeds.clear();
        for (auto s = static_cast<std::uint64_t>(lo); s <= static_cast<std::uint64_t>(hi); ++s) seeds.push_back(s);
        config.chain.seed = seeds.front();
    }
    validate(config);

    Run run(a.common, config_to_json(config));
    json per_seed = json::array();
    bool any_lost = false;
    for (const std::uint64_t seed : seeds) {
        ChainConfig c = config.chain;
        c.seed = seed;
        const TraceSet ts = simulate_chain(c);
        const std::string prefix = seeds.size() > 1 ? "seed" + std::to_string(seed) + "_" : "";
        for (const auto& tr : ts.traces) run.write(prefix + tr.label + ".csv", to_csv(traces_to_csv({tr})));
        const auto& out = ts.get(trace_label::out_of_loop);
        if (a.svg) {
            std::vector<double> t(out.size());
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * out.sample_interval;
            std::vector<double> khz(out.samples);
            for (double& v : khz) v /= 1e3;
            run.write(prefix + "out_of_loop.svg", svg_plot(t, {khz}, "time (s)", "out-of-loop (kHz)"));
        }
        json locks = json::array();
        for (const auto& l : ts.locks)
            locks.push_back({{"loop", l.loop}, {"lost", l.lost}, {"first_loss_time_s", l.first_loss_time}});
        any_lost = any_lost || ts.any_lock_lost();
        json phases = json::object();
        for (const auto& [loop, phase] : ts.demod_phases) phases[loop] = phase;
        per_seed.push_back({{"seed", seed},
                            {"demod_phases_rad", phases},
                            {"out_of_loop_rms_Hz", settled_rms(out)},
                            {"lock_lost", ts.any_lock_lost()},
                            {"locks", locks}});
        if (ts.any_lock_lost()) std::cerr << "warning: lock lost in seed " << seed << "\n";
    }
    auto& m = run.manifest();
    m["seed"] = seeds.size() == 1 ? json(seeds.front()) : json(seeds);
    m["lock_lost"] = any_lost;
    if (seeds.size() == 1) {
        m["out_of_loop_rms_Hz"] = per_seed[0]["out_of_loop_rms_Hz"];
        m["locks"] = per_seed[0]["locks"];
        m["demod_phases_rad"] = per_seed[0]["demod_phases_rad"];
    } else {
        m["runs"] = per_seed;
    }
    run.commit();
    return 0;
}

// ---- allan ----------------------------------------------------------------

struct AllanArgs {
    Common common;
    std::string input, column, taus = "octave", estimator;
    double carrier = 0.0;
    double fit_min = 0.0, fit_max = 0.0;
    bool averaged = false;
};

FrequencyTrace load_trace(const std::string& input, std::string& column) {
    const CsvTable table = read_csv(input);
    if (column.empty()) {
        for (const auto& h : table.header)
            if (h != "time_s") {
                column = h;
                break;
            }
        if (column.empty()) throw FormatError("'" + input + "' has no data column");
    }
    return trace_from_csv(table, column);
}

int cmd_allan(AllanArgs a) {
    const RunConfig defaults = load(a.common);
    const double carrier = a.carrier > 0.0 ? a.carrier : defaults.analysis.carrier;
    const std::string estimator_name = a.estimator.empty() ? defaults.analysis.estimator : a.estimator;
    const AllanEstimator estimator = parse_allan_estimator(estimator_name);
    FrequencyTrace trace = load_trace(a.input, a.column);
    trace.averaged_per_sample = a.averaged;
    std::vector<double> taus;
    if (a.taus == "octave")
        taus = octave_taus(trace);
    else
        for (const auto& t : split_list(a.taus)) taus.push_back(parse_number(t, "--taus"));
    if (taus.empty()) throw UsageError("no averaging times");

    json settings = {{"input", a.input},
                     {"input_sha256", sha256_hex(read_file(a.input))},
                     {"column", a.column},
                     {"carrier_Hz", carrier},
                     {"estimator", estimator_name},
                     {"taus", a.taus},
                     {"averaged_per_sample", a.averaged}};
    const AllanResult r = allan_variance(trace, carrier, taus, estimator);

    CsvTable t;
    t.metadata = {"estimator: " + to_string(r.estimator), "carrier_Hz: " + format_number(r.carrier_frequency),
                  std::string("averaged_per_sample: ") + (r.averaged_per_sample ? "true" : "false"),
                  "source_column: " + a.column};
    t.header = {"tau_s", "sigma2", "n_pairs"};
    t.columns.resize(3);
    for (const auto& p : r.points) {
        t.columns[0].push_back(p.tau);
        t.columns[1].push_back(p.sigma2);
        t.columns[2].push_back(static_cast<double>(p.n_pairs));
    }
    Run run(a.common, settings);
    run.write("allan.csv", to_csv(t));
    json summary = {{"estimator", to_string(r.estimator)}, {"carrier_Hz", carrier}, {"warnings", r.warnings}};
    const double lo = a.fit_min > 0.0 ? a.fit_min : r.points.front().tau;
    const double hi = a.fit_max > 0.0 ? a.fit_max : r.points.back().tau;
    bool all_zero = true;
    for (const auto& p : r.points) all_zero = all_zero && p.sigma2 == 0.0;
    if (!all_zero) {
        try {
            const NoiseClassification c = classify_noise(r, lo, hi);
            summary["slope"] = c.slope;
            summary["noise_type"] = c.label;
            summary["fit_range_s"] = {lo, hi};
            summary["fit_points"] = c.points_used;
            std::cout << "slope " << c.slope << " (" << c.label << ")\n";
        } catch (const DomainError& e) {
            summary["warnings"].push_back(std::string("no slope: ") + e.what());
        }
    }
    run.write("summary.json", dump(summary));
    run.manifest()["slope"] = summary.contains("slope") ? summary["slope"] : json(nullptr);
    run.commit();
    return 0;
}

// ---- psd ------------------------------------------------------------------

struct PsdArgs {
    Common common;
    std::string input, column, window = "hann";
    double bandwidth = 0.0, threshold = -40.0, full_scale = 1.0;
    std::size_t segment = 4096;
    bool remove_mean = false;
};

int cmd_psd(PsdArgs a) {
    const FrequencyTrace trace = load_trace(a.input, a.column);
    PsdOptions opt;
    opt.segment_length = a.segment;
    if (a.window == "hann")
        opt.window = Window::hann;
    else if (a.window == "rectangular")
        opt.window = Window::rectangular;
    else
        throw UsageError("--window must be hann or rectangular");
    opt.full_scale = a.full_scale;
    opt.remove_mean = a.remove_mean;
    const double bandwidth = a.bandwidth > 0.0 ? a.bandwidth : 0.5 / trace.sample_interval;
    json settings = {{"input", a.input},
                     {"input_sha256", sha256_hex(read_file(a.input))},
                     {"column", a.column},
                     {"bandwidth_Hz", bandwidth},
                     {"segment_length", a.segment},
                     {"window", a.window},
                     {"full_scale", a.full_scale},
                     {"remove_mean", a.remove_mean},
                     {"threshold_dB", a.threshold}};
    const PsdResult r = psd(trace, bandwidth, opt);
    CsvTable t;
    t.metadata = {"window: " + a.window, "resolution_Hz: " + format_number(r.resolution),
                  "segments: " + std::to_string(r.segments)};
    t.header = {"frequency_Hz", "level_dB", "density_" + trace.unit + "2_per_Hz"};
    t.columns.resize(3);
    for (const auto& b : r.bins) {
        t.columns[0].push_back(b.frequency);
        t.columns[1].push_back(b.level_db);
        t.columns[2].push_back(b.density);
    }
    Run run(a.common, settings);
    run.write("psd.csv", to_csv(t));
    json peaks = json::array();
    for (const auto& p : find_peaks(r, a.threshold)) peaks.push_back({{"frequency_Hz", p.frequency}, {"level_dB", p.level_db}});
    run.write("summary.json", dump({{"resolution_Hz", r.resolution}, {"segments", r.segments}, {"peaks", peaks}}));
    if (!peaks.empty()) {
        run.manifest()["strongest_peak_Hz"] = peaks[0]["frequency_Hz"];
        std::cout << "strongest peak " << peaks[0]["frequency_Hz"].get<double>() << " Hz\n";
    }
    run.commit();
    return 0;
}

// ---- gauge ----------------------------------------------------------------

struct GaugeArgs {
    Common common;
    std::string input, x = "frequency_Hz", y = "signal_V";
};

int cmd_gauge(const GaugeArgs& a) {
    const CsvTable table = read_csv(a.input);
    const auto& f = table.column(a.x);
    const auto& s = table.column(a.y);
    json settings = {{"input", a.input}, {"input_sha256", sha256_hex(read_file(a.input))}, {"x", a.x}, {"y", a.y}};
    const FrequencyGauge g = gauge_slope(f, s);
    Run run(a.common, settings);
    json summary = {{"slope_V_per_Hz", g.slope}, {"offset_V", g.offset}, {"points", f.size()}};
    run.write("summary.json", dump(summary));
    run.manifest()["slope_V_per_Hz"] = g.slope;
    std::cout << "slope " << format_number(g.slope) << " V/Hz, offset " << format_number(g.offset) << " V\n";
    run.commit();
    return 0;
}

// ---- spectrum -------------------------------------------------------------

struct SpectrumArgs {
    Common common;
    std::string scan;
    bool shot_noise = false;
    long long seed = -1;
    bool svg = false;
};

CsvTable spectrum_table(const SpectrumScan& scan) {
    CsvTable t;
    t.header = {"detuning_Hz", "counts", "model_counts"};
    t.columns.resize(3);
    for (std::size_t i = 0; i < scan.detuning_866.size(); ++i) {
        t.columns[0].push_back(scan.detuning_866[i] / constants::two_pi);
        t.columns[1].push_back(scan.fluorescence[i]);
        t.columns[2].push_back(scan.model[i]);
    }
    return t;
}

int cmd_spectrum(const SpectrumArgs& a) {
    RunConfig config = load(a.common);
    auto& sp = config.spectrum;
    if (!a.scan.empty()) {
        std::vector<std::string> parts;
        std::string item;
        std::istringstream in(a.scan);
        while (std::getline(in, item, ':')) parts.push_back(item);
        if (parts.size() != 3) throw UsageError("--scan expects from:to:step in Hz");
        sp.scan_from = constants::two_pi * parse_number(parts[0], "--scan");
        sp.scan_to = constants::two_pi * parse_number(parts[1], "--scan");
        sp.scan_step = constants::two_pi * parse_number(parts[2], "--scan");
    }
    if (a.shot_noise) sp.shot_noise = true;
    if (a.seed >= 0) sp.seed = static_cast<std::uint64_t>(a.seed);
    validate(config);
    if (sp.scan_to < sp.scan_from) throw UsageError("scan must run upwards (from <= to)");

    const auto grid = scan_grid(sp.scan_from, sp.scan_to, sp.scan_step);
    Run run(a.common, config_to_json(config));
    const SpectrumScan scan = excitation_spectrum(config.ion, grid, sp.scale, sp.background, sp.shot_noise, sp.seed);
    const CsvTable table = spectrum_table(scan);
    run.write("spectrum.csv", to_csv(table));
    if (a.svg) {
        std::vector<double> mhz(table.columns[0]);
        for (double& v : mhz) v /= 1e6;
        run.write("spectrum.svg", svg_plot(mhz, {table.columns[1], table.columns[2]}, "866 detuning (MHz)", "counts"));
    }
    json dips = json::array(), predicted = json::array(), gaps = json::array();
    for (double d : spectrum_dips(scan)) dips.push_back(d / constants::two_pi);
    for (const auto& r : dark_resonances(config.ion))
        predicted.push_back({{"s_level", level_name(r.s_level)},
                             {"d_level", level_name(r.d_level)},
                             {"detuning_Hz", r.detuning_866 / constants::two_pi}});
    for (auto g : scan.gaps) gaps.push_back(scan.detuning_866[g] / constants::two_pi);
    run.write("summary.json",
              dump({{"points", grid.size()}, {"dips_Hz", dips}, {"dark_resonances", predicted}, {"degenerate_points_Hz", gaps}}));
    auto& m = run.manifest();
    m["seed"] = sp.seed;
    m["shot_noise"] = sp.shot_noise;
    m["points"] = grid.size();
    if (!scan.gaps.empty()) std::cerr << "warning: " << scan.gaps.size() << " points have no unique steady state\n";
    run.commit();
    return 0;
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
    Common common;
    std::string data, free, constraint;
};

int cmd_fit(const FitArgs& a) {
    RunConfig config = load(a.common);
    if (!a.free.empty()) config.fit.free_parameters = split_list(a.free);
    if (!a.constraint.empty()) {
        if (a.constraint == "none") {
            config.fit.tie_linewidths = false;
        } else {
            config.fit.tie_linewidths = true;
            config.fit.linewidth_ratio = parse_number(a.constraint, "--constraint");
        }
    }
    validate(config);
    const CsvTable table = read_csv(a.data);
    FitProblem p;
    for (double f : table.column("detuning_Hz")) p.data.detuning_866.push_back(constants::two_pi * f);
    p.data.fluorescence = table.column("counts");
    for (double c : p.data.fluorescence)
        if (!std::isfinite(c) || c < 0.0) throw FormatError("counts must be finite and non-negative");
    p.base = config.ion;
    p.scale = config.spectrum.scale;
    p.background = config.spectrum.background;
    p.free_parameters = config.fit.free_parameters;
    p.tie_linewidths = config.fit.tie_linewidths;
    p.linewidth_ratio = config.fit.linewidth_ratio;
    p.max_evaluations = config.fit.max_evaluations;
    p.restarts = config.fit.restarts;
    p.restart_spread = config.fit.restart_spread;
    validate(p);

    ParameterSet initial;
    for (const auto& name : p.free_parameters) initial[name] = get_parameter(p.base, p.scale, p.background, name);

    json settings = config_to_json(config);
    settings["data"] = {{"path", a.data}, {"sha256", sha256_hex(read_file(a.data))}};
    Run run(a.common, settings);
    const FitResult r = fit_spectrum(p, initial);

    json estimates = json::object();
    for (const auto& [name, value] : r.estimates) estimates[name] = value;
    json report = {{"estimates", estimates},
                   {"linewidth_397_Hz", r.config.linewidth_397},
                   {"linewidth_866_Hz", r.config.linewidth_866},
                   {"scale", r.scale},
                   {"background", r.background},
                   {"chi_squared", r.chi_squared},
                   {"reduced_chi_squared", r.reduced_chi_squared},
                   {"degrees_of_freedom", r.degrees_of_freedom},
                   {"iterations", r.iterations},
                   {"evaluations", r.evaluations},
                   {"converged", r.converged},
                   {"tie_linewidths", p.tie_linewidths},
                   {"linewidth_ratio", p.linewidth_ratio},
                   {"units", "rad/s for rabi and detuning, Hz for linewidths, G for field, rad for angles"}};
    run.write("report.json", dump(report));
    SpectrumScan model = r.model;
    model.fluorescence = p.data.fluorescence;
    run.write("model.csv", to_csv(spectrum_table(model)));
    CsvTable trace;
    trace.header = {"iteration", "chi_squared"};
    trace.columns.resize(2);
    for (std::size_t i = 0; i < r.residual_trace.size(); ++i) {
        trace.columns[0].push_back(static_cast<double>(i));
        trace.columns[1].push_back(r.residual_trace[i]);
    }
    run.write("residual_trace.csv", to_csv(trace));
    run.manifest()["reduced_chi_squared"] = r.reduced_chi_squared;
    run.manifest()["converged"] = r.converged;
    std::cout << "reduced chi^2 " << r.reduced_chi_squared << ", linewidth_397 " << r.config.linewidth_397 << " Hz\n";
    if (!r.converged) std::cerr << "warning: fit stopped at the evaluation limit\n";
    run.commit();
    return 0;
}

// ---- long-run -------------------------------------------------------------

struct LongRunArgs {
    Common common;
    double hours = -1.0, decimation = -1.0;
    long long seed = -1;
};

int cmd_long_run(const LongRunArgs& a) {
    RunConfig config = load(a.common);
    if (a.hours > 0.0) config.long_run.hours = a.hours;
    if (a.decimation > 0.0) config.long_run.decimation = a.decimation;
    if (a.seed >= 0) config.chain.seed = static_cast<std::uint64_t>(a.seed);
    validate(config);
    Run run(a.common, config_to_json(config));
    const LongRunResult r = long_term_run(config.chain, config.long_run.hours * 3600.0, config.long_run.decimation);
    run.write("long_run.csv", to_csv(traces_to_csv({r.out_of_loop, r.slave_offset, r.pressure})));

    json summary = {{"points", r.out_of_loop.size()}, {"peak_to_peak_Hz", peak_to_peak(r.out_of_loop.samples)}};
    std::vector<double> taus;
    for (double t = r.out_of_loop.sample_interval; t <= r.out_of_loop.duration() / 3.0; t *= 2.0) taus.push_back(t);
    const double dt = r.out_of_loop.sample_interval;
    if (10.0 >= dt && std::fmod(10.0, dt) == 0.0) taus.push_back(10.0);
    std::sort(taus.begin(), taus.end());
    if (!taus.empty()) {
        const AllanResult av = allan_variance(r.out_of_loop, config.analysis.carrier, taus,
                                              parse_allan_estimator(config.analysis.estimator));
        json points = json::array();
        for (const auto& p : av.points) {
            points.push_back({{"tau_s", p.tau}, {"sigma2", p.sigma2}});
            if (p.tau == 10.0) summary["sigma2_at_10s"] = p.sigma2;
        }
        summary["allan"] = points;
        try {
            summary["slope_beyond_100s"] = classify_noise(av, 100.0, av.points.back().tau).slope;
        } catch (const DomainError&) {
        }
    }
    json locks = json::array();
    bool lost = false;
    for (const auto& l : r.locks) {
        locks.push_back({{"loop", l.loop}, {"lost", l.lost}, {"first_loss_time_s", l.first_loss_time}});
        lost = lost || l.lost;
    }
    summary["locks"] = locks;
    run.write("summary.json", dump(summary));
    auto& m = run.manifest();
    m["seed"] = config.chain.seed;
    m["points"] = r.out_of_loop.size();
    m["lock_lost"] = lost;
    if (lost) std::cerr << "warning: lock lost during the long run\n";
    run.commit();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

    CLI::App app{"translock: transfer-cavity lock chain and 40Ca+ spectroscopy toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    ChainArgs chain;
    auto* sim = app.add_subcommand("simulate-chain", "short full-rate simulation of the lock chain");
    add_common(sim, chain.common, true);
    sim->add_option("--duration", chain.duration, "simulated time in s");
    sim->add_option("--seed", chain.seed, "noise seed");
    sim->add_option("--seeds", chain.seeds, "seed range a..b, one set of traces per seed");
    sim->add_flag("--svg", chain.svg, "also plot the out-of-loop trace");

    AllanArgs allan;
    auto* al = app.add_subcommand("allan", "Allan variance of a trace CSV");
    add_common(al, allan.common, true);
    al->add_option("--input", allan.input, "trace CSV (time_s plus data columns)")->required();
    al->add_option("--column", allan.column, "data column (first after time_s by default)");
    al->add_option("--carrier", allan.carrier, "carrier frequency in Hz (default from config)");
    al->add_option("--estimator", allan.estimator, "overlapping or non-overlapping");
    al->add_option("--taus", allan.taus, "comma-separated averaging times in s, or 'octave'");
    al->add_option("--fit-min", allan.fit_min, "lower tau of the slope fit");
    al->add_option("--fit-max", allan.fit_max, "upper tau of the slope fit");
    al->add_flag("--averaged", allan.averaged, "samples are interval means (no dead time)");

    PsdArgs psd_args;
    auto* ps = app.add_subcommand("psd", "power spectral density of a trace CSV");
    add_common(ps, psd_args.common, false);
    ps->add_option("--input", psd_args.input, "trace CSV")->required();
    ps->add_option("--column", psd_args.column, "data column");
    ps->add_option("--bandwidth", psd_args.bandwidth, "analysis bandwidth in Hz (Nyquist by default)");
    ps->add_option("--segment", psd_args.segment, "Welch segment length");
    ps->add_option("--window", psd_args.window, "hann or rectangular");
    ps->add_option("--full-scale", psd_args.full_scale, "amplitude mapped to 0 dB");
    ps->add_option("--threshold", psd_args.threshold, "peak threshold in dB");
    ps->add_flag("--remove-mean", psd_args.remove_mean, "subtract the mean first");

    GaugeArgs gauge;
    auto* ga = app.add_subcommand("gauge", "linear frequency-to-voltage calibration");
    add_common(ga, gauge.common, false);
    ga->add_option("--input", gauge.input, "CSV with frequency and signal columns")->required();
    ga->add_option("--x", gauge.x, "frequency column");
    ga->add_option("--y", gauge.y, "signal column");

    SpectrumArgs spec;
    auto* sp = app.add_subcommand("spectrum", "866 nm excitation spectrum of a single ion");
    add_common(sp, spec.common, true);
    sp->add_option("--scan", spec.scan, "from:to:step of the 866 detuning in Hz");
    sp->add_flag("--shot-noise", spec.shot_noise, "Poisson counting noise");
    sp->add_option("--seed", spec.seed, "shot-noise seed");
    sp->add_flag("--svg", spec.svg, "also plot the spectrum");

    FitArgs fit;
    auto* fi = app.add_subcommand("fit", "fit the 8-level model to a measured spectrum");
    add_common(fi, fit.common, true);
    fi->add_option("--data", fit.data, "CSV with detuning_Hz and counts")->required();
    fi->add_option("--free", fit.free, "comma-separated free parameters");
    fi->add_option("--constraint", fit.constraint, "linewidth_866 / linewidth_397 ratio, or 'none'");

    LongRunArgs lr;
    auto* lo = app.add_subcommand("long-run", "multi-rate run over hours with bin-averaged output");
    add_common(lo, lr.common, true);
    lo->add_option("--hours", lr.hours, "duration in hours");
    lo->add_option("--decimation", lr.decimation, "output bin in s");
    lo->add_option("--seed", lr.seed, "noise seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        if (*sim) return cmd_simulate_chain(chain);
        if (*al) return cmd_allan(allan);
        if (*ps) return cmd_psd(psd_args);
        if (*ga) return cmd_gauge(gauge);
        if (*sp) return cmd_spectrum(spec);
        if (*fi) return cmd_fit(fit);
        if (*lo) return cmd_long_run(lr);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_usage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return exit_usage;
    } catch (const FitError& e) {
        std::cerr << "fit error: " << e.what() << "\n";
        return exit_usage;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const InvalidModel& e) {
        std::cerr << "invalid model: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_usage;
}
