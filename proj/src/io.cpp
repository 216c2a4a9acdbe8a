#include "translock/io.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include <openssl/evp.h>

#include "translock/analysis.hpp"
#include "translock/error.hpp"

namespace translock {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One description of the file layout serves both directions: Reader pulls
// values out of JSON (and rejects keys it never visited), Writer emits them.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown key '" + prefix() + key + "'");
    }

    void operator()(const std::string& key, double& v) {
        if (const json* x = take(key)) {
            if (!x->is_number()) throw ConfigError("'" + prefix() + key + "' must be a number");
            v = x->get<double>();
        }
    }
    void operator()(const std::string& key, bool& v) {
        if (const json* x = take(key)) {
            if (!x->is_boolean()) throw ConfigError("'" + prefix() + key + "' must be true or false");
            v = x->get<bool>();
        }
    }
    void operator()(const std::string& key, int& v) {
        if (const json* x = take(key)) {
            if (!x->is_number_integer()) throw ConfigError("'" + prefix() + key + "' must be an integer");
            v = x->get<int>();
        }
    }
    void operator()(const std::string& key, std::uint64_t& v) {
        if (const json* x = take(key)) {
            if (!x->is_number_unsigned() && !(x->is_number_integer() && x->get<long long>() >= 0))
                throw ConfigError("'" + prefix() + key + "' must be a non-negative integer");
            v = x->get<std::uint64_t>();
        }
    }
    void operator()(const std::string& key, std::string& v) {
        if (const json* x = take(key)) {
            if (!x->is_string()) throw ConfigError("'" + prefix() + key + "' must be a string");
            v = x->get<std::string>();
        }
    }
    void operator()(const std::string& key, std::vector<std::string>& v) {
        if (const json* x = take(key)) {
            if (!x->is_array()) throw ConfigError("'" + prefix() + key + "' must be a list of names");
            v.clear();
            for (const auto& e : *x) {
                if (!e.is_string()) throw ConfigError("'" + prefix() + key + "' must be a list of names");
                v.push_back(e.get<std::string>());
            }
        }
    }
    void raw(const std::string& key, std::vector<json>& v) {
        if (const json* x = take(key)) {
            if (!x->is_array()) throw ConfigError("'" + prefix() + key + "' must be a list");
            v.assign(x->begin(), x->end());
        }
    }
    template <class F>
    void section(const std::string& key, F&& body) {
        if (const json* x = take(key)) {
            Reader sub(*x, prefix() + key);
            body(sub);
        }
    }

private:
    const json* take(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string prefix() const { return path_.empty() ? "" : path_ + "."; }
    std::string where() const { return path_.empty() ? "config: " : "'" + path_ + "': "; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

class Writer {
public:
    explicit Writer(json& j) : j_(j) { j_ = json::object(); }
    template <class T>
    void operator()(const std::string& key, T& v) {
        j_[key] = v;
    }
    void raw(const std::string& key, std::vector<json>& v) { j_[key] = v; }
    template <class F>
    void section(const std::string& key, F&& body) {
        json sub;
        Writer w(sub);
        body(w);
        j_[key] = sub;
    }

private:
    json& j_;
};

template <class V>
void visit_laser(V& v, LaserModel& l) {
    v("carrier_frequency", l.carrier_frequency);
    v("free_run_linewidth", l.free_run_linewidth);
    v("tunable_offset", l.tunable_offset);
    v("modulation_frequency", l.modulation_frequency);
    v("modulation_index", l.modulation_index);
}

template <class V>
void visit_cavity(V& v, CavityModel& c) {
    v("geometric_length", c.geometric_length);
    v("mirror_reflectivity", c.mirror_reflectivity);
    v("thermal_expansion", c.thermal_expansion);
    v("reference_temperature", c.reference_temperature);
    v("piezo_gain", c.piezo_gain);
    v("piezo_voltage_limit", c.piezo_voltage_limit);
    v("piezo_resonance", c.piezo_resonance);
}

template <class V>
void visit_thermal(V& v, ThermalPlant& t) {
    v("time_constant", t.time_constant);
    v("gain", t.gain);
    v("ambient", t.ambient);
}

template <class V>
void visit_noise(V& v, NoiseSpec& n) {
    v("white_fm", n.white_fm);
    v("flicker_fm", n.flicker_fm);
    v("random_walk_fm", n.random_walk_fm);
}

template <class V>
void visit_chain(V& v, ChainConfig& c) {
    v.section("reference_laser", [&](auto& s) { visit_laser(s, c.reference_laser); });
    v.section("slave_laser", [&](auto& s) { visit_laser(s, c.slave_laser); });
    v.section("cavity1", [&](auto& s) { visit_cavity(s, c.cavity1); });
    v.section("transfer_cavity", [&](auto& s) { visit_cavity(s, c.transfer_cavity); });
    v.section("locker", [&](auto& s) {
        s("piezo_bandwidth", c.locker.piezo_bandwidth);
        s("proportional_fraction", c.locker.proportional_fraction);
        s("heater_interval", c.locker.heater_interval);
        s("heater_max", c.locker.heater_max);
    });
    v("heater_enabled", c.heater_enabled);
    v.section("thermal1", [&](auto& s) { visit_thermal(s, c.thermal1); });
    v.section("thermal2", [&](auto& s) { visit_thermal(s, c.thermal2); });
    v("laser_lock_bandwidth", c.laser_lock_bandwidth);
    v.section("reference_noise", [&](auto& s) { visit_noise(s, c.reference_noise); });
    v.section("slave_noise", [&](auto& s) { visit_noise(s, c.slave_noise); });
    v.section("environment", [&](auto& s) {
        s("pressure_daily_amplitude", c.environment.pressure_daily_amplitude);
        s("pressure_daily_phase", c.environment.pressure_daily_phase);
        s("pressure_walk_level", c.environment.pressure_walk_level);
    });
    v.section("detection", [&](auto& s) {
        s("cesium", c.detection.cesium);
        s("reference_pdh", c.detection.reference_pdh);
        s("transfer_pdh", c.detection.transfer_pdh);
        s("slave_pdh", c.detection.slave_pdh);
        s("rubidium", c.detection.rubidium);
    });
    v.section("demod", [&](auto& s) {
        s("modulation_frequency", c.demod.modulation_frequency);
        s("lowpass_bandwidth", c.demod.lowpass_bandwidth);
    });
    v("aom_offset", c.aom_offset);
    v("pressure_step", c.pressure_step);
    v("pressure_step_time", c.pressure_step_time);
    v("pressure_step_ramp", c.pressure_step_ramp);
    v("sim_step", c.sim_step);
    v("duration", c.duration);
    v("seed", c.seed);
    v("temperature_min", c.temperature_min);
    v("temperature_max", c.temperature_max);
}

template <class V>
void visit_ion(V& v, IonConfig& c) {
    v("magnetic_field", c.magnetic_field);
    v("rabi_397", c.rabi_397);
    v("rabi_866", c.rabi_866);
    v("detuning_397", c.detuning_397);
    v("detuning_866", c.detuning_866);
    v("linewidth_397", c.linewidth_397);
    v("linewidth_866", c.linewidth_866);
    v("k_angle", c.k_angle);
    v("polarization_397", c.polarization_397);
    v("polarization_866", c.polarization_866);
    v("decay_p_to_s", c.decay_p_to_s);
    v("decay_p_to_d", c.decay_p_to_d);
    v("polarization_impurity", c.polarization_impurity);
}

template <class V>
void visit_run(V& v, RunConfig& c) {
    v.section("chain", [&](auto& s) { visit_chain(s, c.chain); });
    v.section("ion", [&](auto& s) { visit_ion(s, c.ion); });
    v.section("spectrum", [&](auto& s) {
        s("scan_from", c.spectrum.scan_from);
        s("scan_to", c.spectrum.scan_to);
        s("scan_step", c.spectrum.scan_step);
        s("scale", c.spectrum.scale);
        s("background", c.spectrum.background);
        s("shot_noise", c.spectrum.shot_noise);
        s("seed", c.spectrum.seed);
    });
    v.section("fit", [&](auto& s) {
        s("free_parameters", c.fit.free_parameters);
        s("tie_linewidths", c.fit.tie_linewidths);
        s("linewidth_ratio", c.fit.linewidth_ratio);
        s("max_evaluations", c.fit.max_evaluations);
        s("restarts", c.fit.restarts);
        s("restart_spread", c.fit.restart_spread);
    });
    v.section("analysis", [&](auto& s) {
        s("carrier", c.analysis.carrier);
        s("estimator", c.analysis.estimator);
    });
    v.section("long_run", [&](auto& s) {
        s("hours", c.long_run.hours);
        s("decimation", c.long_run.decimation);
    });
}

}  // namespace

namespace {

template <class V>
void visit_catalog(V& v, LineCatalog& c, std::vector<json>& lines, std::vector<json>& doppler) {
    v("name", c.name);
    v("doppler_fwhm", c.doppler_fwhm);
    v("catalog_origin", c.catalog_origin);
    v("reference_label", c.reference_label);
    v("dip_broadening", c.dip_broadening);
    v.raw("lines", lines);
    v.raw("doppler", doppler);
}

template <class V>
void visit_line(V& v, SpectralLine& l) {
    v("label", l.label);
    v("center_offset", l.center_offset);
    v("natural_width", l.natural_width);
    v("relative_amplitude", l.relative_amplitude);
    v("is_crossover", l.is_crossover);
    v("parent_a", l.parent_a);
    v("parent_b", l.parent_b);
}

}  // namespace

json catalog_to_json(const LineCatalog& catalog) {
    LineCatalog c = catalog;
    std::vector<json> lines, doppler;
    for (auto& l : c.lines) {
        json j;
        Writer w(j);
        visit_line(w, l);
        lines.push_back(j);
    }
    for (const auto& d : c.doppler) doppler.push_back({{"center_offset", d.center_offset}, {"amplitude", d.amplitude}});
    json j;
    Writer w(j);
    visit_catalog(w, c, lines, doppler);
    return j;
}

LineCatalog catalog_from_json(const json& j) {
    LineCatalog c;
    std::vector<json> lines, doppler;
    {
        Reader r(j, "catalog");
        visit_catalog(r, c, lines, doppler);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        SpectralLine l;
        Reader r(lines[i], "catalog.lines[" + std::to_string(i) + "]");
        visit_line(r, l);
        c.lines.push_back(l);
    }
    for (std::size_t i = 0; i < doppler.size(); ++i) {
        DopplerProfile d;
        Reader r(doppler[i], "catalog.doppler[" + std::to_string(i) + "]");
        r("center_offset", d.center_offset);
        r("amplitude", d.amplitude);
        c.doppler.push_back(d);
    }
    try {
        validate(c);
    } catch (const InvalidModel& e) {
        throw ConfigError(std::string("catalog: ") + e.what());
    }
    return c;
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    {
        Reader r(j, "");
        visit_run(r, c);
    }
    validate(c);
    return c;
}

json config_to_json(const RunConfig& config) {
    RunConfig copy = config;
    json j;
    Writer w(j);
    visit_run(w, copy);
    return j;
}

void validate(const RunConfig& c) {
    auto wrap = [](const std::string& section, auto&& check) {
        try {
            check();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError("'" + section + "': " + e.what());
        }
    };
    wrap("chain", [&] { validate(c.chain); });
    wrap("ion", [&] { validate(c.ion); });
    const auto& s = c.spectrum;
    if (!std::isfinite(s.scan_from) || !std::isfinite(s.scan_to) || !(s.scan_step > 0.0) ||
        !std::isfinite(s.scan_step))
        throw ConfigError("'spectrum': scan range must be finite with a positive step");
    if (!(s.scale >= 0.0) || !(s.background >= 0.0)) throw ConfigError("'spectrum': scale and background must be >= 0");
    wrap("fit", [&] {
        FitProblem p;
        p.free_parameters = c.fit.free_parameters;
        p.tie_linewidths = c.fit.tie_linewidths;
        p.linewidth_ratio = c.fit.linewidth_ratio;
        p.max_evaluations = c.fit.max_evaluations;
        p.restarts = c.fit.restarts;
        // validate() also checks data size; give it enough dummy points
        p.data.detuning_866.assign(p.free_parameters.size() + 1, 0.0);
        p.data.fluorescence.assign(p.free_parameters.size() + 1, 0.0);
        validate(p);
        if (!(c.fit.restart_spread > 0.0)) throw FitError("restart_spread must be positive");
    });
    if (!(c.analysis.carrier > 0.0) || !std::isfinite(c.analysis.carrier))
        throw ConfigError("'analysis.carrier' must be a positive frequency");
    wrap("analysis", [&] { parse_allan_estimator(c.analysis.estimator); });
    if (!(c.long_run.hours > 0.0) || !(c.long_run.decimation > 0.0))
        throw ConfigError("'long_run': hours and decimation must be positive");
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::vector<double> scan_grid(double from, double to, double step) {
    if (!(step > 0.0) || !std::isfinite(from) || !std::isfinite(to)) throw DomainError("bad scan grid");
    std::vector<double> g;
    const auto n = static_cast<long>(std::floor((to - from) / step + 0.5));
    for (long i = 0; i <= std::max(0L, n); ++i) g.push_back(from + static_cast<double>(i) * step);
    return g;
}

const std::vector<double>& CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("CSV has no column '" + name + "'");
    return columns[static_cast<std::size_t>(it - header.begin())];
}

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string to_csv(const CsvTable& t) {
    std::string out;
    for (const auto& m : t.metadata) out += "# " + m + "\n";
    for (std::size_t c = 0; c < t.header.size(); ++c) out += (c ? "," : "") + t.header[c];
    out += "\n";
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (c) out += ",";
            out += format_number(t.columns[c][r]);
        }
        out += "\n";
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    CsvTable t;
    auto split = [](const std::string& l) {
        std::vector<std::string> f;
        std::string cell;
        std::istringstream s(l);
        while (std::getline(s, cell, ',')) f.push_back(cell);
        if (!l.empty() && l.back() == ',') f.emplace_back();
        return f;
    };
    // '#' lines form an optional metadata block
    while (true) {
        if (!std::getline(in, line)) throw FormatError("CSV is empty");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() != '#') break;
        t.metadata.push_back(line.substr(line.rfind("# ", 0) == 0 ? 2 : 1));
    }
    t.header = split(line);
    if (t.header.empty()) throw FormatError("CSV header is empty");
    for (const auto& h : t.header) {
        if (h.empty()) throw FormatError("CSV header has an empty column name");
        char* end = nullptr;
        std::strtod(h.c_str(), &end);
        if (end && *end == '\0') throw FormatError("CSV header row missing (found number '" + h + "')");
    }
    t.columns.resize(t.header.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto cells = split(line);
        if (cells.size() != t.header.size())
            throw FormatError("CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " fields, expected " + std::to_string(t.header.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& s = cells[c];
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size())
                throw FormatError("CSV row " + std::to_string(row) + " column '" + t.header[c] +
                                  "' is not a number: '" + s + "'");
            t.columns[c].push_back(v);
        }
    }
    return t;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path)); }

CsvTable traces_to_csv(const std::vector<FrequencyTrace>& traces) {
    if (traces.empty()) throw DomainError("no traces to write");
    CsvTable t;
    const auto n = traces.front().size();
    const double dt = traces.front().sample_interval;
    t.header.push_back("time_s");
    std::vector<double> time(n);
    for (std::size_t i = 0; i < n; ++i) time[i] = static_cast<double>(i) * dt;
    t.columns.push_back(std::move(time));
    for (const auto& tr : traces) {
        if (tr.size() != n || tr.sample_interval != dt) throw DomainError("traces must share their time base");
        t.header.push_back(tr.label + "_" + tr.unit);
        t.columns.push_back(tr.samples);
    }
    return t;
}

FrequencyTrace trace_from_csv(const CsvTable& table, const std::string& column) {
    const auto& time = table.column("time_s");
    if (time.size() < 2) throw FormatError("trace CSV needs at least two rows");
    FrequencyTrace tr;
    tr.samples = table.column(column);
    const auto underscore = column.rfind('_');
    tr.label = underscore == std::string::npos ? column : column.substr(0, underscore);
    tr.unit = underscore == std::string::npos ? "Hz" : column.substr(underscore + 1);
    tr.sample_interval = (time.back() - time.front()) / static_cast<double>(time.size() - 1);
    for (std::size_t i = 1; i < time.size(); ++i)
        if (std::abs(time[i] - time[i - 1] - tr.sample_interval) > 1e-6 * tr.sample_interval)
            throw FormatError("time_s column is not uniformly sampled");
    try {
        validate(tr);
    } catch (const InvalidModel& e) {
        throw FormatError(std::string("trace column '") + column + "': " + e.what());
    }
    return tr;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

fs::path resolve_output(const fs::path& path) {
    const char* root = std::getenv("TRANSLOCK_OUTPUT_ROOT");
    if (root && *root && path.is_relative()) return fs::path(root) / path;
    return path;
}

OutputDirectory::OutputDirectory(fs::path target, bool overwrite) : target_(std::move(target)) {
    if (target_.empty()) throw ConfigError("output directory must not be empty");
    if (fs::exists(target_) && !overwrite)
        throw ConfigError("output directory '" + target_.string() + "' exists; pass --force to replace it");
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    stage_ = parent / ("." + target_.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(stage_);
    fs::create_directories(stage_);
}

OutputDirectory::~OutputDirectory() {
    if (!committed_) {
        std::error_code ec;
        fs::remove_all(stage_, ec);
    }
}

void OutputDirectory::write(const std::string& name, const std::string& contents) {
    std::ofstream out(stage_ / name, std::ios::binary);
    out << contents;
    if (!out) throw Error("cannot write '" + (stage_ / name).string() + "'");
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
}

void OutputDirectory::commit(json manifest) {
    json outputs = json::array();
    for (const auto& f : files_) {
        const std::string bytes = read_file(stage_ / f);
        outputs.push_back({{"file", f}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }
    manifest["outputs"] = outputs;
    {
        std::ofstream out(stage_ / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << "\n";
        if (!out) throw Error("cannot write manifest");
    }
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(stage_, target_);
    committed_ = true;
}

std::vector<std::string> validate_manifest(const fs::path& dir) {
    std::vector<std::string> problems;
    json m;
    try {
        m = json::parse(read_file(dir / "manifest.json"));
    } catch (const std::exception& e) {
        return {std::string("manifest unreadable: ") + e.what()};
    }
    for (const char* key : {"tool_version", "command_line", "config_sha256", "outputs", "wall_clock_seconds"})
        if (!m.contains(key)) problems.push_back(std::string("manifest lacks '") + key + "'");
    if (!problems.empty()) return problems;
    try {
        const std::string cfg = read_file(dir / "config.json");
        if (sha256_hex(cfg) != m["config_sha256"].get<std::string>()) problems.push_back("config hash mismatch");
    } catch (const std::exception& e) {
        problems.push_back(std::string("config.json: ") + e.what());
    }
    std::set<std::string> listed;
    for (const auto& o : m["outputs"]) {
        const std::string f = o["file"].get<std::string>();
        listed.insert(f);
        try {
            if (sha256_hex(read_file(dir / f)) != o["sha256"].get<std::string>())
                problems.push_back("hash mismatch for " + f);
        } catch (const std::exception& e) {
            problems.push_back(f + ": " + e.what());
        }
    }
    int manifests = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name == "manifest.json") {
            ++manifests;
            continue;
        }
        if (!listed.count(name)) problems.push_back("unlisted file " + name);
    }
    if (manifests != 1) problems.push_back("expected exactly one manifest");
    return problems;
}

}  // namespace translock
