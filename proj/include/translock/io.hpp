#ifndef TRANSLOCK_IO_HPP
#define TRANSLOCK_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "translock/bloch.hpp"
#include "translock/chainsim.hpp"
#include "translock/fit.hpp"

namespace translock {

struct SpectrumSettings {
    double scan_from = -constants::two_pi * 50e6;  // rad/s
    double scan_to = 0.0;
    double scan_step = constants::two_pi * 0.5e6;
    double scale = 1.15e-4;    // counts per (Gamma_PS x P population); peak ~250 counts per bin
    double background = 20.0;  // counts per bin
    bool shot_noise = false;
    std::uint64_t seed = 1;
};

struct FitSettings {
    std::vector<std::string> free_parameters = default_free_parameters();
    bool tie_linewidths = true;
    double linewidth_ratio = 0.5;
    int max_evaluations = 6000;
    int restarts = 1;
    double restart_spread = 8.0;
};

struct AnalysisSettings {
    double carrier = constants::speed_of_light / 795.0e-9;  // Hz, fractional-frequency reference
    std::string estimator = "overlapping";
};

struct LongRunSettings {
    double hours = 2.0;
    double decimation = 1.0;  // s per output bin
};

// The single configuration file: one section per module.
struct RunConfig {
    ChainConfig chain = default_chain_config();
    IonConfig ion{};
    SpectrumSettings spectrum{};
    FitSettings fit{};
    AnalysisSettings analysis{};
    LongRunSettings long_run{};
};

// Throws ConfigError naming the offending field (unknown keys included).
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);
void validate(const RunConfig& config);

// Line catalogs in the same JSON dialect (unknown keys are errors).
nlohmann::json catalog_to_json(const LineCatalog& catalog);
LineCatalog catalog_from_json(const nlohmann::json& j);

// Detuning grid from, from+step, ... up to to (inclusive within half a step).
// A step larger than the range yields the single point from.
std::vector<double> scan_grid(double from, double to, double step);

struct CsvTable {
    std::vector<std::string> metadata;  // "# key: value" lines above the header
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;
    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double>& column(const std::string& name) const;
};

// 17 significant digits so values round-trip exactly.
std::string format_number(double value);
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);  // throws FormatError
CsvTable read_csv(const std::filesystem::path& path);

// Trace CSV: time_s plus one column per trace, named label_unit.
CsvTable traces_to_csv(const std::vector<FrequencyTrace>& traces);
FrequencyTrace trace_from_csv(const CsvTable& table, const std::string& column);

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Resolves a relative output path against $TRANSLOCK_OUTPUT_ROOT when set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

// Files are staged in a hidden sibling directory and moved into place by
// commit(), after the manifest is written; an uncommitted stage is removed.
class OutputDirectory {
public:
    // Throws ConfigError when target exists and overwrite is false.
    OutputDirectory(std::filesystem::path target, bool overwrite);
    ~OutputDirectory();
    OutputDirectory(const OutputDirectory&) = delete;
    OutputDirectory& operator=(const OutputDirectory&) = delete;

    void write(const std::string& name, const std::string& contents);
    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& target() const { return target_; }
    // Writes manifest.json (with the output list and hashes filled in) and
    // moves the directory into place.
    void commit(nlohmann::json manifest);

private:
    std::filesystem::path target_;
    std::filesystem::path stage_;
    std::vector<std::string> files_;
    bool committed_ = false;
};

inline constexpr const char* tool_version = "1.0.0";

// Checks manifest.json in dir: config hash and every listed output hash.
// Returns a list of problems (empty when valid).
std::vector<std::string> validate_manifest(const std::filesystem::path& dir);

}  // namespace translock

#endif  // TRANSLOCK_IO_HPP
