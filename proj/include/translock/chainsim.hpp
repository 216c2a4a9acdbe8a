#ifndef TRANSLOCK_CHAINSIM_HPP
#define TRANSLOCK_CHAINSIM_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "translock/discriminator.hpp"
#include "translock/noise.hpp"
#include "translock/optics.hpp"
#include "translock/servo.hpp"
#include "translock/trace.hpp"

namespace translock {

// Electronics-referred white noise of each discriminator, expressed as the
// equivalent frequency rms per simulation sample (Hz). Converted to volts with
// the discriminator slope at the lock point.
struct DetectionNoise {
    double cesium = 0.0;          // Cs FM spectroscopy -> cavity 1 locker
    double reference_pdh = 0.0;   // reference laser on cavity 1
    double transfer_pdh = 0.0;    // cavity 2 locker, 852 nm PDH
    double slave_pdh = 0.0;       // slave laser on cavity 2
    double rubidium = 0.0;        // out-of-loop Rb monitor
};

struct ChainConfig {
    LaserModel reference_laser{};  // 852 nm; carrier set to the Cs lock point
    LaserModel slave_laser{};      // 795 nm; carrier near the Rb reference minus the AOM offset
    CavityModel cavity1{};
    CavityModel transfer_cavity{};

    LockerDesign locker{};          // both cavity lockers
    bool heater_enabled = true;     // false holds both heaters at their initial power
    ThermalPlant thermal1{};
    ThermalPlant thermal2{};
    double laser_lock_bandwidth = 30.0e3;  // Hz, both laser locks

    NoiseSpec reference_noise{};
    NoiseSpec slave_noise{};
    NoiseSpec environment{};  // pressure fields drive the shared air
    DetectionNoise detection{};
    DemodConfig demod{};      // lowpass_bandwidth applies to recorded in-loop monitors
    double aom_offset = 0.0;  // Hz, Rb probe frequency minus slave frequency

    // Optional pressure step for dispersion checks, applied as a linear ramp:
    // 1 mbar moves each cavity by ~95 MHz, far beyond the PDH capture range
    // if it arrived at once.
    double pressure_step = 0.0;        // Pa
    double pressure_step_time = 0.0;   // s
    double pressure_step_ramp = 0.1;   // s

    double sim_step = 1.0e-5;  // s
    double duration = 0.2;     // s
    std::uint64_t seed = 1;

    // Filled by initialize_resonant.
    double temperature_min = 23.0;  // degC, solve bounds for both cavities
    double temperature_max = 31.0;
    double cavity1_temperature = 25.0;
    double cavity2_temperature = 25.0;
    long cavity1_mode = 0;
    long cavity2_reference_mode = 0;
    long cavity2_slave_mode = 0;
    bool initialized = false;
};

void validate(const ChainConfig& config);

// Default noise budget and plant constants, not yet initialized.
ChainConfig default_chain_config();

struct ResonanceSolution {
    double cavity1_temperature = 0.0;
    double cavity2_temperature = 0.0;
    long cavity1_mode = 0;
    long cavity2_reference_mode = 0;
    long cavity2_slave_mode = 0;
    double reference_detuning = 0.0;  // Hz, laser minus nearest resonance (cavity 2)
    double slave_detuning = 0.0;
};

// Cavity temperatures and mode indices with the reference laser resonant in
// both cavities and the slave resonant in cavity 2, searched within
// [temperature_min, temperature_max]. Throws InitializationError (message
// reporting the nearest approach) when no temperature brings both lasers
// within a tenth of a linewidth.
ResonanceSolution solve_resonance(const ChainConfig& config);

// Sets the reference carrier on the Cs lock point, solves the cavity
// temperatures, moves the slave carrier onto its cavity-2 resonance and sets
// the AOM so the Rb probe sits on the Rb lock point.
ChainConfig initialize_resonant(ChainConfig config);

struct LockStatus {
    std::string loop;
    bool lost = false;
    double first_loss_time = -1.0;  // s
};

struct TraceSet {
    std::vector<FrequencyTrace> traces;
    std::vector<LockStatus> locks;
    double rb_gauge_slope = 0.0;  // V/Hz used for the out-of-loop trace
    // Demodulation phase of each discriminator (slope-maximizing), rad.
    std::vector<std::pair<std::string, double>> demod_phases;

    const FrequencyTrace& get(const std::string& label) const;
    bool any_lock_lost() const;
};

// Labels of the traces returned by simulate_chain.
namespace trace_label {
inline constexpr const char* out_of_loop = "out_of_loop";          // Hz, gauged Rb error
inline constexpr const char* slave_offset = "slave_offset";        // Hz, true slave frequency offset
inline constexpr const char* reference_offset = "reference_offset";
inline constexpr const char* inloop_reference = "inloop_reference";  // Hz, monitor of the reference lock
inline constexpr const char* inloop_slave = "inloop_slave";
inline constexpr const char* inloop_cavity1 = "inloop_cavity1";
inline constexpr const char* inloop_cavity2 = "inloop_cavity2";
inline constexpr const char* piezo1 = "piezo1";                    // V
inline constexpr const char* piezo2 = "piezo2";
inline constexpr const char* heater1 = "heater1";                  // W
inline constexpr const char* heater2 = "heater2";
inline constexpr const char* pressure = "pressure";                // Pa
}  // namespace trace_label

// Full-rate run of config.duration. Slow processes (thermal, pressure) advance
// on the heater interval. The config is initialized first if needed.
TraceSet simulate_chain(const ChainConfig& config);

struct LongRunResult {
    FrequencyTrace out_of_loop;  // Hz, mean per bin
    FrequencyTrace slave_offset;
    FrequencyTrace pressure;     // Pa, mean per bin
    std::vector<LockStatus> locks;
};

// Multi-rate run: fast loops at sim_step, heater, thermal plant and pressure
// at the decimation interval; outputs are true bin means without dead time.
LongRunResult long_term_run(const ChainConfig& config, double duration, double decimation);

// rms over windows of the given length (mean removed per window), combined in
// quadrature, skipping the first skip seconds.
double windowed_rms(const FrequencyTrace& trace, double window, double skip = 0.0);

// rms about the mean of everything after the first settle seconds (the
// loops pull in from the initial transient during that time).
double settled_rms(const FrequencyTrace& trace, double settle = 0.02);

// Slave frequency shift per pressure change predicted by dispersion alone,
// Hz/Pa, at the given air state.
double dispersion_shift_per_pascal(const ChainConfig& config);

}  // namespace translock

#endif  // TRANSLOCK_CHAINSIM_HPP
