#ifndef TRANSLOCK_SERVO_HPP
#define TRANSLOCK_SERVO_HPP

#include <array>
#include <cstdint>

#include "translock/constants.hpp"

namespace translock {

// Dual-compensator cavity locker: a PI piezo loop on the PDH error and a
// slow heater integrator that drives the piezo back to its setpoint.
struct CavityLockerState {
    // piezo compensator
    double piezo_gain_p = 0.0;      // V/V
    double piezo_gain_i = 0.0;      // V/(V s)
    double piezo_integrator = 0.0;  // V
    double pdh_setpoint = 0.0;      // V
    double piezo_setpoint = 0.0;    // V, mid position
    double piezo_limit = constants::piezo_voltage_limit;
    double piezo_output = 0.0;      // V

    // heater compensator, updated every heater_decimation piezo steps on the
    // mean piezo output of that interval
    double heater_gain = 0.0;       // W/(V s)
    double heater_output = 0.0;     // W
    double heater_max = 5.0;        // W
    std::int64_t heater_decimation = 1;

    double sample_interval = 1e-5;  // s
    bool fault = false;

    // bookkeeping for the decimated heater path
    std::int64_t heater_counter = 0;
    double piezo_accumulator = 0.0;
};

struct LockerCommand {
    double piezo = 0.0;   // V
    double heater = 0.0;  // W
    bool heater_updated = false;
};

void validate(const CavityLockerState& state);

// Advances the locker by one piezo sample. dt must equal the sample interval.
// A non-finite error latches the fault flag and holds both outputs.
LockerCommand locker_step(CavityLockerState& state, double pdh_error, double dt);

// Gains for a crossover of piezo_bandwidth (Hz) given the error response to
// piezo voltage (V/V) and a heater loop with damping ~0.7 around the thermal pole.
struct LockerDesign {
    double piezo_bandwidth = 500.0;       // Hz
    double proportional_fraction = 0.0;   // gain_p as a fraction of gain_i / (2 pi f_c)
    double error_per_piezo_volt = 0.0;    // V of error per V of piezo
    double piezo_volts_per_kelvin = 0.0;  // piezo voltage equivalent of 1 degC
    double thermal_gain = 2.0;            // degC/W
    double thermal_time_constant = 30.0;  // s
    double sample_interval = 1e-5;        // s
    double heater_interval = 1e-2;        // s
    double heater_max = 5.0;              // W
};

CavityLockerState design_cavity_locker(const LockerDesign& design);

// Second-order resonant piezo actuator with DC gain piezo_gain (m/V).
class PiezoPlant {
public:
    PiezoPlant() = default;
    PiezoPlant(double resonance_frequency, double damping_ratio, double gain);

    double resonance_frequency() const { return resonance_frequency_; }
    double damping_ratio() const { return damping_ratio_; }
    double gain() const { return gain_; }
    double position() const { return state_[0]; }
    double velocity() const { return state_[1]; }
    void reset(double position = 0.0, double velocity = 0.0) { state_ = {position, velocity}; }

    // Exact zero-order-hold step; throws StepSizeError if dt >= 1/(10 f0).
    double step(double command, double dt);

private:
    void discretize(double dt);

    double resonance_frequency_ = constants::piezo_resonance;
    double damping_ratio_ = constants::piezo_damping;
    double gain_ = constants::piezo_gain;
    std::array<double, 2> state_{0.0, 0.0};
    double cached_dt_ = -1.0;
    std::array<double, 4> a_{};  // row-major transition matrix
    std::array<double, 2> b_{};
};

double piezo_dynamics_step(PiezoPlant& plant, double command, double dt);

// First-order thermal plant: T -> ambient + gain * P with time constant tau.
struct ThermalPlant {
    double time_constant = 30.0;  // s
    double gain = 2.0;            // degC/W
    double ambient = 22.0;        // degC
    double temperature = 22.0;    // degC
};

void validate(const ThermalPlant& plant);
double thermal_step(ThermalPlant& plant, double heater_power, double dt);

// Fast laser-to-cavity lock, modeled as the exact sample-and-hold discretization
// of an integrator loop with the given closed-loop bandwidth plus an optional
// proportional path.
struct LaserLockState {
    double proportional_gain = 0.0;  // Hz/Hz
    double integral_gain = 0.0;      // 1/s
    double integrator = 0.0;         // Hz
    double closed_loop_bandwidth = 30.0e3;  // Hz
};

LaserLockState make_laser_lock(double closed_loop_bandwidth, double dt, double proportional_gain = 0.0);
void validate(const LaserLockState& state);

// Returns the frequency correction (Hz) to apply to the laser. gauge converts
// the error voltage into Hz (V/Hz) and must be non-zero.
double laser_lock_step(LaserLockState& state, double pdh_error, double gauge, double dt);

}  // namespace translock

#endif  // TRANSLOCK_SERVO_HPP
