#include "translock/servo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "translock/error.hpp"

namespace translock {

void validate(const CavityLockerState& state) {
    if (!(state.sample_interval > 0.0)) throw InvalidModel("locker sample interval must be positive");
    if (!(state.piezo_limit > 0.0)) throw InvalidModel("piezo limit must be positive");
    if (!(state.heater_max > 0.0)) throw InvalidModel("heater maximum must be positive");
    if (state.heater_decimation < 1) throw InvalidModel("heater decimation must be at least 1");
    if (std::abs(state.piezo_output) > state.piezo_limit) throw InvalidModel("piezo output beyond limit");
    if (state.heater_output < 0.0) throw InvalidModel("heater output must be non-negative");
}

LockerCommand locker_step(CavityLockerState& state, double pdh_error, double dt) {
    if (state.fault || !std::isfinite(pdh_error)) {
        state.fault = true;
        return {state.piezo_output, state.heater_output, false};
    }

    const double error = pdh_error - state.pdh_setpoint;
    const double limit = state.piezo_limit;
    const double proportional = state.piezo_gain_p * error;
    const double candidate = state.piezo_integrator + state.piezo_gain_i * error * dt;

    // Conditional integration: freeze the integrator while the output is
    // saturated and the error would drive it further out.
    const double unclamped = proportional + candidate;
    if (std::abs(unclamped) <= limit || unclamped * (state.piezo_gain_i * error) < 0.0)
        state.piezo_integrator = std::clamp(candidate, -limit, limit);
    state.piezo_output = std::clamp(proportional + state.piezo_integrator, -limit, limit);

    LockerCommand command{state.piezo_output, state.heater_output, false};
    state.piezo_accumulator += state.piezo_output;
    if (++state.heater_counter >= state.heater_decimation) {
        const double mean_piezo = state.piezo_accumulator / static_cast<double>(state.heater_counter);
        const double heater_dt = dt * static_cast<double>(state.heater_counter);
        state.heater_output = std::clamp(
            state.heater_output + state.heater_gain * (mean_piezo - state.piezo_setpoint) * heater_dt, 0.0,
            state.heater_max);
        state.heater_counter = 0;
        state.piezo_accumulator = 0.0;
        command.heater = state.heater_output;
        command.heater_updated = true;
    }
    return command;
}

CavityLockerState design_cavity_locker(const LockerDesign& design) {
    if (!(design.piezo_bandwidth > 0.0)) throw InvalidModel("piezo bandwidth must be positive");
    if (design.error_per_piezo_volt == 0.0 || !std::isfinite(design.error_per_piezo_volt))
        throw InvalidModel("locker plant gain must be non-zero");
    if (!(design.sample_interval > 0.0) || !(design.heater_interval >= design.sample_interval))
        throw InvalidModel("locker intervals must satisfy 0 < sample <= heater");
    if (!(design.thermal_gain > 0.0) || !(design.thermal_time_constant > 0.0))
        throw InvalidModel("thermal plant constants must be positive");

    CavityLockerState state;
    const double wc = constants::two_pi * design.piezo_bandwidth;
    state.piezo_gain_i = -wc / design.error_per_piezo_volt;
    state.piezo_gain_p = design.proportional_fraction * state.piezo_gain_i / wc;
    state.sample_interval = design.sample_interval;
    state.heater_decimation =
        std::max<std::int64_t>(1, std::llround(design.heater_interval / design.sample_interval));
    state.heater_max = design.heater_max;
    // Heater loop: integrator around the thermal pole, K tau = 1/2.
    const double loop = design.thermal_gain * std::abs(design.piezo_volts_per_kelvin);
    state.heater_gain = loop > 0.0 ? 0.5 / (design.thermal_time_constant * loop) : 0.0;
    return state;
}

PiezoPlant::PiezoPlant(double resonance_frequency, double damping_ratio, double gain)
    : resonance_frequency_(resonance_frequency), damping_ratio_(damping_ratio), gain_(gain) {
    if (!(resonance_frequency > 0.0)) throw InvalidModel("piezo resonance must be positive");
    if (!(damping_ratio > 0.0)) throw InvalidModel("piezo damping must be positive");
}

void PiezoPlant::discretize(double dt) {
    const double w0 = constants::two_pi * resonance_frequency_;
    // x' = A x + B u on (position, velocity), augmented with the held input.
    Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
    m(0, 1) = 1.0;
    m(1, 0) = -w0 * w0;
    m(1, 1) = -2.0 * damping_ratio_ * w0;
    m(1, 2) = w0 * w0 * gain_;
    const Eigen::Matrix3d e = (m * dt).exp();
    a_ = {e(0, 0), e(0, 1), e(1, 0), e(1, 1)};
    b_ = {e(0, 2), e(1, 2)};
    cached_dt_ = dt;
}

double PiezoPlant::step(double command, double dt) {
    if (!(dt > 0.0) || dt >= 0.1 / resonance_frequency_)
        throw StepSizeError("piezo step " + std::to_string(dt) + " s must be below 1/(10 f0)");
    if (dt != cached_dt_) discretize(dt);
    const double x = state_[0];
    const double v = state_[1];
    state_[0] = a_[0] * x + a_[1] * v + b_[0] * command;
    state_[1] = a_[2] * x + a_[3] * v + b_[1] * command;
    return state_[0];
}

double piezo_dynamics_step(PiezoPlant& plant, double command, double dt) { return plant.step(command, dt); }

void validate(const ThermalPlant& plant) {
    if (!(plant.time_constant > 0.0)) throw InvalidModel("thermal time constant must be positive");
    if (!std::isfinite(plant.gain)) throw InvalidModel("thermal gain must be finite");
}

double thermal_step(ThermalPlant& plant, double heater_power, double dt) {
    const double target = plant.ambient + plant.gain * std::max(0.0, heater_power);
    plant.temperature = target + (plant.temperature - target) * std::exp(-dt / plant.time_constant);
    return plant.temperature;
}

LaserLockState make_laser_lock(double closed_loop_bandwidth, double dt, double proportional_gain) {
    if (!(closed_loop_bandwidth > 0.0)) throw InvalidModel("laser lock bandwidth must be positive");
    if (!(dt > 0.0)) throw InvalidModel("laser lock step must be positive");
    LaserLockState state;
    state.closed_loop_bandwidth = closed_loop_bandwidth;
    state.proportional_gain = proportional_gain;
    state.integral_gain = -std::expm1(-constants::two_pi * closed_loop_bandwidth * dt) / dt;
    return state;
}

void validate(const LaserLockState& state) {
    if (!(state.closed_loop_bandwidth > 0.0)) throw InvalidModel("laser lock bandwidth must be positive");
    if (!(state.integral_gain >= 0.0) || !(state.proportional_gain >= 0.0))
        throw InvalidModel("laser lock gains must be non-negative");
}

double laser_lock_step(LaserLockState& state, double pdh_error, double gauge, double dt) {
    if (gauge == 0.0 || !std::isfinite(gauge)) throw ConfigError("laser lock: frequency gauge must be non-zero");
    const double error_hz = pdh_error / gauge;
    state.integrator -= state.integral_gain * error_hz * dt;
    return state.integrator - state.proportional_gain * error_hz;
}

}  // namespace translock
