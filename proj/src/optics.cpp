#include "translock/optics.hpp"

#include <cmath>
#include <string>

#include "translock/error.hpp"

namespace translock {

namespace {

constexpr double min_edlen_wavelength = 300e-9;
constexpr double max_edlen_wavelength = 2000e-9;

}  // namespace

double finesse_from_reflectivity(double reflectance) {
    if (!(reflectance > 0.0 && reflectance < 1.0))
        throw InvalidModel("mirror reflectivity must lie in (0, 1), got " + std::to_string(reflectance));
    return constants::pi * std::sqrt(reflectance) / (1.0 - reflectance);
}

double reflectivity_from_finesse(double finesse) {
    if (!(finesse > 0.0) || !std::isfinite(finesse))
        throw InvalidModel("finesse must be positive and finite");
    // F x^2 + pi x - F = 0 with x = sqrt(R)
    const double x = (-constants::pi + std::sqrt(constants::pi * constants::pi + 4.0 * finesse * finesse))
                     / (2.0 * finesse);
    return x * x;
}

CavityModel CavityModel::with_finesse(double finesse) {
    CavityModel cavity;
    cavity.mirror_reflectivity = reflectivity_from_finesse(finesse);
    return cavity;
}

double CavityModel::finesse() const { return finesse_from_reflectivity(mirror_reflectivity); }

double CavityModel::amplitude_reflectivity() const { return std::sqrt(mirror_reflectivity); }

void validate(const AirState& air) {
    if (!(air.pressure >= 0.0) || !std::isfinite(air.pressure))
        throw InvalidModel("air pressure must be non-negative");
    if (!std::isfinite(air.temperature) || air.temperature <= -273.15)
        throw InvalidModel("air temperature must be above absolute zero");
}

void validate(const LaserModel& laser) {
    if (!(laser.carrier_frequency > 0.0)) throw InvalidModel("laser carrier frequency must be positive");
    if (!(laser.modulation_frequency > 0.0)) throw InvalidModel("laser modulation frequency must be positive");
    if (!(laser.modulation_index >= 0.0)) throw InvalidModel("laser modulation index must be non-negative");
    if (!(laser.free_run_linewidth >= 0.0)) throw InvalidModel("laser linewidth must be non-negative");
}

void validate(const CavityModel& cavity) {
    if (!(cavity.geometric_length > 0.0) || !std::isfinite(cavity.geometric_length))
        throw InvalidModel("cavity length must be positive");
    if (!(cavity.mirror_reflectivity > 0.0 && cavity.mirror_reflectivity < 1.0))
        throw InvalidModel("mirror reflectivity must lie in (0, 1)");
    if (!(cavity.piezo_voltage_limit > 0.0)) throw InvalidModel("piezo voltage limit must be positive");
    if (!(cavity.piezo_resonance > 0.0)) throw InvalidModel("piezo resonance must be positive");
    if (!std::isfinite(cavity.thermal_expansion) || !std::isfinite(cavity.piezo_gain))
        throw InvalidModel("cavity actuator coefficients must be finite");
    validate(cavity.air);
}

double free_spectral_range(const CavityModel& cavity, double refractive_index) {
    if (!(cavity.geometric_length > 0.0)) throw InvalidModel("cavity length must be positive");
    if (!(refractive_index > 0.0)) throw InvalidModel("refractive index must be positive");
    return constants::speed_of_light / (4.0 * refractive_index * cavity.geometric_length);
}

double cavity_linewidth(const CavityModel& cavity, double refractive_index) {
    return free_spectral_range(cavity, refractive_index) / cavity.finesse();
}

std::complex<double> reflection_coefficient(const CavityModel& cavity, double detuning,
                                            double refractive_index) {
    const double fsr = free_spectral_range(cavity, refractive_index);
    const double r = cavity.amplitude_reflectivity();
    // Reduce the phase to (-pi, pi] so F is exactly periodic in the FSR.
    const double phase = constants::two_pi * std::remainder(detuning / fsr, 1.0);
    const std::complex<double> e = std::polar(1.0, phase);
    return r * (e - 1.0) / (1.0 - r * r * e);
}

double refractivity(double wavelength, const AirState& air) {
    if (!(wavelength > min_edlen_wavelength && wavelength < max_edlen_wavelength))
        throw DomainError("refractivity: wavelength outside (300 nm, 2000 nm)");
    validate(air);
    const double sigma = 1e-6 / wavelength;  // 1/um
    const double s2 = sigma * sigma;
    const double standard = (constants::edlen_a + constants::edlen_b / (constants::edlen_c - s2)
                             + constants::edlen_d / (constants::edlen_e - s2))
                            * 1e-8;
    const double density = (air.pressure / constants::standard_pressure)
                           * (1.0 + constants::edlen_temperature_coefficient * constants::standard_temperature)
                           / (1.0 + constants::edlen_temperature_coefficient * air.temperature);
    return standard * density;
}

double effective_length(const CavityModel& cavity, double piezo_voltage, double temperature) {
    return cavity.geometric_length + cavity.thermal_expansion * (temperature - cavity.reference_temperature)
           + cavity.piezo_gain * piezo_voltage;
}

namespace {

void check_piezo(const CavityModel& cavity, double piezo_voltage) {
    if (!(std::abs(piezo_voltage) <= cavity.piezo_voltage_limit))
        throw ActuatorSaturation("piezo voltage " + std::to_string(piezo_voltage) + " V beyond +/-"
                                 + std::to_string(cavity.piezo_voltage_limit) + " V");
}

}  // namespace

double resonance_frequency(const CavityModel& cavity, long mode_index, double piezo_voltage,
                           double temperature, const AirState& air, double wavelength) {
    validate(cavity);
    check_piezo(cavity, piezo_voltage);
    const double length = effective_length(cavity, piezo_voltage, temperature);
    if (!(length > 0.0)) throw InvalidModel("effective cavity length must be positive");
    const double n = 1.0 + refractivity(wavelength, air);
    return static_cast<double>(mode_index) * constants::speed_of_light / (4.0 * n * length);
}

Resonance nearest_resonance(const CavityModel& cavity, double laser_frequency, double piezo_voltage,
                            double temperature, const AirState& air) {
    if (!(laser_frequency > 0.0)) throw InvalidModel("laser frequency must be positive");
    validate(cavity);
    check_piezo(cavity, piezo_voltage);
    const double length = effective_length(cavity, piezo_voltage, temperature);
    const double wavelength = constants::speed_of_light / laser_frequency;
    const double n = 1.0 + refractivity(wavelength, air);
    const double fsr = constants::speed_of_light / (4.0 * n * length);
    const long q = std::lround(laser_frequency / fsr);
    return {q, static_cast<double>(q) * fsr};
}

}  // namespace translock
