#ifndef TRANSLOCK_OPTICS_HPP
#define TRANSLOCK_OPTICS_HPP

#include <complex>

#include "translock/constants.hpp"

namespace translock {

struct AirState {
    double pressure = constants::standard_pressure;       // Pa
    double temperature = constants::standard_temperature; // degC
};

struct LaserModel {
    double carrier_frequency = constants::speed_of_light / 852.0e-9;  // Hz
    double free_run_linewidth = 0.0;   // Hz, Lorentzian FWHM
    double modulation_frequency = constants::modulation_frequency;
    double modulation_index = 0.3;
    double tunable_offset = 0.0;       // Hz

    double wavelength() const { return constants::speed_of_light / carrier_frequency; }
};

// Finesse of a lossless two-mirror cavity, pi*sqrt(R)/(1-R).
double finesse_from_reflectivity(double reflectance);
double reflectivity_from_finesse(double finesse);

// Open confocal Fabry-Perot cavity. mirror_reflectivity is the intensity
// reflectance R of each (lossless, identical) mirror; the amplitude
// reflectivity used in the field response is sqrt(R).
struct CavityModel {
    double geometric_length = constants::cavity_length;             // m, at reference_temperature
    double mirror_reflectivity = reflectivity_from_finesse(constants::cavity_finesse);
    double thermal_expansion = constants::cavity_thermal_expansion; // m/degC
    double reference_temperature = 25.0;                            // degC
    double piezo_gain = constants::piezo_gain;                      // m/V
    double piezo_voltage_limit = constants::piezo_voltage_limit;    // V
    double piezo_resonance = constants::piezo_resonance;            // Hz
    AirState air{};

    static CavityModel with_finesse(double finesse);

    double finesse() const;
    double amplitude_reflectivity() const;
};

void validate(const AirState& air);
void validate(const LaserModel& laser);
void validate(const CavityModel& cavity);

// c/(4 n L) for the confocal geometry.
double free_spectral_range(const CavityModel& cavity, double refractive_index = 1.0);

double cavity_linewidth(const CavityModel& cavity, double refractive_index = 1.0);

// Field reflection coefficient r(e^{i phi}-1)/(1-r^2 e^{i phi}), phi = 2 pi nu / FSR,
// with nu the detuning from the nearest resonance.
std::complex<double> reflection_coefficient(const CavityModel& cavity, double detuning,
                                            double refractive_index = 1.0);

// Edlen dispersion of dry air: n - 1 at the vacuum wavelength (m),
// scaled linearly in pressure and with the gas-law temperature correction.
double refractivity(double wavelength, const AirState& air);

// Cavity length including thermal expansion and piezo displacement.
double effective_length(const CavityModel& cavity, double piezo_voltage, double temperature);

// nu_q = q c / (4 n L_eff). Throws ActuatorSaturation beyond the piezo limit.
double resonance_frequency(const CavityModel& cavity, long mode_index, double piezo_voltage,
                           double temperature, const AirState& air, double wavelength);

struct Resonance {
    long mode_index = 0;
    double frequency = 0.0;  // Hz
};

// Resonance closest to laser_frequency.
Resonance nearest_resonance(const CavityModel& cavity, double laser_frequency, double piezo_voltage,
                            double temperature, const AirState& air);

}  // namespace translock

#endif  // TRANSLOCK_OPTICS_HPP
