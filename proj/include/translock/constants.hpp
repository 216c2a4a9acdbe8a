#ifndef TRANSLOCK_CONSTANTS_HPP
#define TRANSLOCK_CONSTANTS_HPP

// Physical constants and the literature values the models are built on.
// Every number that is not a pure mathematical constant lives here so the
// provenance of a model default can be checked in one place.

#include <numbers>

namespace translock::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * pi;

inline constexpr double speed_of_light = 299792458.0;       // m/s
inline constexpr double boltzmann = 1.380649e-23;           // J/K
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double bohr_magneton_hz_per_gauss = 1.39962449e6;  // mu_B / h

// Standard atmosphere used as the refractivity reference.
inline constexpr double standard_pressure = 101325.0;    // Pa
inline constexpr double standard_temperature = 15.0;     // degC

//
// Edlen (1966) dispersion of standard dry air, 15 degC, 101325 Pa,
// sigma = vacuum wavenumber in 1/um:
//   (n-1)*1e8 = A + B/(C - sigma^2) + D/(E - sigma^2)
//
inline constexpr double edlen_a = 8342.13;
inline constexpr double edlen_b = 2406030.0;
inline constexpr double edlen_c = 130.0;
inline constexpr double edlen_d = 15997.0;
inline constexpr double edlen_e = 38.9;
// Gas-law temperature coefficient of the Edlen density correction, 1/degC.
inline constexpr double edlen_temperature_coefficient = 0.003661;

//
// Transfer cavities
//
inline constexpr double cavity_length = 0.15;                 // m
inline constexpr double cavity_finesse = 270.0;
inline constexpr double cavity_thermal_expansion = 3.5e-6;    // m/degC
inline constexpr double piezo_stroke = 2.5e-6;                // m over the full span
inline constexpr double piezo_voltage_limit = 10.0;           // V
inline constexpr double piezo_gain = piezo_stroke / (2.0 * piezo_voltage_limit);  // m/V
inline constexpr double piezo_resonance = 3.0e3;              // Hz
inline constexpr double piezo_damping = 0.3;
inline constexpr double modulation_frequency = 20.0e6;        // Hz

//
// Cs D2 line (D. A. Steck, "Cesium D Line Data").
//
inline constexpr double cs_d2_centroid = 351.72571850e12;     // Hz
inline constexpr double cs_ground_f3_shift = -5.170855370625e9;  // Hz from 6S1/2 centroid
inline constexpr double cs_excited_f2_shift = -339.7128e6;    // Hz from 6P3/2 centroid
inline constexpr double cs_excited_f3_shift = -188.4885e6;
inline constexpr double cs_excited_f4_shift = 12.79851e6;
inline constexpr double cs_d2_natural_width = 5.234e6;        // Hz FWHM
inline constexpr double cs_mass = 132.905451931 * atomic_mass_unit;
// Relative hyperfine transition strengths S_{3F'} out of F=3.
inline constexpr double cs_strength_32 = 5.0 / 14.0;
inline constexpr double cs_strength_33 = 3.0 / 8.0;
inline constexpr double cs_strength_34 = 15.0 / 56.0;

//
// Rb D1 line (D. A. Steck, "Rubidium 85/87 D Line Data").
//
inline constexpr double rb85_abundance = 0.722;
inline constexpr double rb87_abundance = 0.278;
inline constexpr double rb85_d1_centroid = 377.107385690e12;  // Hz
inline constexpr double rb87_d1_centroid = 377.107463380e12;  // Hz
inline constexpr double rb85_ground_splitting = 3.0357324390e9;
inline constexpr double rb85_ground_f3_shift = 1.2648885163e9;
inline constexpr double rb85_ground_f2_shift = -1.7708439228e9;
inline constexpr double rb85_excited_f3_shift = 150.659e6;
inline constexpr double rb85_excited_f2_shift = -210.923e6;
inline constexpr double rb87_ground_splitting = 6.834682e9;
inline constexpr double rb87_ground_f2_shift = 2.56300597908910e9;
inline constexpr double rb87_ground_f1_shift = -4.271676631815e9;
inline constexpr double rb87_excited_f2_shift = 305.44e6;
inline constexpr double rb87_excited_f1_shift = -509.06e6;
inline constexpr double rb_d1_natural_width = 5.746e6;        // Hz FWHM
inline constexpr double rb85_mass = 84.911789738 * atomic_mass_unit;
inline constexpr double rb87_mass = 86.909180527 * atomic_mass_unit;

// Relative hyperfine transition strengths S_{FF'} of the D1 lines.
inline constexpr double rb85_strength_22 = 2.0 / 9.0;
inline constexpr double rb85_strength_23 = 7.0 / 9.0;
inline constexpr double rb85_strength_32 = 5.0 / 9.0;
inline constexpr double rb85_strength_33 = 4.0 / 9.0;
inline constexpr double rb87_strength_11 = 1.0 / 6.0;
inline constexpr double rb87_strength_12 = 5.0 / 6.0;
inline constexpr double rb87_strength_21 = 1.0 / 2.0;
inline constexpr double rb87_strength_22 = 1.0 / 2.0;

inline constexpr double vapor_temperature = 300.0;            // K

//
// 40Ca+ S1/2 - P1/2 - D3/2 system.
//
inline constexpr double ca_decay_p_to_s = two_pi * 20.7e6;    // rad/s
inline constexpr double ca_decay_p_to_d = two_pi * 1.69e6;    // rad/s
inline constexpr double lande_s12 = 2.0;
inline constexpr double lande_p12 = 2.0 / 3.0;
inline constexpr double lande_d32 = 4.0 / 5.0;

}  // namespace translock::constants

#endif  // TRANSLOCK_CONSTANTS_HPP
