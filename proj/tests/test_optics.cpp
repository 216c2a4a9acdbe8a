#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "translock/constants.hpp"
#include "translock/error.hpp"
#include "translock/optics.hpp"

using namespace translock;

namespace {

const double c0 = constants::speed_of_light;

// Edlen 1966 for standard dry air, written out independently of the library.
double edlen_standard(double wavelength_m) {
    const double s2 = std::pow(1e-6 / wavelength_m, 2);
    return (8342.13 + 2406030.0 / (130.0 - s2) + 15997.0 / (38.9 - s2)) * 1e-8;
}

AirState vacuum() { return {0.0, 15.0}; }

}  // namespace

TEST_CASE("free spectral range of the 15 cm confocal cavity") {
    CavityModel cav;
    const double fsr = free_spectral_range(cav);
    CHECK(fsr == doctest::Approx(c0 / 0.6).epsilon(1e-15));
    CHECK(std::abs(fsr - 500e6) / 500e6 < 0.005);
    CHECK(fsr == doctest::Approx(4.997e8).epsilon(1e-4));

    CavityModel twice = cav;
    twice.geometric_length = 0.30;
    CHECK(free_spectral_range(twice) == fsr / 2.0);
    CHECK(free_spectral_range(twice) == doctest::Approx(2.498e8).epsilon(1e-3));
}

TEST_CASE("FSR with air index at 852 nm") {
    CavityModel cav;
    const double n = 1.0 + refractivity(852e-9, AirState{});
    CHECK(free_spectral_range(cav, n) == doctest::Approx(free_spectral_range(cav) / n).epsilon(1e-15));
    CHECK(n - 1.0 == doctest::Approx(2.74e-4).epsilon(0.005));
}

TEST_CASE("property: FSR(2L) = FSR(L)/2") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> len(0.01, 2.0);
    for (int i = 0; i < 200; ++i) {
        CavityModel a;
        a.geometric_length = len(rng);
        CavityModel b = a;
        b.geometric_length = 2.0 * a.geometric_length;
        CHECK(free_spectral_range(b) == doctest::Approx(free_spectral_range(a) / 2.0).epsilon(1e-15));
    }
}

TEST_CASE("linewidth and finesse") {
    CavityModel cav;
    CHECK(cav.finesse() == doctest::Approx(270.0).epsilon(1e-12));
    const double lw = cavity_linewidth(cav);
    CHECK(lw == doctest::Approx(free_spectral_range(cav) / 270.0).epsilon(1e-12));
    CHECK(lw == doctest::Approx(1.852e6).epsilon(1e-3));
    CHECK(std::abs(lw - 1.9e6) / 1.9e6 < 0.05);

    const CavityModel sharp = CavityModel::with_finesse(1e9);
    CHECK(cavity_linewidth(sharp) < 1.0);
    CHECK(reflectivity_from_finesse(finesse_from_reflectivity(0.97)) == doctest::Approx(0.97).epsilon(1e-14));
}

TEST_CASE("invalid cavities") {
    CavityModel cav;
    cav.geometric_length = 0.0;
    CHECK_THROWS_AS(free_spectral_range(cav), InvalidModel);
    CHECK_THROWS_AS(validate(cav), InvalidModel);
    cav = CavityModel{};
    cav.mirror_reflectivity = 1.0;
    CHECK_THROWS_AS(validate(cav), InvalidModel);
    AirState air;
    air.pressure = -1.0;
    CHECK_THROWS_AS(validate(air), InvalidModel);
}

TEST_CASE("reflection coefficient examples") {
    CavityModel cav;
    const double fsr = free_spectral_range(cav);
    const double r = cav.amplitude_reflectivity();
    CHECK(std::abs(reflection_coefficient(cav, 0.0)) < 1e-15);

    const auto anti = reflection_coefficient(cav, fsr / 2.0);
    CHECK(anti.real() == doctest::Approx(-2.0 * r / (1.0 + r * r)).epsilon(1e-12));
    CHECK(std::abs(anti.imag()) < 1e-12);

    const double half = 0.5 * cavity_linewidth(cav);
    CHECK(std::norm(reflection_coefficient(cav, half)) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::norm(reflection_coefficient(cav, -half)) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("property: reflection is FSR-periodic and passive") {
    std::mt19937_64 rng(5);
    CavityModel cav;
    const double fsr = free_spectral_range(cav);
    std::uniform_real_distribution<double> nu(-3.0 * fsr, 3.0 * fsr);
    std::uniform_real_distribution<double> fin(2.0, 5000.0);
    for (int i = 0; i < 500; ++i) {
        const CavityModel c = CavityModel::with_finesse(fin(rng));
        const double v = nu(rng);
        const auto a = reflection_coefficient(c, v);
        const auto b = reflection_coefficient(c, v + fsr);
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)) + 1e-9);
        CHECK(std::norm(a) <= 1.0 + 1e-12);
    }
}

TEST_CASE("refractivity") {
    const AirState standard{};
    CHECK(refractivity(852e-9, standard) == doctest::Approx(edlen_standard(852e-9)).epsilon(1e-14));
    CHECK(refractivity(852e-9, vacuum()) == 0.0);
    CHECK_THROWS_AS(refractivity(250e-9, standard), DomainError);
    CHECK_THROWS_AS(refractivity(2500e-9, standard), DomainError);

    // gas-law temperature scaling against the standard condition
    AirState warm{standard.pressure, 25.0};
    CHECK(refractivity(852e-9, warm) ==
          doctest::Approx(edlen_standard(852e-9) * (1 + 0.003661 * 15) / (1 + 0.003661 * 25)).epsilon(1e-14));

    // differential dispersion per mbar at the slave frequency
    const double d = refractivity(795e-9, standard) - refractivity(852e-9, standard);
    const double per_mbar = d / 1013.25 * (c0 / 795e-9);
    CHECK(per_mbar > 5e4);
    CHECK(per_mbar < 3e5);
}

TEST_CASE("property: refractivity monotone in pressure and wavelength") {
    double previous = -1.0;
    for (double p = 0.0; p <= 120000.0; p += 5000.0) {
        const double n = refractivity(852e-9, {p, 20.0});
        CHECK(n > previous);
        previous = n;
    }
    previous = 1.0;
    for (double wl = 700e-9; wl <= 900e-9; wl += 5e-9) {
        const double n = refractivity(wl, AirState{});
        CHECK(n < previous);
        previous = n;
    }
}

TEST_CASE("resonance frequency") {
    CavityModel cav;
    const long q = 1705000;
    CHECK(resonance_frequency(cav, q, 0.0, cav.reference_temperature, vacuum(), 852e-9) ==
          doctest::Approx(q * c0 / (4.0 * 0.15)).epsilon(1e-15));

    CHECK(effective_length(cav, 0.0, cav.reference_temperature + 1.0) - cav.geometric_length ==
          doctest::Approx(3.5e-6).epsilon(1e-9));
    const double span = effective_length(cav, 10.0, 25.0) - effective_length(cav, -10.0, 25.0);
    CHECK(span == doctest::Approx(2.5e-6).epsilon(1e-12));
    CHECK(span / cav.geometric_length == doctest::Approx(1.667e-5).epsilon(1e-3));

    const double nu_lo = resonance_frequency(cav, q, -10.0, 25.0, vacuum(), 852e-9);
    const double nu_hi = resonance_frequency(cav, q, 10.0, 25.0, vacuum(), 852e-9);
    CHECK((nu_lo - nu_hi) / nu_lo == doctest::Approx(2.5e-6 / effective_length(cav, 10.0, 25.0)).epsilon(1e-9));

    CHECK_THROWS_AS(resonance_frequency(cav, q, 10.5, 25.0, vacuum(), 852e-9), ActuatorSaturation);
    CHECK_THROWS_AS(resonance_frequency(cav, q, -11.0, 25.0, vacuum(), 852e-9), ActuatorSaturation);
}

TEST_CASE("property: resonance is affine in piezo voltage and temperature through the length") {
    // nu * L_eff is constant for a fixed mode: the model is affine in L_eff.
    CavityModel cav;
    const long q = 1705000;
    for (double v = -10.0; v <= 10.0; v += 2.5)
        for (double t = 20.0; t <= 30.0; t += 2.5) {
            const double nu = resonance_frequency(cav, q, v, t, vacuum(), 852e-9);
            CHECK(nu * effective_length(cav, v, t) == doctest::Approx(q * c0 / 4.0).epsilon(1e-15));
        }
    const double a = effective_length(cav, 1.0, 25.0) - effective_length(cav, 0.0, 25.0);
    const double b = effective_length(cav, 7.0, 25.0) - effective_length(cav, 6.0, 25.0);
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("nearest resonance") {
    CavityModel cav;
    const double nu_laser = c0 / 852e-9;
    const Resonance r = nearest_resonance(cav, nu_laser, 0.0, 25.0, vacuum());
    CHECK(std::abs(r.frequency - nu_laser) <= 0.5 * free_spectral_range(cav) + 1.0);
}
