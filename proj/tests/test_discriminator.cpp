#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "translock/discriminator.hpp"
#include "translock/error.hpp"
#include "translock/io.hpp"

using namespace translock;
using cd = std::complex<double>;

namespace {

// Independent reflection + PDH formula.
cd refl(double r, double fsr, double nu) {
    const cd e = std::polar(1.0, 2.0 * constants::pi * nu / fsr);
    return r * (e - 1.0) / (1.0 - r * r * e);
}

double pdh_oracle(const CavityModel& cav, double nu, double omega, double theta) {
    const double r = std::sqrt(cav.mirror_reflectivity);
    const double fsr = constants::speed_of_light / (4.0 * cav.geometric_length);
    const cd q = refl(r, fsr, nu) * std::conj(refl(r, fsr, nu + omega)) -
                 std::conj(refl(r, fsr, nu)) * refl(r, fsr, nu - omega);
    return q.imag() * std::cos(theta) + q.real() * std::sin(theta);
}

DemodConfig at_phase(double theta) {
    DemodConfig d;
    d.demod_phase = theta;
    return d;
}

LineCatalog single_line() {
    LineCatalog c;
    c.name = "single";
    c.lines.push_back({"L", 0.0, 6e6, 1.0, false, -1, -1});
    c.doppler_fwhm = 500e6;
    c.reference_label = "L";
    return c;
}

std::vector<double> zero_crossings(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> out;
    for (std::size_t i = 1; i < x.size(); ++i)
        if ((y[i - 1] < 0.0) != (y[i] < 0.0) && y[i] != y[i - 1])
            out.push_back(x[i - 1] - y[i - 1] * (x[i] - x[i - 1]) / (y[i] - y[i - 1]));
    return out;
}

}  // namespace

TEST_CASE("PDH matches the independent formula") {
    CavityModel cav;
    for (double theta : {0.0, 0.4, 1.3})
        for (double nu = -30e6; nu <= 30e6; nu += 0.73e6)
            CHECK(pdh_error_cavity(cav, nu, at_phase(theta)) ==
                  doctest::Approx(pdh_oracle(cav, nu, 20e6, theta)).epsilon(1e-9).scale(1e-12));
}

TEST_CASE("PDH zero at resonance and odd at the optimal phase") {
    CavityModel cav;
    const DemodConfig d = at_phase(optimal_pdh_phase(cav, 20e6));
    CHECK(std::abs(pdh_error_cavity(cav, 0.0, d)) < 1e-15);
    double peak = 0.0;
    for (double nu = 1e3; nu < 40e6; nu *= 1.37) peak = std::max(peak, std::abs(pdh_error_cavity(cav, nu, d)));
    for (double nu = 1e3; nu < 40e6; nu *= 1.37) {
        const double a = pdh_error_cavity(cav, nu, d);
        const double b = pdh_error_cavity(cav, -nu, d);
        CHECK(std::abs(a + b) <= 1e-9 * peak);
    }
    CHECK(pdh_slope(cav, d) > 0.0);
}

TEST_CASE("PDH sideband zero crossings at +-20 MHz with opposite slope") {
    CavityModel cav;
    const DemodConfig d = at_phase(optimal_pdh_phase(cav, 20e6));
    const double h = 1e3;
    auto slope = [&](double nu) {
        return (pdh_error_cavity(cav, nu + h, d) - pdh_error_cavity(cav, nu - h, d)) / (2 * h);
    };
    const double s0 = slope(0.0);
    for (double side : {-20e6, 20e6}) {
        std::vector<double> x, y;
        for (double nu = side - 1e6; nu <= side + 1e6; nu += 1e3) {
            x.push_back(nu);
            y.push_back(pdh_error_cavity(cav, nu, d));
        }
        const auto z = zero_crossings(x, y);
        REQUIRE(z.size() == 1);
        // the carrier tail pulls the crossing by a small fraction of a linewidth
        CHECK(std::abs(z[0] - side) < 0.1 * cavity_linewidth(cav));
        CHECK(slope(side) * s0 < 0.0);
        CHECK(std::abs(slope(side)) == doctest::Approx(0.5 * std::abs(s0)).epsilon(0.05));
    }
}

TEST_CASE("FM signal of an isolated symmetric line") {
    const LineCatalog c = single_line();
    for (double theta : {0.0, 0.7, 1.5707963, 2.9}) CHECK(std::abs(fm_spectroscopy_error(c, 0.0, at_phase(theta))) < 1e-12);

    // pure absorption quadrature: odd about the center, extrema near +-Omega
    std::vector<double> x, y;
    double peak = 0.0;
    for (double nu = -60e6; nu <= 60e6; nu += 0.1e6) {
        x.push_back(nu);
        y.push_back(fm_quadratures(c, nu, 20e6).first);
        peak = std::max(peak, std::abs(y.back()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] + y[x.size() - 1 - i]) <= 1e-9 * peak);
    const auto it = std::max_element(y.begin(), y.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    CHECK(std::abs(std::abs(x[static_cast<std::size_t>(it - y.begin())]) - 20e6) < 3e6);
}

TEST_CASE("property: FM error is linear in catalog amplitudes") {
    LineCatalog c = cs_d2_f3_catalog();
    LineCatalog k = c;
    for (auto& l : k.lines) l.relative_amplitude *= 3.5;
    for (auto& p : k.doppler) p.amplitude *= 3.5;
    const DemodConfig d = at_phase(optimal_fm_phase(c, 20e6));
    for (double nu = -300e6; nu <= 300e6; nu += 7.1e6) {
        const double a = fm_spectroscopy_error(c, nu, d);
        CHECK(fm_spectroscopy_error(k, nu, d) == doctest::Approx(3.5 * a).epsilon(1e-12).scale(1e-15));
    }
}

TEST_CASE("Cs D2 F=3 catalog") {
    const LineCatalog c = cs_d2_f3_catalog();
    REQUIRE(c.lines.size() == 6);
    auto find = [&](const std::string& label) {
        for (const auto& l : c.lines)
            if (l.label == label) return l;
        FAIL("missing line " << label);
        return SpectralLine{};
    };
    const auto f2 = find("F=3->F'=2"), f3 = find("F=3->F'=3"), f4 = find("F=3->F'=4");
    CHECK((f3.center_offset - f2.center_offset) == doctest::Approx(151.2e6).epsilon(1e-3));
    CHECK((f4.center_offset - f3.center_offset) == doctest::Approx(201.3e6).epsilon(1e-3));
    const auto co = find(c.reference_label);
    CHECK(co.is_crossover);
    CHECK(co.center_offset == 0.0);
    CHECK(co.center_offset - f4.center_offset == doctest::Approx(-100.65e6).epsilon(1e-3));

    // six zero crossings over 500 MHz in the dispersion quadrature
    const DemodConfig d = at_phase(optimal_fm_phase(c, 20e6));
    std::vector<double> x, y;
    for (double nu = -300e6; nu <= 200e6; nu += 0.25e6) {
        x.push_back(nu);
        y.push_back(fm_spectroscopy_error(c, nu, d));
    }
    std::vector<double> f(x), s(y);
    const auto locks = find_lock_points(f, s);
    CHECK(locks.size() == 6);
    bool origin = false;
    for (double z : locks) origin = origin || std::abs(z) < 0.5e6;
    CHECK(origin);
}

TEST_CASE("property: every crossover sits at the midpoint of its parents") {
    for (const auto& c : {cs_d2_f3_catalog(), rb_d1_catalog()})
        for (const auto& l : c.lines)
            if (l.is_crossover)
                CHECK(l.center_offset == 0.5 * (c.lines[static_cast<std::size_t>(l.parent_a)].center_offset +
                                                c.lines[static_cast<std::size_t>(l.parent_b)].center_offset));
}

TEST_CASE("Rb D1 catalog") {
    const LineCatalog c = rb_d1_catalog();
    auto center = [&](const std::string& label) {
        for (const auto& l : c.lines)
            if (l.label == label) return l.center_offset;
        FAIL("missing line " << label);
        return 0.0;
    };
    // same excited level, different ground manifold: the ground splitting
    CHECK(center("87Rb F=1->F'=1") - center("87Rb F=2->F'=1") == doctest::Approx(6.834682e9).epsilon(1e-7));
    CHECK(center("85Rb F=2->F'=2") - center("85Rb F=3->F'=2") == doctest::Approx(3.0357e9).epsilon(1e-4));
    CHECK(c.reference_label == "CO(85Rb F=3->F'=2,85Rb F=3->F'=3)");
    CHECK(constants::rb85_abundance == 0.722);
    CHECK(constants::rb87_abundance == 0.278);
    // line strengths sum to one per manifold, so the pedestals carry the
    // abundance ratio: manifolds 0, 1 are 85Rb, 2, 3 are 87Rb
    REQUIRE(c.doppler.size() == 4);
    const double p85 = c.doppler[0].amplitude + c.doppler[1].amplitude;
    const double p87 = c.doppler[2].amplitude + c.doppler[3].amplitude;
    CHECK(p85 / p87 == doctest::Approx(0.722 / 0.278).epsilon(1e-12));
}

TEST_CASE("catalog JSON round trip") {
    const LineCatalog c = cs_d2_f3_catalog();
    const LineCatalog back = catalog_from_json(catalog_to_json(c));
    REQUIRE(back.lines.size() == c.lines.size());
    for (std::size_t i = 0; i < c.lines.size(); ++i) {
        CHECK(back.lines[i].label == c.lines[i].label);
        CHECK(back.lines[i].center_offset == c.lines[i].center_offset);
        CHECK(back.lines[i].parent_a == c.lines[i].parent_a);
    }
    CHECK(back.catalog_origin == c.catalog_origin);
    auto j = catalog_to_json(c);
    j["lines"][0]["colour"] = "red";
    CHECK_THROWS_AS(catalog_from_json(j), ConfigError);
}

TEST_CASE("gauge slope") {
    std::vector<double> f, s;
    for (int i = -20; i <= 20; ++i) {
        f.push_back(i * 1e5);
        s.push_back(3.7e-7 * f.back());
    }
    const FrequencyGauge g = gauge_slope(f, s);
    CHECK(g.slope == doctest::Approx(3.7e-7).epsilon(1e-14));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(g.to_frequency(s[i]) == doctest::Approx(f[i]).scale(1e-3));

    const std::vector<double> flat(5, 1.0), sig{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(gauge_slope(flat, sig), GaugeError);
}

TEST_CASE("gauge on a synthetic discriminator within +-2 MHz") {
    // The +-2 MHz scan belongs to the Rb monitor, whose line is much wider
    // than the scan; compare with the analytic central slope.
    const LineCatalog c = rb_d1_catalog();
    const DemodConfig d = at_phase(optimal_fm_phase(c, 20e6));
    std::vector<double> f, s;
    for (double nu = -2e6; nu <= 2e6 + 1; nu += 1e5) {
        f.push_back(nu);
        s.push_back(fm_spectroscopy_error(c, nu, d));
    }
    const double central = fm_slope(c, d);
    CHECK(gauge_slope(f, s).slope == doctest::Approx(central).epsilon(0.05));

    // 1% full-scale noise: within 3 sigma of the noiseless slope
    const double noiseless = gauge_slope(f, s).slope;
    const double full = *std::max_element(s.begin(), s.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 0.01 * std::abs(full));
    double sxx = 0.0;
    for (double x : f) sxx += x * x;
    const double sigma_slope = 0.01 * std::abs(full) / std::sqrt(sxx);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> noisy(s);
        for (double& v : noisy) v += n(rng);
        CHECK(std::abs(gauge_slope(f, noisy).slope - noiseless) < 3.0 * sigma_slope);
    }
}

TEST_CASE("PDH central slope against the independent formula") {
    CavityModel cav;
    const double theta = optimal_pdh_phase(cav, 20e6);
    const double h = 100.0;
    const double oracle = (pdh_oracle(cav, h, 20e6, theta) - pdh_oracle(cav, -h, 20e6, theta)) / (2 * h);
    CHECK(pdh_slope(cav, at_phase(theta)) == doctest::Approx(oracle).epsilon(1e-5));
}
