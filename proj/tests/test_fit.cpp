#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "translock/bloch.hpp"
#include "translock/constants.hpp"
#include "translock/error.hpp"
#include "translock/fit.hpp"

using namespace translock;

namespace {

const double mhz = constants::two_pi * 1e6;

std::vector<double> scan_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 100; ++i) g.push_back((-50.0 + 0.5 * i) * mhz);
    return g;
}

// Truth with generic polarization angles so that no parameter sits on a
// symmetry point of the model.
IonConfig truth() {
    IonConfig c;
    c.polarization_397 = 0.45;
    c.polarization_866 = 1.15;
    return c;
}

constexpr double true_scale = 1.15e-4;
constexpr double true_background = 20.0;

FitProblem problem_for(const SpectrumScan& data) {
    FitProblem p;
    p.data = data;
    p.base = truth();
    p.scale = true_scale;
    p.background = true_background;
    return p;
}

// Alternating +-15 % offsets from the true values.
ParameterSet start_near(const IonConfig& c, const std::vector<std::string>& names) {
    ParameterSet s;
    double sign = 1.0;
    double scale = true_scale, background = true_background;
    IonConfig copy = c;
    for (const auto& n : names) {
        s[n] = get_parameter(copy, scale, background, n) * (1.0 + 0.15 * sign);
        sign = -sign;
    }
    return s;
}

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("chi_squared examples") {
    const std::vector<double> model{10.0, 20.0, 30.0, 40.0};
    const std::vector<double> sigma{1.0, 2.0, 3.0, 4.0};
    CHECK(chi_squared(model, model, sigma, 0).chi2 == 0.0);

    std::vector<double> off = model;
    off[2] += sigma[2];
    const ChiSquared c = chi_squared(off, model, sigma, 0);
    CHECK(c.chi2 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.reduced == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(chi_squared(off, model, sigma, 1).reduced == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> d(1000), m(1000, 0.0), s(1000, 1.0);
    for (auto& v : d) v = n(rng);
    CHECK(chi_squared(d, m, s, 0).reduced == doctest::Approx(1.0).epsilon(0.1));

    std::vector<double> bad = sigma;
    bad[1] = 0.0;
    CHECK_THROWS_AS(chi_squared(off, model, bad, 0), FitError);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(chi_squared(off, model, bad, 0), FitError);
    CHECK_THROWS_AS(chi_squared(off, std::vector<double>{1.0}, sigma, 0), DomainError);
    CHECK_THROWS_AS(chi_squared(off, model, sigma, 4), DomainError);
}

TEST_CASE("property: chi_squared is invariant under common scaling") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1.0, 100.0), k(0.01, 100.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> d(30), m(30), s(30);
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = u(rng);
            m[i] = u(rng);
            s[i] = std::sqrt(u(rng));
        }
        const double f = k(rng);
        std::vector<double> d2 = d, m2 = m, s2 = s;
        for (std::size_t i = 0; i < d.size(); ++i) {
            d2[i] *= f;
            m2[i] *= f;
            s2[i] *= f;
        }
        CHECK(chi_squared(d2, m2, s2, 3).chi2 == doctest::Approx(chi_squared(d, m, s, 3).chi2).epsilon(1e-13));
    }
}

TEST_CASE("poisson uncertainties have a one-count floor") {
    const auto s = poisson_uncertainties(std::vector<double>{0.0, 0.5, 4.0, 100.0});
    CHECK(s == std::vector<double>{1.0, 1.0, 2.0, 10.0});
}

TEST_CASE("problem validation") {
    const SpectrumScan data = excitation_spectrum(truth(), scan_grid(), true_scale, true_background);
    FitProblem p = problem_for(data);
    CHECK_NOTHROW(validate(p));
    p.free_parameters = {"rabi_397", "nonsense"};
    CHECK_THROWS_AS(validate(p), FitError);
    p.free_parameters = {"rabi_397", "rabi_397"};
    CHECK_THROWS_AS(validate(p), FitError);
    p.free_parameters = {"linewidth_866"};
    CHECK_THROWS_AS(validate(p), FitError);
    p.free_parameters = {};
    CHECK_THROWS_AS(validate(p), FitError);
    p = problem_for(data);
    p.data.detuning_866.resize(5);
    p.data.fluorescence.resize(5);
    p.data.model.resize(5);
    CHECK_THROWS_AS(validate(p), FitError);
    p = problem_for(data);
    p.bounds["rabi_397"] = {0.0, 1e9};
    CHECK_THROWS_AS(validate(p), FitError);
}

TEST_CASE("noiseless round trip recovers the parameters") {
    const SpectrumScan data = excitation_spectrum(truth(), scan_grid(), true_scale, true_background);
    FitProblem p = problem_for(data);
    const ParameterSet start = start_near(truth(), p.free_parameters);
    // scale and background are solved linearly, so their start is irrelevant
    const FitResult r = fit_spectrum(p, start);
    MESSAGE("reduced chi2 " << r.reduced_chi_squared << " after " << r.evaluations << " evaluations");
    double scale = true_scale, background = true_background;
    IonConfig t = truth();
    for (const auto& [name, value] : r.estimates) {
        const double expected = get_parameter(t, scale, background, name);
        INFO(name << " = " << value << " expected " << expected);
        CHECK(relative(value, expected) < 1e-3);
    }
    CHECK(r.reduced_chi_squared < 1e-6);
    CHECK(r.degrees_of_freedom == 101 - 9);
    CHECK(r.config.linewidth_866 == doctest::Approx(0.5 * r.config.linewidth_397).epsilon(1e-12));
    for (std::size_t i = 1; i < r.residual_trace.size(); ++i) CHECK(r.residual_trace[i] <= r.residual_trace[i - 1]);
}

namespace {

// A cheaper problem for the invariance checks: three non-linear parameters.
FitProblem small_problem(const SpectrumScan& data) {
    FitProblem p = problem_for(data);
    p.free_parameters = {"rabi_866", "detuning_397", "linewidth_397", "scale", "background"};
    p.max_evaluations = 300;
    p.restarts = 0;
    return p;
}

ParameterSet small_start() {
    IonConfig t = truth();
    return {{"rabi_866", 1.1 * t.rabi_866}, {"detuning_397", 0.92 * t.detuning_397},
            {"linewidth_397", 1.2 * t.linewidth_397}};
}

SpectrumScan noisy_data(std::uint64_t seed) {
    return excitation_spectrum(truth(), scan_grid(), true_scale, true_background, true, seed);
}

}  // namespace

TEST_CASE("constant offset is absorbed into the background") {
    const SpectrumScan data = noisy_data(4);
    FitProblem a = small_problem(data);
    a.uncertainties = poisson_uncertainties(data.fluorescence);
    FitProblem b = a;
    for (auto& v : b.data.fluorescence) v += 7.0;
    const FitResult ra = fit_spectrum(a, small_start());
    const FitResult rb = fit_spectrum(b, small_start());
    CHECK(rb.background - ra.background == doctest::Approx(7.0).epsilon(1e-6));
    CHECK(rb.scale == doctest::Approx(ra.scale).epsilon(1e-6));
    for (const auto& [name, value] : ra.estimates) {
        if (name == "background") continue;
        INFO(name);
        CHECK(rb.estimates.at(name) == doctest::Approx(value).epsilon(1e-6));
    }
}

TEST_CASE("property: estimates do not depend on the order of the data") {
    const SpectrumScan data = noisy_data(5);
    SpectrumScan shuffled = data;
    std::vector<std::size_t> idx(data.detuning_866.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        shuffled.detuning_866[i] = data.detuning_866[idx[i]];
        shuffled.fluorescence[i] = data.fluorescence[idx[i]];
        shuffled.model[i] = data.model[idx[i]];
    }
    const FitResult a = fit_spectrum(small_problem(data), small_start());
    const FitResult b = fit_spectrum(small_problem(shuffled), small_start());
    CHECK(a.estimates == b.estimates);
    CHECK(a.chi_squared == b.chi_squared);
    // the model comes back in the caller's order
    for (std::size_t i = 0; i < idx.size(); ++i) CHECK(b.model.model[i] == a.model.model[idx[i]]);
}

TEST_CASE("fit result invariants") {
    const SpectrumScan data = noisy_data(6);
    FitProblem p = small_problem(data);
    p.bounds["rabi_866"] = {constants::two_pi * 2e6, constants::two_pi * 6e6};
    const FitResult r = fit_spectrum(p, small_start());
    CHECK(r.config.linewidth_866 == doctest::Approx(0.5 * r.config.linewidth_397).epsilon(1e-12));
    CHECK(std::abs(r.config.linewidth_866 / r.config.linewidth_397 - 0.5) <= 1e-12 * 0.5);
    CHECK(r.reduced_chi_squared >= 0.0);
    CHECK(r.estimates.at("rabi_866") >= p.bounds["rabi_866"].lower);
    CHECK(r.estimates.at("rabi_866") <= p.bounds["rabi_866"].upper);
    REQUIRE_FALSE(r.residual_trace.empty());
    for (std::size_t i = 1; i < r.residual_trace.size(); ++i) CHECK(r.residual_trace[i] <= r.residual_trace[i - 1]);
    CHECK(r.residual_trace.back() == doctest::Approx(r.chi_squared).epsilon(1e-12));
    // deterministic
    const FitResult again = fit_spectrum(p, small_start());
    CHECK(again.estimates == r.estimates);

    // an evaluation cap too small to converge is reported, not thrown
    FitProblem tight = p;
    tight.max_evaluations = 5;
    CHECK_FALSE(fit_spectrum(tight, small_start()).converged);
}
