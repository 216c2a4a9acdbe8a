#include "translock/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "translock/error.hpp"

namespace translock {

namespace {

// Doppler pedestal height relative to the summed Lamb-dip amplitudes of its manifold.
constexpr double doppler_to_dip_ratio = 4.0;

// Step of the central finite difference used for slopes, as a fraction of
// the narrowest feature width.
constexpr double slope_step_fraction = 1e-4;

double lorentz_absorption(double x) { return 1.0 / (1.0 + x * x); }
double lorentz_dispersion(double x) { return x / (1.0 + x * x); }

double dip_half_width(const LineCatalog& catalog, const SpectralLine& line) {
    return 0.5 * line.natural_width * catalog.dip_broadening;
}

double narrowest_width(const LineCatalog& catalog) {
    double w = catalog.doppler_fwhm > 0.0 ? catalog.doppler_fwhm : 1e9;
    for (const auto& line : catalog.lines) w = std::min(w, line.natural_width * catalog.dip_broadening);
    return w;
}

template <typename F>
double central_difference(F&& f, double h) {
    return (f(h) - f(-h)) / (2.0 * h);
}

}  // namespace

void validate(const LineCatalog& catalog) {
    if (catalog.lines.empty()) throw InvalidModel("line catalog '" + catalog.name + "' is empty");
    if (!(catalog.dip_broadening > 0.0)) throw InvalidModel("dip broadening must be positive");
    if (!catalog.doppler.empty() && !(catalog.doppler_fwhm > 0.0))
        throw InvalidModel("Doppler width must be positive when a pedestal is present");
    const auto n = static_cast<int>(catalog.lines.size());
    for (const auto& line : catalog.lines) {
        if (!(line.natural_width > 0.0)) throw InvalidModel("line '" + line.label + "' has non-positive width");
        if (!(line.relative_amplitude > 0.0))
            throw InvalidModel("line '" + line.label + "' has non-positive amplitude");
        if (line.is_crossover) {
            if (line.parent_a < 0 || line.parent_a >= n || line.parent_b < 0 || line.parent_b >= n)
                throw InvalidModel("crossover '" + line.label + "' has invalid parents");
            const double mid = 0.5 * (catalog.lines[static_cast<std::size_t>(line.parent_a)].center_offset
                                      + catalog.lines[static_cast<std::size_t>(line.parent_b)].center_offset);
            if (mid != line.center_offset)
                throw InvalidModel("crossover '" + line.label + "' is not at the midpoint of its parents");
        }
    }
}

void validate(const DemodConfig& demod) {
    if (!(demod.modulation_frequency > 0.0)) throw InvalidModel("modulation frequency must be positive");
    if (!(demod.lowpass_bandwidth > 0.0)) throw InvalidModel("lowpass bandwidth must be positive");
    if (!std::isfinite(demod.demod_phase)) throw InvalidModel("demodulation phase must be finite");
}

void add_crossover(LineCatalog& catalog, int a, int b) {
    const auto& la = catalog.lines.at(static_cast<std::size_t>(a));
    const auto& lb = catalog.lines.at(static_cast<std::size_t>(b));
    SpectralLine xo;
    xo.label = "CO(" + la.label + "," + lb.label + ")";
    xo.center_offset = 0.5 * (la.center_offset + lb.center_offset);
    xo.natural_width = 0.5 * (la.natural_width + lb.natural_width);
    xo.relative_amplitude = 0.5 * (la.relative_amplitude + lb.relative_amplitude);
    xo.is_crossover = true;
    xo.parent_a = a;
    xo.parent_b = b;
    catalog.lines.push_back(std::move(xo));
}

std::complex<double> pdh_quadratures(const CavityModel& cavity, double laser_detuning,
                                     double modulation_frequency) {
    const auto f0 = reflection_coefficient(cavity, laser_detuning);
    const auto fp = reflection_coefficient(cavity, laser_detuning + modulation_frequency);
    const auto fm = reflection_coefficient(cavity, laser_detuning - modulation_frequency);
    return f0 * std::conj(fp) - std::conj(f0) * fm;
}

double pdh_error_cavity(const CavityModel& cavity, double laser_detuning, const DemodConfig& demod) {
    const auto q = pdh_quadratures(cavity, laser_detuning, demod.modulation_frequency);
    return q.imag() * std::cos(demod.demod_phase) + q.real() * std::sin(demod.demod_phase);
}

double catalog_absorption(const LineCatalog& catalog, double detuning) {
    double alpha = 0.0;
    if (!catalog.doppler.empty()) {
        const double sigma = catalog.doppler_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
        for (const auto& d : catalog.doppler) {
            const double u = (detuning - d.center_offset) / sigma;
            alpha += d.amplitude * std::exp(-0.5 * u * u);
        }
    }
    for (const auto& line : catalog.lines) {
        const double x = (detuning - line.center_offset) / dip_half_width(catalog, line);
        alpha -= line.relative_amplitude * lorentz_absorption(x);
    }
    return alpha;
}

double catalog_dispersion(const LineCatalog& catalog, double detuning) {
    double phi = 0.0;
    for (const auto& line : catalog.lines) {
        const double x = (detuning - line.center_offset) / dip_half_width(catalog, line);
        phi -= line.relative_amplitude * lorentz_dispersion(x);
    }
    return phi;
}

std::pair<double, double> fm_quadratures(const LineCatalog& catalog, double laser_detuning,
                                         double modulation_frequency) {
    const double a = catalog_absorption(catalog, laser_detuning - modulation_frequency)
                     - catalog_absorption(catalog, laser_detuning + modulation_frequency);
    const double d = catalog_dispersion(catalog, laser_detuning + modulation_frequency)
                     + catalog_dispersion(catalog, laser_detuning - modulation_frequency)
                     - 2.0 * catalog_dispersion(catalog, laser_detuning);
    return {a, d};
}

double fm_spectroscopy_error(const LineCatalog& catalog, double laser_detuning, const DemodConfig& demod) {
    const auto [a, d] = fm_quadratures(catalog, laser_detuning, demod.modulation_frequency);
    return a * std::cos(demod.demod_phase) + d * std::sin(demod.demod_phase);
}

double optimal_pdh_phase(const CavityModel& cavity, double modulation_frequency) {
    const double h = slope_step_fraction * cavity_linewidth(cavity);
    const auto dq = (pdh_quadratures(cavity, h, modulation_frequency)
                     - pdh_quadratures(cavity, -h, modulation_frequency))
                    / (2.0 * h);
    // slope(theta) = Im(dq) cos + Re(dq) sin is maximal at atan2(Re, Im).
    return std::atan2(dq.real(), dq.imag());
}

double optimal_fm_phase(const LineCatalog& catalog, double modulation_frequency) {
    const double h = slope_step_fraction * narrowest_width(catalog);
    const auto [ap, dp] = fm_quadratures(catalog, h, modulation_frequency);
    const auto [am, dm] = fm_quadratures(catalog, -h, modulation_frequency);
    return std::atan2((dp - dm) / (2.0 * h), (ap - am) / (2.0 * h));
}

double pdh_slope(const CavityModel& cavity, const DemodConfig& demod) {
    const double h = slope_step_fraction * cavity_linewidth(cavity);
    return central_difference([&](double x) { return pdh_error_cavity(cavity, x, demod); }, h);
}

double fm_slope(const LineCatalog& catalog, const DemodConfig& demod) {
    const double h = slope_step_fraction * narrowest_width(catalog);
    return central_difference([&](double x) { return fm_spectroscopy_error(catalog, x, demod); }, h);
}

double doppler_fwhm(double transition_frequency, double mass, double temperature) {
    return transition_frequency / constants::speed_of_light
           * std::sqrt(8.0 * constants::boltzmann * temperature * std::log(2.0) / mass);
}

namespace {

struct RawLine {
    std::string label;
    double frequency;  // absolute, Hz
    double amplitude;
};

// Builds lines from absolute frequencies, adds crossovers between lines of the
// same ground manifold, one Doppler pedestal per manifold, then shifts the
// origin onto the crossover of the given parent pair.
LineCatalog assemble(std::string name, const std::vector<std::vector<RawLine>>& manifolds, double width,
                     double fwhm, std::size_t ref_manifold, std::size_t ref_a, std::size_t ref_b) {
    LineCatalog catalog;
    catalog.name = std::move(name);
    catalog.doppler_fwhm = fwhm;

    std::vector<std::vector<int>> indices;
    for (const auto& manifold : manifolds) {
        std::vector<int> idx;
        double weight = 0.0;
        double center = 0.0;
        for (const auto& raw : manifold) {
            idx.push_back(static_cast<int>(catalog.lines.size()));
            catalog.lines.push_back({raw.label, raw.frequency, width, raw.amplitude, false, -1, -1});
            weight += raw.amplitude;
            center += raw.amplitude * raw.frequency;
        }
        catalog.doppler.push_back({center / weight, doppler_to_dip_ratio * weight});
        indices.push_back(std::move(idx));
    }

    int reference = -1;
    for (std::size_t m = 0; m < indices.size(); ++m) {
        const auto& idx = indices[m];
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = i + 1; j < idx.size(); ++j) {
                add_crossover(catalog, idx[i], idx[j]);
                if (m == ref_manifold && i == ref_a && j == ref_b)
                    reference = static_cast<int>(catalog.lines.size()) - 1;
            }
        }
    }

    const double origin = catalog.lines.at(static_cast<std::size_t>(reference)).center_offset;
    catalog.catalog_origin = origin;
    catalog.reference_label = catalog.lines[static_cast<std::size_t>(reference)].label;
    for (auto& line : catalog.lines) line.center_offset -= origin;
    for (auto& d : catalog.doppler) d.center_offset -= origin;
    // Recompute crossover centers from the shifted parents so they stay exact midpoints.
    for (auto& line : catalog.lines) {
        if (!line.is_crossover) continue;
        line.center_offset = 0.5 * (catalog.lines[static_cast<std::size_t>(line.parent_a)].center_offset
                                    + catalog.lines[static_cast<std::size_t>(line.parent_b)].center_offset);
    }
    validate(catalog);
    return catalog;
}

}  // namespace

LineCatalog cs_d2_f3_catalog() {
    using namespace constants;
    const double ground = cs_d2_centroid - cs_ground_f3_shift;
    const std::vector<std::vector<RawLine>> manifolds{{
        {"F=3->F'=2", ground + cs_excited_f2_shift, cs_strength_32},
        {"F=3->F'=3", ground + cs_excited_f3_shift, cs_strength_33},
        {"F=3->F'=4", ground + cs_excited_f4_shift, cs_strength_34},
    }};
    const double fwhm = doppler_fwhm(cs_d2_centroid, cs_mass, vapor_temperature);
    // reference: crossover of F'=3 and F'=4 (indices 1, 2 within the manifold)
    return assemble("Cs D2 F=3", manifolds, cs_d2_natural_width, fwhm, 0, 1, 2);
}

LineCatalog rb_d1_catalog() {
    using namespace constants;
    // Ground-state populations split by degeneracy (2F+1)/(2(2I+1)).
    const double w85_f3 = rb85_abundance * 7.0 / 12.0;
    const double w85_f2 = rb85_abundance * 5.0 / 12.0;
    const double w87_f2 = rb87_abundance * 5.0 / 8.0;
    const double w87_f1 = rb87_abundance * 3.0 / 8.0;
    const double g85_3 = rb85_d1_centroid - rb85_ground_f3_shift;
    const double g85_2 = rb85_d1_centroid - rb85_ground_f2_shift;
    const double g87_2 = rb87_d1_centroid - rb87_ground_f2_shift;
    const double g87_1 = rb87_d1_centroid - rb87_ground_f1_shift;
    const std::vector<std::vector<RawLine>> manifolds{
        {{"85Rb F=3->F'=2", g85_3 + rb85_excited_f2_shift, w85_f3 * rb85_strength_32},
         {"85Rb F=3->F'=3", g85_3 + rb85_excited_f3_shift, w85_f3 * rb85_strength_33}},
        {{"85Rb F=2->F'=2", g85_2 + rb85_excited_f2_shift, w85_f2 * rb85_strength_22},
         {"85Rb F=2->F'=3", g85_2 + rb85_excited_f3_shift, w85_f2 * rb85_strength_23}},
        {{"87Rb F=2->F'=1", g87_2 + rb87_excited_f1_shift, w87_f2 * rb87_strength_21},
         {"87Rb F=2->F'=2", g87_2 + rb87_excited_f2_shift, w87_f2 * rb87_strength_22}},
        {{"87Rb F=1->F'=1", g87_1 + rb87_excited_f1_shift, w87_f1 * rb87_strength_11},
         {"87Rb F=1->F'=2", g87_1 + rb87_excited_f2_shift, w87_f1 * rb87_strength_12}},
    };
    const double fwhm = doppler_fwhm(rb85_d1_centroid, rb85_mass, vapor_temperature);
    return assemble("Rb D1", manifolds, rb_d1_natural_width, fwhm, 0, 0, 1);
}

FrequencyGauge gauge_slope(std::span<const double> frequency, std::span<const double> signal) {
    if (frequency.size() != signal.size()) throw GaugeError("gauge: frequency and signal sizes differ");
    if (frequency.size() < 3) throw GaugeError("gauge: at least 3 points are required");
    const auto n = static_cast<double>(frequency.size());
    const double mx = std::accumulate(frequency.begin(), frequency.end(), 0.0) / n;
    const double my = std::accumulate(signal.begin(), signal.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < frequency.size(); ++i) {
        const double dx = frequency[i] - mx;
        sxx += dx * dx;
        sxy += dx * (signal[i] - my);
    }
    if (!(sxx > 0.0)) throw GaugeError("gauge: abscissa has zero spread");
    const double slope = sxy / sxx;
    if (slope == 0.0) throw GaugeError("gauge: fitted slope is zero");
    return {slope, my - slope * mx};
}

std::vector<double> find_lock_points(std::span<const double> frequency, std::span<const double> signal,
                                     double min_relative_slope) {
    struct Crossing {
        double at;
        double slope;
    };
    std::vector<Crossing> crossings;
    for (std::size_t i = 0; i + 1 < signal.size(); ++i) {
        const double a = signal[i];
        const double b = signal[i + 1];
        if ((a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0)) {
            const double t = a / (a - b);
            const double df = frequency[i + 1] - frequency[i];
            crossings.push_back({frequency[i] + t * df, (b - a) / df});
        }
    }
    if (crossings.empty()) return {};
    const auto strongest = std::max_element(crossings.begin(), crossings.end(), [](const auto& x, const auto& y) {
        return std::abs(x.slope) < std::abs(y.slope);
    });
    const double reference = strongest->slope;
    std::vector<double> out;
    for (const auto& c : crossings) {
        if (c.slope * reference > 0.0 && std::abs(c.slope) >= min_relative_slope * std::abs(reference))
            out.push_back(c.at);
    }
    return out;
}

DiscriminatorTable::DiscriminatorTable(std::function<double(double)> exact, double lower, double upper,
                                       std::size_t points)
    : exact_(std::move(exact)), lower_(lower), upper_(upper) {
    if (!(upper > lower) || points < 2) throw InvalidModel("discriminator table needs a non-empty range");
    values_.resize(points);
    const double step = (upper - lower) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) values_[i] = exact_(lower + step * static_cast<double>(i));
    inverse_step_ = 1.0 / step;
    last_ = static_cast<double>(points - 1);
}

}  // namespace translock
