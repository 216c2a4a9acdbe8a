#ifndef TRANSLOCK_DISCRIMINATOR_HPP
#define TRANSLOCK_DISCRIMINATOR_HPP

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "translock/constants.hpp"
#include "translock/optics.hpp"

namespace translock {

struct SpectralLine {
    std::string label;
    double center_offset = 0.0;       // Hz relative to the catalog origin
    double natural_width = 0.0;       // Hz FWHM
    double relative_amplitude = 0.0;
    bool is_crossover = false;
    // Indices of the two parent lines for a crossover, -1 otherwise.
    int parent_a = -1;
    int parent_b = -1;
};

// Gaussian Doppler pedestal of one ground-state manifold.
struct DopplerProfile {
    double center_offset = 0.0;  // Hz relative to the catalog origin
    double amplitude = 0.0;
};

struct LineCatalog {
    std::string name;
    std::vector<SpectralLine> lines;
    std::vector<DopplerProfile> doppler;
    double doppler_fwhm = 0.0;     // Hz
    double catalog_origin = 0.0;   // absolute frequency of the reference feature, Hz
    std::string reference_label;   // feature sitting at offset 0
    // Lamb-dip width as a multiple of the natural width (power broadening).
    double dip_broadening = 3.0;
};

struct DemodConfig {
    double modulation_frequency = constants::modulation_frequency;  // Hz
    double demod_phase = 0.0;                                       // rad
    double lowpass_bandwidth = 5.0e3;                               // Hz, error-monitor output
};

void validate(const LineCatalog& catalog);
void validate(const DemodConfig& demod);

// Appends a crossover at the midpoint of lines a and b with the mean parent amplitude.
void add_crossover(LineCatalog& catalog, int a, int b);

// F(nu)F*(nu+Omega) - F*(nu)F(nu-Omega); the error signal at demod phase theta is
// Im(Q) cos(theta) + Re(Q) sin(theta).
std::complex<double> pdh_quadratures(const CavityModel& cavity, double laser_detuning,
                                     double modulation_frequency);

double pdh_error_cavity(const CavityModel& cavity, double laser_detuning, const DemodConfig& demod);

// Saturated-absorption profile: Doppler pedestals minus Lamb dips (absorption)
// and the dispersion paired with the dips.
double catalog_absorption(const LineCatalog& catalog, double detuning);
double catalog_dispersion(const LineCatalog& catalog, double detuning);

// Weak-modulation FM signal: first = absorption quadrature
// alpha(nu-Omega) - alpha(nu+Omega), second = dispersion quadrature
// phi(nu+Omega) + phi(nu-Omega) - 2 phi(nu).
std::pair<double, double> fm_quadratures(const LineCatalog& catalog, double laser_detuning,
                                         double modulation_frequency);

double fm_spectroscopy_error(const LineCatalog& catalog, double laser_detuning, const DemodConfig& demod);

// Demodulation phase maximizing the positive slope at detuning zero.
double optimal_pdh_phase(const CavityModel& cavity, double modulation_frequency);
double optimal_fm_phase(const LineCatalog& catalog, double modulation_frequency);

// Central slope dS/dnu at detuning zero, V/Hz.
double pdh_slope(const CavityModel& cavity, const DemodConfig& demod);
double fm_slope(const LineCatalog& catalog, const DemodConfig& demod);

// Cs D2 F=3 -> F'=2,3,4 with crossovers; origin at the F'=3/4 crossover.
LineCatalog cs_d2_f3_catalog();

// Rb D1 lines of both isotopes weighted by natural abundance; origin at the
// 85Rb F=3 -> F'=2/3 crossover.
LineCatalog rb_d1_catalog();

// Doppler FWHM of a thermal vapor, Hz.
double doppler_fwhm(double transition_frequency, double mass, double temperature);

// Linear frequency-to-voltage gauge: signal = slope * frequency + offset.
struct FrequencyGauge {
    double slope = 0.0;   // V/Hz
    double offset = 0.0;  // V
    double to_frequency(double signal) const { return (signal - offset) / slope; }
};

// Least-squares line through (frequency, signal) pairs.
FrequencyGauge gauge_slope(std::span<const double> frequency, std::span<const double> signal);

// Zero crossings whose slope has the sign of the strongest crossing and a
// magnitude at least min_relative_slope of it. Returned by linear interpolation.
std::vector<double> find_lock_points(std::span<const double> frequency, std::span<const double> signal,
                                     double min_relative_slope = 0.3);

// Uniformly sampled, linearly interpolated copy of a discriminator curve.
// Outside [lower, upper] the exact function is evaluated.
class DiscriminatorTable {
public:
    DiscriminatorTable() = default;
    DiscriminatorTable(std::function<double(double)> exact, double lower, double upper, std::size_t points);

    double operator()(double x) const {
        const double u = (x - lower_) * inverse_step_;
        if (u >= 0.0 && u < last_) {
            const auto i = static_cast<std::size_t>(u);
            const double w = u - static_cast<double>(i);
            return values_[i] + w * (values_[i + 1] - values_[i]);
        }
        return exact_(x);
    }

    double lower() const { return lower_; }
    double upper() const { return upper_; }

private:
    std::function<double(double)> exact_;
    std::vector<double> values_;
    double lower_ = 0.0;
    double upper_ = 0.0;
    double inverse_step_ = 0.0;
    double last_ = 0.0;
};

}  // namespace translock

#endif  // TRANSLOCK_DISCRIMINATOR_HPP
