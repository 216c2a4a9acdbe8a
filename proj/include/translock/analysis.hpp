#ifndef TRANSLOCK_ANALYSIS_HPP
#define TRANSLOCK_ANALYSIS_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "translock/trace.hpp"

namespace translock {

enum class AllanEstimator { overlapping, non_overlapping };

std::string to_string(AllanEstimator estimator);
AllanEstimator parse_allan_estimator(const std::string& name);

struct AllanPoint {
    double tau = 0.0;           // s
    double sigma2 = 0.0;        // fractional-frequency Allan variance
    std::size_t n_pairs = 0;
};

struct AllanResult {
    std::vector<AllanPoint> points;
    AllanEstimator estimator = AllanEstimator::overlapping;
    double carrier_frequency = 0.0;  // Hz
    bool averaged_per_sample = false;
    std::vector<std::string> warnings;
};

// sigma_y^2(m tau0) = <(ybar_{k+m} - ybar_k)^2> / 2 with y = samples / carrier.
// Taus are rounded to whole multiples of the sample interval (with a warning);
// taus needing more than the trace provides are omitted.
AllanResult allan_variance(const FrequencyTrace& trace, double carrier, std::span<const double> taus,
                           AllanEstimator estimator = AllanEstimator::overlapping);

// Octave-spaced taus from tau0 up to the longest tau with at least min_pairs pairs.
std::vector<double> octave_taus(const FrequencyTrace& trace, std::size_t min_pairs = 1);

struct NoiseClassification {
    double slope = 0.0;       // d log sigma^2 / d log tau
    double intercept = 0.0;   // log10 sigma^2 at tau = 1 s
    std::string label;        // "white FM", "flicker FM", "random-walk FM", ...
    std::size_t points_used = 0;
};

// Log-log least-squares slope over taus in [tau_min, tau_max]; needs >= 4 points.
NoiseClassification classify_noise(const AllanResult& result, double tau_min, double tau_max);

enum class Window { rectangular, hann };

struct PsdOptions {
    std::size_t segment_length = 4096;
    Window window = Window::hann;
    double full_scale = 1.0;   // signal amplitude mapped to 0 dB
    bool remove_mean = false;
};

struct PsdBin {
    double frequency = 0.0;  // Hz
    double level_db = 0.0;   // amplitude spectrum, dB relative to full scale
    double density = 0.0;    // one-sided power spectral density, unit^2/Hz
};

struct PsdResult {
    std::vector<PsdBin> bins;  // uniform from 0 up to the requested bandwidth
    Window window = Window::hann;
    double bandwidth = 0.0;    // Hz
    double resolution = 0.0;   // bin spacing, Hz
    std::size_t segments = 0;
};

// Welch-averaged periodogram (50 % overlap) of a uniformly sampled record.
PsdResult psd(std::span<const double> samples, double sample_interval, double bandwidth,
              const PsdOptions& options = {});
PsdResult psd(const FrequencyTrace& trace, double bandwidth, const PsdOptions& options = {});

struct SpectralPeak {
    double frequency = 0.0;
    double level_db = 0.0;
};

// Local maxima above threshold_db, strongest first; frequency and level are
// refined by a parabola through the three log-magnitude bins around the maximum.
std::vector<SpectralPeak> find_peaks(const PsdResult& result, double threshold_db);

struct RmsDrift {
    double rms = 0.0;            // unit of the trace
    double linear_drift = 0.0;   // unit per second
    std::size_t windows = 0;
};

// rms about each window's mean (after an optional per-window linear detrend),
// combined in quadrature over windows; drift from a least-squares line over the
// whole record.
RmsDrift rms_and_drift(const FrequencyTrace& trace, double window, bool detrend = false);

double peak_to_peak(std::span<const double> samples);

}  // namespace translock

#endif  // TRANSLOCK_ANALYSIS_HPP
