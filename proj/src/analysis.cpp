#include "translock/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <sstream>

#include <fftw3.h>

#include "translock/constants.hpp"
#include "translock/error.hpp"

namespace translock {

void validate(const FrequencyTrace& trace) {
    if (!(trace.sample_interval > 0.0)) throw InvalidModel("trace '" + trace.label + "' has no sample interval");
    for (double s : trace.samples)
        if (!std::isfinite(s)) throw InvalidModel("trace '" + trace.label + "' contains a non-finite sample");
}

std::string to_string(AllanEstimator estimator) {
    return estimator == AllanEstimator::overlapping ? "overlapping" : "non-overlapping";
}

AllanEstimator parse_allan_estimator(const std::string& name) {
    if (name == "overlapping") return AllanEstimator::overlapping;
    if (name == "non-overlapping" || name == "non_overlapping") return AllanEstimator::non_overlapping;
    throw ConfigError("unknown Allan estimator '" + name + "'");
}

AllanResult allan_variance(const FrequencyTrace& trace, double carrier, std::span<const double> taus,
                           AllanEstimator estimator) {
    validate(trace);
    if (!(carrier > 0.0)) throw InvalidModel("Allan variance: carrier frequency must be positive");

    AllanResult result;
    result.estimator = estimator;
    result.carrier_frequency = carrier;
    result.averaged_per_sample = trace.averaged_per_sample;

    const std::size_t n = trace.samples.size();
    // Mean-removed prefix sums in long double; the estimator is offset invariant.
    const long double mean =
        n > 0 ? std::accumulate(trace.samples.begin(), trace.samples.end(), 0.0L) / static_cast<long double>(n)
              : 0.0L;
    std::vector<long double> prefix(n + 1, 0.0L);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (trace.samples[i] - mean);

    const double tau0 = trace.sample_interval;
    std::vector<std::size_t> done;
    for (double tau : taus) {
        const double ratio = tau / tau0;
        const auto m = static_cast<std::size_t>(std::max(1.0, std::round(ratio)));
        if (std::abs(ratio - static_cast<double>(m)) > 1e-9 * ratio) {
            std::ostringstream msg;
            msg << "tau " << tau << " s rounded to " << static_cast<double>(m) * tau0 << " s";
            result.warnings.push_back(msg.str());
        }
        if (2 * m > n) {
            std::ostringstream msg;
            msg << "tau " << static_cast<double>(m) * tau0 << " s omitted: trace too short";
            result.warnings.push_back(msg.str());
            continue;
        }
        if (std::find(done.begin(), done.end(), m) != done.end()) continue;
        done.push_back(m);

        const long double scale = 1.0L / (static_cast<long double>(m) * carrier);
        long double sum = 0.0L;
        std::size_t pairs = 0;
        if (estimator == AllanEstimator::overlapping) {
            for (std::size_t k = 0; k + 2 * m <= n; ++k) {
                const long double d = (prefix[k + 2 * m] - 2.0L * prefix[k + m] + prefix[k]) * scale;
                sum += d * d;
                ++pairs;
            }
        } else {
            for (std::size_t k = 0; k + 2 * m <= n; k += m) {
                const long double d = (prefix[k + 2 * m] - 2.0L * prefix[k + m] + prefix[k]) * scale;
                sum += d * d;
                ++pairs;
            }
        }
        result.points.push_back(
            {static_cast<double>(m) * tau0, static_cast<double>(sum / (2.0L * static_cast<long double>(pairs))),
             pairs});
    }
    std::sort(result.points.begin(), result.points.end(),
              [](const AllanPoint& a, const AllanPoint& b) { return a.tau < b.tau; });
    return result;
}

std::vector<double> octave_taus(const FrequencyTrace& trace, std::size_t min_pairs) {
    std::vector<double> taus;
    const std::size_t n = trace.samples.size();
    for (std::size_t m = 1; 2 * m <= n && n - 2 * m + 1 >= min_pairs; m *= 2)
        taus.push_back(static_cast<double>(m) * trace.sample_interval);
    return taus;
}

NoiseClassification classify_noise(const AllanResult& result, double tau_min, double tau_max) {
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& p : result.points) {
        if (p.tau < tau_min * (1.0 - 1e-12) || p.tau > tau_max * (1.0 + 1e-12)) continue;
        if (!(p.sigma2 > 0.0)) continue;
        x.push_back(std::log10(p.tau));
        y.push_back(std::log10(p.sigma2));
    }
    if (x.size() < 4) throw DomainError("classify_noise: fewer than 4 Allan points in range");
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    NoiseClassification c;
    c.slope = sxy / sxx;
    c.intercept = my - c.slope * mx;
    c.points_used = x.size();
    const double rounded = std::round(c.slope);
    if (rounded <= -2.0) c.label = "white PM";
    else if (rounded == -1.0) c.label = "white FM";
    else if (rounded == 0.0) c.label = "flicker FM";
    else if (rounded == 1.0) c.label = "random-walk FM";
    else c.label = "drift";
    return c;
}

namespace {

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* plan) const { fftw_destroy_plan(plan); }
};

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

std::vector<double> make_window(Window window, std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (window == Window::hann && n > 1) {
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 0.5 - 0.5 * std::cos(constants::two_pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

}  // namespace

PsdResult psd(std::span<const double> samples, double sample_interval, double bandwidth, const PsdOptions& options) {
    if (!(sample_interval > 0.0)) throw DomainError("psd: sample interval must be positive");
    const double rate = 1.0 / sample_interval;
    if (!(bandwidth > 0.0) || rate < 2.0 * bandwidth * (1.0 - 1e-12))
        throw DomainError("psd: sample rate below twice the requested bandwidth");
    if (samples.size() < 2) throw DomainError("psd: need at least two samples");
    if (!(options.full_scale > 0.0)) throw DomainError("psd: full scale must be positive");

    const std::size_t seg = std::min(options.segment_length, samples.size());
    const std::size_t hop = std::max<std::size_t>(1, seg / 2);
    const auto window = make_window(options.window, seg);
    const double wsum = std::accumulate(window.begin(), window.end(), 0.0);
    const double wsq = std::inner_product(window.begin(), window.end(), window.begin(), 0.0);

    double mean = 0.0;
    if (options.remove_mean)
        mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());

    const std::size_t nbins = seg / 2 + 1;
    std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * seg)));
    std::unique_ptr<fftw_complex, FftwFree> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nbins)));
    std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
        fftw_plan_dft_r2c_1d(static_cast<int>(seg), in.get(), out.get(), FFTW_ESTIMATE));

    std::vector<double> power(nbins, 0.0);      // |X|^2 accumulated
    std::size_t segments = 0;
    for (std::size_t start = 0; start + seg <= samples.size(); start += hop) {
        for (std::size_t i = 0; i < seg; ++i) in.get()[i] = (samples[start + i] - mean) * window[i];
        fftw_execute(plan.get());
        for (std::size_t k = 0; k < nbins; ++k) {
            const double re = out.get()[k][0];
            const double im = out.get()[k][1];
            power[k] += re * re + im * im;
        }
        ++segments;
    }

    PsdResult result;
    result.window = options.window;
    result.bandwidth = bandwidth;
    result.resolution = rate / static_cast<double>(seg);
    result.segments = segments;
    for (std::size_t k = 0; k < nbins; ++k) {
        const double f = static_cast<double>(k) * result.resolution;
        if (f > bandwidth * (1.0 + 1e-12)) break;
        const double p = power[k] / static_cast<double>(segments);
        const bool edge = (k == 0) || (seg % 2 == 0 && k == nbins - 1);
        // one-sided density: |X|^2 / (fs sum w^2), doubled away from DC and Nyquist
        const double density = (edge ? 1.0 : 2.0) * p / (rate * wsq);
        // amplitude of a sinusoid: 2|X|/sum w (|X|/sum w at DC)
        const double amplitude = (edge ? 1.0 : 2.0) * std::sqrt(p) / wsum;
        const double level = amplitude > 0.0 ? 20.0 * std::log10(amplitude / options.full_scale) : -400.0;
        result.bins.push_back({f, level, density});
    }
    return result;
}

PsdResult psd(const FrequencyTrace& trace, double bandwidth, const PsdOptions& options) {
    validate(trace);
    return psd(trace.samples, trace.sample_interval, bandwidth, options);
}

std::vector<SpectralPeak> find_peaks(const PsdResult& result, double threshold_db) {
    std::vector<SpectralPeak> peaks;
    const auto& b = result.bins;
    for (std::size_t k = 1; k + 1 < b.size(); ++k) {
        if (b[k].level_db < threshold_db) continue;
        if (!(b[k].level_db > b[k - 1].level_db && b[k].level_db >= b[k + 1].level_db)) continue;
        const double a = b[k - 1].level_db;
        const double c = b[k].level_db;
        const double d = b[k + 1].level_db;
        const double denom = a - 2.0 * c + d;
        const double offset = denom != 0.0 ? 0.5 * (a - d) / denom : 0.0;
        peaks.push_back({b[k].frequency + offset * result.resolution, c - 0.25 * (a - d) * offset});
    }
    std::sort(peaks.begin(), peaks.end(),
              [](const SpectralPeak& x, const SpectralPeak& y) { return x.level_db > y.level_db; });
    return peaks;
}

namespace {

// Residual sum of squares of y about its mean or its least-squares line.
double residual_variance(std::span<const double> y, double dt, bool detrend) {
    const auto n = static_cast<double>(y.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    if (!detrend || y.size() < 3) {
        double ss = 0.0;
        for (double v : y) ss += (v - my) * (v - my);
        return ss / n;
    }
    const double mt = 0.5 * (n - 1.0) * dt;
    double stt = 0.0;
    double sty = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double t = static_cast<double>(i) * dt - mt;
        stt += t * t;
        sty += t * (y[i] - my);
    }
    const double slope = sty / stt;
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - my - slope * (static_cast<double>(i) * dt - mt);
        ss += r * r;
    }
    return ss / n;
}

}  // namespace

RmsDrift rms_and_drift(const FrequencyTrace& trace, double window, bool detrend) {
    validate(trace);
    if (trace.samples.size() < 2) throw DomainError("rms_and_drift: need at least two samples");
    if (!(window > 0.0) || window > trace.duration() * (1.0 + 1e-9))
        throw DomainError("rms_and_drift: window must be positive and not exceed the trace duration");
    const auto per_window = std::max<std::size_t>(
        2, std::min(trace.samples.size(), static_cast<std::size_t>(std::llround(window / trace.sample_interval))));
    const std::span<const double> all(trace.samples);

    RmsDrift out;
    double acc = 0.0;
    for (std::size_t start = 0; start + per_window <= all.size(); start += per_window) {
        acc += residual_variance(all.subspan(start, per_window), trace.sample_interval, detrend);
        ++out.windows;
    }
    out.rms = std::sqrt(acc / static_cast<double>(out.windows));

    const auto n = static_cast<double>(all.size());
    const double mt = 0.5 * (n - 1.0) * trace.sample_interval;
    const double my = std::accumulate(all.begin(), all.end(), 0.0) / n;
    double stt = 0.0;
    double sty = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const double t = static_cast<double>(i) * trace.sample_interval - mt;
        stt += t * t;
        sty += t * (all[i] - my);
    }
    out.linear_drift = sty / stt;
    return out;
}

double peak_to_peak(std::span<const double> samples) {
    if (samples.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    return *hi - *lo;
}

}  // namespace translock
