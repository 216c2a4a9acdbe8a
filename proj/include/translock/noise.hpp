#ifndef TRANSLOCK_NOISE_HPP
#define TRANSLOCK_NOISE_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "translock/trace.hpp"

namespace translock {

// Power-law frequency noise with one-sided spectral density
//   S_nu(f) = h0 + h_minus1 / f + h_minus2 / f^2     (Hz^2/Hz)
// plus the slow air-pressure process shared by both cavities.
struct NoiseSpec {
    double white_fm = 0.0;        // h0, Hz^2/Hz
    double flicker_fm = 0.0;      // h-1, Hz^2
    double random_walk_fm = 0.0;  // h-2, Hz^2 Hz
    double pressure_daily_amplitude = 100.0;  // Pa
    double pressure_daily_phase = 0.0;        // rad at t = 0
    double pressure_walk_level = 0.0;         // Pa^2/s
    std::uint64_t seed = 1;
};

void validate(const NoiseSpec& spec);

// Gaussian stream seeded from (seed, stream); streams with different ids are
// statistically independent.
class GaussianStream {
public:
    GaussianStream() : GaussianStream(1, 0) {}
    GaussianStream(std::uint64_t seed, std::uint64_t stream);
    double operator()() { return normal_(engine_); }

private:
    boost::random::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_;
};

// Flicker corners: two first-order relaxation processes per decade.
inline constexpr double flicker_corners_per_decade = 2.0;

// Streaming generator of one power-law process sampled every dt.
class FrequencyNoise {
public:
    FrequencyNoise() = default;
    // Flicker noise is synthesized between f_high = 0.1/dt and
    // f_high * 10^-flicker_decades.
    FrequencyNoise(const NoiseSpec& spec, double dt, std::uint64_t stream, double flicker_decades = 6.0);

    double next();
    bool silent() const { return silent_; }

private:
    GaussianStream gauss_;
    double white_sigma_ = 0.0;
    double walk_sigma_ = 0.0;
    double walk_ = 0.0;
    std::vector<double> ar_coeff_;
    std::vector<double> ar_drive_;
    std::vector<double> ar_state_;
    bool silent_ = true;
};

// Sum of independently seeded white, flicker and random-walk FM processes.
// White: i.i.d. samples of variance h0/(2 dt). Random walk: cumulative sum of
// i.i.d. increments of variance 2 pi^2 h-2 dt. Flicker: bank of exactly
// discretized first-order lowpass processes with log-spaced corners, equal
// weights h-1 ln(r) (r the corner ratio), covering at least 4 decades down to
// the record length.
FrequencyTrace generate_noise(const NoiseSpec& spec, std::size_t n_samples, double dt);

}  // namespace translock

#endif  // TRANSLOCK_NOISE_HPP
