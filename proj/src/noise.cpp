#include "translock/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "translock/constants.hpp"
#include "translock/error.hpp"

namespace translock {

void validate(const NoiseSpec& spec) {
    if (!(spec.white_fm >= 0.0) || !(spec.flicker_fm >= 0.0) || !(spec.random_walk_fm >= 0.0))
        throw InvalidModel("noise levels must be non-negative");
    if (!(spec.pressure_daily_amplitude >= 0.0) || !(spec.pressure_walk_level >= 0.0))
        throw InvalidModel("pressure noise levels must be non-negative");
}

GaussianStream::GaussianStream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x7a11u};
    engine_.seed(seq);
}

FrequencyNoise::FrequencyNoise(const NoiseSpec& spec, double dt, std::uint64_t stream, double flicker_decades)
    : gauss_(spec.seed, stream) {
    validate(spec);
    if (!(dt > 0.0)) throw InvalidModel("noise sample interval must be positive");
    white_sigma_ = std::sqrt(spec.white_fm / (2.0 * dt));
    walk_sigma_ = std::sqrt(2.0 * constants::pi * constants::pi * spec.random_walk_fm * dt);
    if (spec.flicker_fm > 0.0) {
        if (flicker_decades < 4.0) throw InvalidModel("flicker synthesis needs at least 4 decades");
        const double log_ratio = std::log(10.0) / flicker_corners_per_decade;
        const double variance = spec.flicker_fm * log_ratio;
        const auto count = static_cast<int>(std::ceil(flicker_decades * flicker_corners_per_decade)) + 1;
        const double f_high = 0.1 / dt;
        for (int i = 0; i < count; ++i) {
            const double fc = f_high * std::exp(-log_ratio * i);
            const double a = std::exp(-constants::two_pi * fc * dt);
            ar_coeff_.push_back(a);
            ar_drive_.push_back(std::sqrt(variance * (1.0 - a * a)));
            ar_state_.push_back(std::sqrt(variance) * gauss_());
        }
    }
    silent_ = white_sigma_ == 0.0 && walk_sigma_ == 0.0 && ar_coeff_.empty();
}

double FrequencyNoise::next() {
    if (silent_) return 0.0;
    double value = 0.0;
    if (white_sigma_ > 0.0) value += white_sigma_ * gauss_();
    if (walk_sigma_ > 0.0) {
        walk_ += walk_sigma_ * gauss_();
        value += walk_;
    }
    for (std::size_t i = 0; i < ar_state_.size(); ++i) {
        ar_state_[i] = ar_coeff_[i] * ar_state_[i] + ar_drive_[i] * gauss_();
        value += ar_state_[i];
    }
    return value;
}

FrequencyTrace generate_noise(const NoiseSpec& spec, std::size_t n_samples, double dt) {
    if (n_samples < 2) throw InvalidModel("generate_noise needs at least two samples");
    // Three independent streams so each process can be switched on alone
    // without changing the others.
    NoiseSpec white = spec;
    white.flicker_fm = white.random_walk_fm = 0.0;
    NoiseSpec flicker = spec;
    flicker.white_fm = flicker.random_walk_fm = 0.0;
    NoiseSpec walk = spec;
    walk.white_fm = walk.flicker_fm = 0.0;

    const double decades = std::max(4.0, std::log10(0.1 * static_cast<double>(n_samples)) + 1.0);
    FrequencyNoise gw(white, dt, 1);
    FrequencyNoise gf(flicker, dt, 2, decades);
    FrequencyNoise gr(walk, dt, 3);

    FrequencyTrace trace;
    trace.label = "frequency_noise";
    trace.sample_interval = dt;
    trace.samples.resize(n_samples);
    for (auto& s : trace.samples) s = gw.next() + gf.next() + gr.next();
    return trace;
}

}  // namespace translock
