#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "translock/analysis.hpp"
#include "translock/error.hpp"
#include "translock/noise.hpp"

using namespace translock;

namespace {

// Two-sample variance straight from the definition, no prefix sums.
double naive_allan(const std::vector<double>& x, double carrier, std::size_t m, bool overlapping) {
    std::vector<double> avg;
    const std::size_t step = overlapping ? 1 : m;
    for (std::size_t k = 0; k + m <= x.size(); k += step) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += x[k + j];
        avg.push_back(s / static_cast<double>(m) / carrier);
    }
    const std::size_t lag = overlapping ? m : 1;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k + lag < avg.size(); ++k) {
        const double d = avg[k + lag] - avg[k];
        acc += d * d;
        ++n;
    }
    return acc / (2.0 * static_cast<double>(n));
}

double variance(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

FrequencyTrace make_trace(std::vector<double> s, double dt) {
    FrequencyTrace t;
    t.sample_interval = dt;
    t.samples = std::move(s);
    return t;
}

AllanResult synthetic(double a, double p) {
    AllanResult r;
    for (double tau = 1e-3; tau <= 1e3; tau *= 2.0) r.points.push_back({tau, a * std::pow(tau, p), 100});
    return r;
}

}  // namespace

TEST_CASE("generate_noise with all levels zero is identically zero") {
    NoiseSpec spec;
    const FrequencyTrace t = generate_noise(spec, 1000, 1e-3);
    CHECK(t.size() == 1000);
    CHECK(std::all_of(t.samples.begin(), t.samples.end(), [](double x) { return x == 0.0; }));
    CHECK_THROWS_AS(generate_noise(spec, 1, 1e-3), InvalidModel);
}

TEST_CASE("white FM: slope -1 and level h0/(2 tau)") {
    const double h0 = 1e6, dt = 1e-4, carrier = 1.0;
    NoiseSpec spec;
    spec.white_fm = h0;
    spec.seed = 21;
    const FrequencyTrace t = generate_noise(spec, 200000, dt);
    const std::vector<double> taus{1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2};
    const AllanResult r = allan_variance(t, carrier, taus);
    REQUIRE(r.points.size() == taus.size());
    for (const auto& p : r.points) {
        if (p.n_pairs < 100) continue;
        CHECK(p.sigma2 == doctest::Approx(h0 / (2.0 * p.tau)).epsilon(0.15));
    }
    const NoiseClassification c = classify_noise(r, 1e-4, 1e-2);
    CHECK(c.slope == doctest::Approx(-1.0).epsilon(0.1));
    CHECK(c.label == "white FM");
}

TEST_CASE("random-walk FM: slope +1 and level (2 pi^2/3) h-2 tau") {
    const double h2 = 1e8, dt = 1e-4;
    NoiseSpec spec;
    spec.random_walk_fm = h2;
    spec.seed = 22;
    const FrequencyTrace t = generate_noise(spec, 400000, dt);
    const std::vector<double> taus{1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1};
    const AllanResult r = allan_variance(t, 1.0, taus);
    const NoiseClassification c = classify_noise(r, 1e-3, 1e-1);
    CHECK(c.slope == doctest::Approx(1.0).epsilon(0.15));
    CHECK(c.label == "random-walk FM");
    for (const auto& p : r.points)
        CHECK(p.sigma2 == doctest::Approx(2.0 * M_PI * M_PI / 3.0 * h2 * p.tau).epsilon(0.2));
}

TEST_CASE("generate_noise streams: combined spec is the sum of its parts") {
    NoiseSpec both;
    both.white_fm = 4e5;
    both.random_walk_fm = 3e7;
    both.flicker_fm = 1e4;
    both.seed = 5;
    NoiseSpec w = both, r = both, f = both;
    w.random_walk_fm = w.flicker_fm = 0.0;
    r.white_fm = r.flicker_fm = 0.0;
    f.white_fm = f.random_walk_fm = 0.0;
    const auto tb = generate_noise(both, 5000, 1e-4);
    const auto tw = generate_noise(w, 5000, 1e-4);
    const auto tr = generate_noise(r, 5000, 1e-4);
    const auto tf = generate_noise(f, 5000, 1e-4);
    for (std::size_t i = 0; i < tb.size(); ++i)
        CHECK(tb.samples[i] == doctest::Approx(tw.samples[i] + tr.samples[i] + tf.samples[i]).epsilon(1e-12));
}

TEST_CASE("property: variance of independently seeded sum equals sum of variances") {
    // Monte Carlo over 40 runs; the per-run excess var(a+b) - var(a) - var(b)
    // is twice the sample covariance and must average to zero.
    std::vector<double> excess;
    for (int run = 0; run < 40; ++run) {
        NoiseSpec a;
        a.white_fm = 2e6;
        a.seed = 100 + run;
        NoiseSpec b;
        b.white_fm = 5e5;
        b.random_walk_fm = 1e6;
        b.seed = 900 + run;
        const auto ta = generate_noise(a, 4000, 1e-3);
        const auto tb = generate_noise(b, 4000, 1e-3);
        std::vector<double> sum(ta.size());
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = ta.samples[i] + tb.samples[i];
        excess.push_back(variance(sum) - variance(ta.samples) - variance(tb.samples));
    }
    const double mean = std::accumulate(excess.begin(), excess.end(), 0.0) / static_cast<double>(excess.size());
    const double se = std::sqrt(variance(excess) / static_cast<double>(excess.size() - 1));
    CHECK(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("determinism of generate_noise") {
    NoiseSpec s;
    s.white_fm = 1.0;
    s.flicker_fm = 2.0;
    s.random_walk_fm = 3.0;
    s.seed = 77;
    CHECK(generate_noise(s, 3000, 1e-3).samples == generate_noise(s, 3000, 1e-3).samples);
    NoiseSpec s2 = s;
    s2.seed = 78;
    CHECK(generate_noise(s, 3000, 1e-3).samples != generate_noise(s2, 3000, 1e-3).samples);
}

TEST_CASE("Allan variance examples") {
    const std::vector<double> taus{1e-3, 2e-3, 4e-3, 8e-3};
    const auto flat = allan_variance(make_trace(std::vector<double>(500, 42.0), 1e-3), 1e3, taus);
    REQUIRE(flat.points.size() == 4);
    for (const auto& p : flat.points) CHECK(p.sigma2 == 0.0);

    const double y0 = 0.25, carrier = 2.0;
    std::vector<double> alt(1000);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = (i % 2 ? -1.0 : 1.0) * y0 * carrier;
    const std::vector<double> t0{1e-3};
    for (auto est : {AllanEstimator::overlapping, AllanEstimator::non_overlapping}) {
        const auto r = allan_variance(make_trace(alt, 1e-3), carrier, t0, est);
        CHECK(r.points.at(0).sigma2 == doctest::Approx(2.0 * y0 * y0).epsilon(1e-14));
    }
}

TEST_CASE("Allan variance matches the direct definition") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 3.0);
    std::vector<double> x(3000);
    double walk = 0.0;
    for (auto& v : x) v = (walk += n(rng)) + n(rng);
    const std::vector<double> taus{0.01, 0.03, 0.1, 0.5, 1.0};
    for (auto est : {AllanEstimator::overlapping, AllanEstimator::non_overlapping}) {
        const auto r = allan_variance(make_trace(x, 0.01), 7.0, taus, est);
        REQUIRE(r.points.size() == taus.size());
        for (const auto& p : r.points) {
            const auto m = static_cast<std::size_t>(std::llround(p.tau / 0.01));
            CHECK(p.sigma2 ==
                  doctest::Approx(naive_allan(x, 7.0, m, est == AllanEstimator::overlapping)).epsilon(1e-10));
        }
    }
}

TEST_CASE("Allan variance rounding, omission and metadata") {
    auto t = make_trace(std::vector<double>(100, 1.0), 0.1);
    t.averaged_per_sample = true;
    const std::vector<double> taus{0.1, 0.23, 5.0, 6.0};
    const auto r = allan_variance(t, 1.0, taus);
    CHECK(r.averaged_per_sample);
    CHECK_FALSE(r.warnings.empty());
    // 6 s would need 120 samples
    REQUIRE(r.points.size() == 3);
    CHECK(r.points[1].tau == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.points[2].tau == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r.points[2].n_pairs >= 1);
    for (std::size_t i = 1; i < r.points.size(); ++i) CHECK(r.points[i].tau > r.points[i - 1].tau);
}

TEST_CASE("property: Allan variance is offset invariant and scales as k^2") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(800);
        for (auto& v : x) v = n(rng);
        const double offset = u(rng), k = u(rng);
        std::vector<double> shifted = x, scaled = x;
        for (auto& v : shifted) v += offset;
        for (auto& v : scaled) v *= k;
        const std::vector<double> taus{1.0, 3.0, 10.0, 50.0};
        const auto a = allan_variance(make_trace(x, 1.0), 1.0, taus);
        const auto b = allan_variance(make_trace(shifted, 1.0), 1.0, taus);
        const auto c = allan_variance(make_trace(scaled, 1.0), 1.0, taus);
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            CHECK(b.points[i].sigma2 == doctest::Approx(a.points[i].sigma2).epsilon(1e-9));
            CHECK(c.points[i].sigma2 == doctest::Approx(k * k * a.points[i].sigma2).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: overlapping and non-overlapping agree on white FM") {
    NoiseSpec spec;
    spec.white_fm = 1e6;
    spec.seed = 31;
    const auto t = generate_noise(spec, 100000, 1e-4);
    const std::vector<double> taus{1e-3, 1e-2};
    const auto o = allan_variance(t, 1.0, taus, AllanEstimator::overlapping);
    const auto n = allan_variance(t, 1.0, taus, AllanEstimator::non_overlapping);
    for (std::size_t i = 0; i < taus.size(); ++i) {
        // the non-overlapping estimate of a chi-square variable has relative
        // standard error about 1/sqrt(pairs)
        const double se = n.points[i].sigma2 / std::sqrt(static_cast<double>(n.points[i].n_pairs));
        CHECK(std::abs(o.points[i].sigma2 - n.points[i].sigma2) <= 2.0 * se);
    }
}

TEST_CASE("classify_noise on exact power laws") {
    for (double p : {-1.0, 0.0, 1.0}) {
        const auto c = classify_noise(synthetic(3e-22, p), 1e-2, 1e2);
        CHECK(c.slope == doctest::Approx(p).epsilon(0.01));
        CHECK(std::abs(c.slope - p) <= 0.01);
        CHECK(c.intercept == doctest::Approx(std::log10(3e-22)).epsilon(1e-9));
    }
    CHECK(classify_noise(synthetic(1.0, -1.0), 1e-2, 1e2).label == "white FM");
    CHECK(classify_noise(synthetic(1.0, 0.0), 1e-2, 1e2).label == "flicker FM");
    CHECK(classify_noise(synthetic(1.0, 1.0), 1e-2, 1e2).label == "random-walk FM");
    CHECK_THROWS_AS(classify_noise(synthetic(1.0, 1.0), 1.0, 5.0), DomainError);
}

TEST_CASE("PSD: 250 kHz tone at -65.4 dB") {
    const double dt = 1.0 / 10e6, f = 250e3;
    const double amp = std::pow(10.0, -65.4 / 20.0);
    std::vector<double> x(1 << 16);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2 * M_PI * f * static_cast<double>(i) * dt);
    const PsdResult r = psd(x, dt, 5e6);
    const auto peaks = find_peaks(r, -100.0);
    REQUIRE_FALSE(peaks.empty());
    CHECK(std::abs(peaks.front().frequency - f) <= r.resolution);
    CHECK(peaks.front().level_db == doctest::Approx(-65.4).epsilon(1.0 / 65.4));
    CHECK(std::abs(peaks.front().level_db + 65.4) <= 1.0);
    CHECK(r.bins.back().frequency <= 5e6);
}

TEST_CASE("PSD: white noise is flat, DC sits in bin 0") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(1 << 18);
    for (auto& v : x) v = n(rng);
    PsdOptions opt;
    opt.segment_length = 1024;
    const PsdResult r = psd(x, 1e-6, 5e5, opt);
    // expected one-sided density 2 sigma^2 / fs
    const double expected = 2.0 * 1e-6;
    for (std::size_t k = r.bins.size() / 10; k < r.bins.size() * 9 / 10; ++k)
        CHECK(std::abs(10.0 * std::log10(r.bins[k].density / expected)) <= 3.0);

    std::vector<double> dc(4096, 0.7);
    PsdOptions rect;
    rect.window = Window::rectangular;
    const PsdResult d = psd(dc, 1e-3, 500.0, rect);
    CHECK(d.bins[0].density > 0.0);
    for (std::size_t k = 1; k < d.bins.size(); ++k) CHECK(d.bins[k].density <= 1e-20 * d.bins[0].density);
}

TEST_CASE("property: Parseval for the windowless periodogram") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n(0.0, 2.0);
    for (std::size_t len : {1000u, 4096u, 3333u}) {
        std::vector<double> x(len);
        for (auto& v : x) v = 5.0 + n(rng);
        PsdOptions opt;
        opt.window = Window::rectangular;
        opt.segment_length = len;
        opt.remove_mean = true;
        const double dt = 1e-4;
        const PsdResult r = psd(x, dt, 0.5 / dt, opt);
        double power = 0.0;
        for (const auto& b : r.bins) power += b.density * r.resolution;
        CHECK(power == doctest::Approx(variance(x)).epsilon(0.01));
    }
}

TEST_CASE("PSD errors") {
    std::vector<double> x(100, 1.0);
    CHECK_THROWS_AS(psd(x, 1e-3, 600.0), DomainError);
    CHECK_NOTHROW(psd(x, 1e-3, 500.0));
}

TEST_CASE("rms_and_drift") {
    std::vector<double> ramp(2000);
    const double a = 3.5, dt = 1e-3;
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = a * static_cast<double>(i) * dt;
    const RmsDrift r = rms_and_drift(make_trace(ramp, dt), 0.5, true);
    CHECK(r.rms == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.rms < 1e-9);
    CHECK(r.linear_drift == doctest::Approx(a).epsilon(1e-12));
    CHECK(r.windows == 4);

    std::mt19937_64 rng(4);
    const double sigma = 1.3e5;
    std::normal_distribution<double> n(0.0, sigma);
    std::vector<double> w(20000);
    for (auto& v : w) v = n(rng);
    const RmsDrift s = rms_and_drift(make_trace(w, 1e-5), 0.2);
    CHECK(s.rms == doctest::Approx(sigma).epsilon(0.05));

    CHECK_THROWS_AS(rms_and_drift(make_trace(w, 1e-5), 1.0), DomainError);
    CHECK(peak_to_peak(std::vector<double>{1.0, -2.0, 4.0}) == 6.0);
}
