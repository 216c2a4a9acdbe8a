// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <vector>

#include <Eigen/Eigenvalues>

#include "translock/analysis.hpp"
#include "translock/bloch.hpp"
#include "translock/chainsim.hpp"
#include "translock/discriminator.hpp"
#include "translock/fit.hpp"
#include "translock/io.hpp"
#include "translock/optics.hpp"

#include "bloch_oracle.hpp"

using namespace translock;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double mean_between(const FrequencyTrace& t, double from, double to) {
    const auto a = static_cast<std::size_t>(from / t.sample_interval);
    const auto b = std::min(t.samples.size(), static_cast<std::size_t>(to / t.sample_interval));
    return std::accumulate(t.samples.begin() + a, t.samples.begin() + b, 0.0) / static_cast<double>(b - a);
}

fs::path fixture(const std::string& name) { return fs::path(TRANSLOCK_SOURCE_DIR) / "tests" / "fixtures" / name; }

// ---- 1 ----
Outcome cavity_metrology() {
    const CavityModel cav;
    const double fsr = free_spectral_range(cav);
    const double lw = cavity_linewidth(cav);
    const bool ok = std::abs(fsr - 500e6) <= 0.005 * 500e6 && std::abs(lw - 1.9e6) <= 0.05 * 1.9e6 &&
                    std::abs(lw - fsr / 270.0) <= 1e-9 * lw;
    return {ok, fmt("FSR %.4f MHz, linewidth %.4f MHz (finesse %.1f)", fsr / 1e6, lw / 1e6, cav.finesse())};
}

// ---- 2 ----
Outcome pdh_shape() {
    const CavityModel cav;
    DemodConfig d;
    d.demod_phase = optimal_pdh_phase(cav, d.modulation_frequency);
    const double at_zero = std::abs(pdh_error_cavity(cav, 0.0, d));
    double peak = 0.0, worst = 0.0;
    for (double nu = 1e3; nu < 40e6; nu *= 1.1) peak = std::max(peak, std::abs(pdh_error_cavity(cav, nu, d)));
    for (double nu = 1e3; nu < 40e6; nu *= 1.1)
        worst = std::max(worst, std::abs(pdh_error_cavity(cav, nu, d) + pdh_error_cavity(cav, -nu, d)) / peak);
    // sideband crossings, bisected
    const double tol = 0.1 * cavity_linewidth(cav);
    double off = 0.0;
    for (double side : {-20e6, 20e6}) {
        double a = side - 1e6, b = side + 1e6;
        double fa = pdh_error_cavity(cav, a, d);
        if (fa * pdh_error_cavity(cav, b, d) > 0.0) return {false, "no sideband zero crossing near 20 MHz"};
        for (int i = 0; i < 60; ++i) {
            const double m = 0.5 * (a + b), fm = pdh_error_cavity(cav, m, d);
            if ((fm < 0.0) == (fa < 0.0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        off = std::max(off, std::abs(0.5 * (a + b) - side));
    }
    const bool ok = at_zero <= 1e-9 * peak && worst <= 1e-9 && off <= tol;
    return {ok, fmt("|e(0)|/peak %.1e, antisymmetry %.1e, sideband crossings within %.1f kHz of +-20 MHz", at_zero / peak,
                    worst, off / 1e3)};
}

// ---- 3 ----
Outcome noise_pipeline() {
    const double carrier = AnalysisSettings{}.carrier;
    const double h0 = 1e6;
    const FrequencyTrace white = trace_from_csv(read_csv(fixture("white_fm.csv")), "white_fm_Hz");
    std::vector<double> taus;
    for (double t = 1e-4; t <= 1.0001e-2; t *= 2.0) taus.push_back(t);
    taus.push_back(1e-2);
    const AllanResult w = allan_variance(white, carrier, taus, AllanEstimator::overlapping);
    double worst = 0.0;
    for (const auto& p : w.points) {
        const double expected = h0 / (2.0 * p.tau) / (carrier * carrier);
        worst = std::max(worst, std::abs(p.sigma2 / expected - 1.0));
    }
    const double sw = classify_noise(w, 1e-4, 1e-2).slope;
    const FrequencyTrace rw = trace_from_csv(read_csv(fixture("random_walk_fm.csv")), "random_walk_fm_Hz");
    const AllanResult r = allan_variance(rw, carrier, taus, AllanEstimator::overlapping);
    const double sr = classify_noise(r, 1e-4, 1e-2).slope;
    const bool ok = worst <= 0.15 && std::abs(sw + 1.0) <= 0.1 && std::abs(sr - 1.0) <= 0.15;
    return {ok, fmt("white: worst level error %.1f%%, slope %.3f; random walk: slope %.3f", 100.0 * worst, sw, sr)};
}

// ---- 4 ----
double short_term_rms = 0.0;

Outcome chain_stability() {
    ChainConfig c = default_chain_config();
    c.duration = 0.2;
    const TraceSet set = simulate_chain(c);
    short_term_rms = settled_rms(set.get(trace_label::out_of_loop));
    const bool ok = short_term_rms >= 100e3 && short_term_rms <= 160e3 && !set.any_lock_lost();
    return {ok, fmt("200 ms out-of-loop rms %.1f kHz%s", short_term_rms / 1e3, set.any_lock_lost() ? ", lock lost" : "")};
}

// ---- 5 ----
Outcome long_term() {
    const ChainConfig c = default_chain_config();
    const LongRunResult r = long_term_run(c, 7200.0, 1.0);
    const double drift = peak_to_peak(r.slave_offset.samples);
    std::vector<double> taus;
    for (double t = 1.0; t <= r.out_of_loop.duration() / 3.0; t *= 2.0) taus.push_back(t);
    taus.push_back(10.0);
    std::sort(taus.begin(), taus.end());
    const AllanResult av = allan_variance(r.out_of_loop, AnalysisSettings{}.carrier, taus, AllanEstimator::overlapping);
    double s10 = 0.0;
    for (const auto& p : av.points)
        if (p.tau == 10.0) s10 = p.sigma2;
    const double slope = classify_noise(av, 100.0, av.points.back().tau).slope;
    const double ratio = drift / short_term_rms;
    const bool ok = ratio >= 1.0 / 3.0 && ratio <= 3.0 && std::abs(slope - 1.0) <= 0.2 && s10 >= 1e-23 && s10 <= 1e-21;
    return {ok, fmt("slave drift %.1f kHz p-p = %.2f x short-term rms; slope beyond 100 s %.3f; sigma2(10 s) %.2e",
                    drift / 1e3, ratio, slope, s10)};
}

// ---- 6 ----
double edlen(double wavelength, double pressure, double temperature) {
    const double s2 = std::pow(1e-6 / wavelength, 2);
    const double standard = (8342.13 + 2406030.0 / (130.0 - s2) + 15997.0 / (38.9 - s2)) * 1e-8;
    return standard * (pressure / 101325.0) * (1.0 + 0.003661 * 15.0) / (1.0 + 0.003661 * temperature);
}

Outcome pressure_dispersion() {
    ChainConfig c = default_chain_config();
    c.reference_noise = NoiseSpec{};
    c.slave_noise = NoiseSpec{};
    c.environment.pressure_daily_amplitude = 0.0;
    c.environment.pressure_walk_level = 0.0;
    c.detection = DetectionNoise{};
    c.pressure_step = 100.0;  // 1 mbar
    c.pressure_step_time = 0.02;
    c.pressure_step_ramp = 0.1;
    c.duration = 0.3;
    const ChainConfig init = initialize_resonant(c);
    const AirState air = init.transfer_cavity.air;
    const double nr = init.reference_laser.carrier_frequency, ns = init.slave_laser.carrier_frequency;
    const double lr = constants::speed_of_light / nr, ls = constants::speed_of_light / ns;
    // d nu_s / nu_s = d(n_r - 1) - d(n_s - 1); refractivity is linear in pressure
    const double predicted =
        ns * (edlen(lr, air.pressure + 100.0, air.temperature) - edlen(lr, air.pressure, air.temperature) -
              edlen(ls, air.pressure + 100.0, air.temperature) + edlen(ls, air.pressure, air.temperature));
    const TraceSet set = simulate_chain(init);
    const auto& slave = set.get(trace_label::slave_offset);
    const double shift = mean_between(slave, 0.25, 0.3) - mean_between(slave, 0.01, 0.02);
    const bool ok = std::abs(shift - predicted) <= 0.05 * std::abs(predicted) && std::abs(predicted) >= 50e3 &&
                    std::abs(predicted) <= 300e3;
    return {ok, fmt("simulated %.2f kHz/mbar, closed form %.2f kHz/mbar (%.2f%%)", shift / 1e3, predicted / 1e3,
                    100.0 * (shift - predicted) / predicted)};
}

// ---- 7 ----
Outcome bloch_correctness() {
    using namespace bloch_oracle;
    double worst = 0.0;
    for (const Row& row : regression) {
        const IonConfig c = from_row(row);
        const DensityMatrix ss = steady_state(build_liouvillian(c));
        const DensityMatrix t = rk4(ion_hamiltonian(c), jump_operators(c), pure(0), 200.0 / c.decay_p_to_s, 1e-10);
        worst = std::max(worst, (ss - t).cwiseAbs().maxCoeff());
    }
    std::mt19937_64 rng(19);
    int bad = 0;
    for (int k = 0; k < 100; ++k) {
        const IonConfig c = random_config(rng);
        const DensityMatrix rho = steady_state(build_liouvillian(c));
        const Eigen::SelfAdjointEigenSolver<DensityMatrix> es(rho);
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10 || std::abs(rho.trace() - 1.0) > 1e-10 ||
            es.eigenvalues().minCoeff() < -1e-9)
            ++bad;
    }
    IonConfig dark = IonConfig{};
    dark.rabi_866 = 0.0;
    const double pumped = d_population(relax(build_liouvillian(dark), pure(0), 2e-3));
    const bool ok = worst <= 1e-5 && bad == 0 && pumped >= 1.0 - 1e-9;
    return {ok, fmt("regression max |diff| %.1e (10 configs); %d/100 random configs violate invariants; "
                    "D population without 866 light %.12f",
                    worst, bad, pumped)};
}

// ---- 8 ----
Outcome dark_resonances_check() {
    const IonConfig c{};
    const double step = 0.25e6 * constants::two_pi;
    std::vector<double> grid;
    for (int i = 0; i <= 200; ++i) grid.push_back(-constants::two_pi * 50e6 + i * step);
    const SpectrumScan s = excitation_spectrum(c, grid, SpectrumSettings{}.scale, 0.0);
    const auto dips = spectrum_dips(s);
    int matched = 0;
    std::ostringstream miss;
    const auto predicted = dark_resonances(c);
    for (const auto& r : predicted) {
        double best = 1e300;
        for (double d : dips) best = std::min(best, std::abs(d - r.detuning_866));
        if (best <= 0.5 * step)
            ++matched;
        else
            miss << " " << level_name(r.s_level) << "-" << level_name(r.d_level) << " at "
                 << std::round(r.detuning_866 / constants::two_pi / 1e4) / 1e2 << " MHz ("
                 << (dips.empty() ? -1.0 : std::round(best / constants::two_pi / 1e4) / 1e2) << " MHz off)";
    }
    const bool ok = matched == static_cast<int>(predicted.size());
    return {ok, fmt("%d/%zu predicted dips within half a 0.25 MHz step; %zu dips found", matched, predicted.size(),
                    dips.size()) +
                    (ok ? "" : ";" + miss.str())};
}

// ---- 9 ----
Outcome fit_round_trip() {
    const RunConfig config;
    const int seeds = 20;
    std::vector<std::future<FitResult>> jobs;
    std::vector<double> lw(seeds), chi(seeds);
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    auto one = [&](int seed) {
        const std::vector<double> grid =
            scan_grid(config.spectrum.scan_from, config.spectrum.scan_to, config.spectrum.scan_step);
        FitProblem p;
        p.data = excitation_spectrum(config.ion, grid, config.spectrum.scale, config.spectrum.background, true,
                                     static_cast<std::uint64_t>(seed));
        p.base = config.ion;
        p.scale = config.spectrum.scale;
        p.background = config.spectrum.background;
        p.free_parameters = config.fit.free_parameters;
        p.tie_linewidths = true;
        p.linewidth_ratio = 0.5;
        p.max_evaluations = config.fit.max_evaluations;
        p.restarts = config.fit.restarts;
        p.restart_spread = config.fit.restart_spread;
        ParameterSet initial;
        for (const auto& name : p.free_parameters) initial[name] = get_parameter(p.base, p.scale, p.background, name);
        return fit_spectrum(p, initial);
    };
    for (int start = 1; start <= seeds; start += static_cast<int>(workers)) {
        jobs.clear();
        const int end = std::min(seeds, start + static_cast<int>(workers) - 1);
        for (int s = start; s <= end; ++s) jobs.push_back(std::async(std::launch::async, one, s));
        for (int s = start; s <= end; ++s) {
            const FitResult r = jobs[static_cast<std::size_t>(s - start)].get();
            lw[static_cast<std::size_t>(s - 1)] = r.config.linewidth_397;
            chi[static_cast<std::size_t>(s - 1)] = r.reduced_chi_squared;
        }
    }
    const double mlw = std::accumulate(lw.begin(), lw.end(), 0.0) / seeds;
    const double mchi = std::accumulate(chi.begin(), chi.end(), 0.0) / seeds;
    const bool ok = std::abs(mlw - 268e3) <= 0.2 * 268e3 && std::abs(mchi - 1.0) <= 0.2;
    return {ok, fmt("mean linewidth_397 %.1f kHz (range %.1f-%.1f), mean reduced chi2 %.3f over %d seeds", mlw / 1e3,
                    *std::min_element(lw.begin(), lw.end()) / 1e3, *std::max_element(lw.begin(), lw.end()) / 1e3,
                    mchi, seeds)};
}

// ---- 10 ----
int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + TRANSLOCK_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome reproducibility() {
    const fs::path work = fs::temp_directory_path() / ("translock_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string spectrum_csv = (work / "spectrum_a" / "spectrum.csv").string();
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate-chain", "simulate-chain --duration 0.1 --seed 7 --svg"},
        {"spectrum", "spectrum --shot-noise --seed 4 --svg"},
        {"fit", "fit --data " + spectrum_csv},
        {"long-run", "long-run --hours 0.05 --seed 2"},
        {"allan", "allan --input " + fixture("white_fm.csv").string()},
        {"psd", "psd --input " + fixture("tone_250k.csv").string()},
        {"gauge", "gauge --input " + fixture("gauge_linear.csv").string()},
    };
    std::vector<std::string> problems;
    int files = 0;
    for (const auto& [name, args] : commands) {
        const fs::path a = work / (name + "_a"), b = work / (name + "_b");
        if (run_cli(args + " --out " + a.string()) != 0 || run_cli(args + " --out " + b.string()) != 0) {
            problems.push_back(name + " failed to run");
            continue;
        }
        for (const fs::path& dir : {a, b})
            for (const auto& p : validate_manifest(dir)) problems.push_back(name + ": " + p);
        for (const auto& e : fs::directory_iterator(a)) {
            const std::string f = e.path().filename().string();
            if (f == "manifest.json") continue;  // wall-clock time and --out differ by design
            ++files;
            if (!fs::exists(b / f) || read_file(e.path()) != read_file(b / f)) problems.push_back(name + ": " + f + " differs");
        }
    }
    fs::remove_all(work);
    std::string detail = fmt("%zu commands, %d output files compared", commands.size(), files);
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"cavity metrology", cavity_metrology},
        {"PDH shape", pdh_shape},
        {"noise and Allan pipeline", noise_pipeline},
        {"chain stability at desk scale", chain_stability},
        {"long-term behavior", long_term},
        {"pressure-dispersion oracle", pressure_dispersion},
        {"Bloch correctness", bloch_correctness},
        {"dark resonances", dark_resonances_check},
        {"fit round trip", fit_round_trip},
        {"reproducibility", reproducibility},
    };
    int failed = 0, index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failed;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", index, name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed;
}
