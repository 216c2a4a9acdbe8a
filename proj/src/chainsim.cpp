#include "translock/chainsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "translock/error.hpp"

namespace translock {

namespace {

constexpr double lock_loss_time = 10e-3;   // s beyond capture range before a loop counts as lost
constexpr double table_step = 500.0;       // Hz, discriminator table resolution
constexpr double table_half_span = 40e6;   // Hz
constexpr double gauge_half_span = 2e6;    // Hz, AOM scan used to gauge the Rb error
constexpr std::size_t gauge_points = 41;

// Noise stream ids; fixed so adding a source never reshuffles the others.
enum Stream : std::uint64_t {
    stream_reference_laser = 11,
    stream_slave_laser = 12,
    stream_cesium = 21,
    stream_reference_pdh = 22,
    stream_transfer_pdh = 23,
    stream_slave_pdh = 24,
    stream_rubidium = 25,
    stream_pressure = 31,
};

double index_of(const CavityModel& cavity, double frequency) {
    return 1.0 + refractivity(constants::speed_of_light / frequency, cavity.air);
}

// Root of f near x0 by bisection inside [x0 - span, x0 + span].
template <typename F>
double bracketed_root(F&& f, double x0, double span) {
    const int n = 400;
    const double h = span / n;
    double best = std::numeric_limits<double>::quiet_NaN();
    double a = x0 - span;
    double fa = f(a);
    for (int i = 1; i <= 2 * n; ++i) {
        const double b = x0 - span + h * i;
        const double fb = f(b);
        if ((fa <= 0.0 && fb > 0.0) || (fa >= 0.0 && fb < 0.0)) {
            double lo = a;
            double hi = b;
            double flo = fa;
            for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = f(mid);
                if ((fm <= 0.0) == (flo <= 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            const double root = 0.5 * (lo + hi);
            if (std::isnan(best) || std::abs(root - x0) < std::abs(best - x0)) best = root;
        }
        a = b;
        fa = fb;
    }
    if (std::isnan(best)) throw InitializationError("no error-signal zero crossing near the lock point");
    return best;
}

// Distance from the lock point to the nearest extremum of the error signal.
template <typename F>
double capture_range(F&& f, double zero, double step, double limit) {
    double range = limit;
    for (int dir : {-1, 1}) {
        double prev = std::abs(f(zero));
        for (double x = step; x < limit; x += step) {
            const double v = std::abs(f(zero + dir * x));
            if (v < prev) {
                range = std::min(range, x - step);
                break;
            }
            prev = v;
        }
    }
    return range;
}

// Relative resonance shift from small changes of length and index, exact in
// the ratio but formed from the small quantities to keep sub-Hz resolution.
inline double resonance_shift(double nu0, double length0, double index0, double d_length, double d_index) {
    const double x = (d_length * index0 + length0 * d_index + d_length * d_index) / (length0 * index0);
    return -nu0 * x / (1.0 + x);
}

struct Discriminator {
    DiscriminatorTable table;
    double zero = 0.0;      // detuning of the lock point, Hz
    double setpoint = 0.0;  // V at the lock point
    double slope = 0.0;     // V/Hz at the lock point
    double capture = 0.0;   // Hz
    double phase = 0.0;     // rad
};

Discriminator make_pdh(const CavityModel& cavity, const DemodConfig& base) {
    DemodConfig demod = base;
    demod.demod_phase = optimal_pdh_phase(cavity, demod.modulation_frequency);
    auto exact = [cavity, demod](double x) { return pdh_error_cavity(cavity, x, demod); };
    Discriminator d;
    d.phase = demod.demod_phase;
    d.zero = 0.0;
    d.setpoint = 0.0;
    d.slope = pdh_slope(cavity, demod);
    d.capture = capture_range(exact, 0.0, 1e3, 0.5 * demod.modulation_frequency);
    const auto half = static_cast<std::size_t>(table_half_span / table_step);
    d.table = DiscriminatorTable(exact, -table_step * static_cast<double>(half),
                                 table_step * static_cast<double>(half), 2 * half + 1);
    return d;
}

Discriminator make_fm(const LineCatalog& catalog, const DemodConfig& base) {
    DemodConfig demod = base;
    demod.demod_phase = optimal_fm_phase(catalog, demod.modulation_frequency);
    auto exact = [catalog, demod](double x) { return fm_spectroscopy_error(catalog, x, demod); };
    Discriminator d;
    d.phase = demod.demod_phase;
    d.zero = bracketed_root(exact, 0.0, 2e6);
    d.setpoint = exact(d.zero);
    const double h = 10.0;
    d.slope = (exact(d.zero + h) - exact(d.zero - h)) / (2.0 * h);
    d.capture = capture_range(exact, d.zero, 1e3, 0.5 * demod.modulation_frequency);
    // Lock point on a table node so the table reproduces the setpoint exactly.
    const auto half = static_cast<std::size_t>(table_half_span / table_step);
    d.table = DiscriminatorTable(exact, d.zero - table_step * static_cast<double>(half),
                                 d.zero + table_step * static_cast<double>(half), 2 * half + 1);
    return d;
}

double cs_lock_point(const Discriminator& cs, const LineCatalog& catalog) { return catalog.catalog_origin + cs.zero; }

struct Sample {
    double t;
    double out_of_loop;
    double slave_offset;
    double reference_offset;
    double inloop_reference;
    double inloop_slave;
    double inloop_cavity1;
    double inloop_cavity2;
    double piezo1;
    double piezo2;
    double heater1;
    double heater2;
    double pressure;
};

class LockWatch {
public:
    LockWatch(std::string name, double capture, double dt)
        : status_{std::move(name), false, -1.0}, capture_(capture),
          limit_(static_cast<std::int64_t>(std::ceil(lock_loss_time / dt))) {}

    void observe(double detuning, double t) {
        if (std::abs(detuning) > capture_) {
            if (++count_ > limit_ && !status_.lost) {
                status_.lost = true;
                status_.first_loss_time = t;
            }
        } else {
            count_ = 0;
        }
    }
    const LockStatus& status() const { return status_; }

private:
    LockStatus status_;
    double capture_;
    std::int64_t limit_;
    std::int64_t count_ = 0;
};

// One transfer-lock chain. Frequencies are offsets from the initialized
// operating point: lasers from their carriers, cavities from the resonance
// that coincided with the laser at start.
class ChainEngine {
public:
    ChainEngine(const ChainConfig& config, double heater_interval, std::int64_t slow_steps);

    template <typename Sink>
    void run(std::int64_t steps, Sink&& sink);

    std::vector<LockStatus> locks() const {
        return {watch_ref_.status(), watch_slave_.status(), watch_c1_.status(), watch_c2_.status()};
    }
    double rb_gauge() const { return rb_gauge_; }
    std::vector<std::pair<std::string, double>> phases() const {
        return {{"cesium", cs_.phase},
                {"reference_pdh", pdh_ref_.phase},
                {"transfer_pdh", pdh_c2_.phase},
                {"slave_pdh", pdh_slave_.phase},
                {"rubidium", rb_.phase}};
    }

private:
    ChainConfig cfg_;
    double dt_;
    std::int64_t slow_steps_;
    double slow_dt_;

    Discriminator cs_, rb_, pdh_ref_, pdh_c2_, pdh_slave_;
    double rb_gauge_ = 0.0;
    double rb_gauge_setpoint_ = 0.0;

    double nu_ref_, nu_slave_;
    double length1_, length2_;
    double index_ref1_, index_ref2_, index_slave2_;
    double k_ref_, k_slave_;  // refractivity per Pa
    double pressure0_;

    CavityLockerState locker1_, locker2_;
    LaserLockState lock_ref_, lock_slave_;
    PiezoPlant piezo1_, piezo2_;
    ThermalPlant thermal1_, thermal2_;
    double temp1_0_, temp2_0_;

    FrequencyNoise noise_ref_, noise_slave_;
    GaussianStream g_cs_, g_ref_, g_c2_, g_slave_, g_rb_, g_pressure_;
    double sv_cs_, sv_ref_, sv_c2_, sv_slave_, sv_rb_;  // detection noise in V

    double monitor_alpha_;
    double mon_ref_ = 0.0, mon_slave_ = 0.0, mon_c1_ = 0.0, mon_c2_ = 0.0;
    double pressure_walk_ = 0.0;
    double pressure_ = 0.0;
    // Slow processes are advanced once per slow interval and interpolated
    // linearly between their knots so the fast loops never see a jump.
    double p_knot_ = 0.0, p_next_ = 0.0;
    double t1_knot_ = 0.0, t1_next_ = 0.0;
    double t2_knot_ = 0.0, t2_next_ = 0.0;

    LockWatch watch_ref_, watch_slave_, watch_c1_, watch_c2_;
    std::int64_t step_ = 0;
};

ChainEngine::ChainEngine(const ChainConfig& config, double heater_interval, std::int64_t slow_steps)
    : cfg_(config.initialized ? config : initialize_resonant(config)), dt_(cfg_.sim_step), slow_steps_(slow_steps),
      slow_dt_(cfg_.sim_step * static_cast<double>(slow_steps)), watch_ref_("reference_laser", 0, 1),
      watch_slave_("slave_laser", 0, 1), watch_c1_("cavity1", 0, 1), watch_c2_("cavity2", 0, 1) {
    validate(cfg_);
    const auto cs_catalog = cs_d2_f3_catalog();
    const auto rb_catalog = rb_d1_catalog();
    nu_ref_ = cfg_.reference_laser.carrier_frequency;
    nu_slave_ = cfg_.slave_laser.carrier_frequency;

    CavityModel c1 = cfg_.cavity1;
    CavityModel c2 = cfg_.transfer_cavity;
    index_ref1_ = index_of(c1, nu_ref_);
    index_ref2_ = index_of(c2, nu_ref_);
    index_slave2_ = index_of(c2, nu_slave_);

    cs_ = make_fm(cs_catalog, cfg_.demod);
    rb_ = make_fm(rb_catalog, cfg_.demod);
    // PDH tables use the cavity FSR in air at the probing wavelength.
    CavityModel c1_ref = c1;
    c1_ref.geometric_length = effective_length(c1, 0.0, cfg_.cavity1_temperature) * index_ref1_;
    CavityModel c2_ref = c2;
    c2_ref.geometric_length = effective_length(c2, 0.0, cfg_.cavity2_temperature) * index_ref2_;
    CavityModel c2_slave = c2;
    c2_slave.geometric_length = effective_length(c2, 0.0, cfg_.cavity2_temperature) * index_slave2_;
    pdh_ref_ = make_pdh(c1_ref, cfg_.demod);
    pdh_c2_ = make_pdh(c2_ref, cfg_.demod);
    pdh_slave_ = make_pdh(c2_slave, cfg_.demod);

    // Rb gauge: linear fit over an AOM scan of +/-2 MHz around the lock point.
    std::vector<double> f(gauge_points);
    std::vector<double> s(gauge_points);
    DemodConfig rb_demod = cfg_.demod;
    rb_demod.demod_phase = rb_.phase;
    for (std::size_t i = 0; i < gauge_points; ++i) {
        f[i] = -gauge_half_span + 2.0 * gauge_half_span * static_cast<double>(i) / (gauge_points - 1);
        s[i] = fm_spectroscopy_error(rb_catalog, rb_.zero + f[i], rb_demod);
    }
    rb_gauge_ = gauge_slope(f, s).slope;
    rb_gauge_setpoint_ = rb_.setpoint;

    length1_ = effective_length(c1, 0.0, cfg_.cavity1_temperature);
    length2_ = effective_length(c2, 0.0, cfg_.cavity2_temperature);
    pressure0_ = c1.air.pressure;
    AirState plus = c1.air;
    plus.pressure += 1.0;
    k_ref_ = refractivity(constants::speed_of_light / nu_ref_, plus)
             - refractivity(constants::speed_of_light / nu_ref_, c1.air);
    k_slave_ = refractivity(constants::speed_of_light / nu_slave_, plus)
               - refractivity(constants::speed_of_light / nu_slave_, c1.air);

    // Lockers: loop gain from piezo volts to error volts.
    const double hz_per_volt1 = -nu_ref_ * c1.piezo_gain / length1_;
    const double hz_per_volt2 = -nu_ref_ * c2.piezo_gain / length2_;
    LockerDesign d1 = cfg_.locker;
    d1.sample_interval = dt_;
    d1.heater_interval = heater_interval;
    d1.error_per_piezo_volt = cs_.slope * hz_per_volt1;
    d1.piezo_volts_per_kelvin = c1.thermal_expansion / c1.piezo_gain;
    d1.thermal_gain = cfg_.thermal1.gain;
    d1.thermal_time_constant = cfg_.thermal1.time_constant;
    LockerDesign d2 = d1;
    // cavity 2 error is pdh(reference - cavity), so its sign flips
    d2.error_per_piezo_volt = -pdh_c2_.slope * hz_per_volt2;
    d2.piezo_volts_per_kelvin = c2.thermal_expansion / c2.piezo_gain;
    d2.thermal_gain = cfg_.thermal2.gain;
    d2.thermal_time_constant = cfg_.thermal2.time_constant;
    locker1_ = design_cavity_locker(d1);
    locker2_ = design_cavity_locker(d2);
    locker1_.piezo_limit = c1.piezo_voltage_limit;
    locker2_.piezo_limit = c2.piezo_voltage_limit;
    if (!cfg_.heater_enabled) locker1_.heater_gain = locker2_.heater_gain = 0.0;
    locker1_.pdh_setpoint = cs_.setpoint;
    locker2_.pdh_setpoint = pdh_c2_.setpoint;

    thermal1_ = cfg_.thermal1;
    thermal2_ = cfg_.thermal2;
    thermal1_.temperature = temp1_0_ = cfg_.cavity1_temperature;
    thermal2_.temperature = temp2_0_ = cfg_.cavity2_temperature;
    locker1_.heater_output = (temp1_0_ - thermal1_.ambient) / thermal1_.gain;
    locker2_.heater_output = (temp2_0_ - thermal2_.ambient) / thermal2_.gain;
    if (locker1_.heater_output < 0.0 || locker1_.heater_output > locker1_.heater_max
        || locker2_.heater_output < 0.0 || locker2_.heater_output > locker2_.heater_max)
        throw InitializationError("cavity operating temperature outside the heater range");

    piezo1_ = PiezoPlant(c1.piezo_resonance, constants::piezo_damping, c1.piezo_gain);
    piezo2_ = PiezoPlant(c2.piezo_resonance, constants::piezo_damping, c2.piezo_gain);
    lock_ref_ = make_laser_lock(cfg_.laser_lock_bandwidth, dt_);
    lock_slave_ = make_laser_lock(cfg_.laser_lock_bandwidth, dt_);

    // Master seed for every stream of the run.
    auto reseed = [&](NoiseSpec spec) {
        spec.seed = cfg_.seed;
        return spec;
    };
    noise_ref_ = FrequencyNoise(reseed(cfg_.reference_noise), dt_, stream_reference_laser);
    noise_slave_ = FrequencyNoise(reseed(cfg_.slave_noise), dt_, stream_slave_laser);
    g_cs_ = GaussianStream(cfg_.seed, stream_cesium);
    g_ref_ = GaussianStream(cfg_.seed, stream_reference_pdh);
    g_c2_ = GaussianStream(cfg_.seed, stream_transfer_pdh);
    g_slave_ = GaussianStream(cfg_.seed, stream_slave_pdh);
    g_rb_ = GaussianStream(cfg_.seed, stream_rubidium);
    g_pressure_ = GaussianStream(cfg_.seed, stream_pressure);
    sv_cs_ = cfg_.detection.cesium * std::abs(cs_.slope);
    sv_ref_ = cfg_.detection.reference_pdh * std::abs(pdh_ref_.slope);
    sv_c2_ = cfg_.detection.transfer_pdh * std::abs(pdh_c2_.slope);
    sv_slave_ = cfg_.detection.slave_pdh * std::abs(pdh_slave_.slope);
    sv_rb_ = cfg_.detection.rubidium * std::abs(rb_.slope);

    monitor_alpha_ = -std::expm1(-constants::two_pi * cfg_.demod.lowpass_bandwidth * dt_);
    watch_ref_ = LockWatch("reference_laser", pdh_ref_.capture, dt_);
    watch_slave_ = LockWatch("slave_laser", pdh_slave_.capture, dt_);
    watch_c1_ = LockWatch("cavity1", cs_.capture, dt_);
    watch_c2_ = LockWatch("cavity2", pdh_c2_.capture, dt_);
    pressure_ = pressure0_;
}

template <typename Sink>
void ChainEngine::run(std::int64_t steps, Sink&& sink) {
    const auto& env = cfg_.environment;
    const double walk_sigma = std::sqrt(env.pressure_walk_level * slow_dt_);
    const double daily = constants::two_pi / 86400.0;
    const double c1_expansion = cfg_.cavity1.thermal_expansion;
    const double c2_expansion = cfg_.transfer_cavity.thermal_expansion;
    const double inv_ref = 1.0 / pdh_ref_.slope;
    const double inv_slave = 1.0 / pdh_slave_.slope;
    const double inv_c2 = 1.0 / pdh_c2_.slope;
    const double inv_cs = 1.0 / cs_.slope;
    const double inv_rb = 1.0 / rb_gauge_;

    auto ambient_pressure = [&](double t) {
        return env.pressure_daily_amplitude
                   * (std::sin(daily * t + env.pressure_daily_phase) - std::sin(env.pressure_daily_phase))
               + pressure_walk_;
    };
    const double inv_slow = 1.0 / static_cast<double>(slow_steps_);

    for (std::int64_t i = 0; i < steps; ++i, ++step_) {
        const double t = static_cast<double>(step_) * dt_;
        const std::int64_t phase = step_ % slow_steps_;
        if (phase == 0) {
            if (step_ == 0) {
                p_next_ = ambient_pressure(0.0);
                t1_next_ = thermal1_.temperature;
                t2_next_ = thermal2_.temperature;
            }
            p_knot_ = p_next_;
            t1_knot_ = t1_next_;
            t2_knot_ = t2_next_;
            // heater power is held over the coming interval
            t1_next_ = thermal_step(thermal1_, locker1_.heater_output, slow_dt_);
            t2_next_ = thermal_step(thermal2_, locker2_.heater_output, slow_dt_);
            if (walk_sigma > 0.0) pressure_walk_ += walk_sigma * g_pressure_();
            p_next_ = ambient_pressure(t + slow_dt_);
        }
        const double frac = static_cast<double>(phase) * inv_slow;
        double dp = p_knot_ + frac * (p_next_ - p_knot_);
        if (cfg_.pressure_step != 0.0 && t > cfg_.pressure_step_time) {
            const double ramp = cfg_.pressure_step_ramp > 0.0
                                    ? std::min(1.0, (t - cfg_.pressure_step_time) / cfg_.pressure_step_ramp)
                                    : 1.0;
            dp += ramp * cfg_.pressure_step;
        }
        pressure_ = pressure0_ + dp;
        const double temp1 = t1_knot_ + frac * (t1_next_ - t1_knot_);
        const double temp2 = t2_knot_ + frac * (t2_next_ - t2_knot_);

        // cavity resonances
        const double dl1 = c1_expansion * (temp1 - temp1_0_) + piezo1_.position();
        const double dl2 = c2_expansion * (temp2 - temp2_0_) + piezo2_.position();
        const double cav1 = resonance_shift(nu_ref_, length1_, index_ref1_, dl1, k_ref_ * dp);
        const double cav2_ref = resonance_shift(nu_ref_, length2_, index_ref2_, dl2, k_ref_ * dp);
        const double cav2_slave = resonance_shift(nu_slave_, length2_, index_slave2_, dl2, k_slave_ * dp);

        // lasers
        const double ref = noise_ref_.next() + lock_ref_.integrator;
        const double slave = noise_slave_.next() + lock_slave_.integrator;

        // discriminators
        double e_cs = cs_.table(cs_.zero + ref);
        double e_ref = pdh_ref_.table(ref - cav1);
        double e_c2 = pdh_c2_.table(ref - cav2_ref);
        double e_slave = pdh_slave_.table(slave - cav2_slave);
        double e_rb = rb_.table(rb_.zero + slave);
        if (sv_cs_ > 0.0) e_cs += sv_cs_ * g_cs_();
        if (sv_ref_ > 0.0) e_ref += sv_ref_ * g_ref_();
        if (sv_c2_ > 0.0) e_c2 += sv_c2_ * g_c2_();
        if (sv_slave_ > 0.0) e_slave += sv_slave_ * g_slave_();
        if (sv_rb_ > 0.0) e_rb += sv_rb_ * g_rb_();

        mon_ref_ += monitor_alpha_ * (e_ref * inv_ref - mon_ref_);
        mon_slave_ += monitor_alpha_ * (e_slave * inv_slave - mon_slave_);
        mon_c1_ += monitor_alpha_ * ((e_cs - cs_.setpoint) * inv_cs - mon_c1_);
        mon_c2_ += monitor_alpha_ * (e_c2 * inv_c2 - mon_c2_);

        watch_ref_.observe(ref - cav1, t);
        watch_slave_.observe(slave - cav2_slave, t);
        watch_c1_.observe(ref, t);
        watch_c2_.observe(ref - cav2_ref, t);

        sink(Sample{t, (e_rb - rb_gauge_setpoint_) * inv_rb, slave, ref, mon_ref_, mon_slave_, mon_c1_, mon_c2_,
                    locker1_.piezo_output, locker2_.piezo_output, locker1_.heater_output, locker2_.heater_output,
                    pressure_});

        // controllers and actuators
        laser_lock_step(lock_ref_, e_ref, pdh_ref_.slope, dt_);
        laser_lock_step(lock_slave_, e_slave, pdh_slave_.slope, dt_);
        const auto cmd1 = locker_step(locker1_, e_cs, dt_);
        const auto cmd2 = locker_step(locker2_, e_c2, dt_);
        piezo1_.step(cmd1.piezo, dt_);
        piezo2_.step(cmd2.piezo, dt_);
    }
}

FrequencyTrace make_trace(const std::string& label, const std::string& unit, double dt, bool averaged) {
    FrequencyTrace t;
    t.label = label;
    t.unit = unit;
    t.sample_interval = dt;
    t.averaged_per_sample = averaged;
    return t;
}

void check_finite(const FrequencyTrace& trace) {
    for (double v : trace.samples)
        if (!std::isfinite(v)) throw Error("non-finite sample in trace '" + trace.label + "'");
}

}  // namespace

void validate(const ChainConfig& config) {
    validate(config.reference_laser);
    validate(config.slave_laser);
    validate(config.cavity1);
    validate(config.transfer_cavity);
    validate(config.thermal1);
    validate(config.thermal2);
    validate(config.reference_noise);
    validate(config.slave_noise);
    validate(config.environment);
    validate(config.demod);
    if (!(config.sim_step > 0.0)) throw InvalidModel("sim_step must be positive");
    if (!(config.duration >= config.sim_step)) throw InvalidModel("duration must be at least one sim_step");
    if (!(config.laser_lock_bandwidth > 0.0)) throw InvalidModel("laser lock bandwidth must be positive");
    if (!(config.laser_lock_bandwidth < 0.5 / config.sim_step))
        throw InvalidModel("laser lock bandwidth must lie below the Nyquist frequency of sim_step");
    const auto& d = config.detection;
    if (!(d.cesium >= 0.0 && d.reference_pdh >= 0.0 && d.transfer_pdh >= 0.0 && d.slave_pdh >= 0.0
          && d.rubidium >= 0.0))
        throw InvalidModel("detection noise levels must be non-negative");
    if (!(config.temperature_max >= config.temperature_min))
        throw InvalidModel("temperature bounds are inverted");
    if (!(config.locker.heater_interval >= config.sim_step))
        throw InvalidModel("heater interval must be at least one sim_step");
}

ChainConfig default_chain_config() {
    ChainConfig c;
    c.reference_laser.carrier_frequency = cs_d2_f3_catalog().catalog_origin;
    // Slave nominally 77 MHz above the Rb reference crossover (AOM at -77 MHz):
    // the default pair then has a cavity-2 coincidence near 25.8 degC, inside
    // the heater window.
    c.slave_laser.carrier_frequency = rb_d1_catalog().catalog_origin + 77e6;
    c.aom_offset = -77e6;

    const double dt = c.sim_step;
    auto white = [dt](double sigma) { return 2.0 * dt * sigma * sigma; };
    c.reference_noise.white_fm = white(20e3);
    c.reference_noise.random_walk_fm = 5e10;
    c.slave_noise = c.reference_noise;
    c.environment.pressure_daily_amplitude = 100.0;
    c.environment.pressure_walk_level = 1.2;

    c.detection.cesium = 30e3;
    c.detection.reference_pdh = 130e3;
    c.detection.transfer_pdh = 30e3;
    c.detection.slave_pdh = 130e3;
    c.detection.rubidium = 10e3;
    return c;
}

ResonanceSolution solve_resonance(const ChainConfig& config) {
    validate(config.cavity1);
    validate(config.transfer_cavity);
    const double nu_r = config.reference_laser.carrier_frequency;
    const double nu_s = config.slave_laser.carrier_frequency;
    const double c = constants::speed_of_light;

    auto mode_range = [&](const CavityModel& cav, double n) {
        const double lmin = effective_length(cav, 0.0, config.temperature_min);
        const double lmax = effective_length(cav, 0.0, config.temperature_max);
        const auto qa = static_cast<long>(std::ceil(4.0 * n * std::min(lmin, lmax) * nu_r / c));
        const auto qb = static_cast<long>(std::floor(4.0 * n * std::max(lmin, lmax) * nu_r / c));
        return std::pair<long, long>{qa, qb};
    };
    auto temperature_for = [&](const CavityModel& cav, double n, long q) {
        const double length = static_cast<double>(q) * c / (4.0 * n * nu_r);
        return cav.reference_temperature + (length - cav.geometric_length) / cav.thermal_expansion;
    };

    ResonanceSolution sol;
    // Cavity 1: reference only; pick the mode nearest the middle of the window.
    {
        const auto& cav = config.cavity1;
        const double n = index_of(cav, nu_r);
        const auto [qa, qb] = mode_range(cav, n);
        if (qa > qb) {
            std::ostringstream msg;
            msg << "cavity 1: no 852 nm resonance within [" << config.temperature_min << ", "
                << config.temperature_max << "] degC";
            throw InitializationError(msg.str());
        }
        const double middle = 0.5 * (config.temperature_min + config.temperature_max);
        long best = qa;
        for (long q = qa; q <= qb; ++q)
            if (std::abs(temperature_for(cav, n, q) - middle) < std::abs(temperature_for(cav, n, best) - middle))
                best = q;
        sol.cavity1_mode = best;
        sol.cavity1_temperature = temperature_for(cav, n, best);
    }
    // Cavity 2: reference exactly resonant, slave on the nearest mode.
    {
        const auto& cav = config.transfer_cavity;
        const double nr = index_of(cav, nu_r);
        const double ns = index_of(cav, nu_s);
        const auto [qa, qb] = mode_range(cav, nr);
        const double tolerance = 0.1 * cavity_linewidth(cav, ns);
        double best_detuning = std::numeric_limits<double>::infinity();
        for (long q = qa; q <= qb; ++q) {
            const double temperature = temperature_for(cav, nr, q);
            const double length = effective_length(cav, 0.0, temperature);
            const double fsr = c / (4.0 * ns * length);
            const long qs = std::lround(nu_s / fsr);
            const double detuning = nu_s - static_cast<double>(qs) * fsr;
            if (std::abs(detuning) < std::abs(best_detuning)) {
                best_detuning = detuning;
                sol.cavity2_reference_mode = q;
                sol.cavity2_slave_mode = qs;
                sol.cavity2_temperature = temperature;
                const double fr = c / (4.0 * nr * length);
                sol.reference_detuning = nu_r - static_cast<double>(q) * fr;
                sol.slave_detuning = detuning;
            }
        }
        if (!(std::abs(best_detuning) <= tolerance)) {
            std::ostringstream msg;
            msg << "cavity 2: no temperature in [" << config.temperature_min << ", " << config.temperature_max
                << "] degC brings both lasers within " << tolerance << " Hz of resonance";
            if (std::isfinite(best_detuning))
                msg << "; nearest approach " << best_detuning << " Hz at " << sol.cavity2_temperature << " degC";
            throw InitializationError(msg.str());
        }
    }
    return sol;
}

ChainConfig initialize_resonant(ChainConfig config) {
    DemodConfig demod = config.demod;
    const auto cs_catalog = cs_d2_f3_catalog();
    const auto cs = make_fm(cs_catalog, demod);
    config.reference_laser.carrier_frequency = cs_lock_point(cs, cs_catalog);

    const auto sol = solve_resonance(config);
    config.cavity1_temperature = sol.cavity1_temperature;
    config.cavity2_temperature = sol.cavity2_temperature;
    config.cavity1_mode = sol.cavity1_mode;
    config.cavity2_reference_mode = sol.cavity2_reference_mode;
    config.cavity2_slave_mode = sol.cavity2_slave_mode;

    // The slave locks onto its cavity mode; the AOM bridges to the Rb lock point.
    config.slave_laser.carrier_frequency -= sol.slave_detuning;
    const auto rb_catalog = rb_d1_catalog();
    const auto rb = make_fm(rb_catalog, demod);
    config.aom_offset = rb_catalog.catalog_origin + rb.zero - config.slave_laser.carrier_frequency;
    config.initialized = true;
    return config;
}

const FrequencyTrace& TraceSet::get(const std::string& label) const {
    for (const auto& t : traces)
        if (t.label == label) return t;
    throw Error("no trace labelled '" + label + "'");
}

bool TraceSet::any_lock_lost() const {
    return std::any_of(locks.begin(), locks.end(), [](const LockStatus& s) { return s.lost; });
}

TraceSet simulate_chain(const ChainConfig& config) {
    validate(config);
    const auto heater_steps =
        std::max<std::int64_t>(1, std::llround(config.locker.heater_interval / config.sim_step));
    ChainEngine engine(config, config.locker.heater_interval, heater_steps);
    const auto steps = static_cast<std::int64_t>(std::llround(config.duration / config.sim_step));
    const double dt = config.sim_step;

    namespace L = trace_label;
    std::vector<FrequencyTrace> tr{
        make_trace(L::out_of_loop, "Hz", dt, false),    make_trace(L::slave_offset, "Hz", dt, false),
        make_trace(L::reference_offset, "Hz", dt, false), make_trace(L::inloop_reference, "Hz", dt, false),
        make_trace(L::inloop_slave, "Hz", dt, false),   make_trace(L::inloop_cavity1, "Hz", dt, false),
        make_trace(L::inloop_cavity2, "Hz", dt, false), make_trace(L::piezo1, "V", dt, false),
        make_trace(L::piezo2, "V", dt, false),          make_trace(L::heater1, "W", dt, false),
        make_trace(L::heater2, "W", dt, false),         make_trace(L::pressure, "Pa", dt, false),
    };
    for (auto& t : tr) t.samples.reserve(static_cast<std::size_t>(steps));
    engine.run(steps, [&](const Sample& s) {
        const double v[] = {s.out_of_loop,   s.slave_offset,   s.reference_offset, s.inloop_reference,
                            s.inloop_slave,  s.inloop_cavity1, s.inloop_cavity2,   s.piezo1,
                            s.piezo2,        s.heater1,        s.heater2,          s.pressure};
        for (std::size_t k = 0; k < tr.size(); ++k) tr[k].samples.push_back(v[k]);
    });
    for (const auto& t : tr) check_finite(t);

    TraceSet set;
    set.traces = std::move(tr);
    set.locks = engine.locks();
    set.rb_gauge_slope = engine.rb_gauge();
    set.demod_phases = engine.phases();
    return set;
}

LongRunResult long_term_run(const ChainConfig& config, double duration, double decimation) {
    validate(config);
    if (!(decimation >= config.sim_step)) throw InvalidModel("decimation must be at least sim_step");
    if (!(duration >= decimation)) throw InvalidModel("duration must cover at least one bin");
    const auto per_bin = std::max<std::int64_t>(1, std::llround(decimation / config.sim_step));
    const auto bins = static_cast<std::size_t>(std::llround(duration / decimation));
    ChainEngine engine(config, static_cast<double>(per_bin) * config.sim_step, per_bin);

    LongRunResult out;
    const double bin_dt = static_cast<double>(per_bin) * config.sim_step;
    out.out_of_loop = make_trace(trace_label::out_of_loop, "Hz", bin_dt, true);
    out.slave_offset = make_trace(trace_label::slave_offset, "Hz", bin_dt, true);
    out.pressure = make_trace(trace_label::pressure, "Pa", bin_dt, true);
    out.out_of_loop.samples.reserve(bins);
    out.slave_offset.samples.reserve(bins);
    out.pressure.samples.reserve(bins);

    for (std::size_t b = 0; b < bins; ++b) {
        double sum_out = 0.0;
        double sum_slave = 0.0;
        double sum_p = 0.0;
        engine.run(per_bin, [&](const Sample& s) {
            sum_out += s.out_of_loop;
            sum_slave += s.slave_offset;
            sum_p += s.pressure;
        });
        const auto n = static_cast<double>(per_bin);
        out.out_of_loop.samples.push_back(sum_out / n);
        out.slave_offset.samples.push_back(sum_slave / n);
        out.pressure.samples.push_back(sum_p / n);
    }
    check_finite(out.out_of_loop);
    out.locks = engine.locks();
    return out;
}

double windowed_rms(const FrequencyTrace& trace, double window, double skip) {
    validate(trace);
    const auto start = static_cast<std::size_t>(std::llround(skip / trace.sample_interval));
    const auto n = static_cast<std::size_t>(std::llround(window / trace.sample_interval));
    if (n < 2 || start + n > trace.samples.size()) throw DomainError("windowed_rms: window exceeds the trace");
    double acc = 0.0;
    std::size_t windows = 0;
    for (std::size_t i = start; i + n <= trace.samples.size(); i += n) {
        double mean = 0.0;
        for (std::size_t k = i; k < i + n; ++k) mean += trace.samples[k];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t k = i; k < i + n; ++k) ss += (trace.samples[k] - mean) * (trace.samples[k] - mean);
        acc += ss / static_cast<double>(n);
        ++windows;
    }
    return std::sqrt(acc / static_cast<double>(windows));
}

double settled_rms(const FrequencyTrace& trace, double settle) {
    const double span = trace.duration() - settle;
    if (!(span > trace.sample_interval)) throw DomainError("trace too short for the settling time");
    return windowed_rms(trace, span, settle);
}

double dispersion_shift_per_pascal(const ChainConfig& config) {
    const double nu_r = config.reference_laser.carrier_frequency;
    const double nu_s = config.slave_laser.carrier_frequency;
    const AirState air = config.transfer_cavity.air;
    AirState plus = air;
    plus.pressure += 1.0;
    const double lr = constants::speed_of_light / nu_r;
    const double ls = constants::speed_of_light / nu_s;
    const double nr0 = 1.0 + refractivity(lr, air);
    const double ns0 = 1.0 + refractivity(ls, air);
    const double dr = refractivity(lr, plus) - refractivity(lr, air);
    const double ds = refractivity(ls, plus) - refractivity(ls, air);
    // nu_s scales as n_r / n_s with the cavity held on the reference.
    const double x = (dr * ns0 - ds * nr0) / (nr0 * (ns0 + ds));
    return nu_s * x;
}

}  // namespace translock
