#include "translock/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "translock/error.hpp"

namespace translock {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

struct Point {
    double detuning;
    double counts;
    double sigma;
};

// Points in canonical (sorted) order so sums do not depend on input order.
std::vector<Point> canonical_points(const FitProblem& p) {
    const auto sigma =
        p.uncertainties.empty() ? poisson_uncertainties(p.data.fluorescence) : p.uncertainties;
    std::vector<Point> pts;
    for (std::size_t i = 0; i < p.data.detuning_866.size(); ++i) {
        if (!std::isfinite(p.data.fluorescence[i])) continue;
        pts.push_back({p.data.detuning_866[i], p.data.fluorescence[i], sigma[i]});
    }
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        if (a.detuning != b.detuning) return a.detuning < b.detuning;
        if (a.counts != b.counts) return a.counts < b.counts;
        return a.sigma < b.sigma;
    });
    return pts;
}

struct Evaluation {
    double chi2 = inf;
    double scale = 0.0;
    double background = 0.0;
};

class Objective {
public:
    Objective(const FitProblem& problem, std::vector<Point> points)
        : problem_(problem), points_(std::move(points)) {
        for (const auto& name : problem.free_parameters) {
            if (is_linear_parameter(name)) continue;
            names_.push_back(name);
            const Bounds b = bounds(name);
            const bool log_space = is_positive_parameter(name);
            lower_.push_back(log_space ? std::log(b.lower) : b.lower);
            upper_.push_back(log_space ? std::log(b.upper) : b.upper);
        }
        scale_free_ = std::count(problem.free_parameters.begin(), problem.free_parameters.end(), "scale") > 0;
        background_free_ =
            std::count(problem.free_parameters.begin(), problem.free_parameters.end(), "background") > 0;
    }

    Bounds bounds(const std::string& name) const {
        const auto it = problem_.bounds.find(name);
        return it != problem_.bounds.end() ? it->second : default_bounds(name);
    }

    std::size_t dimension() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    double to_internal(std::size_t i, double value) const {
        return is_positive_parameter(names_[i]) ? std::log(value) : value;
    }
    double to_external(std::size_t i, double x) const {
        return is_positive_parameter(names_[i]) ? std::exp(x) : x;
    }
    void clamp(std::vector<double>& x) const {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower_[i], upper_[i]);
    }
    // Initial simplex step per coordinate.
    double step(std::size_t i) const {
        const std::string& n = names_[i];
        // Kept small: the dip pattern makes the landscape multimodal on the
        // scale of one Zeeman spacing.
        if (is_positive_parameter(n)) return 0.03;
        if (n.rfind("detuning", 0) == 0) return constants::two_pi * 0.3e6;
        if (n == "polarization_impurity") return 0.005;
        return 0.02;  // angles
    }

    IonConfig config_at(const std::vector<double>& x, double& scale, double& background) const {
        IonConfig c = problem_.base;
        scale = problem_.scale;
        background = problem_.background;
        for (std::size_t i = 0; i < x.size(); ++i) set_parameter(c, scale, background, names_[i], to_external(i, x[i]));
        if (problem_.tie_linewidths) c.linewidth_866 = problem_.linewidth_ratio * c.linewidth_397;
        return c;
    }

    Evaluation evaluate(const std::vector<double>& x) {
        ++evaluations_;
        Evaluation e;
        double scale = 0.0, background = 0.0;
        const IonConfig c = config_at(x, scale, background);
        std::vector<double> shape(points_.size());
        try {
            validate(c);
            const SpectrumSolver solver(c);
            for (std::size_t i = 0; i < points_.size(); ++i)
                shape[i] = c.decay_p_to_s * std::max(0.0, solver.p_population_at(points_[i].detuning));
        } catch (const Error&) {
            return e;  // rejected trial point
        }
        solve_linear(shape, scale, background);
        double chi2 = 0.0;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const double r = (points_[i].counts - (scale * shape[i] + background)) / points_[i].sigma;
            chi2 += r * r;
        }
        if (!std::isfinite(chi2)) return e;
        e.chi2 = chi2;
        e.scale = scale;
        e.background = background;
        return e;
    }

    int evaluations() const { return evaluations_; }

private:
    // Weighted least squares for the free linear parameters with their bounds.
    void solve_linear(const std::vector<double>& shape, double& scale, double& background) const {
        if (!scale_free_ && !background_free_) return;
        double sww = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const double w = 1.0 / (points_[i].sigma * points_[i].sigma);
            sww += w;
            swx += w * shape[i];
            swy += w * points_[i].counts;
            swxx += w * shape[i] * shape[i];
            swxy += w * shape[i] * points_[i].counts;
        }
        const Bounds bs = bounds("scale"), bb = bounds("background");
        auto scale_given_background = [&](double b) {
            return swxx > 0 ? std::clamp((swxy - b * swx) / swxx, bs.lower, bs.upper) : scale;
        };
        auto background_given_scale = [&](double s) { return std::clamp((swy - s * swx) / sww, bb.lower, bb.upper); };
        if (scale_free_ && !background_free_) {
            scale = scale_given_background(background);
        } else if (!scale_free_) {
            background = background_given_scale(scale);
        } else {
            const double det = sww * swxx - swx * swx;
            double s = det != 0.0 ? (sww * swxy - swx * swy) / det : scale;
            double b = det != 0.0 ? (swxx * swy - swx * swxy) / det : background;
            if (s < bs.lower || s > bs.upper || b < bb.lower || b > bb.upper) {
                // Active bound: optimum lies on an edge; try both and keep the better.
                const double s1 = std::clamp(s, bs.lower, bs.upper), b1 = background_given_scale(s1);
                const double b2 = std::clamp(b, bb.lower, bb.upper), s2 = scale_given_background(b2);
                auto cost = [&](double ss, double bb_) {
                    return swxx * ss * ss + sww * bb_ * bb_ + 2 * ss * bb_ * swx - 2 * ss * swxy - 2 * bb_ * swy;
                };
                if (cost(s1, b1) <= cost(s2, b2)) {
                    s = s1;
                    b = b1;
                } else {
                    s = s2;
                    b = b2;
                }
            }
            scale = s;
            background = b;
        }
    }

    const FitProblem& problem_;
    std::vector<Point> points_;
    std::vector<std::string> names_;
    std::vector<double> lower_, upper_;
    bool scale_free_ = false, background_free_ = false;
    int evaluations_ = 0;
};

struct SimplexOutcome {
    std::vector<double> best;
    double value = inf;
    bool converged = false;
    int iterations = 0;
};

SimplexOutcome nelder_mead(Objective& f, std::vector<double> start, double spread_factor, int max_evaluations,
                           std::vector<double>& trace) {
    const std::size_t n = f.dimension();
    f.clamp(start);
    std::vector<std::vector<double>> xs{start};
    for (std::size_t i = 0; i < n; ++i) {
        auto x = start;
        x[i] += spread_factor * f.step(i);
        f.clamp(x);
        if (x[i] == start[i]) x[i] -= spread_factor * f.step(i);  // pinned at the upper bound
        f.clamp(x);
        xs.push_back(x);
    }
    std::vector<double> fx;
    for (const auto& x : xs) fx.push_back(f.evaluate(x).chi2);

    const int budget_end = f.evaluations() + max_evaluations;
    SimplexOutcome out;
    std::vector<std::size_t> order(n + 1);
    while (true) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
        const std::size_t lo = order.front(), hi = order.back(), second = order[n - 1];
        trace.push_back(fx[lo]);
        ++out.iterations;

        double size = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = 0; j < n; ++j) size = std::max(size, std::abs(xs[i][j] - xs[lo][j]) / f.step(j));
        const double spread = fx[hi] - fx[lo];
        if (std::isfinite(fx[hi]) && spread <= 1e-12 + 1e-10 * std::abs(fx[lo]) && size <= 1e-7) {
            out.converged = true;
            break;
        }
        if (f.evaluations() >= budget_end) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i)
            if (i != hi)
                for (std::size_t j = 0; j < n; ++j) centroid[j] += xs[i][j] / static_cast<double>(n);
        auto along = [&](double t) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + t * (xs[hi][j] - centroid[j]);
            f.clamp(x);
            return x;
        };
        const auto xr = along(-1.0);
        const double fr = f.evaluate(xr).chi2;
        if (fr < fx[lo]) {
            const auto xe = along(-2.0);
            const double fe = f.evaluate(xe).chi2;
            if (fe < fr) {
                xs[hi] = xe;
                fx[hi] = fe;
            } else {
                xs[hi] = xr;
                fx[hi] = fr;
            }
            continue;
        }
        if (fr < fx[second]) {
            xs[hi] = xr;
            fx[hi] = fr;
            continue;
        }
        const bool outside = fr < fx[hi];
        const auto xc = along(outside ? -0.5 : 0.5);
        const double fc = f.evaluate(xc).chi2;
        if (fc < (outside ? fr : fx[hi])) {
            xs[hi] = xc;
            fx[hi] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == lo) continue;
            for (std::size_t j = 0; j < n; ++j) xs[i][j] = xs[lo][j] + 0.5 * (xs[i][j] - xs[lo][j]);
            f.clamp(xs[i]);
            fx[i] = f.evaluate(xs[i]).chi2;
        }
    }
    std::size_t lo = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fx[i] < fx[lo]) lo = i;
    out.best = xs[lo];
    out.value = fx[lo];
    return out;
}

}  // namespace

const std::vector<std::string>& parameter_names() {
    static const std::vector<std::string> names{
        "rabi_397",        "rabi_866",        "detuning_397",     "detuning_866",         "magnetic_field",
        "linewidth_397",   "linewidth_866",   "k_angle",          "polarization_397",     "polarization_866",
        "polarization_impurity", "decay_p_to_s", "decay_p_to_d", "scale", "background"};
    return names;
}

bool is_linear_parameter(const std::string& name) { return name == "scale" || name == "background"; }

bool is_positive_parameter(const std::string& name) {
    return name == "rabi_397" || name == "rabi_866" || name == "magnetic_field" || name == "linewidth_397" ||
           name == "linewidth_866" || name == "scale" || name == "decay_p_to_s" || name == "decay_p_to_d";
}

namespace {
double* field(IonConfig& c, double& scale, double& background, const std::string& name) {
    if (name == "rabi_397") return &c.rabi_397;
    if (name == "rabi_866") return &c.rabi_866;
    if (name == "detuning_397") return &c.detuning_397;
    if (name == "detuning_866") return &c.detuning_866;
    if (name == "magnetic_field") return &c.magnetic_field;
    if (name == "linewidth_397") return &c.linewidth_397;
    if (name == "linewidth_866") return &c.linewidth_866;
    if (name == "k_angle") return &c.k_angle;
    if (name == "polarization_397") return &c.polarization_397;
    if (name == "polarization_866") return &c.polarization_866;
    if (name == "polarization_impurity") return &c.polarization_impurity;
    if (name == "decay_p_to_s") return &c.decay_p_to_s;
    if (name == "decay_p_to_d") return &c.decay_p_to_d;
    if (name == "scale") return &scale;
    if (name == "background") return &background;
    throw FitError("unknown fit parameter '" + name + "'");
}
}  // namespace

double get_parameter(const IonConfig& config, double scale, double background, const std::string& name) {
    IonConfig c = config;
    return *field(c, scale, background, name);
}

void set_parameter(IonConfig& config, double& scale, double& background, const std::string& name, double value) {
    *field(config, scale, background, name) = value;
}

Bounds default_bounds(const std::string& name) {
    const double mhz = constants::two_pi * 1e6;
    if (name == "rabi_397" || name == "rabi_866") return {0.01 * mhz, 500.0 * mhz};
    if (name == "detuning_397" || name == "detuning_866") return {-300.0 * mhz, 300.0 * mhz};
    if (name == "magnetic_field") return {1e-3, 50.0};
    if (name == "linewidth_397" || name == "linewidth_866") return {10.0, 20e6};
    if (name == "k_angle" || name == "polarization_397" || name == "polarization_866")
        return {-constants::pi, constants::pi};
    if (name == "polarization_impurity") return {0.0, 0.1};
    if (name == "decay_p_to_s" || name == "decay_p_to_d") return {0.01 * mhz, 1000.0 * mhz};
    if (name == "scale") return {1e-15, 1e3};
    if (name == "background") return {0.0, 1e9};
    throw FitError("unknown fit parameter '" + name + "'");
}

std::vector<std::string> default_free_parameters() {
    return {"rabi_397", "rabi_866", "detuning_397", "magnetic_field", "linewidth_397",
            "polarization_397", "polarization_866", "scale", "background"};
}

void validate(const FitProblem& p) {
    if (p.free_parameters.empty()) throw FitError("at least one free parameter is required");
    std::set<std::string> seen;
    for (const auto& name : p.free_parameters) {
        default_bounds(name);  // throws on unknown names
        if (!seen.insert(name).second) throw FitError("parameter '" + name + "' listed twice");
        if (p.tie_linewidths && name == "linewidth_866")
            throw FitError("linewidth_866 is tied to linewidth_397 and cannot be free");
    }
    for (const auto& [name, b] : p.bounds) {
        default_bounds(name);
        if (!(b.lower < b.upper)) throw FitError("bounds of '" + name + "' are empty");
        if (is_positive_parameter(name) && !(b.lower > 0.0))
            throw FitError("lower bound of '" + name + "' must be positive (log-space search)");
    }
    if (p.tie_linewidths && !(p.linewidth_ratio > 0.0 && std::isfinite(p.linewidth_ratio)))
        throw FitError("linewidth ratio must be positive");
    if (p.data.detuning_866.size() != p.data.fluorescence.size())
        throw FitError("data detuning and counts differ in length");
    if (!p.uncertainties.empty() && p.uncertainties.size() != p.data.fluorescence.size())
        throw FitError("uncertainties differ in length from the data");
    std::size_t usable = 0;
    for (std::size_t i = 0; i < p.data.fluorescence.size(); ++i) {
        if (!std::isfinite(p.data.detuning_866[i])) throw FitError("data detuning must be finite");
        if (std::isfinite(p.data.fluorescence[i])) ++usable;
    }
    if (usable <= p.free_parameters.size()) throw FitError("need more data points than free parameters");
    if (p.max_evaluations < 1 || p.restarts < 0) throw FitError("bad iteration limits");
}

std::vector<double> poisson_uncertainties(std::span<const double> counts) {
    std::vector<double> s(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) s[i] = std::sqrt(std::max(counts[i], 1.0));
    return s;
}

ChiSquared chi_squared(std::span<const double> data, std::span<const double> model,
                       std::span<const double> uncertainties, int k) {
    if (data.size() != model.size() || data.size() != uncertainties.size())
        throw DomainError("chi_squared needs matching data, model and uncertainty grids");
    if (static_cast<long>(data.size()) - k <= 0) throw DomainError("chi_squared needs more points than parameters");
    ChiSquared out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!(uncertainties[i] > 0.0) || !std::isfinite(uncertainties[i]))
            throw FitError("uncertainty must be positive and finite at every point");
        const double r = (data[i] - model[i]) / uncertainties[i];
        out.chi2 += r * r;
    }
    out.reduced = out.chi2 / static_cast<double>(static_cast<long>(data.size()) - k);
    return out;
}

ChiSquared chi_squared(const SpectrumScan& data, const SpectrumScan& model, std::span<const double> uncertainties,
                       int k) {
    if (data.detuning_866 != model.detuning_866) throw DomainError("chi_squared needs matching grids");
    return chi_squared(data.fluorescence, model.model, uncertainties, k);
}

FitResult fit_spectrum(const FitProblem& problem, const ParameterSet& initial) {
    validate(problem);
    auto points = canonical_points(problem);
    const std::size_t n_points = points.size();

    // Starting point: problem values overridden by the initial set.
    IonConfig start_config = problem.base;
    double start_scale = problem.scale, start_background = problem.background;
    for (const auto& [name, value] : initial) {
        if (std::find(problem.free_parameters.begin(), problem.free_parameters.end(), name) ==
            problem.free_parameters.end())
            throw FitError("initial value given for non-free parameter '" + name + "'");
        const auto it = problem.bounds.find(name);
        const Bounds b = it != problem.bounds.end() ? it->second : default_bounds(name);
        if (!(value >= b.lower && value <= b.upper)) throw FitError("initial '" + name + "' lies outside its bounds");
        set_parameter(start_config, start_scale, start_background, name, value);
    }
    FitProblem seeded = problem;
    seeded.base = start_config;
    seeded.scale = start_scale;
    seeded.background = start_background;
    Objective g(seeded, std::move(points));

    std::vector<double> x0(g.dimension());
    for (std::size_t i = 0; i < x0.size(); ++i)
        x0[i] = g.to_internal(i, get_parameter(start_config, start_scale, start_background, g.names()[i]));

    FitResult result;
    double best_so_far = inf;
    auto append = [&](const std::vector<double>& t) {
        for (double v : t) {
            best_so_far = std::min(best_so_far, v);
            result.residual_trace.push_back(best_so_far);
        }
    };
    SimplexOutcome run;
    if (g.dimension() == 0) {
        run.best = x0;
        run.value = g.evaluate(x0).chi2;
        run.converged = true;
        result.residual_trace.push_back(run.value);
    } else {
        std::vector<double> trace;
        run = nelder_mead(g, x0, 1.0, problem.max_evaluations, trace);
        append(trace);
        result.iterations = run.iterations;
        for (int r = 0; r < problem.restarts; ++r) {
            trace.clear();
            SimplexOutcome again = nelder_mead(g, run.best, problem.restart_spread, problem.max_evaluations, trace);
            append(trace);
            result.iterations += again.iterations;
            // The restart decides convergence; its start is the previous best,
            // so its value never exceeds the earlier one.
            const bool settled = again.converged;
            if (again.value <= run.value) run = again;
            run.converged = settled;
        }
    }
    if (!std::isfinite(run.value)) throw FitError("model could not be evaluated at any trial point");

    const Evaluation best = g.evaluate(run.best);
    double scale = 0.0, background = 0.0;
    result.config = g.config_at(run.best, scale, background);
    result.scale = best.scale;
    result.background = best.background;
    result.chi_squared = best.chi2;
    result.degrees_of_freedom = static_cast<int>(n_points) - static_cast<int>(problem.free_parameters.size());
    result.reduced_chi_squared = result.chi_squared / result.degrees_of_freedom;
    result.evaluations = g.evaluations();
    result.converged = run.converged;
    for (const auto& name : problem.free_parameters)
        result.estimates[name] = get_parameter(result.config, result.scale, result.background, name);
    result.model = excitation_spectrum(result.config, problem.data.detuning_866, result.scale, result.background);
    return result;
}

}  // namespace translock
