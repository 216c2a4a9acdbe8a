#ifndef TRANSLOCK_FIT_HPP
#define TRANSLOCK_FIT_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

#include "translock/bloch.hpp"

namespace translock {

// Fit parameters are the IonConfig fields by name plus "scale" and
// "background", in the units of IonConfig (rad/s, Hz, G, rad).
using ParameterSet = std::map<std::string, double>;

const std::vector<std::string>& parameter_names();
bool is_linear_parameter(const std::string& name);    // scale, background
bool is_positive_parameter(const std::string& name);  // searched in log space
double get_parameter(const IonConfig& config, double scale, double background, const std::string& name);
void set_parameter(IonConfig& config, double& scale, double& background, const std::string& name, double value);

struct Bounds {
    double lower = 0.0;
    double upper = 0.0;
};
Bounds default_bounds(const std::string& name);

// Rabi frequencies, 397 detuning, field, 397 linewidth, both polarization
// angles, scale and background.
std::vector<std::string> default_free_parameters();

struct FitProblem {
    SpectrumScan data;           // detuning_866 and fluorescence (counts)
    IonConfig base{};            // values of the fixed parameters
    double scale = 1e-5;         // starting / fixed value
    double background = 0.0;
    std::vector<std::string> free_parameters = default_free_parameters();
    std::map<std::string, Bounds> bounds;  // overrides of default_bounds
    // Optional tie linewidth_866 = linewidth_ratio * linewidth_397.
    bool tie_linewidths = true;
    double linewidth_ratio = 0.5;
    // Per-point sigma; empty selects sqrt(counts) with a floor of one count.
    std::vector<double> uncertainties;
    int max_evaluations = 6000;  // per simplex run
    int restarts = 1;
    // Restart simplex edge in units of the initial steps; wide enough to
    // leave a basin one dip spacing away.
    double restart_spread = 8.0;
};

// Throws FitError on an inconsistent problem (unknown or duplicate names,
// tied parameter listed as free, too few points, bad bounds).
void validate(const FitProblem& problem);

struct FitResult {
    ParameterSet estimates;       // free parameters
    IonConfig config{};           // full model configuration at the optimum
    double scale = 0.0;
    double background = 0.0;
    double chi_squared = 0.0;
    double reduced_chi_squared = 0.0;
    int degrees_of_freedom = 0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> residual_trace;  // best chi^2 after each iteration
    SpectrumScan model;                  // on the data grid, in the data order
};

struct ChiSquared {
    double chi2 = 0.0;
    double reduced = 0.0;
};

// Throws FitError on a zero or non-finite uncertainty, DomainError when
// the data do not exceed k or the sizes differ.
ChiSquared chi_squared(std::span<const double> data, std::span<const double> model,
                       std::span<const double> uncertainties, int k);
ChiSquared chi_squared(const SpectrumScan& data, const SpectrumScan& model, std::span<const double> uncertainties,
                       int k);

std::vector<double> poisson_uncertainties(std::span<const double> counts);

// Nelder-Mead simplex over the non-linear free parameters (log space for
// positive ones, clamped to bounds); scale and background are solved by
// weighted linear least squares at every trial point. One restart from a
// wide fresh simplex around the best point follows the first convergence.
FitResult fit_spectrum(const FitProblem& problem, const ParameterSet& initial);

}  // namespace translock

#endif  // TRANSLOCK_FIT_HPP
