#ifndef TRANSLOCK_BLOCH_HPP
#define TRANSLOCK_BLOCH_HPP

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "translock/constants.hpp"

namespace translock {

// 40Ca+ S1/2 - P1/2 - D3/2 under 397 nm and 866 nm light. Angular frequencies
// are in rad/s, linewidths in Hz (FWHM), the magnetic field in gauss.
struct IonConfig {
    double magnetic_field = 3.8;
    double rabi_397 = constants::two_pi * 15e6;
    double rabi_866 = constants::two_pi * 3.5e6;
    double detuning_397 = -constants::two_pi * 27e6;
    double detuning_866 = 0.0;
    double linewidth_397 = 268e3;
    double linewidth_866 = 134e3;
    double k_angle = constants::pi / 4.0;  // between k and B
    // Linear polarization angle measured from the vertical (perpendicular to
    // the k-B plane): 0 = vertical, pi/2 = horizontal.
    double polarization_397 = 0.0;
    double polarization_866 = constants::pi / 2.0;
    double decay_p_to_s = constants::ca_decay_p_to_s;
    double decay_p_to_d = constants::ca_decay_p_to_d;
    // Fraction of the orthogonal polarization admixed (in quadrature) per beam.
    double polarization_impurity = 0.0;
};

void validate(const IonConfig& config);

inline constexpr int ion_levels = 8;
// Basis: 0,1 = S1/2 m=-1/2,+1/2; 2,3 = P1/2 m=-1/2,+1/2; 4..7 = D3/2 m=-3/2..+3/2.
double magnetic_number(int level);
std::string level_name(int level);
inline bool is_s(int level) { return level < 2; }
inline bool is_p(int level) { return level == 2 || level == 3; }
inline bool is_d(int level) { return level >= 4; }

using DensityMatrix = Eigen::Matrix<std::complex<double>, ion_levels, ion_levels>;
using Operator8 = DensityMatrix;
// Generator on column-stacked vec(rho): vec(A rho B) = (B^T kron A) vec(rho).
using Liouvillian = Eigen::Matrix<std::complex<double>, ion_levels * ion_levels, ion_levels * ion_levels>;
using VecRho = Eigen::Matrix<std::complex<double>, ion_levels * ion_levels, 1>;

VecRho vectorize(const DensityMatrix& rho);
DensityMatrix unvectorize(const VecRho& v);

// <j1 m1; j2 m2 | J M>, half-integer arguments allowed.
double clebsch_gordan(double j1, double m1, double j2, double m2, double j, double m);

// Diagonal Zeeman shifts m g mu_B B (rad/s).
Operator8 zeeman_hamiltonian(const IonConfig& config);

// Lab frame: B along z, k in the x-z plane at k_angle from z.
Eigen::Vector3d beam_direction(double k_angle);
// Polarization at angle psi from the vertical (y), with the orthogonal
// polarization admixed at amplitude sqrt(impurity) and a quarter-wave phase.
Eigen::Vector3cd beam_polarization(double k_angle, double psi, double impurity);

struct SphericalComponents {
    std::complex<double> minus;  // sigma-, drives m -> m-1
    std::complex<double> pi;
    std::complex<double> plus;   // sigma+, drives m -> m+1
    std::complex<double> operator[](int q) const { return q < 0 ? minus : (q == 0 ? pi : plus); }
    double norm2() const { return std::norm(minus) + std::norm(pi) + std::norm(plus); }
};

// eps^q = e_q^* . eps with e_{+1} = -(x + i y)/sqrt2, e_0 = z, e_{-1} = (x - i y)/sqrt2.
// Throws DomainError if the polarization is not transverse to k.
SphericalComponents spherical_components(const Eigen::Vector3d& k, const Eigen::Vector3cd& polarization);

struct TransitionCoupling {
    int ground = 0;
    int excited = 0;
    int q = 0;
    std::complex<double> factor;  // eps^q * CG; multiply by Omega/2 for the matrix element
};

struct CouplingTable {
    SphericalComponents beam_397;
    SphericalComponents beam_866;
    std::vector<TransitionCoupling> transitions_397;
    std::vector<TransitionCoupling> transitions_866;
};

CouplingTable coupling_amplitudes(const IonConfig& config);

// Rotating-frame Hamiltonian with P at zero, S at detuning_397 and D at
// detuning_866 (plus Zeeman shifts).
Operator8 ion_hamiltonian(const IonConfig& config);

Liouvillian build_liouvillian(const IonConfig& config);

// Unique solution of L vec(rho) = 0 with unit trace. Throws MultiplicityError
// naming the levels spanned by the kernel when it is not one-dimensional.
DensityMatrix steady_state(const Liouvillian& generator);

// rho(t) = exp(L t) rho0.
DensityMatrix relax(const Liouvillian& generator, const DensityMatrix& rho0, double t);

double p_population(const DensityMatrix& rho);
double d_population(const DensityMatrix& rho);

// Steady-state solver specialised to a scan over detuning_866: the generator
// is affine in that detuning and is kept in real Hermitian coordinates.
class SpectrumSolver {
public:
    explicit SpectrumSolver(const IonConfig& config);
    // P-manifold population at the given 866 detuning. A degenerate point is
    // accepted when all its steady states share one P population; otherwise
    // MultiplicityError.
    double p_population_at(double detuning_866) const;
    DensityMatrix steady_state_at(double detuning_866) const;

private:
    using RealMatrix = Eigen::Matrix<double, ion_levels * ion_levels, ion_levels * ion_levels>;
    RealMatrix base_;
    RealMatrix slope_;
    double scale_ = 1.0;
    IonConfig config_;
};

struct SpectrumScan {
    std::vector<double> detuning_866;  // rad/s
    std::vector<double> fluorescence;  // counts per bin (with shot noise when enabled)
    std::vector<double> model;         // noiseless counts
    std::vector<std::size_t> gaps;     // indices where the steady state was degenerate
    bool shot_noise = false;
    double scale = 0.0;       // counts per (Gamma_PS x P population)
    double background = 0.0;  // counts per bin
};

// fluorescence = scale * Gamma_PS * P population + background, optional
// Poisson counting noise from the given seed.
SpectrumScan excitation_spectrum(const IonConfig& config, std::span<const double> detuning_866, double scale,
                                 double background, bool shot_noise = false, std::uint64_t seed = 1);

struct DarkResonance {
    int s_level = 0;
    int d_level = 0;
    double detuning_866 = 0.0;  // rad/s
};

// Two-photon conditions E_S(m_s) = E_D(m_d) from the Zeeman eigenvalues, for
// S and D sublevels that share a P sublevel through non-zero couplings.
std::vector<DarkResonance> dark_resonances(const IonConfig& config);

// Local minima of the (noiseless) spectrum, as grid detunings.
std::vector<double> spectrum_dips(const SpectrumScan& scan);

}  // namespace translock

#endif  // TRANSLOCK_BLOCH_HPP
