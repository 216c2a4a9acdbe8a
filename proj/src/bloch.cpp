#include "translock/bloch.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "translock/error.hpp"

namespace translock {

namespace {

constexpr int dim = ion_levels * ion_levels;
using cd = std::complex<double>;
using RealMatrix = Eigen::Matrix<double, dim, dim>;
using RealVector = Eigen::Matrix<double, dim, 1>;

int vec_index(int i, int j) { return i + ion_levels * j; }

double lande(int level) {
    if (is_s(level)) return constants::lande_s12;
    if (is_p(level)) return constants::lande_p12;
    return constants::lande_d32;
}

int s_level(double m) { return m < 0 ? 0 : 1; }

int p_level(double m) { return m < 0 ? 2 : 3; }
int d_level(double m) { return 4 + static_cast<int>(std::lround(m + 1.5)); }

double factorial(int n) { return std::tgamma(n + 1.0); }

// Real Hermitian coordinates: x[i + 8 j] holds Re rho_ij for i <= j and
// Im rho_ji for i > j. T maps x to vec(rho).
RealMatrix to_real(const Liouvillian& generator) {
    Liouvillian lt;
    for (int j = 0; j < ion_levels; ++j) {
        for (int i = 0; i < ion_levels; ++i) {
            const int k = vec_index(i, j);
            if (i == j) {
                lt.col(k) = generator.col(k);
            } else if (i < j) {
                lt.col(k) = generator.col(vec_index(i, j)) + generator.col(vec_index(j, i));
            } else {
                // Im part of rho_ji (j < i): rho_ji = +i x, rho_ij = -i x
                lt.col(k) = cd(0, 1) * (generator.col(vec_index(j, i)) - generator.col(vec_index(i, j)));
            }
        }
    }
    RealMatrix out;
    for (int j = 0; j < ion_levels; ++j) {
        for (int i = 0; i < ion_levels; ++i) {
            const int k = vec_index(i, j);
            if (i <= j)
                out.row(k) = lt.row(k).real();
            else
                out.row(k) = lt.row(vec_index(j, i)).imag();
        }
    }
    return out;
}

DensityMatrix from_real(const RealVector& x) {
    DensityMatrix rho;
    for (int j = 0; j < ion_levels; ++j) {
        for (int i = 0; i < ion_levels; ++i) {
            if (i == j)
                rho(i, i) = x(vec_index(i, i));
            else if (i < j)
                rho(i, j) = cd(x(vec_index(i, j)), x(vec_index(j, i)));
            else
                rho(i, j) = cd(x(vec_index(j, i)), -x(vec_index(i, j)));
        }
    }
    return rho;
}

// Kernel dimension of the generator and the levels its kernel touches.
struct KernelInfo {
    int dimension = 0;
    std::vector<int> levels;
};

KernelInfo kernel_info(const RealMatrix& real_generator) {
    Eigen::JacobiSVD<RealMatrix> svd(real_generator, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double tol = 1e-11 * std::max(s(0), 1e-300);
    KernelInfo info;
    for (int c = 0; c < dim; ++c) {
        if (s(c) > tol) continue;
        ++info.dimension;
        const DensityMatrix rho = from_real(svd.matrixV().col(c));
        for (int l = 0; l < ion_levels; ++l) {
            double weight = 0.0;
            for (int o = 0; o < ion_levels; ++o) weight += std::abs(rho(l, o));
            if (weight > 1e-8 && std::find(info.levels.begin(), info.levels.end(), l) == info.levels.end())
                info.levels.push_back(l);
        }
    }
    std::sort(info.levels.begin(), info.levels.end());
    return info;
}

[[noreturn]] void throw_multiplicity(const KernelInfo& info) {
    std::ostringstream msg;
    msg << "steady state is not unique: kernel dimension " << info.dimension << ", decoupled subspace spans {";
    for (std::size_t i = 0; i < info.levels.size(); ++i) msg << (i ? ", " : "") << level_name(info.levels[i]);
    msg << "}";
    throw MultiplicityError(msg.str(), info.dimension);
}

// Solves R x = 0 with the first row replaced by the trace condition.
DensityMatrix solve_real(RealMatrix r) {
    const double norm = r.cwiseAbs().maxCoeff();
    if (norm == 0.0) throw_multiplicity({dim, {0, 1, 2, 3, 4, 5, 6, 7}});
    r /= norm;
    const RealMatrix original = r;
    r.row(0).setZero();
    for (int i = 0; i < ion_levels; ++i) r(0, vec_index(i, i)) = 1.0;
    RealVector rhs = RealVector::Zero();
    rhs(0) = 1.0;
    Eigen::PartialPivLU<RealMatrix> lu(r);
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    RealVector x = lu.solve(rhs);
    // The condition estimate alone misses exactly repeated columns, so
    // small pivots and a poor residual both trigger the kernel analysis.
    const bool suspicious = !(pivots.minCoeff() > 1e-12 * pivots.maxCoeff()) || !x.allFinite() ||
                            !((original * x).norm() <= 1e-10 * std::max(1.0, x.norm()));
    if (suspicious) {
        const KernelInfo info = kernel_info(original);
        if (info.dimension > 1) throw_multiplicity(info);
        x = Eigen::FullPivLU<RealMatrix>(r).solve(rhs);
    }
    return from_real(x);
}

// P population common to every unit-trace steady state, when the kernel is
// degenerate but the fluorescence is not (e.g. no 397 light: every steady
// state has an empty P manifold). Returns NaN when the states disagree.
double shared_p_population(const RealMatrix& generator) {
    const double norm = generator.cwiseAbs().maxCoeff();
    if (norm == 0.0) return std::nan("");
    Eigen::JacobiSVD<RealMatrix> svd(generator / norm, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double tol = 1e-11 * s(0);
    std::vector<double> trace, pop;
    for (int c = 0; c < dim; ++c) {
        if (s(c) > tol) continue;
        const auto v = svd.matrixV().col(c);
        double t = 0.0;
        for (int i = 0; i < ion_levels; ++i) t += v(vec_index(i, i));
        trace.push_back(t);
        pop.push_back(v(vec_index(2, 2)) + v(vec_index(3, 3)));
    }
    // pop must be a multiple of trace across the kernel basis
    double tt = 0.0, tp = 0.0;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        tt += trace[k] * trace[k];
        tp += trace[k] * pop[k];
    }
    if (!(tt > 1e-12)) return std::nan("");
    const double c = tp / tt;
    for (std::size_t k = 0; k < trace.size(); ++k)
        if (std::abs(pop[k] - c * trace[k]) > 1e-9) return std::nan("");
    return c;
}

}  // namespace

void validate(const IonConfig& c) {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(c.magnetic_field) || !finite(c.rabi_397) || !finite(c.rabi_866) || !finite(c.detuning_397) ||
        !finite(c.detuning_866) || !finite(c.k_angle) || !finite(c.polarization_397) || !finite(c.polarization_866))
        throw InvalidModel("ion config fields must be finite");
    if (!(c.decay_p_to_s > 0.0) || !(c.decay_p_to_d > 0.0)) throw InvalidModel("decay rates must be positive");
    if (!(c.linewidth_397 >= 0.0) || !(c.linewidth_866 >= 0.0)) throw InvalidModel("laser linewidths must be >= 0");
    if (!std::isfinite(c.linewidth_397) || !std::isfinite(c.linewidth_866))
        throw InvalidModel("laser linewidths must be finite");
    if (!(c.polarization_impurity >= 0.0 && c.polarization_impurity <= 0.1))
        throw InvalidModel("polarization impurity must lie in [0, 0.1]");
}

double magnetic_number(int level) {
    if (level < 0 || level >= ion_levels) throw DomainError("level index out of range");
    if (level < 4) return (level % 2 == 0) ? -0.5 : 0.5;
    return level - 4 - 1.5;
}

std::string level_name(int level) {
    const double m = magnetic_number(level);
    std::ostringstream s;
    s << (is_s(level) ? "S" : is_p(level) ? "P" : "D") << "(" << (m > 0 ? "+" : "-")
      << static_cast<int>(std::lround(std::abs(2.0 * m))) << "/2)";
    return s.str();
}

VecRho vectorize(const DensityMatrix& rho) { return Eigen::Map<const VecRho>(rho.data()); }

DensityMatrix unvectorize(const VecRho& v) { return Eigen::Map<const DensityMatrix>(v.data()); }

double clebsch_gordan(double j1, double m1, double j2, double m2, double j, double m) {
    // Racah formula on doubled quantum numbers.
    const int tj1 = static_cast<int>(std::lround(2 * j1)), tm1 = static_cast<int>(std::lround(2 * m1));
    const int tj2 = static_cast<int>(std::lround(2 * j2)), tm2 = static_cast<int>(std::lround(2 * m2));
    const int tj = static_cast<int>(std::lround(2 * j)), tm = static_cast<int>(std::lround(2 * m));
    if (tm1 + tm2 != tm) return 0.0;
    if (std::abs(tm1) > tj1 || std::abs(tm2) > tj2 || std::abs(tm) > tj) return 0.0;
    if (tj < std::abs(tj1 - tj2) || tj > tj1 + tj2) return 0.0;
    if ((tj1 + tm1) % 2 || (tj2 + tm2) % 2 || (tj + tm) % 2 || (tj1 + tj2 + tj) % 2) return 0.0;
    const int a = (tj1 + tj2 - tj) / 2, b = (tj1 - tj2 + tj) / 2, c = (-tj1 + tj2 + tj) / 2;
    const int d = (tj1 + tj2 + tj) / 2 + 1;
    const double pre = std::sqrt((tj + 1) * factorial(a) * factorial(b) * factorial(c) / factorial(d));
    const int p1 = (tj1 + tm1) / 2, p2 = (tj1 - tm1) / 2, p3 = (tj2 + tm2) / 2, p4 = (tj2 - tm2) / 2;
    const int p5 = (tj + tm) / 2, p6 = (tj - tm) / 2;
    const double roots = std::sqrt(factorial(p1) * factorial(p2) * factorial(p3) * factorial(p4) * factorial(p5) *
                                   factorial(p6));
    double sum = 0.0;
    for (int k = 0; k <= a; ++k) {
        const int e1 = a - k, e2 = p2 - k, e3 = p3 - k, e4 = (tj - tj2 + tm1) / 2 + k, e5 = (tj - tj1 - tm2) / 2 + k;
        if (e1 < 0 || e2 < 0 || e3 < 0 || e4 < 0 || e5 < 0) continue;
        const double term = factorial(k) * factorial(e1) * factorial(e2) * factorial(e3) * factorial(e4) *
                            factorial(e5);
        sum += ((k % 2) ? -1.0 : 1.0) / term;
    }
    return pre * roots * sum;
}

Operator8 zeeman_hamiltonian(const IonConfig& config) {
    Operator8 h = Operator8::Zero();
    const double mu_b = constants::two_pi * constants::bohr_magneton_hz_per_gauss * config.magnetic_field;
    for (int l = 0; l < ion_levels; ++l) h(l, l) = magnetic_number(l) * lande(l) * mu_b;
    return h;
}

Eigen::Vector3d beam_direction(double k_angle) { return {std::sin(k_angle), 0.0, std::cos(k_angle)}; }

Eigen::Vector3cd beam_polarization(double k_angle, double psi, double impurity) {
    const Eigen::Vector3d vertical(0.0, 1.0, 0.0);
    const Eigen::Vector3d horizontal(std::cos(k_angle), 0.0, -std::sin(k_angle));
    const Eigen::Vector3d main = std::cos(psi) * vertical + std::sin(psi) * horizontal;
    const Eigen::Vector3d ortho = -std::sin(psi) * vertical + std::cos(psi) * horizontal;
    return std::sqrt(1.0 - impurity) * main.cast<cd>() + cd(0.0, std::sqrt(impurity)) * ortho.cast<cd>();
}

SphericalComponents spherical_components(const Eigen::Vector3d& k, const Eigen::Vector3cd& eps) {
    if (!(std::abs(k.norm() - 1.0) < 1e-9)) throw DomainError("beam direction must be a unit vector");
    if (std::abs(k.cast<cd>().dot(eps)) > 1e-9 * std::max(1.0, eps.norm()))
        throw DomainError("polarization is not orthogonal to the beam direction");
    const double r = 1.0 / std::sqrt(2.0);
    SphericalComponents s;
    // e_q^* . eps
    s.plus = -r * (eps(0) - cd(0, 1) * eps(1));
    s.minus = r * (eps(0) + cd(0, 1) * eps(1));
    s.pi = eps(2);
    return s;
}

CouplingTable coupling_amplitudes(const IonConfig& config) {
    const Eigen::Vector3d k = beam_direction(config.k_angle);
    CouplingTable t;
    t.beam_397 = spherical_components(
        k, beam_polarization(config.k_angle, config.polarization_397, config.polarization_impurity));
    t.beam_866 = spherical_components(
        k, beam_polarization(config.k_angle, config.polarization_866, config.polarization_impurity));
    for (int q = -1; q <= 1; ++q) {
        for (int g = 0; g < 2; ++g) {
            const double mg = magnetic_number(g), me = mg + q;
            if (std::abs(me) > 0.5) continue;
            const double cg = clebsch_gordan(0.5, mg, 1.0, q, 0.5, me);
            if (cg != 0.0) t.transitions_397.push_back({g, p_level(me), q, t.beam_397[q] * cg});
        }
        for (int g = 4; g < 8; ++g) {
            const double mg = magnetic_number(g), me = mg + q;
            if (std::abs(me) > 0.5) continue;
            const double cg = clebsch_gordan(1.5, mg, 1.0, q, 0.5, me);
            if (cg != 0.0) t.transitions_866.push_back({g, p_level(me), q, t.beam_866[q] * cg});
        }
    }
    return t;
}

Operator8 ion_hamiltonian(const IonConfig& config) {
    validate(config);
    Operator8 h = zeeman_hamiltonian(config);
    for (int l = 0; l < ion_levels; ++l) {
        if (is_s(l)) h(l, l) += config.detuning_397;
        if (is_d(l)) h(l, l) += config.detuning_866;
    }
    const CouplingTable t = coupling_amplitudes(config);
    for (const auto& c : t.transitions_397) {
        h(c.excited, c.ground) += 0.5 * config.rabi_397 * c.factor;
        h(c.ground, c.excited) += 0.5 * config.rabi_397 * std::conj(c.factor);
    }
    for (const auto& c : t.transitions_866) {
        h(c.excited, c.ground) += 0.5 * config.rabi_866 * c.factor;
        h(c.ground, c.excited) += 0.5 * config.rabi_866 * std::conj(c.factor);
    }
    return h;
}

namespace {

void add_hamiltonian(Liouvillian& l, const Operator8& h) {
    const Operator8 id = Operator8::Identity();
    // -i (I kron H - H^T kron I)
    for (int b = 0; b < ion_levels; ++b)
        for (int a = 0; a < ion_levels; ++a)
            for (int d = 0; d < ion_levels; ++d)
                for (int c = 0; c < ion_levels; ++c) {
                    const cd v = id(b, d) * h(a, c) - h(d, b) * id(a, c);
                    if (v != cd(0)) l(vec_index(a, b), vec_index(c, d)) += cd(0, -1) * v;
                }
}

void add_dissipator(Liouvillian& l, const Operator8& jump) {
    const Operator8 id = Operator8::Identity();
    const Operator8 jdj = jump.adjoint() * jump;
    // conj(J) kron J - 1/2 I kron J^dag J - 1/2 (J^dag J)^T kron I
    for (int b = 0; b < ion_levels; ++b)
        for (int a = 0; a < ion_levels; ++a)
            for (int d = 0; d < ion_levels; ++d)
                for (int c = 0; c < ion_levels; ++c) {
                    const cd v = std::conj(jump(b, d)) * jump(a, c) - 0.5 * id(b, d) * jdj(a, c) -
                                 0.5 * jdj(d, b) * id(a, c);
                    if (v != cd(0)) l(vec_index(a, b), vec_index(c, d)) += v;
                }
}

}  // namespace

Liouvillian build_liouvillian(const IonConfig& config) {
    Liouvillian l = Liouvillian::Zero();
    add_hamiltonian(l, ion_hamiltonian(config));
    // Spontaneous decay, one jump operator per emitted polarization so
    // that coherences between upper sublevels decay correctly.
    for (int q = -1; q <= 1; ++q) {
        Operator8 to_s = Operator8::Zero(), to_d = Operator8::Zero();
        for (int e = 2; e < 4; ++e) {
            const double me = magnetic_number(e), mg = me - q;
            if (std::abs(mg) <= 0.5)
                to_s(s_level(mg), e) = std::sqrt(config.decay_p_to_s) * clebsch_gordan(0.5, mg, 1.0, q, 0.5, me);
            if (std::abs(mg) <= 1.5)
                to_d(d_level(mg), e) = std::sqrt(config.decay_p_to_d) * clebsch_gordan(1.5, mg, 1.0, q, 0.5, me);
        }
        add_dissipator(l, to_s);
        add_dissipator(l, to_d);
    }
    // Laser phase noise: projector dephasing gives the S-P (D-P) coherence a
    // decay rate 2 pi dnu_397 (2 pi dnu_866) and S-D the sum of both.
    Operator8 ps = Operator8::Zero(), pd = Operator8::Zero();
    for (int s = 0; s < 2; ++s) ps(s, s) = 1.0;
    for (int d = 4; d < 8; ++d) pd(d, d) = 1.0;
    if (config.linewidth_397 > 0.0) add_dissipator(l, std::sqrt(2.0 * constants::two_pi * config.linewidth_397) * ps);
    if (config.linewidth_866 > 0.0) add_dissipator(l, std::sqrt(2.0 * constants::two_pi * config.linewidth_866) * pd);
    return l;
}

DensityMatrix steady_state(const Liouvillian& generator) {
    DensityMatrix rho = solve_real(to_real(generator));
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return rho;
}

DensityMatrix relax(const Liouvillian& generator, const DensityMatrix& rho0, double t) {
    if (!(t >= 0.0)) throw DomainError("relaxation time must be non-negative");
    const Liouvillian prop = (generator * t).exp();
    return unvectorize(prop * vectorize(rho0));
}

double p_population(const DensityMatrix& rho) { return rho(2, 2).real() + rho(3, 3).real(); }

double d_population(const DensityMatrix& rho) {
    double sum = 0.0;
    for (int d = 4; d < 8; ++d) sum += rho(d, d).real();
    return sum;
}

SpectrumSolver::SpectrumSolver(const IonConfig& config) : config_(config) {
    IonConfig at_zero = config;
    at_zero.detuning_866 = 0.0;
    base_ = to_real(build_liouvillian(at_zero));
    // The 866 detuning only moves the D energies: d L / d Delta is the
    // commutator with the D projector.
    Operator8 pd = Operator8::Zero();
    for (int d = 4; d < 8; ++d) pd(d, d) = 1.0;
    Liouvillian dl = Liouvillian::Zero();
    add_hamiltonian(dl, pd);
    slope_ = to_real(dl);
}

DensityMatrix SpectrumSolver::steady_state_at(double detuning_866) const {
    DensityMatrix rho = solve_real(base_ + detuning_866 * slope_);
    return 0.5 * (rho + rho.adjoint()).eval();
}

double SpectrumSolver::p_population_at(double detuning_866) const {
    // Without 397 light everything ends in S: exactly dark, whatever the
    // solver's rounding says.
    if (config_.rabi_397 == 0.0) return 0.0;
    try {
        return p_population(steady_state_at(detuning_866));
    } catch (const MultiplicityError&) {
        const double shared = shared_p_population(base_ + detuning_866 * slope_);
        if (std::isfinite(shared)) return shared;
        throw;
    }
}

SpectrumScan excitation_spectrum(const IonConfig& config, std::span<const double> detuning_866, double scale,
                                 double background, bool shot_noise, std::uint64_t seed) {
    validate(config);
    if (!(scale >= 0.0) || !(background >= 0.0)) throw InvalidModel("scale and background must be non-negative");
    for (double d : detuning_866)
        if (!std::isfinite(d)) throw DomainError("detuning grid must be finite");
    SpectrumScan scan;
    scan.detuning_866.assign(detuning_866.begin(), detuning_866.end());
    scan.scale = scale;
    scan.background = background;
    scan.shot_noise = shot_noise;
    const SpectrumSolver solver(config);
    boost::random::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < detuning_866.size(); ++i) {
        double model = std::nan("");
        try {
            model = scale * config.decay_p_to_s * std::max(0.0, solver.p_population_at(detuning_866[i])) + background;
        } catch (const MultiplicityError&) {
            scan.gaps.push_back(i);
        }
        double counts = model;
        if (shot_noise && std::isfinite(model))
            counts = model > 0.0 ? static_cast<double>(boost::random::poisson_distribution<long, double>(model)(rng))
                                 : 0.0;
        scan.model.push_back(model);
        scan.fluorescence.push_back(counts);
    }
    return scan;
}

std::vector<DarkResonance> dark_resonances(const IonConfig& config) {
    // The Zeeman Hamiltonian is diagonal in the |J m> basis, so its
    // eigenvalues are read off level by level.
    const Operator8 z = zeeman_hamiltonian(config);
    const CouplingTable t = coupling_amplitudes(config);
    std::vector<DarkResonance> out;
    for (const auto& a : t.transitions_397) {
        if (std::abs(a.factor) < 1e-12) continue;
        for (const auto& b : t.transitions_866) {
            if (std::abs(b.factor) < 1e-12 || b.excited != a.excited) continue;
            // E_S + Delta_397 = E_D + Delta_866
            const double d = config.detuning_397 + z(a.ground, a.ground).real() - z(b.ground, b.ground).real();
            out.push_back({a.ground, b.ground, d});
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.detuning_866 < y.detuning_866; });
    return out;
}

std::vector<double> spectrum_dips(const SpectrumScan& scan) {
    std::vector<double> dips;
    const auto& y = scan.model;
    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        if (!std::isfinite(y[i - 1]) || !std::isfinite(y[i]) || !std::isfinite(y[i + 1])) continue;
        if (y[i] < y[i - 1] && y[i] <= y[i + 1]) dips.push_back(scan.detuning_866[i]);
    }
    return dips;
}

}  // namespace translock
