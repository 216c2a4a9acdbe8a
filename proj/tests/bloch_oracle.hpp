#ifndef TRANSLOCK_TESTS_BLOCH_ORACLE_HPP
#define TRANSLOCK_TESTS_BLOCH_ORACLE_HPP

// Independent reference for the 8-level model, shared by the unit tests and
// the acceptance run.

#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "translock/bloch.hpp"
#include "translock/constants.hpp"

namespace bloch_oracle {

using namespace translock;
using cd = std::complex<double>;

inline const double mhz = constants::two_pi * 1e6;

// Condon-Shortley values <j_g m_g; 1 q | 1/2 m_e> from the j2 = 1 tables.
// index: [m_e + 1/2][q + 1]
inline constexpr double r3 = 0.57735026918962576;   // 1/sqrt(3)
inline constexpr double r23 = 0.81649658092772603;  // sqrt(2/3)
inline constexpr double r6 = 0.40824829046386302;   // 1/sqrt(6)
inline constexpr double r2 = 0.70710678118654752;   // 1/sqrt(2)
// S1/2 -> P1/2 (m_g = m_e - q)
inline const double cg_s[2][3] = {{r23, -r3, 0.0}, {0.0, r3, -r23}};
// D3/2 -> P1/2
inline const double cg_d[2][3] = {{r6, -r3, r2}, {r2, -r3, r6}};

inline int s_of(double m) { return m < 0 ? 0 : 1; }
inline int d_of(double m) { return 4 + static_cast<int>(std::lround(m + 1.5)); }

// Hand-built jump operators: decay per emitted polarization and projector
// dephasing of S and D for the laser linewidths.
inline std::vector<Operator8> jump_operators(const IonConfig& c) {
    std::vector<Operator8> jumps;
    for (int q = -1; q <= 1; ++q) {
        Operator8 s = Operator8::Zero(), d = Operator8::Zero();
        for (int e = 0; e < 2; ++e) {
            const double me = e == 0 ? -0.5 : 0.5, mg = me - q;
            if (std::abs(mg) <= 0.5) s(s_of(mg), 2 + e) = std::sqrt(c.decay_p_to_s) * cg_s[e][q + 1];
            if (std::abs(mg) <= 1.5) d(d_of(mg), 2 + e) = std::sqrt(c.decay_p_to_d) * cg_d[e][q + 1];
        }
        jumps.push_back(s);
        jumps.push_back(d);
    }
    Operator8 ps = Operator8::Zero(), pd = Operator8::Zero();
    for (int i = 0; i < 2; ++i) ps(i, i) = 1.0;
    for (int i = 4; i < 8; ++i) pd(i, i) = 1.0;
    jumps.push_back(std::sqrt(2.0 * constants::two_pi * c.linewidth_397) * ps);
    jumps.push_back(std::sqrt(2.0 * constants::two_pi * c.linewidth_866) * pd);
    return jumps;
}

inline DensityMatrix lindblad_rhs(const Operator8& h, const std::vector<Operator8>& jumps, const DensityMatrix& rho) {
    DensityMatrix out = cd(0, -1) * (h * rho - rho * h);
    for (const auto& j : jumps) {
        const Operator8 jdj = j.adjoint() * j;
        out += j * rho * j.adjoint() - 0.5 * (jdj * rho + rho * jdj);
    }
    return out;
}

// Classical RK4 on the matrix equation, with the anticommutator folded into
// a non-Hermitian effective Hamiltonian.
inline DensityMatrix rk4(const Operator8& h, const std::vector<Operator8>& jumps, DensityMatrix rho, double t, double dt) {
    Operator8 heff = h;
    std::vector<Operator8> active;
    for (const auto& j : jumps) {
        if (j.isZero(0.0)) continue;
        heff -= cd(0, 0.5) * j.adjoint() * j;
        active.push_back(j);
    }
    const Operator8 heff_dag = heff.adjoint();
    auto rhs = [&](const DensityMatrix& r) {
        DensityMatrix out = cd(0, -1) * (heff * r - r * heff_dag);
        for (const auto& j : active) out += j * r * j.adjoint();
        return out;
    };
    const auto steps = static_cast<long>(std::ceil(t / dt));
    dt = t / static_cast<double>(steps);
    for (long i = 0; i < steps; ++i) {
        const DensityMatrix k1 = rhs(rho);
        const DensityMatrix k2 = rhs(rho + 0.5 * dt * k1);
        const DensityMatrix k3 = rhs(rho + 0.5 * dt * k2);
        const DensityMatrix k4 = rhs(rho + dt * k3);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return rho;
}

// Generator assembled column by column from the matrix-form right-hand side.
inline Liouvillian oracle_liouvillian(const Operator8& h, const std::vector<Operator8>& jumps) {
    Liouvillian l;
    for (int k = 0; k < ion_levels * ion_levels; ++k) {
        DensityMatrix e = DensityMatrix::Zero();
        e(k % ion_levels, k / ion_levels) = 1.0;
        l.col(k) = vectorize(lindblad_rhs(h, jumps, e));
    }
    return l;
}

inline DensityMatrix pure(int level) {
    DensityMatrix rho = DensityMatrix::Zero();
    rho(level, level) = 1.0;
    return rho;
}

// Strong-drive regression set: Rabi frequencies and detunings in MHz, field
// in G, linewidths in MHz, k angle and polarizations in rad, impurity. All
// relax by at least 15 e-folds within 200/Gamma_PS, so the integrator
// reaches the steady state to well below 1e-5.
struct Row {
    double o397, o866, d397, d866, b, lw397, lw866, k, p397, p866, imp;
};
inline constexpr std::array<Row, 10> regression{{
    {32.96, 56.55, -7.11, -9.85, 3.9, 1.75, 1.01, 0.6, 2.66, 2.96, 0.05},
    {41.13, 34.37, -9.32, -14.26, 7.29, 1.73, 2.41, 1.26, 1.29, 2.33, 0.01},
    {37.33, 52.82, -7.48, -12.16, 7.9, 1.75, 1.78, 0.92, 0.29, 2.64, 0.04},
    {50.12, 44.25, 1.09, -13.13, 4.99, 2.02, 2.6, 0.43, 0.14, 3.12, 0.02},
    {52.16, 45.38, -7.23, -11.08, 4.71, 1.89, 2.05, 0.42, 1.72, 1.57, 0.04},
    {45.47, 52.3, -10.71, 1.09, 4.83, 2.45, 2.1, 0.7, 0.17, 2.61, 0.03},
    {54.31, 44.97, -14.51, 3.21, 4.05, 2.43, 2.18, 0.77, 2.94, 0.66, 0.03},
    {34.58, 51.02, -4.5, -2.5, 7.99, 2.66, 1.44, 0.65, 0.46, 0.25, 0.01},
    {36.76, 38.85, -3.05, -6.61, 6.8, 2.69, 2.08, 1.04, 2.07, 0.63, 0.04},
    {51.52, 44.71, -0.56, -5.82, 6.61, 1.17, 2.77, 0.43, 2.56, 2.75, 0.0},
}};

inline IonConfig from_row(const Row& r) {
    IonConfig c;
    c.rabi_397 = r.o397 * mhz;
    c.rabi_866 = r.o866 * mhz;
    c.detuning_397 = r.d397 * mhz;
    c.detuning_866 = r.d866 * mhz;
    c.magnetic_field = r.b;
    c.linewidth_397 = r.lw397 * 1e6;
    c.linewidth_866 = r.lw866 * 1e6;
    c.k_angle = r.k;
    c.polarization_397 = r.p397;
    c.polarization_866 = r.p866;
    c.polarization_impurity = r.imp;
    return c;
}

inline IonConfig random_config(std::mt19937_64& rng) {
    auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    IonConfig c;
    c.magnetic_field = u(1.0, 8.0);
    c.rabi_397 = u(1.0, 40.0) * mhz;
    c.rabi_866 = u(1.0, 40.0) * mhz;
    c.detuning_397 = u(-40.0, 10.0) * mhz;
    c.detuning_866 = u(-40.0, 20.0) * mhz;
    c.linewidth_397 = u(0.0, 1e6);
    c.linewidth_866 = u(0.0, 1e6);
    c.k_angle = u(0.2, 1.4);
    c.polarization_397 = u(0.0, constants::pi);
    c.polarization_866 = u(0.0, constants::pi);
    c.polarization_impurity = u(0.0, 0.1);
    return c;
}

}  // namespace bloch_oracle

#endif  // TRANSLOCK_TESTS_BLOCH_ORACLE_HPP
