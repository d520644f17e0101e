#pragma once

// Reduced slowly-varying-envelope model for pump harmonic generation on a
// weakly dispersive nonlinear line: M coupled complex amplitudes a_m(xi)
// integrated with fixed-step RK4 in the dimensionless distance xi.

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"

namespace twpa {

/// Parameters of the harmonic-envelope ODE system.
struct CMParams {
    int n_modes = 2;        ///< number of retained harmonics M >= 1
    double mu = 0.0;        ///< dimensionless phase-mismatch parameter
    double xi_end = 1.0;    ///< integration endpoint in xi
    int n_steps = 2000;     ///< RK4 steps
    int store_every = 1;    ///< trajectory decimation (1 = every step)
};

using CMState = std::vector<std::complex<double>>;  ///< a_1..a_M

/// Trajectory sample.
struct CMSample {
    double xi = 0.0;
    CMState a;
};

struct CMResult {
    std::vector<CMSample> trajectory;  ///< includes xi=0 and xi=xi_end
    CMState final_state;
};

/// Phase-walkoff exponent d_{n,m} = n*m*(n-m)/2 from the quadratic part of
/// the lattice dispersion.
inline double cm_walkoff(int n, int m) { return 0.5 * static_cast<double>(n) * m * (n - m); }

/// Right-hand side of the envelope system:
///   da_m/dxi = m [ sum_{n=m+1}^{M} a_n conj(a_{n-m}) e^{+i mu xi d_{n,m}}
///               - 1/2 sum_{n=1}^{m-1} a_n a_{m-n}   e^{-i mu xi d_{n,m-n}} ]
inline CMState cm_rhs(const CMParams& p, double xi, const CMState& a) {
    const int m_max = p.n_modes;
    CMState da(m_max, {0.0, 0.0});
    const std::complex<double> j(0.0, 1.0);
    for (int m = 1; m <= m_max; ++m) {
        std::complex<double> s{0.0, 0.0};
        for (int n = m + 1; n <= m_max; ++n) {
            const double d = cm_walkoff(n, m);
            s += a[n - 1] * std::conj(a[n - m - 1]) * std::exp(j * (p.mu * xi * d));
        }
        for (int n = 1; n <= m - 1; ++n) {
            const double d = cm_walkoff(m, n);
            s -= 0.5 * a[n - 1] * a[m - n - 1] * std::exp(-j * (p.mu * xi * d));
        }
        da[m - 1] = static_cast<double>(m) * s;
    }
    return da;
}

/// Sum of |a_m|^2; conserved exactly by the continuous system.
inline double cm_energy(const CMState& a) {
    double e = 0.0;
    for (const auto& v : a) e += std::norm(v);
    return e;
}

/// Integrate the envelope system with classical RK4 from the given initial
/// amplitudes (padded/truncated to n_modes; default [1, 0, ...]).
inline CMResult cm_integrate(const CMParams& p, CMState a0 = {}) {
    if (p.n_modes < 1) throw ConfigError("cm_integrate: n_modes must be >= 1");
    if (p.n_steps < 1) throw ConfigError("cm_integrate: n_steps must be >= 1");
    a0.resize(p.n_modes, {0.0, 0.0});
    if (a0[0] == std::complex<double>(0.0, 0.0) && cm_energy(a0) == 0.0) a0[0] = 1.0;

    const double h = p.xi_end / p.n_steps;
    auto axpy = [&](const CMState& a, const CMState& k, double w) {
        CMState r(a.size());
        for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + w * k[i];
        return r;
    };

    CMResult res;
    CMState a = a0;
    double xi = 0.0;
    res.trajectory.push_back({xi, a});
    for (int s = 0; s < p.n_steps; ++s) {
        const CMState k1 = cm_rhs(p, xi, a);
        const CMState k2 = cm_rhs(p, xi + 0.5 * h, axpy(a, k1, 0.5 * h));
        const CMState k3 = cm_rhs(p, xi + 0.5 * h, axpy(a, k2, 0.5 * h));
        const CMState k4 = cm_rhs(p, xi + h, axpy(a, k3, h));
        for (int i = 0; i < p.n_modes; ++i)
            a[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        xi = (s + 1) * h;
        if ((s + 1) % p.store_every == 0 || s + 1 == p.n_steps)
            res.trajectory.push_back({xi, a});
    }
    res.final_state = a;
    return res;
}

/// Closed-form two-mode, matched (mu=0) solution: a1 = sech(xi),
/// a2 = -tanh(xi) for a unit real pump.
inline CMState cm_two_mode_matched(double xi) {
    return {std::complex<double>(1.0 / std::cosh(xi), 0.0),
            std::complex<double>(-std::tanh(xi), 0.0)};
}

/// Map physical position x (m or cells, matching `cell`'s units) to xi:
///   xi(x) = c3 * w1^2 * A1(0) * x / (4 a w0^2)
/// where A1(0) is the initial pump phase amplitude across one cell, a the
/// cell pitch, w0 = 1/sqrt(L C) the cell resonance and w1 the pump angular
/// frequency.
struct CMScaling {
    double c3 = 0.0;        ///< cubic/quadratic potential-energy ratio at the bias point
    double phase_amp = 0.0; ///< |A1| at x=0, rad
    double omega_pump = 0.0;
    double omega_cell = 0.0;  ///< 1/sqrt(LC)
    double cell_pitch = 1.0;  ///< use 1.0 to work in units of cells
};

inline double xi_of_position(const CMScaling& s, double x) {
    if (!(s.omega_cell > 0.0)) throw ConfigError("xi_of_position: omega_cell must be > 0");
    return s.c3 * s.omega_pump * s.omega_pump * s.phase_amp * x /
           (4.0 * s.cell_pitch * s.omega_cell * s.omega_cell);
}

/// Dimensionless mismatch from the physical wavenumbers of pump and second
/// harmonic: mu = (k2 - 2 k1) / (dxi/dx).
inline double mu_of_dispersion(const CMScaling& s, double k_fund, double k_second) {
    const double dxi_dx = xi_of_position(s, 1.0);
    if (dxi_dx == 0.0) throw ConfigError("mu_of_dispersion: zero nonlinear rate");
    return (k_second - 2.0 * k_fund) / dxi_dx;
}

}  // namespace twpa
