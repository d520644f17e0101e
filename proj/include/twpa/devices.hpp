#pragma once

// Constitutive relations of the nonlinear inductive branches: single
// Josephson junction, SNAIL-1N (one junction against N series junctions in a
// flux-biased loop) and the symmetric SQUID as its N=1, alpha=1 special case.
// Everything here is a pure function of immutable parameter records.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"

namespace twpa {

struct JJParams {
    double i_c = 0.0;  ///< critical current, A
    double c_j = 0.0;  ///< junction capacitance, F

    /// Zero-bias Josephson inductance Phi0/(2 pi i_c).
    double l_j0() const { return kPhi0 / (kTwoPi * i_c); }
};

/// SNAIL with one junction (i_c1) on branch 1 and n_series identical
/// junctions (i_c2 each) on branch 2. flux_f is F = pi * Phi_ext / Phi0.
struct SNAILParams {
    int n_series = 1;
    double i_c1 = 0.0;
    double i_c2 = 0.0;
    double c_j1 = 0.0;
    double c_j2 = 0.0;
    double flux_f = 0.0;

    double alpha() const { return i_c1 / i_c2; }
    double e_j1() const { return kPhi0 * i_c1 / kTwoPi; }
    double e_j2() const { return kPhi0 * i_c2 / kTwoPi; }
    /// Branch-2 per-junction phase from the loop flux constraint.
    double phi2(double phi1) const { return (2.0 * flux_f + phi1) / n_series; }

    static SNAILParams squid(double i_c, double flux_f, double c_j = 0.0) {
        return {1, i_c, i_c, c_j, c_j, flux_f};
    }
};

struct BranchState {
    double phi = 0.0;       ///< branch phase, rad (unbounded)
    double dc_phase = 0.0;  ///< operating-point phase, rad
};

// ---------------------------------------------------------------------------
// Josephson junction
// ---------------------------------------------------------------------------

inline double jj_current(double phi, const JJParams& p) { return p.i_c * std::sin(phi); }

inline double jj_current_derivative(double phi, const JJParams& p) {
    return p.i_c * std::cos(phi);
}

/// Bias-dependent inductance L_J0 / sqrt(1 - (i/i_c)^2).  Throws
/// OverCriticalError at or beyond the critical current, where the junction
/// leaves the superconducting branch.
inline double jj_inductance(double i_bias, const JJParams& p) {
    const double x = i_bias / p.i_c;
    if (std::abs(x) >= 1.0)
        throw OverCriticalError("bias " + std::to_string(i_bias) + " A >= critical current");
    return p.l_j0() / std::sqrt(1.0 - x * x);
}

/// Potential energy -E_J cos(phi).
inline double jj_energy(double phi, const JJParams& p) {
    return -(kPhi0 * p.i_c / kTwoPi) * std::cos(phi);
}

// ---------------------------------------------------------------------------
// SNAIL
// ---------------------------------------------------------------------------

struct SnailCurrents {
    double i1 = 0.0;
    double i2 = 0.0;
    double total = 0.0;
};

inline SnailCurrents snail_branch_currents(double phi1, const SNAILParams& p) {
    const double i1 = p.i_c1 * std::sin(phi1);
    const double i2 = p.i_c2 * std::sin(p.phi2(phi1));
    return {i1, i2, i1 + i2};
}

inline double snail_current(double phi1, const SNAILParams& p) {
    return snail_branch_currents(phi1, p).total;
}

inline double snail_current_derivative(double phi1, const SNAILParams& p) {
    return p.i_c1 * std::cos(phi1) + (p.i_c2 / p.n_series) * std::cos(p.phi2(phi1));
}

/// Total Josephson energy of the loop.
inline double snail_energy(double phi1, const SNAILParams& p) {
    return -p.e_j1() * std::cos(phi1) - p.n_series * p.e_j2() * std::cos(p.phi2(phi1));
}

/// d2 E / d phi1^2 (J).  Inverse inductance is (2 pi / Phi0)^2 times this.
inline double snail_energy_d2(double phi1, const SNAILParams& p) {
    return p.e_j1() * std::cos(phi1) + (p.e_j2() / p.n_series) * std::cos(p.phi2(phi1));
}

inline double snail_energy_d3(double phi1, const SNAILParams& p) {
    const int n = p.n_series;
    return -p.e_j1() * std::sin(phi1) - (p.e_j2() / (n * n)) * std::sin(p.phi2(phi1));
}

inline double snail_energy_d4(double phi1, const SNAILParams& p) {
    const int n = p.n_series;
    return -p.e_j1() * std::cos(phi1) - (p.e_j2() / (n * n * n)) * std::cos(p.phi2(phi1));
}

/// Flux-tunable inductance 1/L = (1/L_J0,1) cos(phi1) + (i_c2/i_c1)/(N
/// L_J0,1) cos((2F+phi1)/N).  Throws NonInductiveError when the cosine sum
/// is not positive.
inline double snail_inductance(double phi1, const SNAILParams& p) {
    const double u2 = snail_energy_d2(phi1, p);
    if (!(u2 > 0.0)) throw NonInductiveError("SNAIL branch not inductive at phi1=" +
                                             std::to_string(phi1));
    const double wb_per_rad = kPhi0 / kTwoPi;
    return wb_per_rad * wb_per_rad / u2;
}

/// Maximal supercurrent of the SNAIL at its flux bias (scan over one period).
inline double snail_max_supercurrent(const SNAILParams& p) {
    const double span = kTwoPi * p.n_series;
    double imax = 0.0;
    const int steps = 4096;
    for (int i = 0; i <= steps; ++i) {
        const double phi = -span / 2 + span * i / steps;
        imax = std::max(imax, std::abs(snail_current(phi, p)));
    }
    return imax;
}

/// Stable operating point: the root of i_total(phi1) = i_dc that minimises
/// the loop energy.  Global scan over one 2*pi*N period plus bracketed
/// bisection polish.  Throws NoSolutionError when the bias exceeds the
/// flux-dependent critical current.
inline double solve_snail_operating_point(double i_dc, const SNAILParams& p) {
    const double span = kTwoPi * p.n_series;
    const int steps = 8192;
    double best_phi = 0.0, best_energy = 0.0;
    bool found = false;
    double prev_phi = -span / 2;
    double prev_f = snail_current(prev_phi, p) - i_dc;
    for (int i = 1; i <= steps; ++i) {
        const double phi = -span / 2 + span * i / steps;
        const double f = snail_current(phi, p) - i_dc;
        if (prev_f == 0.0 || prev_f * f < 0.0) {
            double lo = prev_phi, hi = phi, flo = prev_f;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = snail_current(mid, p) - i_dc;
                if (flo * fm <= 0.0) hi = mid; else { lo = mid; flo = fm; }
            }
            const double root = 0.5 * (lo + hi);
            if (snail_energy_d2(root, p) > 0.0) {  // stable branch only
                const double e = snail_energy(root, p) - i_dc * (kPhi0 / kTwoPi) * root;
                if (!found || e < best_energy) {
                    best_energy = e;
                    best_phi = root;
                    found = true;
                }
            }
        }
        prev_phi = phi;
        prev_f = f;
    }
    if (!found)
        throw NoSolutionError("no stable SNAIL operating point for i_dc=" +
                              std::to_string(i_dc) + " A (max supercurrent " +
                              std::to_string(snail_max_supercurrent(p)) + " A)");
    return best_phi;
}

// ---------------------------------------------------------------------------
// Analytic helpers
// ---------------------------------------------------------------------------

struct TaylorHarmonics {
    /// Harmonic amplitudes of v(t) in units of L_J0 * omega * I_c,
    /// peak convention; entry h is the coefficient of harmonic h.
    std::vector<std::complex<double>> amplitudes;
    bool convergence_warning = false;
};

/// Harmonics of the junction voltage v(t) = L_J(i) di/dt for a drive
/// i = I_dc + I~ sin(w t), alpha = I_dc/I_c, beta = I~/I_c, from the Taylor
/// expansion of 1/sqrt(1-x^2) about alpha truncated at `order`.  Serves as
/// the analytic oracle for the even/odd harmonic selection rules.
inline TaylorHarmonics taylor_voltage_harmonics(double alpha_dc, double beta_ac, int order) {
    if (order < 1) throw ConfigError("taylor_voltage_harmonics: order must be >= 1");
    TaylorHarmonics out;
    out.convergence_warning = std::abs(alpha_dc) + std::abs(beta_ac) >= 0.95;

    // Power series q(u) = (1 - (alpha+u)^2)^(-1/2) = sum q_k u^k from the
    // ODE 2 p q' + p' q = 0 with p(u) = (1-alpha^2) - 2 alpha u - u^2.
    const int K = order;
    std::vector<double> q(static_cast<size_t>(K) + 1, 0.0);
    const double p0 = 1.0 - alpha_dc * alpha_dc;
    if (p0 <= 0.0) throw ConfigError("taylor_voltage_harmonics: |alpha| must be < 1");
    q[0] = 1.0 / std::sqrt(p0);
    // recurrence: 2 p0 (k+1) q_{k+1} = (4k+1)? derive termwise:
    // sum_k [2 p q']_k + [p' q]_k = 0 with p' = -2 alpha - 2 u.
    // [2 p q']_k = 2(p0 (k+1) q_{k+1} - 2 alpha k q_k - (k-1) q_{k-1})
    // [p' q]_k   = -2 alpha q_k - 2 q_{k-1}
    for (int k = 0; k < K; ++k) {
        const double qkm1 = k >= 1 ? q[static_cast<size_t>(k) - 1] : 0.0;
        const double rhs = 2.0 * (2.0 * alpha_dc * k * q[static_cast<size_t>(k)] +
                                  (k - 1) * qkm1) +
                           2.0 * alpha_dc * q[static_cast<size_t>(k)] + 2.0 * qkm1;
        q[static_cast<size_t>(k) + 1] = rhs / (2.0 * p0 * (k + 1));
    }

    // v/(L_J0 w I_c) = beta cos(th) sum_k q_k beta^k sin^k(th).
    // Work in complex exponential coefficients c_h, h = -H..H.
    const int H = order + 1;
    const int width = 2 * H + 1;
    std::vector<std::complex<double>> coef(static_cast<size_t>(width), 0.0);
    auto at = [&](std::vector<std::complex<double>>& v, int h) -> std::complex<double>& {
        return v[static_cast<size_t>(h + H)];
    };
    // accumulate sum_k q_k beta^k sin^k, then multiply by beta cos
    std::vector<std::complex<double>> sink(static_cast<size_t>(width), 0.0);  // sin^k
    at(sink, 0) = 1.0;
    double betak = 1.0;
    for (int k = 0; k <= K; ++k) {
        for (int h = -H; h <= H; ++h) at(coef, h) += q[static_cast<size_t>(k)] * betak * at(sink, h);
        // sink *= sin = (e^{i} - e^{-i})/(2i)
        std::vector<std::complex<double>> nxt(static_cast<size_t>(width), 0.0);
        const std::complex<double> half_over_i(0.0, -0.5);
        for (int h = -H; h <= H; ++h) {
            if (at(sink, h) == 0.0) continue;
            if (h + 1 <= H) at(nxt, h + 1) += half_over_i * at(sink, h);
            if (h - 1 >= -H) at(nxt, h - 1) -= half_over_i * at(sink, h);
        }
        sink.swap(nxt);
        betak *= beta_ac;
    }
    // multiply by beta cos = beta (e^{i} + e^{-i})/2
    std::vector<std::complex<double>> vh(static_cast<size_t>(width), 0.0);
    for (int h = -H; h <= H; ++h) {
        if (at(coef, h) == 0.0) continue;
        if (h + 1 <= H) at(vh, h + 1) += 0.5 * beta_ac * at(coef, h);
        if (h - 1 >= -H) at(vh, h - 1) += 0.5 * beta_ac * at(coef, h);
    }
    // peak-amplitude phasors: dc once, ac bins twice the positive-frequency
    // exponential coefficient
    out.amplitudes.resize(static_cast<size_t>(order) + 1);
    out.amplitudes[0] = at(vh, 0);
    for (int h = 1; h <= order; ++h) out.amplitudes[static_cast<size_t>(h)] = 2.0 * at(vh, h);
    return out;
}

struct SnailExpansion {
    double phi_min = 0.0;  ///< operating-point phase (energy minimum at i_dc = 0)
    double c2 = 0.0;       ///< quadratic coefficient, E''(phi_min)/E''(phi_min) == 1 scale
    double c3 = 0.0;       ///< 3WM coefficient, E'''/E'' at the minimum
    double c4 = 0.0;       ///< 4WM diagnostic, E''''/E'' at the minimum
};

/// Taylor expansion of the SNAIL potential about its minimum, normalised by
/// the quadratic term: U(phi_min + d) = U'' (d^2/2 + c3 d^3/6 + c4 d^4/24).
/// This normalisation is scale-free and feeds the coupled-mode model
/// directly.
inline SnailExpansion extract_c3(const SNAILParams& p) {
    SnailExpansion out;
    out.phi_min = solve_snail_operating_point(0.0, p);
    const double u2 = snail_energy_d2(out.phi_min, p);
    out.c2 = 1.0;
    out.c3 = snail_energy_d3(out.phi_min, p) / u2;
    out.c4 = snail_energy_d4(out.phi_min, p) / u2;
    return out;
}

}  // namespace twpa
