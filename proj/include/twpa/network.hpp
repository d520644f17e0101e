#pragma once

// Small-signal analysis: ABCD two-port cascades, S-parameter extraction with
// power-wave references, characteristic impedance / cutoff / group velocity
// of an LC ladder cell, and a direct nodal AC solve of a linearised chain.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"

namespace twpa {

struct TwoPortABCD {
    std::complex<double> a{1.0, 0.0}, b{0.0, 0.0}, c{0.0, 0.0}, d{1.0, 0.0};
    double freq = 0.0;  ///< Hz

    std::complex<double> det() const { return a * d - b * c; }
};

struct SParams {
    std::complex<double> s11, s21, s12, s22;
    double z_ref_in = 50.0, z_ref_out = 50.0;
};

inline TwoPortABCD abcd_identity(double f = 0.0) { return {1.0, 0.0, 0.0, 1.0, f}; }

inline TwoPortABCD abcd_series(std::complex<double> z, double f) {
    return {1.0, z, 0.0, 1.0, f};
}

inline TwoPortABCD abcd_shunt(std::complex<double> y, double f) {
    return {1.0, 0.0, y, 1.0, f};
}

inline TwoPortABCD abcd_cascade(const TwoPortABCD& l, const TwoPortABCD& r) {
    return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d,
            l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d, l.freq};
}

inline TwoPortABCD abcd_cascade(const std::vector<TwoPortABCD>& ms) {
    TwoPortABCD acc = abcd_identity(ms.empty() ? 0.0 : ms.front().freq);
    for (const auto& m : ms) acc = abcd_cascade(acc, m);
    return acc;
}

/// N-fold cascade of one cell by binary exponentiation.
inline TwoPortABCD abcd_power(TwoPortABCD m, long n) {
    TwoPortABCD acc = abcd_identity(m.freq);
    while (n > 0) {
        if (n & 1) acc = abcd_cascade(acc, m);
        m = abcd_cascade(m, m);
        n >>= 1;
    }
    return acc;
}

/// ABCD -> S conversion for real reference impedances (power-wave
/// convention; reduces to the textbook 50-ohm formula for equal references).
inline SParams abcd_to_s(const TwoPortABCD& m, double z_ref_in = 50.0, double z_ref_out = 50.0) {
    if (!(z_ref_in > 0.0) || !(z_ref_out > 0.0))
        throw ConfigError("abcd_to_s: reference impedances must be > 0");
    const std::complex<double> z1 = z_ref_in, z2 = z_ref_out;
    const std::complex<double> den = m.a * z2 + m.b + m.c * z1 * z2 + m.d * z1;
    if (std::abs(den) == 0.0) throw Error("abcd_to_s: singular denominator");
    const double r = 2.0 * std::sqrt(z_ref_in * z_ref_out);
    SParams s;
    s.z_ref_in = z_ref_in;
    s.z_ref_out = z_ref_out;
    s.s11 = (m.a * z2 + m.b - m.c * z1 * z2 - m.d * z1) / den;
    s.s21 = r * m.det() / den;
    s.s12 = r / den;
    s.s22 = (-m.a * z2 + m.b - m.c * z1 * z2 + m.d * z1) / den;
    return s;
}

struct UnitCellMetrics {
    double z_char = 0.0;    ///< sqrt(L/C), ohm
    double f_cutoff = 0.0;  ///< omega_c = 2/sqrt(LC), expressed in Hz
    double v_group = 0.0;   ///< a/sqrt(LC), m/s (low-frequency limit)
};

inline UnitCellMetrics unit_cell_metrics(double l, double c, double cell_pitch = 0.0) {
    if (!(l > 0.0) || !(c > 0.0)) throw ConfigError("unit_cell_metrics: L, C must be > 0");
    UnitCellMetrics m;
    m.z_char = std::sqrt(l / c);
    m.f_cutoff = 2.0 / std::sqrt(l * c) / kTwoPi;
    m.v_group = cell_pitch > 0.0 ? cell_pitch / std::sqrt(l * c) : 0.0;
    return m;
}

/// Wavenumber-per-cell of the discrete LC ladder, k*a = 2 asin(w sqrt(LC)/2).
/// An optional capacitance in parallel with the series inductor shifts the
/// effective inductance to L/(1 - w^2 L Cj).
inline double ladder_wavenumber(double omega, double l, double c, double c_par = 0.0) {
    const double l_eff = c_par > 0.0 ? l / (1.0 - omega * omega * l * c_par) : l;
    if (!(l_eff > 0.0)) throw Error("ladder_wavenumber: series branch above its self-resonance");
    const double x = 0.5 * omega * std::sqrt(l_eff * c);
    if (x >= 1.0) throw Error("ladder_wavenumber: frequency above cutoff");
    return 2.0 * std::asin(x);
}

/// One linearised TWPA cell: series inductor (with parallel junction
/// capacitance) followed by a shunt capacitor to ground.
struct LinearCell {
    double l_series = 0.0;
    double c_junction = 0.0;
    double c_shunt = 0.0;
    double r_shunt = 0.0;  ///< optional loss resistor parallel to c_shunt; 0 = none
};

inline TwoPortABCD linear_cell_abcd(const LinearCell& cell, double f) {
    const std::complex<double> jw(0.0, kTwoPi * f);
    std::complex<double> y_series = 1.0 / (jw * cell.l_series) + jw * cell.c_junction;
    std::complex<double> y_shunt = jw * cell.c_shunt;
    if (cell.r_shunt > 0.0) y_shunt += 1.0 / cell.r_shunt;
    return abcd_cascade(abcd_series(1.0 / y_series, f), abcd_shunt(y_shunt, f));
}

/// ABCD of n identical linearised cells.
inline TwoPortABCD linear_chain_abcd(const LinearCell& cell, long n_cells, double f) {
    return abcd_power(linear_cell_abcd(cell, f), n_cells);
}

/// Input impedance of a chain terminated in z_load: (A Zl + B)/(C Zl + D).
inline std::complex<double> input_impedance(const TwoPortABCD& m, std::complex<double> z_load) {
    const std::complex<double> den = m.c * z_load + m.d;
    if (std::abs(den) == 0.0) return std::complex<double>(std::numeric_limits<double>::infinity(), 0.0);
    return (m.a * z_load + m.b) / den;
}

/// Input impedance recovered from s11: Z0 (1+G)/(1-G).
inline std::complex<double> input_impedance_from_s11(std::complex<double> s11, double z0) {
    const std::complex<double> den = 1.0 - s11;
    if (std::abs(den) == 0.0) return std::complex<double>(std::numeric_limits<double>::infinity(), 0.0);
    return z0 * (1.0 + s11) / den;
}

/// Direct nodal AC solve of a chain of identical linearised cells driven by
/// a Norton source (amplitude `i_src` at node 0 behind z_source). Returns
/// the node-voltage phasors (node 0 = input, node n = output across z_load).
inline Eigen::VectorXcd linear_chain_nodal_solve(const LinearCell& cell, int n_cells, double f,
                                                 std::complex<double> i_src, double z_source,
                                                 double z_load) {
    const int n = n_cells + 1;
    const std::complex<double> jw(0.0, kTwoPi * f);
    const std::complex<double> y_ser = 1.0 / (jw * cell.l_series) + jw * cell.c_junction;
    std::complex<double> y_sh = jw * cell.c_shunt;
    if (cell.r_shunt > 0.0) y_sh += 1.0 / cell.r_shunt;

    Eigen::SparseMatrix<std::complex<double>> y(n, n);
    std::vector<Eigen::Triplet<std::complex<double>>> t;
    auto add = [&](int i, int j, std::complex<double> v) { t.emplace_back(i, j, v); };
    add(0, 0, 1.0 / z_source);
    add(n - 1, n - 1, 1.0 / z_load);
    for (int k = 0; k < n_cells; ++k) {
        add(k, k, y_ser);
        add(k + 1, k + 1, y_ser + y_sh);
        add(k, k + 1, -y_ser);
        add(k + 1, k, -y_ser);
    }
    y.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
    rhs[0] = i_src;
    Eigen::SparseLU<Eigen::SparseMatrix<std::complex<double>>> lu;
    lu.compute(y);
    if (lu.info() != Eigen::Success) throw SingularJacobianError("nodal AC solve failed");
    return lu.solve(rhs);
}

}  // namespace twpa
