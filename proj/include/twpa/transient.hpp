#pragma once

// Time-domain integration of phase-branch circuits with the trapezoidal
// rule. Branch phases are eliminated affinely inside each step, so Newton
// runs on the node voltages only; the sparsity pattern is fixed and the
// factorisation is symbolic-analysed once.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"
#include "twpa/netlist.hpp"

namespace twpa {

namespace detail {

/// Node index -> unknown index (ground drops out).
inline int unk(int node) { return node - 1; }

}  // namespace detail

/// Circuit compiled to matrices. Unknowns are all non-ground node voltages;
/// prescribed nodes keep a slot but their KCL row is replaced by an identity
/// equation pinning them to the drive waveform.
class CompiledCircuit {
public:
    explicit CompiledCircuit(const Circuit& c) : circuit_(c) {
        c.check();
        n_ = c.n_nodes - 1;
        prescribed_.assign(n_, -1);
        for (size_t i = 0; i < c.prescribed.size(); ++i)
            prescribed_[detail::unk(c.prescribed[i].node)] = static_cast<int>(i);

        std::vector<Eigen::Triplet<double>> tc, tg;
        auto stamp = [&](std::vector<Eigen::Triplet<double>>& t, int p, int nn, double v) {
            const int ip = detail::unk(p), in = detail::unk(nn);
            if (ip >= 0 && prescribed_[ip] < 0) {
                t.emplace_back(ip, ip, v);
                if (in >= 0) t.emplace_back(ip, in, -v);
            }
            if (in >= 0 && prescribed_[in] < 0) {
                t.emplace_back(in, in, v);
                if (ip >= 0) t.emplace_back(in, ip, -v);
            }
        };
        for (const auto& cap : c.capacitors) stamp(tc, cap.node_p, cap.node_n, cap.capacitance);
        for (const auto& b : c.branches) {
            const double cj = branch_capacitance(b.device);
            if (cj > 0.0) stamp(tc, b.node_p, b.node_n, cj);
        }
        for (const auto& r : c.resistors) stamp(tg, r.node_p, r.node_n, 1.0 / r.resistance);

        cmat_.resize(n_, n_);
        gmat_.resize(n_, n_);
        cmat_.setFromTriplets(tc.begin(), tc.end());
        gmat_.setFromTriplets(tg.begin(), tg.end());
    }

    int n_unknowns() const { return n_; }
    int n_branches() const { return static_cast<int>(circuit_.branches.size()); }
    const Circuit& circuit() const { return circuit_; }
    bool is_prescribed(int unknown) const { return prescribed_[unknown] >= 0; }

    /// Branch voltage v_p - v_n from the unknown vector.
    double branch_voltage(const Eigen::VectorXd& v, int b) const {
        const auto& br = circuit_.branches[b];
        const int ip = detail::unk(br.node_p), in = detail::unk(br.node_n);
        return (ip >= 0 ? v[ip] : 0.0) - (in >= 0 ? v[in] : 0.0);
    }

    /// KCL contribution g(v, phi, t) = G v + A i_b(phi) - s(t), with
    /// prescribed rows overwritten by v - V_drive(t).
    Eigen::VectorXd algebraic_residual(const Eigen::VectorXd& v, const std::vector<double>& phi,
                                       double t) const {
        Eigen::VectorXd g = gmat_ * v;
        for (int b = 0; b < n_branches(); ++b) {
            const double i = branch_current(circuit_.branches[b].device, phi[b]);
            const auto& br = circuit_.branches[b];
            const int ip = detail::unk(br.node_p), in = detail::unk(br.node_n);
            if (ip >= 0 && prescribed_[ip] < 0) g[ip] += i;
            if (in >= 0 && prescribed_[in] < 0) g[in] -= i;
        }
        for (const auto& s : circuit_.sources) {
            const double i = s.value(t);
            const int ip = detail::unk(s.node_p), in = detail::unk(s.node_n);
            if (ip >= 0 && prescribed_[ip] < 0) g[ip] -= i;
            if (in >= 0 && prescribed_[in] < 0) g[in] += i;
        }
        for (int k = 0; k < n_; ++k) {
            if (prescribed_[k] >= 0) g[k] = v[k] - circuit_.prescribed[prescribed_[k]].value(t);
        }
        return g;
    }

    const Eigen::SparseMatrix<double>& cmat() const { return cmat_; }
    const Eigen::SparseMatrix<double>& gmat() const { return gmat_; }

private:
    Circuit circuit_;
    int n_ = 0;
    std::vector<int> prescribed_;  ///< unknown index -> prescribed list index or -1
    Eigen::SparseMatrix<double> cmat_, gmat_;
};

struct TransientOptions {
    double dt = 1e-12;          ///< s
    double t_end = 1e-9;        ///< s
    double newton_rtol = 1e-9;  ///< Newton update, relative to the voltage scale
    double newton_atol = 1e-16; ///< Newton update floor, V
    int max_newton = 30;
    int record_stride = 1;      ///< keep every k-th accepted step
};

/// Recorded trajectory. `voltages` rows are time samples, columns the
/// non-ground nodes (node i in column i-1); `phases` likewise per branch.
struct TransientResult {
    std::vector<double> times;
    Eigen::MatrixXd voltages;
    Eigen::MatrixXd phases;
    long n_steps = 0;
    long n_newton = 0;
};

class TransientSolver {
public:
    explicit TransientSolver(const Circuit& c) : cc_(c) { build_pattern(); }

    const CompiledCircuit& compiled() const { return cc_; }

    /// Integrate from the given initial state (defaults: all zero). The
    /// callback, if set, sees every accepted step and may be used for event
    /// detection.
    TransientResult run(const TransientOptions& opt, Eigen::VectorXd v0 = {},
                        std::vector<double> phi0 = {},
                        const std::function<void(double, const Eigen::VectorXd&,
                                                 const std::vector<double>&)>& on_step = {}) {
        const int n = cc_.n_unknowns();
        const int nb = cc_.n_branches();
        if (v0.size() == 0) v0 = Eigen::VectorXd::Zero(n);
        if (phi0.empty()) phi0.assign(nb, 0.0);
        if (v0.size() != n || static_cast<int>(phi0.size()) != nb)
            throw ConfigError("transient: initial state has wrong size");
        if (!(opt.dt > 0.0) || !(opt.t_end > 0.0)) throw ConfigError("transient: bad time grid");

        const long n_steps = static_cast<long>(std::ceil(opt.t_end / opt.dt));
        const long n_rec = n_steps / opt.record_stride + 2;
        TransientResult res;
        res.times.reserve(n_rec);
        res.voltages.resize(n_rec, n);
        res.phases.resize(n_rec, nb);

        Eigen::VectorXd v = v0;
        std::vector<double> phi = phi0;
        double t = 0.0;
        auto record = [&]() {
            const long r = static_cast<long>(res.times.size());
            res.times.push_back(t);
            res.voltages.row(r) = v.transpose();
            for (int b = 0; b < nb; ++b) res.phases(r, b) = phi[b];
        };
        record();
        if (on_step) on_step(t, v, phi);

        Eigen::VectorXd g_prev = cc_.algebraic_residual(v, phi, t);
        for (long k = 0; k < n_steps; ++k) {
            const double t1 = (k + 1 == n_steps) ? opt.t_end : (k + 1) * opt.dt;
            const double h = t1 - t;
            step(v, phi, g_prev, t, t1, h, opt, res.n_newton);
            t = t1;
            ++res.n_steps;
            if ((k + 1) % opt.record_stride == 0 || k + 1 == n_steps) record();
            if (on_step) on_step(t, v, phi);
        }
        res.voltages.conservativeResize(static_cast<long>(res.times.size()), n);
        res.phases.conservativeResize(static_cast<long>(res.times.size()), nb);
        return res;
    }

private:
    void build_pattern() {
        // Superset pattern: C + G + branch coupling blocks.
        const int n = cc_.n_unknowns();
        std::vector<Eigen::Triplet<double>> t;
        for (int kk = 0; kk < cc_.cmat().outerSize(); ++kk)
            for (Eigen::SparseMatrix<double>::InnerIterator it(cc_.cmat(), kk); it; ++it)
                t.emplace_back(it.row(), it.col(), 1.0);
        for (int kk = 0; kk < cc_.gmat().outerSize(); ++kk)
            for (Eigen::SparseMatrix<double>::InnerIterator it(cc_.gmat(), kk); it; ++it)
                t.emplace_back(it.row(), it.col(), 1.0);
        for (const auto& b : cc_.circuit().branches) {
            const int ip = detail::unk(b.node_p), in = detail::unk(b.node_n);
            if (ip >= 0) t.emplace_back(ip, ip, 1.0);
            if (in >= 0) t.emplace_back(in, in, 1.0);
            if (ip >= 0 && in >= 0) {
                t.emplace_back(ip, in, 1.0);
                t.emplace_back(in, ip, 1.0);
            }
        }
        for (int i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
        pattern_.resize(n, n);
        pattern_.setFromTriplets(t.begin(), t.end());
        lu_.analyzePattern(pattern_);
        analyzed_ = true;
    }

    /// One trapezoidal step t0 -> t1. Solves
    ///   C (v1 - v0) + (h/2) [g(v1, phi1, t1) + g(v0, phi0, t0)] = 0
    /// with phi1 = phi0 + (h/2) kappa (u1 + u0) eliminated analytically.
    void step(Eigen::VectorXd& v, std::vector<double>& phi, Eigen::VectorXd& g_prev, double t0,
              double t1, double h, const TransientOptions& opt, long& newton_count) {
        const int n = cc_.n_unknowns();
        const int nb = cc_.n_branches();
        const Eigen::VectorXd v0 = v;
        const std::vector<double> phi0 = phi;
        std::vector<double> u0(nb);
        for (int b = 0; b < nb; ++b) u0[b] = cc_.branch_voltage(v0, b);

        const double kap = kRadPerWb;  // d(phi)/dt per volt
        std::vector<double> phi1(nb);
        auto update_phi = [&](const Eigen::VectorXd& v1) {
            for (int b = 0; b < nb; ++b)
                phi1[b] = phi0[b] + 0.5 * h * kap * (cc_.branch_voltage(v1, b) + u0[b]);
        };

        Eigen::VectorXd v1 = v0;  // predictor: previous value
        for (int it = 0; it < opt.max_newton; ++it) {
            ++newton_count;
            update_phi(v1);
            Eigen::VectorXd g1 = cc_.algebraic_residual(v1, phi1, t1);
            Eigen::VectorXd f = cc_.cmat() * (v1 - v0) + 0.5 * h * (g1 + g_prev);
            // Prescribed rows carry the bare pinning equation, not a
            // trapezoidal average (their "g" entry is v - V(t)).
            for (int i = 0; i < n; ++i)
                if (cc_.is_prescribed(i)) f[i] = g1[i];

            // Jacobian: C + (h/2) G + (h/2)^2 kappa A diag(i') A^T, with
            // prescribed rows replaced by identity.
            Eigen::SparseMatrix<double> jac =
                cc_.cmat() + (0.5 * h) * cc_.gmat() + pattern_zero();
            std::vector<Eigen::Triplet<double>> tb;
            for (int b = 0; b < nb; ++b) {
                const auto& br = cc_.circuit().branches[b];
                const double w =
                    0.25 * h * h * kap * branch_current_derivative(br.device, phi1[b]);
                const int ip = detail::unk(br.node_p), in = detail::unk(br.node_n);
                if (ip >= 0 && !cc_.is_prescribed(ip)) {
                    tb.emplace_back(ip, ip, w);
                    if (in >= 0) tb.emplace_back(ip, in, -w);
                }
                if (in >= 0 && !cc_.is_prescribed(in)) {
                    tb.emplace_back(in, in, w);
                    if (ip >= 0) tb.emplace_back(in, ip, -w);
                }
            }
            for (int i = 0; i < n; ++i)
                if (cc_.is_prescribed(i)) tb.emplace_back(i, i, 1.0);
            Eigen::SparseMatrix<double> extra(n, n);
            extra.setFromTriplets(tb.begin(), tb.end());
            jac += extra;
            // Prescribed rows: wipe C/G contributions so only the identity remains.
            for (int kk = 0; kk < jac.outerSize(); ++kk)
                for (Eigen::SparseMatrix<double>::InnerIterator itj(jac, kk); itj; ++itj)
                    if (cc_.is_prescribed(static_cast<int>(itj.row())))
                        itj.valueRef() = (itj.row() == itj.col()) ? 1.0 : 0.0;

            lu_.factorize(jac);
            if (lu_.info() != Eigen::Success)
                throw SingularJacobianError("transient: step matrix is singular");
            const Eigen::VectorXd delta = lu_.solve(f);
            v1 -= delta;

            // Update-based convergence: always take at least one correction
            // so vanishing residual scales cannot freeze the integration.
            const double scale = std::max(v1.lpNorm<Eigen::Infinity>(), v0.lpNorm<Eigen::Infinity>());
            if (delta.lpNorm<Eigen::Infinity>() <= opt.newton_rtol * scale + opt.newton_atol) {
                update_phi(v1);
                v = v1;
                phi = phi1;
                g_prev = cc_.algebraic_residual(v1, phi1, t1);
                return;
            }
        }
        throw MaxIterationsError("transient: Newton did not converge in a step");
    }

    /// Zero matrix with the full symbolic pattern, so `jac` always matches
    /// the analysed structure.
    Eigen::SparseMatrix<double> pattern_zero() const {
        Eigen::SparseMatrix<double> z = pattern_;
        for (int kk = 0; kk < z.outerSize(); ++kk)
            for (Eigen::SparseMatrix<double>::InnerIterator it(z, kk); it; ++it)
                it.valueRef() = 0.0;
        return z;
    }

    CompiledCircuit cc_;
    Eigen::SparseMatrix<double> pattern_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    bool analyzed_ = false;
};

// ---------------------------------------------------------------------------
// Periodic steady state by time stepping
// ---------------------------------------------------------------------------

struct PeriodicOptions {
    int steps_per_period = 512;
    int min_periods = 4;
    int max_periods = 400;
    double rel_tol = 1e-5;  ///< consecutive-period relative RMS difference
    double newton_rtol = 1e-9;
    double newton_atol = 1e-16;
    int max_newton = 30;
};

struct PeriodicResult {
    std::vector<double> times;  ///< one period, starting at the settled-period origin
    Eigen::MatrixXd voltages;   ///< steps_per_period+1 samples x nodes
    Eigen::MatrixXd phases;
    int periods_run = 0;
    double final_mismatch = 0.0;
};

/// Integrate period by period until two consecutive periods of the node
/// waveforms agree to rel_tol in RMS, then return the last period.
inline PeriodicResult run_to_periodic_steady_state(const Circuit& c, double period,
                                                   const PeriodicOptions& opt) {
    if (!(period > 0.0)) throw ConfigError("run_to_periodic_steady_state: bad period");
    TransientSolver solver(c);
    const int n = solver.compiled().n_unknowns();
    const int nb = solver.compiled().n_branches();

    TransientOptions to;
    to.dt = period / opt.steps_per_period;
    to.t_end = period;
    to.newton_rtol = opt.newton_rtol;
    to.newton_atol = opt.newton_atol;
    to.max_newton = opt.max_newton;
    to.record_stride = 1;

    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    std::vector<double> phi(nb, 0.0);
    Eigen::MatrixXd prev;
    PeriodicResult out;
    // Time origin advances period by period so the drive phase is continuous.
    for (int p = 0; p < opt.max_periods; ++p) {
        // Shift sources by re-integrating with absolute time offset folded in:
        // all drive tones are periodic with `period`, so restarting t at 0
        // each pass keeps them aligned as long as period is an integer
        // multiple of every tone period (callers guarantee this).
        TransientResult tr = solver.run(to, v, phi);
        const long last = static_cast<long>(tr.times.size()) - 1;
        v = tr.voltages.row(last).transpose();
        for (int b = 0; b < nb; ++b) phi[b] = tr.phases(last, b);
        out.periods_run = p + 1;

        if (prev.size() != 0) {
            const double diff = (tr.voltages - prev).norm();
            const double scale = prev.norm() + 1e-300;
            out.final_mismatch = diff / scale;
            if (p + 1 >= opt.min_periods && out.final_mismatch < opt.rel_tol) {
                out.times = tr.times;
                out.voltages = tr.voltages;
                out.phases = tr.phases;
                return out;
            }
        }
        prev = tr.voltages;
    }
    throw NoSteadyStateError("transient did not settle within the period budget");
}

/// Least-squares phasor extraction of one waveform at the listed frequencies
/// (plus dc). Returns complex peak amplitudes; sample times must cover an
/// integer number of periods of each frequency for clean separation.
inline std::vector<std::complex<double>> extract_phasors(const std::vector<double>& times,
                                                         const Eigen::VectorXd& samples,
                                                         const std::vector<double>& freqs) {
    const int m = static_cast<int>(times.size());
    const int nf = static_cast<int>(freqs.size());
    Eigen::MatrixXd a(m, 2 * nf + 1);
    for (int i = 0; i < m; ++i) {
        a(i, 0) = 1.0;
        for (int k = 0; k < nf; ++k) {
            a(i, 1 + 2 * k) = std::cos(kTwoPi * freqs[k] * times[i]);
            a(i, 2 + 2 * k) = std::sin(kTwoPi * freqs[k] * times[i]);
        }
    }
    Eigen::VectorXd x = a.colPivHouseholderQr().solve(samples);
    std::vector<std::complex<double>> out(nf + 1);
    out[0] = x[0];
    // cos/sin quadratures -> phasor with V(t) = Re(V e^{j w t}) convention.
    for (int k = 0; k < nf; ++k) out[k + 1] = {x[1 + 2 * k], -x[2 + 2 * k]};
    return out;
}

/// First time at which |value| crosses `threshold` going up, with linear
/// interpolation between samples; NaN if never crossed.
inline double front_arrival_time(const std::vector<double>& times, const Eigen::VectorXd& values,
                                 double threshold) {
    for (int i = 1; i < static_cast<int>(times.size()); ++i) {
        const double a = std::abs(values[i - 1]), b = std::abs(values[i]);
        if (a < threshold && b >= threshold) {
            const double w = (threshold - a) / (b - a);
            return times[i - 1] + w * (times[i] - times[i - 1]);
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Flux staircase of a junction loop under a slow current ramp
// ---------------------------------------------------------------------------

struct StaircaseOptions {
    double i_c = 1e-3;          ///< A, per junction (must exceed Phi0/l_loop)
    double c_j = 1e-12;         ///< F
    double l_loop = 100e-12;    ///< H
    double r_damp = 0.5;        ///< ohm, shunt across each junction
    double i_start = 0.9e-3;    ///< A, dc pre-bias below the first slip
    double i_stop = 1.15e-3;    ///< A, ramp endpoint
    double ramp_rate = 2e4;     ///< A/s
    double dt = 0.5e-12;        ///< s
    double v_gate = 100e-6;     ///< V, pulse-detection threshold on the bias node
    double settle = 2e-9;       ///< s, discard events before the pre-bias rings down
};

struct StaircaseResult {
    std::vector<double> slip_currents;    ///< A, ramp current at each phase slip
    std::vector<double> slip_phase_jumps; ///< rad, bias-junction phase advance per slip
    double mean_current_step = 0.0;       ///< A, mean slip-to-slip spacing in ramp current
    double loop_inductance = 0.0;
};

/// Ramp current into a two-junction loop closed by a linear inductor and
/// record the phase slips of the directly-biased junction. Each slip moves
/// one flux quantum into the loop, so consecutive slips are spaced by
/// Phi0 / l_loop in bias current. Slips are detected as voltage pulses on
/// the bias node; the quasi-static ramp background is orders of magnitude
/// smaller.
inline StaircaseResult squid_flux_staircase(const StaircaseOptions& o = {}) {
    Circuit c;
    const int m = c.add_node();  // ramp injection node
    const int t = c.add_node();  // far side of the loop inductor
    c.branches.push_back({m, 0, JJParams{o.i_c, o.c_j}, "jj_bias"});
    c.branches.push_back({t, 0, JJParams{o.i_c, o.c_j}, "jj_far"});
    c.branches.push_back({m, t, LinearInductor{o.l_loop}, "loop"});
    c.resistors.push_back({m, 0, o.r_damp});
    c.resistors.push_back({t, 0, o.r_damp});
    CurrentSource ramp;
    ramp.node_p = m;
    ramp.node_n = 0;
    ramp.dc = o.i_start;
    ramp.ramp_rate = o.ramp_rate;
    c.sources.push_back(ramp);

    TransientSolver solver(c);
    TransientOptions to;
    to.dt = o.dt;
    to.t_end = (o.i_stop - o.i_start) / o.ramp_rate;
    to.record_stride = 1 << 30;  // only the event callback is needed

    StaircaseResult res;
    res.loop_inductance = o.l_loop;
    bool armed = true;
    double phi_at_last_event = 0.0;
    solver.run(to, {}, {},
               [&](double time, const Eigen::VectorXd& v, const std::vector<double>& phi) {
                   const double v_bias = v[0];  // node m
                   if (armed && v_bias > o.v_gate) {
                       armed = false;
                       if (time > o.settle) {
                           res.slip_currents.push_back(o.i_start + o.ramp_rate * time);
                           res.slip_phase_jumps.push_back(phi[0] - phi_at_last_event);
                       }
                       phi_at_last_event = phi[0];
                   } else if (!armed && v_bias < 0.25 * o.v_gate) {
                       armed = true;  // pulse finished, re-arm the detector
                   }
               });

    if (res.slip_currents.size() >= 2) {
        double acc = 0.0;
        for (size_t k = 1; k < res.slip_currents.size(); ++k)
            acc += res.slip_currents[k] - res.slip_currents[k - 1];
        res.mean_current_step = acc / static_cast<double>(res.slip_currents.size() - 1);
    }
    return res;
}

}  // namespace twpa
