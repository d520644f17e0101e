#pragma once

// Periodic steady state in the frequency domain. The linear subcircuit is
// stamped as per-bin admittance blocks; nonlinear inductive branches are
// evaluated by sampling their phase waveform on the grid lattice, applying
// the constitutive relation pointwise and projecting the current back.
//
// Unknowns: for every non-ground node the real phasor vector of its voltage
// (dc, then Re/Im per ac bin), followed by one dc phase per inductive
// branch. The ac part of a branch phase follows from the branch voltage
// (phi = kappa * u / (j w)); the dc part cannot, so it is kept as an
// explicit unknown paired with the equation "dc branch voltage = 0" (scaled
// by a 50 ohm reference to ampere units) — the frequency-domain statement
// that a lossless inductive branch drops no average voltage in steady state.

#include <cmath>
#include <complex>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "twpa/constants.hpp"
#include "twpa/errors.hpp"
#include "twpa/netlist.hpp"
#include "twpa/spectral.hpp"
#include "twpa/transient.hpp"

namespace twpa {

enum class LinearSolverKind { lu, gmres };

struct HBOptions {
    LinearSolverKind method = LinearSolverKind::lu;
    int max_newton = 50;
    double rtol = 1e-9;    ///< residual norm relative to the drive scale
    double atol = 1e-16;   ///< residual floor, A
    double min_step = 1.0 / 64.0;  ///< smallest damping factor before giving up
    int gmres_restart = 60;
    int gmres_max_iter = 2000;
    double gmres_tol = 1e-10;
    bool verbose = false;
};

struct HBIterationLog {
    int iteration = 0;
    double residual_norm = 0.0;
    double step = 1.0;  ///< accepted damping factor
};

struct HBSolution {
    Eigen::VectorXd x;
    int iterations = 0;
    double residual_norm = 0.0;
    std::vector<HBIterationLog> log;
};

/// Harmonic-balance formulation of a circuit on a tone grid.
class HBProblem {
public:
    HBProblem(const Circuit& c, ToneGridPtr grid) : circuit_(c), grid_(std::move(grid)) {
        c.check();
        if (!c.prescribed.empty())
            throw ConfigError("HB: prescribed-voltage nodes are not supported");
        for (const auto& s : c.sources) {
            if (s.ramp_rate != 0.0) throw ConfigError("HB: ramp sources are not periodic");
            if (s.tone_delay != 0.0) throw ConfigError("HB: gated sources are not periodic");
        }
        nn_ = c.n_nodes - 1;
        nb_ = static_cast<int>(c.branches.size());
        rs_ = grid_->rvec_size();
        n_ = nn_ * rs_ + nb_;
        build_linear();
        build_source();
        op_phase_.resize(nb_);
        for (int b = 0; b < nb_; ++b)
            op_phase_[b] = std::visit(
                [](const auto& d) -> double {
                    using T = std::decay_t<decltype(d)>;
                    if constexpr (std::is_same_v<T, SNAILParams>)
                        return solve_snail_operating_point(0.0, d);
                    else
                        return 0.0;
                },
                c.branches[b].device);
    }

    const ToneGrid& grid() const { return *grid_; }
    ToneGridPtr grid_ptr() const { return grid_; }
    const Circuit& circuit() const { return circuit_; }
    int size() const { return n_; }
    int node_offset(int node) const { return (node - 1) * rs_; }
    int branch_offset(int b) const { return nn_ * rs_ + b; }

    /// Zero-phasor start with every branch at its zero-bias operating phase.
    Eigen::VectorXd initial_guess() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (int b = 0; b < nb_; ++b) x[branch_offset(b)] = op_phase_[b];
        return x;
    }

    /// Scale of the drive, used for the relative convergence test.
    double source_scale() const { return src_scale_; }

    /// KCL residual in ampere units; see the header comment for the layout.
    Eigen::VectorXd residual(const Eigen::VectorXd& x, double source_scale = 1.0) const {
        check_x(x);
        Eigen::VectorXd f = Eigen::VectorXd::Zero(n_);
        f.head(nn_ * rs_) = ylin_ * x.head(nn_ * rs_);
        f.head(nn_ * rs_) -= source_scale * src_;
        Eigen::VectorXd phi(rs_), irv(rs_);
        for (int b = 0; b < nb_; ++b) {
            branch_phase_rvec(x, b, phi);
            Eigen::VectorXd samples = grid_->eval_matrix() * phi;
            for (int s = 0; s < samples.size(); ++s)
                samples[s] = branch_current(circuit_.branches[b].device, samples[s]);
            irv = grid_->proj_matrix() * samples;
            scatter_branch(f, b, irv, +1.0);
            f[branch_offset(b)] = branch_dc_voltage(x, b) / kRref;
        }
        return f;
    }

    /// Exact Jacobian of `residual` (the chain rule applied to the same
    /// sample/project pipeline, so it matches finite differences to
    /// quadrature precision).
    Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& x) const {
        check_x(x);
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(static_cast<size_t>(ylin_.nonZeros()) + size_t(nb_) * size_t(rs_) * size_t(rs_) * 4);
        for (int k = 0; k < ylin_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(ylin_, k); it; ++it)
                t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());

        Eigen::VectorXd phi(rs_);
        for (int b = 0; b < nb_; ++b) {
            branch_phase_rvec(x, b, phi);
            Eigen::VectorXd samples = grid_->eval_matrix() * phi;
            Eigen::VectorXd w(samples.size());
            for (int s = 0; s < samples.size(); ++s)
                w[s] = branch_current_derivative(circuit_.branches[b].device, samples[s]);
            // M = proj * diag(w) * eval : d(current rvec)/d(phase rvec)
            Eigen::MatrixXd m = grid_->proj_matrix() * w.asDiagonal() * grid_->eval_matrix();
            // chain with d(phase)/d(branch voltage): ac bins only
            Eigen::MatrixXd mp = Eigen::MatrixXd::Zero(rs_, rs_);
            for (int bin = 1; bin < grid_->size(); ++bin) {
                const double wk = kTwoPi * grid_->freq(bin);
                const int re = ToneGrid::re_pos(bin), im = ToneGrid::im_pos(bin);
                // Re phi = kappa Im u / w ; Im phi = -kappa Re u / w
                mp.col(im) += (kRadPerWb / wk) * m.col(re);
                mp.col(re) -= (kRadPerWb / wk) * m.col(im);
            }
            const auto& br = circuit_.branches[b];
            const int p = br.node_p, nneg = br.node_n;
            auto scatter_block = [&](int row_node, int col_node, double sign) {
                if (row_node == 0 || col_node == 0) return;
                const int ro = node_offset(row_node), co = node_offset(col_node);
                for (int i = 0; i < rs_; ++i)
                    for (int j = 0; j < rs_; ++j)
                        if (mp(i, j) != 0.0) t.emplace_back(ro + i, co + j, sign * mp(i, j));
            };
            scatter_block(p, p, +1.0);
            scatter_block(p, nneg, -1.0);
            scatter_block(nneg, p, -1.0);
            scatter_block(nneg, nneg, +1.0);
            // dc-phase column: d(current)/d(phi0) = M e0
            for (int i = 0; i < rs_; ++i) {
                const double v = m(i, 0);
                if (v == 0.0) continue;
                if (p != 0) t.emplace_back(node_offset(p) + i, branch_offset(b), +v);
                if (nneg != 0) t.emplace_back(node_offset(nneg) + i, branch_offset(b), -v);
            }
            // dc-voltage row: d(u0 / Rref)/d(node dc)
            if (p != 0) t.emplace_back(branch_offset(b), node_offset(p), 1.0 / kRref);
            if (nneg != 0) t.emplace_back(branch_offset(b), node_offset(nneg), -1.0 / kRref);
        }
        Eigen::SparseMatrix<double> j(n_, n_);
        j.setFromTriplets(t.begin(), t.end());
        return j;
    }

    /// Damped Newton from the given start; `source_scale` rescales every
    /// drive (used by the continuation driver).
    HBSolution solve(Eigen::VectorXd x0, const HBOptions& opt = {},
                     double source_scale = 1.0) const {
        HBSolution sol;
        Eigen::VectorXd x = std::move(x0);
        Eigen::VectorXd f = residual(x, source_scale);
        double fn = f.norm();
        const double target = opt.rtol * std::max(src_scale_ * source_scale, 1e-300) + opt.atol;
        for (int it = 0; it < opt.max_newton; ++it) {
            if (fn < target) break;
            Eigen::SparseMatrix<double> j = jacobian(x);
            Eigen::VectorXd dx = linear_solve(j, f, opt);
            double step = 1.0;
            Eigen::VectorXd x_try, f_try;
            double fn_try = 0.0;
            while (true) {
                x_try = x - step * dx;
                f_try = residual(x_try, source_scale);
                fn_try = f_try.norm();
                if (fn_try < (1.0 - 0.25 * step) * fn || step <= opt.min_step) break;
                step *= 0.5;
            }
            if (fn_try >= fn && step <= opt.min_step)
                throw MaxIterationsError("HB Newton stalled at residual " + std::to_string(fn));
            x = x_try;
            f = f_try;
            fn = fn_try;
            sol.log.push_back({it + 1, fn, step});
            sol.iterations = it + 1;
        }
        if (fn >= target)
            throw MaxIterationsError("HB Newton did not reach tolerance (residual " +
                                     std::to_string(fn) + ", target " + std::to_string(target) +
                                     ")");
        sol.x = std::move(x);
        sol.residual_norm = fn;
        return sol;
    }

    /// Drive-amplitude continuation: ramp all sources up from a fraction of
    /// full strength, warm-starting each solve; the step size adapts by
    /// bisection when Newton fails at a scale.
    HBSolution solve_with_continuation(const HBOptions& opt = {}, int n_steps = 4) const {
        Eigen::VectorXd x = initial_guess();
        HBSolution sol;
        double reached = 0.0;
        double step = std::pow(2.0, -(n_steps - 1));
        int failures = 0;
        while (reached < 1.0) {
            const double target = std::min(1.0, reached + step);
            try {
                sol = solve(x, opt, target);
            } catch (const MaxIterationsError&) {
                step *= 0.5;
                if (++failures > 24)
                    throw MaxIterationsError("HB continuation could not advance past scale " +
                                             std::to_string(reached));
                continue;
            }
            x = sol.x;
            reached = target;
            step *= 2.0;
        }
        return sol;
    }

    /// Continue from a solution of a nearby problem (same grid layout),
    /// e.g. the previous point of a frequency or power sweep.
    HBSolution solve_from(const HBSolution& prior, const HBOptions& opt = {}) const {
        if (prior.x.size() != n_) throw ConfigError("HB: prior solution has wrong size");
        return solve(prior.x, opt);
    }

    // ----- accessors on a solution vector ---------------------------------

    Spectrum node_spectrum(const Eigen::VectorXd& x, int node) const {
        check_x(x);
        Spectrum s(grid_);
        if (node == 0) return s;
        s.phasors = ToneGrid::from_rvec(x.segment(node_offset(node), rs_));
        return s;
    }

    /// Branch phase spectrum, dc from the explicit unknown.
    Spectrum branch_phase_spectrum(const Eigen::VectorXd& x, int b) const {
        Eigen::VectorXd phi(rs_);
        branch_phase_rvec(x, b, phi);
        Spectrum s(grid_);
        s.phasors = ToneGrid::from_rvec(phi);
        return s;
    }

    /// Branch current spectrum via the constitutive relation.
    Spectrum branch_current_spectrum(const Eigen::VectorXd& x, int b) const {
        Eigen::VectorXd phi(rs_);
        branch_phase_rvec(x, b, phi);
        Eigen::VectorXd samples = grid_->eval_matrix() * phi;
        for (int s = 0; s < samples.size(); ++s)
            samples[s] = branch_current(circuit_.branches[b].device, samples[s]);
        Spectrum s(grid_);
        s.phasors = ToneGrid::from_rvec(grid_->proj_matrix() * samples);
        return s;
    }

    static constexpr double kRref = 50.0;  ///< ohm, scales the dc-voltage rows

private:
    void check_x(const Eigen::VectorXd& x) const {
        if (x.size() != n_) throw ConfigError("HB: state vector has wrong length");
    }

    /// rvec of the branch voltage u = v_p - v_n.
    void branch_voltage_rvec(const Eigen::VectorXd& x, int b, Eigen::VectorXd& u) const {
        const auto& br = circuit_.branches[b];
        u.setZero(rs_);
        if (br.node_p != 0) u += x.segment(node_offset(br.node_p), rs_);
        if (br.node_n != 0) u -= x.segment(node_offset(br.node_n), rs_);
    }

    double branch_dc_voltage(const Eigen::VectorXd& x, int b) const {
        const auto& br = circuit_.branches[b];
        double u = 0.0;
        if (br.node_p != 0) u += x[node_offset(br.node_p)];
        if (br.node_n != 0) u -= x[node_offset(br.node_n)];
        return u;
    }

    /// rvec of the branch phase: ac from u/(j w), dc from the unknown.
    void branch_phase_rvec(const Eigen::VectorXd& x, int b, Eigen::VectorXd& phi) const {
        Eigen::VectorXd u(rs_);
        branch_voltage_rvec(x, b, u);
        phi.setZero(rs_);
        phi[0] = x[branch_offset(b)];
        for (int bin = 1; bin < grid_->size(); ++bin) {
            const double wk = kTwoPi * grid_->freq(bin);
            const int re = ToneGrid::re_pos(bin), im = ToneGrid::im_pos(bin);
            phi[re] = kRadPerWb * u[im] / wk;
            phi[im] = -kRadPerWb * u[re] / wk;
        }
    }

    /// Add sign * (branch current rvec) into the node rows.
    void scatter_branch(Eigen::VectorXd& f, int b, const Eigen::VectorXd& irv,
                        double sign) const {
        const auto& br = circuit_.branches[b];
        if (br.node_p != 0) f.segment(node_offset(br.node_p), rs_) += sign * irv;
        if (br.node_n != 0) f.segment(node_offset(br.node_n), rs_) -= sign * irv;
    }

    /// Stamp resistors and capacitors (including junction shunt capacitance)
    /// as per-bin 2x2 real blocks of the complex admittance.
    void build_linear() {
        std::vector<Eigen::Triplet<double>> t;
        auto stamp_pair = [&](int np, int nn, auto&& block) {
            // block(row_offset, col_offset, sign)
            if (np != 0) block(node_offset(np), node_offset(np), +1.0);
            if (nn != 0) block(node_offset(nn), node_offset(nn), +1.0);
            if (np != 0 && nn != 0) {
                block(node_offset(np), node_offset(nn), -1.0);
                block(node_offset(nn), node_offset(np), -1.0);
            }
        };
        auto stamp_admittance = [&](int np, int nn, double g, double c) {
            stamp_pair(np, nn, [&](int ro, int co, double sign) {
                if (g != 0.0) {
                    t.emplace_back(ro, co, sign * g);  // dc
                    for (int bin = 1; bin < grid_->size(); ++bin) {
                        const int re = ToneGrid::re_pos(bin), im = ToneGrid::im_pos(bin);
                        t.emplace_back(ro + re, co + re, sign * g);
                        t.emplace_back(ro + im, co + im, sign * g);
                    }
                }
                if (c != 0.0) {
                    for (int bin = 1; bin < grid_->size(); ++bin) {
                        const double bsus = kTwoPi * grid_->freq(bin) * c;
                        const int re = ToneGrid::re_pos(bin), im = ToneGrid::im_pos(bin);
                        t.emplace_back(ro + re, co + im, -sign * bsus);
                        t.emplace_back(ro + im, co + re, sign * bsus);
                    }
                }
            });
        };
        for (const auto& r : circuit_.resistors)
            stamp_admittance(r.node_p, r.node_n, 1.0 / r.resistance, 0.0);
        for (const auto& c : circuit_.capacitors)
            stamp_admittance(c.node_p, c.node_n, 0.0, c.capacitance);
        for (const auto& b : circuit_.branches) {
            const double cj = branch_capacitance(b.device);
            if (cj > 0.0) stamp_admittance(b.node_p, b.node_n, 0.0, cj);
        }
        ylin_.resize(nn_ * rs_, nn_ * rs_);
        ylin_.setFromTriplets(t.begin(), t.end());
    }

    /// Source phasor vector over the node blocks. A tone A sin(w t + th)
    /// is the phasor A e^{j(th - pi/2)} in the e^{+jwt} convention.
    void build_source() {
        src_ = Eigen::VectorXd::Zero(nn_ * rs_);
        src_scale_ = 0.0;
        for (const auto& s : circuit_.sources) {
            auto add = [&](int node, double sign) {
                if (node == 0) return;
                const int o = node_offset(node);
                src_[o] += sign * s.dc;
                for (const auto& tn : s.tones) {
                    const int bin = grid_->find_freq(tn.freq);
                    if (bin <= 0)
                        throw ConfigError("HB: source tone at " + std::to_string(tn.freq) +
                                          " Hz is not on the tone grid");
                    const cplx ph = tn.amplitude * std::exp(cplx(0.0, tn.phase - 0.5 * kPi));
                    src_[o + ToneGrid::re_pos(bin)] += sign * ph.real();
                    src_[o + ToneGrid::im_pos(bin)] += sign * ph.imag();
                }
            };
            add(s.node_p, +1.0);
            add(s.node_n, -1.0);
            for (const auto& tn : s.tones) src_scale_ = std::max(src_scale_, std::abs(tn.amplitude));
            src_scale_ = std::max(src_scale_, std::abs(s.dc));
        }
    }

    // ----- linear solvers --------------------------------------------------

    Eigen::VectorXd linear_solve(const Eigen::SparseMatrix<double>& j, const Eigen::VectorXd& f,
                                 const HBOptions& opt) const {
        if (opt.method == LinearSolverKind::lu) {
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(j);
            if (lu.info() != Eigen::Success)
                throw SingularJacobianError("HB: Jacobian factorisation failed");
            return lu.solve(f);
        }
        return gmres_solve(j, f, opt);
    }

    /// Frequency-block preconditioner: the circuit linearised about the
    /// operating point decouples per bin; each complex nodal block (plus the
    /// dc phase/dc-voltage bordering) is factorised once per Newton step.
    struct BlockPrecond {
        // dc block: (nn + nb) real unknowns; ac bins: nn complex unknowns
        Eigen::SparseLU<Eigen::SparseMatrix<double>> dc;
        std::vector<std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>> ac;
    };

    void build_precond(BlockPrecond& pc) const {
        // linearised branch conductance di/dphi at the operating phase
        std::vector<double> didphi(static_cast<size_t>(nb_));
        for (int b = 0; b < nb_; ++b)
            didphi[static_cast<size_t>(b)] =
                branch_current_derivative(circuit_.branches[b].device, op_phase_[b]);

        // dc block
        {
            std::vector<Eigen::Triplet<double>> t;
            auto idx_node = [&](int node) { return node - 1; };
            for (const auto& r : circuit_.resistors) {
                const double g = 1.0 / r.resistance;
                if (r.node_p != 0) t.emplace_back(idx_node(r.node_p), idx_node(r.node_p), g);
                if (r.node_n != 0) t.emplace_back(idx_node(r.node_n), idx_node(r.node_n), g);
                if (r.node_p != 0 && r.node_n != 0) {
                    t.emplace_back(idx_node(r.node_p), idx_node(r.node_n), -g);
                    t.emplace_back(idx_node(r.node_n), idx_node(r.node_p), -g);
                }
            }
            for (int b = 0; b < nb_; ++b) {
                const auto& br = circuit_.branches[b];
                const int col = nn_ + b;
                if (br.node_p != 0) {
                    t.emplace_back(idx_node(br.node_p), col, didphi[size_t(b)]);
                    t.emplace_back(col, idx_node(br.node_p), 1.0 / kRref);
                }
                if (br.node_n != 0) {
                    t.emplace_back(idx_node(br.node_n), col, -didphi[size_t(b)]);
                    t.emplace_back(col, idx_node(br.node_n), -1.0 / kRref);
                }
            }
            for (int i = 0; i < nn_ + nb_; ++i) t.emplace_back(i, i, 1e-300);  // keep pattern full
            Eigen::SparseMatrix<double> m(nn_ + nb_, nn_ + nb_);
            m.setFromTriplets(t.begin(), t.end());
            pc.dc.compute(m);
            if (pc.dc.info() != Eigen::Success)
                throw SingularJacobianError("HB: dc preconditioner block is singular");
        }
        // ac bins
        pc.ac.clear();
        for (int bin = 1; bin < grid_->size(); ++bin) {
            const double w = kTwoPi * grid_->freq(bin);
            std::vector<Eigen::Triplet<cplx>> t;
            auto stamp = [&](int np, int nn, cplx y) {
                if (np != 0) t.emplace_back(np - 1, np - 1, y);
                if (nn != 0) t.emplace_back(nn - 1, nn - 1, y);
                if (np != 0 && nn != 0) {
                    t.emplace_back(np - 1, nn - 1, -y);
                    t.emplace_back(nn - 1, np - 1, -y);
                }
            };
            for (const auto& r : circuit_.resistors)
                stamp(r.node_p, r.node_n, cplx(1.0 / r.resistance, 0.0));
            for (const auto& c : circuit_.capacitors)
                stamp(c.node_p, c.node_n, cplx(0.0, w * c.capacitance));
            for (int b = 0; b < nb_; ++b) {
                const auto& br = circuit_.branches[b];
                const double cj = branch_capacitance(br.device);
                // inductive admittance kappa * di/dphi / (j w)
                const cplx y = cplx(0.0, -kRadPerWb * didphi[size_t(b)] / w) + cplx(0.0, w * cj);
                stamp(br.node_p, br.node_n, y);
            }
            Eigen::SparseMatrix<cplx> m(nn_, nn_);
            m.setFromTriplets(t.begin(), t.end());
            auto lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>();
            lu->compute(m);
            if (lu->info() != Eigen::Success)
                throw SingularJacobianError("HB: ac preconditioner block is singular at bin " +
                                            std::to_string(bin));
            pc.ac.push_back(std::move(lu));
        }
    }

    Eigen::VectorXd apply_precond(const BlockPrecond& pc, const Eigen::VectorXd& r) const {
        Eigen::VectorXd out(n_);
        // dc + branch rows
        Eigen::VectorXd rdc(nn_ + nb_);
        for (int i = 0; i < nn_; ++i) rdc[i] = r[i * rs_];
        for (int b = 0; b < nb_; ++b) rdc[nn_ + b] = r[branch_offset(b)];
        Eigen::VectorXd xdc = pc.dc.solve(rdc);
        for (int i = 0; i < nn_; ++i) out[i * rs_] = xdc[i];
        for (int b = 0; b < nb_; ++b) out[branch_offset(b)] = xdc[nn_ + b];
        // ac bins
        Eigen::VectorXcd rb(nn_), xb(nn_);
        for (int bin = 1; bin < grid_->size(); ++bin) {
            const int re = ToneGrid::re_pos(bin), im = ToneGrid::im_pos(bin);
            for (int i = 0; i < nn_; ++i) rb[i] = cplx(r[i * rs_ + re], r[i * rs_ + im]);
            xb = pc.ac[size_t(bin) - 1]->solve(rb);
            for (int i = 0; i < nn_; ++i) {
                out[i * rs_ + re] = xb[i].real();
                out[i * rs_ + im] = xb[i].imag();
            }
        }
        return out;
    }

    /// Right-preconditioned restarted GMRES.
    Eigen::VectorXd gmres_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                                const HBOptions& opt) const {
        BlockPrecond pc;
        build_precond(pc);
        const int m = opt.gmres_restart;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        const double bnorm = b.norm();
        if (bnorm == 0.0) return x;
        int total = 0;
        while (total < opt.gmres_max_iter) {
            Eigen::VectorXd r = b - a * x;
            double beta = r.norm();
            if (beta <= opt.gmres_tol * bnorm) return x;
            Eigen::MatrixXd v(n_, m + 1);
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
            std::vector<double> cs(m), sn(m);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 1);
            g[0] = beta;
            v.col(0) = r / beta;
            int k = 0;
            for (; k < m && total < opt.gmres_max_iter; ++k, ++total) {
                Eigen::VectorXd w = a * apply_precond(pc, v.col(k));
                for (int i = 0; i <= k; ++i) {
                    h(i, k) = w.dot(v.col(i));
                    w -= h(i, k) * v.col(i);
                }
                h(k + 1, k) = w.norm();
                if (h(k + 1, k) > 0.0) v.col(k + 1) = w / h(k + 1, k);
                // Givens rotations
                for (int i = 0; i < k; ++i) {
                    const double tmp = cs[size_t(i)] * h(i, k) + sn[size_t(i)] * h(i + 1, k);
                    h(i + 1, k) = -sn[size_t(i)] * h(i, k) + cs[size_t(i)] * h(i + 1, k);
                    h(i, k) = tmp;
                }
                const double d = std::hypot(h(k, k), h(k + 1, k));
                if (d == 0.0) { ++k; break; }
                cs[size_t(k)] = h(k, k) / d;
                sn[size_t(k)] = h(k + 1, k) / d;
                h(k, k) = d;
                h(k + 1, k) = 0.0;
                g[k + 1] = -sn[size_t(k)] * g[k];
                g[k] *= cs[size_t(k)];
                if (std::abs(g[k + 1]) <= opt.gmres_tol * bnorm) { ++k; break; }
            }
            // back-substitute
            Eigen::VectorXd y = Eigen::VectorXd::Zero(k);
            for (int i = k - 1; i >= 0; --i) {
                double s = g[i];
                for (int jj = i + 1; jj < k; ++jj) s -= h(i, jj) * y[jj];
                y[i] = s / h(i, i);
            }
            Eigen::VectorXd z = Eigen::VectorXd::Zero(n_);
            for (int i = 0; i < k; ++i) z += y[i] * v.col(i);
            x += apply_precond(pc, z);
            Eigen::VectorXd check = b - a * x;
            if (check.norm() <= opt.gmres_tol * bnorm) return x;
        }
        throw MaxIterationsError("HB: GMRES did not converge");
    }

    Circuit circuit_;
    ToneGridPtr grid_;
    int nn_ = 0, nb_ = 0, rs_ = 0, n_ = 0;
    Eigen::SparseMatrix<double> ylin_;
    Eigen::VectorXd src_;
    double src_scale_ = 0.0;
    std::vector<double> op_phase_;
};

/// Transient-seeded initial guess: run the pump-only drive to a periodic
/// steady state in the time domain and project each node waveform onto the
/// pump harmonics of the grid. Signal-tone bins start at zero.
inline Eigen::VectorXd transient_seed(const HBProblem& hb, int steps_per_period = 512,
                                      int max_periods = 400) {
    const ToneGrid& g = hb.grid();
    const double fp = g.fundamentals().back();
    Circuit pump_only = hb.circuit();
    for (auto& s : pump_only.sources) {
        std::vector<Tone> kept;
        for (const auto& tn : s.tones) {
            // keep tones that sit on pure pump harmonics
            const double ratio = tn.freq / fp;
            if (std::abs(ratio - std::round(ratio)) < 1e-9) kept.push_back(tn);
        }
        s.tones = kept;
    }
    PeriodicOptions po;
    po.steps_per_period = steps_per_period;
    po.max_periods = max_periods;
    PeriodicResult pr = run_to_periodic_steady_state(pump_only, 1.0 / fp, po);

    Eigen::VectorXd x = hb.initial_guess();
    // pump-harmonic frequencies present on the grid
    std::vector<double> freqs;
    std::vector<int> bins;
    for (int b = 1; b < g.size(); ++b) {
        if (g.index(b).n == 0) {
            freqs.push_back(g.freq(b));
            bins.push_back(b);
        }
    }
    const int nn = hb.circuit().n_nodes - 1;
    for (int node = 1; node <= nn; ++node) {
        auto ph = extract_phasors(pr.times, pr.voltages.col(node - 1), freqs);
        const int o = hb.node_offset(node);
        x[o] = ph[0].real();
        for (size_t k = 0; k < bins.size(); ++k) {
            x[o + ToneGrid::re_pos(bins[k])] = ph[k + 1].real();
            x[o + ToneGrid::im_pos(bins[k])] = ph[k + 1].imag();
        }
    }
    // branch dc phases from the settled time-domain phases, folded to the
    // winding the transient actually chose
    for (int b = 0; b < static_cast<int>(hb.circuit().branches.size()); ++b) {
        double mean = 0.0;
        for (long i = 0; i < pr.phases.rows(); ++i) mean += pr.phases(i, b);
        x[hb.branch_offset(b)] = mean / double(pr.phases.rows());
    }
    return x;
}

}  // namespace twpa
