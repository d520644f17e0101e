#pragma once

// Amplifier-level measurements built on the periodic-steady-state solver:
// gain spectra against a pump-off baseline, harmonic growth along the chain
// and versus drive power, compression, ripple and wavefront delay.

#include <cmath>
#include <optional>
#include <vector>

#include "twpa/hb.hpp"
#include "twpa/netlist.hpp"
#include "twpa/network.hpp"
#include "twpa/transient.hpp"

namespace twpa {

/// Peak voltage phasor -> power into a resistive load, dBm.
inline double phasor_power_dbm(cplx v, double r_load = 50.0) {
    const double p = std::norm(v) / (2.0 * r_load);
    return watt_to_dbm(std::max(p, 1e-300));
}

/// One amplifier configuration: a homogeneous chain, a pump tone, and the
/// truncation orders used for the mixing grid.
struct AmpSetup {
    ChainSpec spec;
    double f_pump = 0.0;       ///< Hz
    double i_pump = 0.0;       ///< A peak, Norton drive at the input
    double i_signal = 1e-9;    ///< A peak; small enough to stay linear in the signal
    int pump_order = 4;
    int signal_order = 1;
    Truncation trunc = Truncation::box;
    double collision_offset = 2.5e6;  ///< Hz, signal nudge when products collide
    HBOptions hb;
    int continuation_steps = 4;
};

struct GainPoint {
    double f_signal = 0.0;       ///< Hz, as requested
    double f_signal_used = 0.0;  ///< Hz, after any collision nudge
    double gain_db = 0.0;
    double p_out_on_dbm = 0.0;
    double p_out_off_dbm = 0.0;
    bool collision_shifted = false;
    int newton_iterations = 0;
    /// strongest mixing sideband accompanying the amplified probe: the
    /// three-wave product {-1,1} or the four-wave product {-1,2}, whichever
    /// the grid carries with more power; NaN when neither bin exists
    double p_idler_dbm = std::numeric_limits<double>::quiet_NaN();
};

/// Pump-only periodic solution reused to seed every signal frequency of a
/// sweep (the pump state does not depend on the probe).
struct PumpState {
    ToneGridPtr grid;       ///< single-fundamental pump grid
    Eigen::VectorXd x;      ///< pump-only solution vector
    int rvec_size = 0;
};

inline PumpState solve_pump_state(const AmpSetup& a) {
    Chain ch = build_chain(a.spec);
    if (a.i_pump > 0.0) add_input_tone(ch, a.f_pump, a.i_pump);
    HBProblem hb(ch.circuit, build_tone_grid({a.f_pump}, {a.pump_order}));
    auto sol = a.i_pump > 0.0 ? hb.solve_with_continuation(a.hb, a.continuation_steps)
                              : hb.solve(hb.initial_guess(), a.hb);
    return {hb.grid_ptr(), sol.x, hb.grid().rvec_size()};
}

/// Map a pump-only solution into a two-tone state vector: pump-harmonic
/// bins copied per node, signal-side bins zero, branch phases carried over.
inline Eigen::VectorXd seed_from_pump(const HBProblem& hb2, const PumpState& pump) {
    Eigen::VectorXd x = hb2.initial_guess();
    const ToneGrid& g2 = hb2.grid();
    const int nn = hb2.circuit().n_nodes - 1;
    const int rs1 = pump.rvec_size;
    for (int node = 1; node <= nn; ++node) {
        const int o2 = hb2.node_offset(node);
        const int o1 = (node - 1) * rs1;
        x[o2] = pump.x[o1];
        for (int b = 1; b < g2.size(); ++b) {
            const MixIndex mi = g2.index(b);
            if (mi.n != 0) continue;
            const int pb = pump.grid->find({0, mi.m});
            if (pb <= 0) continue;
            x[o2 + ToneGrid::re_pos(b)] = pump.x[o1 + ToneGrid::re_pos(pb)];
            x[o2 + ToneGrid::im_pos(b)] = pump.x[o1 + ToneGrid::im_pos(pb)];
        }
    }
    const int nb = static_cast<int>(hb2.circuit().branches.size());
    for (int b = 0; b < nb; ++b)
        x[hb2.branch_offset(b)] = pump.x[nn * rs1 + b];
    return x;
}

/// Gain of the probe tone at one signal frequency: output power with the
/// pump on, referenced to the pump-off response of the chain linearised at
/// its dc operating point. A zero-amplitude pump therefore reads 0 dB by
/// construction.
inline GainPoint gain_point(const AmpSetup& a, double f_signal,
                            const PumpState* pump_seed = nullptr) {
    GainPoint pt;
    pt.f_signal = f_signal;
    pt.f_signal_used = f_signal;

    // pump-off baseline: linear response about the dc operating point
    double phi_op = 0.0;
    if (const auto* sn = std::get_if<SNAILParams>(&a.spec.series))
        phi_op = solve_snail_operating_point(0.0, *sn);
    const LinearCell cell = linearize_chain_cell(a.spec, phi_op);

    if (a.i_pump <= 0.0) {
        // pump off entirely: on-state equals the baseline
        pt.gain_db = 0.0;
        auto v = linear_chain_nodal_solve(cell, a.spec.n_cells, f_signal,
                                          cplx(0.0, -a.i_signal), a.spec.z_source,
                                          a.spec.z_load);
        pt.p_out_on_dbm = pt.p_out_off_dbm = phasor_power_dbm(v[a.spec.n_cells], a.spec.z_load);
        return pt;
    }

    // build the two-tone grid, nudging the signal off exact collisions
    ToneGridPtr grid;
    for (int attempt = 0; attempt < 5; ++attempt) {
        try {
            grid = build_tone_grid({pt.f_signal_used, a.f_pump}, {a.signal_order, a.pump_order},
                                   a.trunc);
            break;
        } catch (const CollisionError&) {
            pt.f_signal_used += a.collision_offset;
            pt.collision_shifted = true;
        }
    }
    if (!grid)
        throw CollisionError("gain_point: could not find a collision-free signal offset near " +
                             std::to_string(f_signal) + " Hz");

    Chain ch = build_chain(a.spec);
    add_input_tone(ch, a.f_pump, a.i_pump);
    add_input_tone(ch, pt.f_signal_used, a.i_signal);
    HBProblem hb(ch.circuit, grid);
    HBSolution sol;
    if (pump_seed != nullptr) {
        try {
            sol = hb.solve(seed_from_pump(hb, *pump_seed), a.hb);
        } catch (const MaxIterationsError&) {
            // a strong probe can push the seeded solve out of the Newton
            // basin; retry with drive-amplitude continuation from scratch
            sol = hb.solve_with_continuation(a.hb, a.continuation_steps);
        }
    } else {
        sol = hb.solve_with_continuation(a.hb, a.continuation_steps);
    }
    pt.newton_iterations = sol.iterations;

    auto out = hb.node_spectrum(sol.x, ch.output_node);
    const int sig_bin = hb.grid().find({1, 0});
    if (sig_bin <= 0) throw Error("gain_point: signal bin missing from the grid");
    pt.p_out_on_dbm = phasor_power_dbm(out[sig_bin], a.spec.z_load);

    for (const MixIndex mi : {MixIndex{-1, 1}, MixIndex{-1, 2}}) {
        const int b = hb.grid().find(mi);
        if (b <= 0) continue;
        const double p = phasor_power_dbm(out[b], a.spec.z_load);
        if (std::isnan(pt.p_idler_dbm) || p > pt.p_idler_dbm) pt.p_idler_dbm = p;
    }

    auto v_off = linear_chain_nodal_solve(cell, a.spec.n_cells, pt.f_signal_used,
                                          cplx(0.0, -a.i_signal), a.spec.z_source, a.spec.z_load);
    pt.p_out_off_dbm = phasor_power_dbm(v_off[a.spec.n_cells], a.spec.z_load);
    pt.gain_db = pt.p_out_on_dbm - pt.p_out_off_dbm;
    return pt;
}

/// Phase-sensitive gain of a probe at exactly half the pump frequency,
/// where signal and idler merge into one spectral bin.  The solve uses a
/// single-fundamental grid at f_pump/2 with the pump injected on harmonic 2,
/// so no collision nudge is needed.  Gain depends on the probe phase
/// relative to the pump; the maximum over `n_phases` samples of a half
/// period is returned (the response is pi-periodic in the probe phase).
inline double degenerate_gain_db(const AmpSetup& a, int n_phases = 8) {
    if (!(a.i_pump > 0.0)) throw ConfigError("degenerate_gain_db: pump is off");
    const double fs = a.f_pump / 2.0;
    double phi_op = 0.0;
    if (const auto* sn = std::get_if<SNAILParams>(&a.spec.series))
        phi_op = solve_snail_operating_point(0.0, *sn);
    const LinearCell cell = linearize_chain_cell(a.spec, phi_op);
    auto v_off = linear_chain_nodal_solve(cell, a.spec.n_cells, fs, cplx(0.0, -a.i_signal),
                                          a.spec.z_source, a.spec.z_load);
    const double p_off = phasor_power_dbm(v_off[a.spec.n_cells], a.spec.z_load);
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_phases; ++k) {
        const double phase = kPi * static_cast<double>(k) / static_cast<double>(n_phases);
        Chain ch = build_chain(a.spec);
        add_input_tone(ch, a.f_pump, a.i_pump);
        add_input_tone(ch, fs, a.i_signal, phase);
        HBProblem hb(ch.circuit, build_tone_grid({fs}, {2 * a.pump_order}));
        auto sol = hb.solve_with_continuation(a.hb, a.continuation_steps);
        auto out = hb.node_spectrum(sol.x, ch.output_node);
        const double p_on = phasor_power_dbm(out[hb.grid().find({0, 1})], a.spec.z_load);
        best = std::max(best, p_on - p_off);
    }
    return best;
}

/// Phase amplitude of selected mix products on every series branch of a
/// chain solution; rows = cells, one column per requested product.
inline Eigen::MatrixXd harmonic_profile_along_chain(const HBProblem& hb,
                                                    const Eigen::VectorXd& x,
                                                    const std::vector<MixIndex>& products) {
    const int nb = static_cast<int>(hb.circuit().branches.size());
    Eigen::MatrixXd out(nb, static_cast<int>(products.size()));
    for (int b = 0; b < nb; ++b) {
        auto phi = hb.branch_phase_spectrum(x, b);
        for (size_t k = 0; k < products.size(); ++k) {
            const int bin = hb.grid().find(products[k]);
            out(b, static_cast<int>(k)) = bin >= 0 ? std::abs(phi[bin]) : 0.0;
        }
    }
    return out;
}

/// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_slope: need >= 2 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw ConfigError("fit_slope: degenerate abscissa");
    return (n * sxy - sx * sy) / den;
}

struct HarmonicPowerSweep {
    std::vector<double> p_in_dbm;
    std::vector<std::vector<double>> p_out_dbm;  ///< [harmonic-1][point]
    std::vector<double> slopes;                  ///< dB-per-dB per harmonic
};

/// Output power of the first `n_harmonics` pump harmonics versus input pump
/// power, plus the fitted log-log slopes. In the undepleted small-signal
/// regime harmonic h grows with slope h.
inline HarmonicPowerSweep harmonics_vs_input_power(const AmpSetup& a,
                                                   const std::vector<double>& p_in_dbm,
                                                   int n_harmonics) {
    if (n_harmonics < 1 || n_harmonics > a.pump_order)
        throw ConfigError("harmonics_vs_input_power: bad harmonic count");
    HarmonicPowerSweep sw;
    sw.p_in_dbm = p_in_dbm;
    sw.p_out_dbm.assign(static_cast<size_t>(n_harmonics), {});
    for (double p : p_in_dbm) {
        Chain ch = build_chain(a.spec);
        const double i_peak = norton_current_for_power(dbm_to_watt(p), a.spec.z_source);
        add_input_tone(ch, a.f_pump, i_peak);
        HBProblem hb(ch.circuit, build_tone_grid({a.f_pump}, {a.pump_order}));
        auto sol = hb.solve_with_continuation(a.hb, a.continuation_steps);
        auto out = hb.node_spectrum(sol.x, ch.output_node);
        for (int h = 1; h <= n_harmonics; ++h)
            sw.p_out_dbm[static_cast<size_t>(h) - 1].push_back(
                phasor_power_dbm(out[hb.grid().find({0, h})], a.spec.z_load));
    }
    for (int h = 1; h <= n_harmonics; ++h)
        sw.slopes.push_back(fit_slope(sw.p_in_dbm, sw.p_out_dbm[static_cast<size_t>(h) - 1]));
    return sw;
}

/// Signal power at which the gain has dropped 1 dB below its small-signal
/// value, found by sweeping the probe upward and interpolating. Throws
/// NotReachedError when the sweep never compresses.
/// Input power at which the fundamental output drops `drop_db` below the
/// small-signal straight line anchored at the first sample; linearly
/// interpolated between samples.  Throws NotReachedError when the profile
/// never compresses by that much.
inline double compression_point_dbm(const std::vector<double>& p_in_dbm,
                                    const std::vector<double>& p_out_dbm,
                                    double drop_db = 1.0) {
    if (p_in_dbm.size() != p_out_dbm.size() || p_in_dbm.size() < 2)
        throw ConfigError("compression_point_dbm: need >= 2 matching samples");
    const double g0 = p_out_dbm.front() - p_in_dbm.front();
    double prev_dev = 0.0;
    for (size_t i = 1; i < p_in_dbm.size(); ++i) {
        const double dev = (p_in_dbm[i] + g0) - p_out_dbm[i];
        if (dev >= drop_db) {
            const double w = (drop_db - prev_dev) / (dev - prev_dev);
            return p_in_dbm[i - 1] + w * (p_in_dbm[i] - p_in_dbm[i - 1]);
        }
        prev_dev = dev;
    }
    throw NotReachedError("output never compressed by " + std::to_string(drop_db) + " dB");
}

/// Probe-power sweep of one amplifier gain point; points whose solve fails
/// are skipped (reported by the NaN placeholder), then the 1 dB point is
/// extracted from the surviving profile.
inline double compression_point_dbm(AmpSetup a, double f_signal, double p_start_dbm,
                                    double p_stop_dbm, double p_step_db = 1.0,
                                    double drop_db = 1.0) {
    std::vector<double> p_in, p_out;
    PumpState pump = solve_pump_state(a);
    for (double p = p_start_dbm; p <= p_stop_dbm + 1e-9; p += p_step_db) {
        a.i_signal = norton_current_for_power(dbm_to_watt(p), a.spec.z_source);
        try {
            const GainPoint pt = gain_point(a, f_signal, &pump);
            p_in.push_back(p);
            p_out.push_back(pt.p_out_on_dbm);
        } catch (const MaxIterationsError&) {
            // over-driven probe: no periodic solution on this branch; record
            // the gap and keep sweeping
        }
    }
    if (p_in.size() < 2)
        throw NotReachedError("too few converged sweep points for a compression estimate");
    return compression_point_dbm(p_in, p_out, drop_db);
}

/// Mean spacing of local maxima of a sampled curve (ripple period); NaN when
/// fewer than two maxima exist.
inline double ripple_period(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw ConfigError("ripple_period: need >= 3 points");
    std::vector<double> peaks;
    for (size_t i = 1; i + 1 < y.size(); ++i)
        if (y[i] > y[i - 1] && y[i] >= y[i + 1]) peaks.push_back(x[i]);
    if (peaks.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    return (peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
}

/// Spatial period of a decaying oscillation from its first two interior
/// minima (e.g. the pump second harmonic beating along the chain); NaN when
/// no clear oscillation exists.
inline double oscillation_period_cells(const Eigen::VectorXd& profile) {
    std::vector<int> minima;
    for (int i = 1; i + 1 < profile.size(); ++i)
        if (profile[i] < profile[i - 1] && profile[i] <= profile[i + 1]) minima.push_back(i);
    if (minima.size() >= 2) return double(minima[1] - minima[0]);
    if (minima.size() == 1) return 2.0 * double(minima[0] + 1);  // half period visible
    return std::numeric_limits<double>::quiet_NaN();
}

struct DelayMeasurement {
    double delay_s = 0.0;       ///< wavefront arrival difference input -> output
    double expected_s = 0.0;    ///< n_cells * sqrt(L C) at the dc operating point
};

/// Switch a carrier on and time the half-amplitude wavefront from the chain
/// input to its output.  With a nonzero dc bias the chain is first settled
/// at the bias for a few transit times before the carrier is gated on, so
/// the front propagates on the biased (softened) inductance.
inline DelayMeasurement measure_chain_delay(const ChainSpec& spec, double f_carrier,
                                            double i_peak, double i_dc = 0.0, double dt = 0.0) {
    Chain ch = build_chain(spec);
    add_input_tone(ch, f_carrier, i_peak);
    // dc from the Norton source divides between source and load terminations
    const double i_chain = i_dc * spec.z_source / (spec.z_source + spec.z_load);
    double phi_op = 0.0;
    if (const auto* sn = std::get_if<SNAILParams>(&spec.series))
        phi_op = solve_snail_operating_point(i_chain, *sn);
    else if (const auto* jj = std::get_if<JJParams>(&spec.series))
        phi_op = std::asin(std::min(0.999, i_chain / jj->i_c));
    const LinearCell cell = linearize_chain_cell(spec, phi_op);
    const double tau_cell = std::sqrt(cell.l_series * cell.c_shunt);

    DelayMeasurement dm;
    dm.expected_s = spec.n_cells * tau_cell;

    double t_on = 0.0;
    if (i_dc != 0.0) {
        ch.circuit.sources.front().dc += i_dc;
        t_on = 4.0 * dm.expected_s;  // two round trips of bias settling
        ch.circuit.sources.front().tone_delay = t_on;
    }

    TransientOptions to;
    to.dt = dt > 0.0 ? dt : 1.0 / (64.0 * f_carrier);
    to.t_end = t_on + 2.5 * dm.expected_s + 8.0 / f_carrier;
    TransientSolver solver(ch.circuit);
    // start every branch at its zero-current equilibrium phase so flux-biased
    // devices do not launch a large startup transient that masks the front
    double phi_eq = 0.0;
    if (const auto* sn = std::get_if<SNAILParams>(&spec.series))
        phi_eq = solve_snail_operating_point(0.0, *sn);
    std::vector<double> phi0(ch.circuit.branches.size(), phi_eq);
    auto tr = solver.run(to, {}, phi0);

    const long n = static_cast<long>(tr.times.size());
    long i_on = 0;
    while (i_on < n && tr.times[static_cast<size_t>(i_on)] < t_on) ++i_on;

    // per-node baseline just before the carrier turns on, then the carrier
    // amplitude from the tail of the record
    auto baseline = [&](int node) {
        if (i_on == 0) return 0.0;
        const long w = std::max<long>(1, std::min<long>(i_on, static_cast<long>(2.0 / (f_carrier * to.dt))));
        double s = 0.0;
        for (long i = i_on - w; i < i_on; ++i) s += tr.voltages(i, node - 1);
        return s / static_cast<double>(w);
    };
    auto front = [&](int node) {
        const double b = baseline(node);
        Eigen::VectorXd dev = tr.voltages.col(node - 1).array() - b;
        double amp = 0.0;
        for (long i = (3 * n) / 4; i < n; ++i) amp = std::max(amp, std::abs(dev[i]));
        Eigen::VectorXd tail = dev.segment(i_on, n - i_on);
        std::vector<double> times(tr.times.begin() + i_on, tr.times.end());
        return front_arrival_time(times, tail, 0.5 * amp);
    };
    const double t_in = front(ch.input_node);
    const double t_out = front(ch.output_node);
    if (std::isnan(t_in) || std::isnan(t_out))
        throw NoSteadyStateError("wavefront never crossed the detection threshold");
    dm.delay_s = t_out - t_in;
    return dm;
}

}  // namespace twpa
