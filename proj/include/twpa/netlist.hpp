#pragma once

// Circuit description shared by the transient and periodic solvers.
//
// Topology is a node graph (node 0 = ground). Inductive elements — linear
// inductors, single junctions, flux-biased junction loops — are "phase
// branches": their state variable is the branch phase and their current is
// an algebraic function of it. Capacitors, resistors and current sources
// attach between arbitrary node pairs.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "twpa/constants.hpp"
#include "twpa/devices.hpp"
#include "twpa/errors.hpp"
#include "twpa/network.hpp"

namespace twpa {

/// Linear inductor expressed as a phase branch: i = (Phi0/2pi/L) * phi.
struct LinearInductor {
    double inductance = 0.0;  ///< H
};

using BranchDevice = std::variant<LinearInductor, JJParams, SNAILParams>;

/// Inductive branch from node_p to node_n; positive current flows p -> n
/// when the branch phase is positive.
struct PhaseBranch {
    int node_p = 0;
    int node_n = 0;
    BranchDevice device;
    std::string label;
};

struct Capacitor {
    int node_p = 0;
    int node_n = 0;
    double capacitance = 0.0;
};

struct Resistor {
    int node_p = 0;
    int node_n = 0;
    double resistance = 0.0;
};

/// One sinusoidal drive tone, i(t) = amplitude * sin(2 pi f t + phase).
struct Tone {
    double freq = 0.0;       ///< Hz
    double amplitude = 0.0;  ///< A (peak)
    double phase = 0.0;      ///< rad
};

/// Current injected into node_p and drawn from node_n:
/// dc + ramp_rate * t + sum of tones.
struct CurrentSource {
    int node_p = 0;
    int node_n = 0;
    double dc = 0.0;         ///< A
    double ramp_rate = 0.0;  ///< A/s, for quasi-static bias sweeps
    double tone_delay = 0.0; ///< s; ac tones are gated off before this time
    std::vector<Tone> tones;

    double value(double t) const {
        double i = dc + ramp_rate * t;
        if (t >= tone_delay)
            for (const auto& tn : tones)
                i += tn.amplitude * std::sin(kTwoPi * tn.freq * t + tn.phase);
        return i;
    }
};

/// Node whose voltage is imposed externally rather than solved for.
struct PrescribedNode {
    int node = 0;
    double dc = 0.0;  ///< V
    std::vector<Tone> tones;

    double value(double t) const {
        double v = dc;
        for (const auto& tn : tones) v += tn.amplitude * std::sin(kTwoPi * tn.freq * t + tn.phase);
        return v;
    }
};

struct Circuit {
    int n_nodes = 1;  ///< including ground (node 0)
    std::vector<PhaseBranch> branches;
    std::vector<Capacitor> capacitors;
    std::vector<Resistor> resistors;
    std::vector<CurrentSource> sources;
    std::vector<PrescribedNode> prescribed;

    int add_node() { return n_nodes++; }

    void check() const {
        auto ok = [&](int n) { return n >= 0 && n < n_nodes; };
        for (const auto& b : branches)
            if (!ok(b.node_p) || !ok(b.node_n) || b.node_p == b.node_n)
                throw TopologyError("phase branch has invalid nodes");
        for (const auto& c : capacitors)
            if (!ok(c.node_p) || !ok(c.node_n)) throw TopologyError("capacitor has invalid nodes");
        for (const auto& r : resistors)
            if (!ok(r.node_p) || !ok(r.node_n) || !(r.resistance > 0.0))
                throw TopologyError("resistor invalid");
        for (const auto& s : sources)
            if (!ok(s.node_p) || !ok(s.node_n)) throw TopologyError("source has invalid nodes");
        for (const auto& p : prescribed)
            if (!ok(p.node) || p.node == 0) throw TopologyError("prescribed node invalid");
    }
};

/// Branch current as a function of branch phase (rad); A.
inline double branch_current(const BranchDevice& dev, double phi) {
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearInductor>)
                return phi * kPhi0 / (kTwoPi * d.inductance);
            else if constexpr (std::is_same_v<T, JJParams>)
                return jj_current(phi, d);
            else
                return snail_current(phi, d);
        },
        dev);
}

/// d(branch current)/d(phase); A/rad.
inline double branch_current_derivative(const BranchDevice& dev, double phi) {
    return std::visit(
        [&](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearInductor>)
                return kPhi0 / (kTwoPi * d.inductance);
            else if constexpr (std::is_same_v<T, JJParams>)
                return jj_current_derivative(phi, d);
            else
                return snail_current_derivative(phi, d);
        },
        dev);
}

/// Capacitance in parallel with the branch (junction capacitance); F.
inline double branch_capacitance(const BranchDevice& dev) {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, LinearInductor>)
                return 0.0;
            else if constexpr (std::is_same_v<T, JJParams>)
                return d.c_j;
            else
                return d.c_j1 + d.c_j2 / d.n_series;  // single junction || series array
        },
        dev);
}

/// Differential inductance at the given phase; H.
inline double branch_inductance(const BranchDevice& dev, double phi) {
    const double didphi = branch_current_derivative(dev, phi);
    if (!(didphi > 0.0)) throw NonInductiveError("branch not inductive at this phase");
    return kPhi0 / (kTwoPi * didphi);
}

// ---------------------------------------------------------------------------
// Repeated-cell chain builders
// ---------------------------------------------------------------------------

/// Parameters of a homogeneous transmission-line chain of identical cells:
/// a series phase branch per cell and a shunt capacitor at every interior
/// node, terminated by source and load resistors.
struct ChainSpec {
    int n_cells = 1;
    BranchDevice series;      ///< per-cell inductive element
    double c_shunt = 0.0;     ///< F, node to ground
    double z_source = 50.0;   ///< ohm
    double z_load = 50.0;     ///< ohm
};

/// Built chain plus bookkeeping for measurements.
struct Chain {
    Circuit circuit;
    int input_node = 0;         ///< node behind which the source sits
    int output_node = 0;        ///< node across the load
    std::vector<int> nodes;     ///< nodes[k] = node after k cells (nodes[0] = input)
    ChainSpec spec;
};

inline Chain build_chain(const ChainSpec& spec) {
    if (spec.n_cells < 1) throw ConfigError("build_chain: need at least one cell");
    Chain ch;
    ch.spec = spec;
    Circuit& c = ch.circuit;
    ch.nodes.resize(spec.n_cells + 1);
    ch.nodes[0] = c.add_node();
    for (int k = 0; k < spec.n_cells; ++k) {
        const int nxt = c.add_node();
        ch.nodes[k + 1] = nxt;
        c.branches.push_back({ch.nodes[k], nxt, spec.series, "cell" + std::to_string(k)});
        c.capacitors.push_back({nxt, 0, spec.c_shunt});
    }
    ch.input_node = ch.nodes.front();
    ch.output_node = ch.nodes.back();
    c.resistors.push_back({ch.input_node, 0, spec.z_source});
    c.resistors.push_back({ch.output_node, 0, spec.z_load});
    c.check();
    return ch;
}

/// Drive the chain input with a Norton tone source. Peak source current for
/// a given available power P (W) into z_source: i = sqrt(8 P / z).
inline void add_input_tone(Chain& ch, double freq, double i_peak, double phase = 0.0) {
    for (auto& s : ch.circuit.sources) {
        if (s.node_p == ch.input_node && s.node_n == 0) {
            s.tones.push_back({freq, i_peak, phase});
            return;
        }
    }
    CurrentSource src;
    src.node_p = ch.input_node;
    src.node_n = 0;
    src.tones.push_back({freq, i_peak, phase});
    ch.circuit.sources.push_back(src);
}

/// Peak Norton current delivering available power `p_watt` from a source
/// with internal resistance z.
inline double norton_current_for_power(double p_watt, double z) {
    if (!(z > 0.0) || p_watt < 0.0) throw ConfigError("norton_current_for_power: bad arguments");
    return std::sqrt(8.0 * p_watt / z);
}

inline double dbm_to_watt(double p_dbm) { return 1e-3 * std::pow(10.0, p_dbm / 10.0); }
inline double watt_to_dbm(double p_watt) { return 10.0 * std::log10(p_watt / 1e-3); }

/// Linearise the chain's series element about zero phase (or a solved
/// operating point for flux-biased devices) into an LC cell for small-signal
/// analysis.
inline LinearCell linearize_chain_cell(const ChainSpec& spec, double phi_op = 0.0) {
    LinearCell cell;
    cell.l_series = branch_inductance(spec.series, phi_op);
    cell.c_junction = branch_capacitance(spec.series);
    cell.c_shunt = spec.c_shunt;
    return cell;
}

}  // namespace twpa
