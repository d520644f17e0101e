// Command-line front end: builds circuits from unit-suffixed config files,
// runs the linear, transient, harmonic-balance and envelope analyses, and
// emits reproducible CSV results.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure,
// 4 partial sweep (some points failed to converge).

#include <CLI11.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twpa/analysis.hpp"
#include "twpa/config.hpp"
#include "twpa/coupled_mode.hpp"
#include "twpa/csv.hpp"
#include "twpa/sweep.hpp"
#include "twpa/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitPartial = 4;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    int jobs = 0;
    int harmonics = 0;  ///< 0 = take from config
    std::string method = "";
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required = true) {
    auto* c = cmd->add_option("--config", a.config_path, "run configuration file");
    if (config_required) c->required();
    cmd->add_option("--out", a.out_dir, "output directory (created if missing)");
    cmd->add_option("--jobs", a.jobs, "max concurrent solves (default: TWPA_HB_THREADS or cores)");
    cmd->add_option("--harmonics", a.harmonics, "override the harmonic truncation order");
    cmd->add_option("--method", a.method, "linear solver: lu or gmres")
        ->check(CLI::IsMember({"lu", "gmres"}));
    cmd->add_flag("--verbose", a.verbose, "per-iteration solver diagnostics");
}

std::string out_path(const CommonArgs& a, const std::string& name) {
    std::filesystem::create_directories(a.out_dir);
    return (std::filesystem::path(a.out_dir) / name).string();
}

twpa::HBOptions hb_options(const twpa::Config& cfg, const CommonArgs& a) {
    twpa::HBOptions o;
    std::string method = a.method.empty() ? cfg.get_string("hb", "method", "lu") : a.method;
    if (method == "gmres")
        o.method = twpa::LinearSolverKind::gmres;
    else if (method == "lu")
        o.method = twpa::LinearSolverKind::lu;
    else
        throw twpa::ConfigError("[hb] method must be lu or gmres");
    o.rtol = cfg.get_number("hb", "rtol", o.rtol);
    o.atol = cfg.get_quantity("hb", "atol", "A", o.atol);
    o.max_newton = cfg.get_int("hb", "max_newton", o.max_newton);
    o.verbose = a.verbose;
    return o;
}

std::string options_summary(const twpa::HBOptions& o, int harmonics) {
    std::ostringstream ss;
    ss << "method=" << (o.method == twpa::LinearSolverKind::gmres ? "gmres" : "lu")
       << " harmonics=" << harmonics << " rtol=" << o.rtol << " atol=" << o.atol
       << " max_newton=" << o.max_newton;
    return ss.str();
}

void stamp(twpa::CsvWriter& w, const twpa::Config& cfg, const std::string& options) {
    w.comment("config_hash", cfg.hash());
    w.comment("options", options);
}

// ---------------------------------------------------------------------------

int cmd_sparams(const CommonArgs& a) {
    using namespace twpa;
    const Config cfg = Config::load(a.config_path);
    const ChainSpec spec = chain_from_config(cfg);

    const double f_start = cfg.get_quantity("sparams", "f_start", "Hz");
    const double f_stop = cfg.get_quantity("sparams", "f_stop", "Hz");
    const int points = cfg.get_int("sparams", "points");
    if (points < 1) throw ConfigError("[sparams] points must be >= 1");
    if (!(f_stop >= f_start) || f_start <= 0.0)
        throw ConfigError("[sparams] need 0 < f_start <= f_stop");

    double phi_op = 0.0;
    if (const auto* sn = std::get_if<SNAILParams>(&spec.series))
        phi_op = solve_snail_operating_point(0.0, *sn);
    const LinearCell cell = linearize_chain_cell(spec, phi_op);

    CsvWriter w(out_path(a, "sparams.csv"));
    stamp(w, cfg, "linear two-port cascade");
    w.columns({"f_hz", "s11_re", "s11_im", "s21_re", "s21_im", "s11_db", "s21_db", "zin_re",
               "zin_im"});
    for (int i = 0; i < points; ++i) {
        const double f = points == 1 ? f_start
                                     : f_start + (f_stop - f_start) * i / (points - 1);
        const TwoPortABCD m = linear_chain_abcd(cell, spec.n_cells, f);
        const SParams s = abcd_to_s(m, spec.z_source, spec.z_load);
        const std::complex<double> zin = input_impedance(m, spec.z_load);
        w.row({f, s.s11.real(), s.s11.imag(), s.s21.real(), s.s21.imag(),
               20.0 * std::log10(std::max(std::abs(s.s11), 1e-300)),
               20.0 * std::log10(std::max(std::abs(s.s21), 1e-300)), zin.real(), zin.imag()});
    }

    // optional flux sweep of |S21| at a fixed frequency (flux-tunable devices)
    if (cfg.has("sparams", "flux_points")) {
        const auto* sn = std::get_if<SNAILParams>(&spec.series);
        if (sn == nullptr)
            throw ConfigError("[sparams] flux sweep requires a snail chain");
        const double fl0 = cfg.get_quantity("sparams", "flux_start", "rad");
        const double fl1 = cfg.get_quantity("sparams", "flux_stop", "rad");
        const int np = cfg.get_int("sparams", "flux_points");
        const double f0 = cfg.get_quantity("sparams", "flux_probe_f", "Hz");
        if (np < 2) throw ConfigError("[sparams] flux_points must be >= 2");
        CsvWriter wf(out_path(a, "sparams_flux.csv"));
        stamp(wf, cfg, "linear two-port cascade, flux swept");
        wf.columns({"flux_rad", "s21_db"});
        for (int i = 0; i < np; ++i) {
            SNAILParams p = *sn;
            p.flux_f = fl0 + (fl1 - fl0) * i / (np - 1);
            ChainSpec sp = spec;
            sp.series = p;
            const LinearCell c2 = linearize_chain_cell(sp, solve_snail_operating_point(0.0, p));
            const SParams s = abcd_to_s(linear_chain_abcd(c2, sp.n_cells, f0), sp.z_source,
                                        sp.z_load);
            wf.row({p.flux_f, 20.0 * std::log10(std::max(std::abs(s.s21), 1e-300))});
        }
    }
    return kExitOk;
}

int cmd_transient(const CommonArgs& a) {
    using namespace twpa;
    const Config cfg = Config::load(a.config_path);
    const ChainSpec spec = chain_from_config(cfg);

    Chain ch = build_chain(spec);
    const double f = cfg.get_quantity("transient", "f", "Hz");
    const double amp = drive_amplitude_from_config(cfg, "transient", spec.z_source);
    add_input_tone(ch, f, amp);
    if (cfg.has("transient", "dc")) {
        ch.circuit.sources.front().dc += cfg.get_quantity("transient", "dc", "A");
    }

    TransientOptions to;
    to.dt = cfg.get_quantity("transient", "dt", "s", 1.0 / (64.0 * f));
    to.t_end = cfg.get_quantity("transient", "t_end", "s");
    to.record_stride = cfg.get_int("transient", "record_stride", 1);

    TransientSolver solver(ch.circuit);
    const TransientResult tr = solver.run(to);

    const int mid = ch.nodes[static_cast<size_t>(spec.n_cells / 2)];
    CsvWriter w(out_path(a, "transient.csv"));
    std::ostringstream opts;
    opts << "dt=" << to.dt << " t_end=" << to.t_end;
    stamp(w, cfg, opts.str());
    w.columns({"time_s", "v_in", "v_mid", "v_out"});
    for (size_t i = 0; i < tr.times.size(); ++i)
        w.row({tr.times[i], tr.voltages(static_cast<long>(i), ch.input_node - 1),
               tr.voltages(static_cast<long>(i), mid - 1),
               tr.voltages(static_cast<long>(i), ch.output_node - 1)});

    // wavefront summary: half of the tail amplitude at each probe
    auto tail_amp = [&](int node) {
        double m = 0.0;
        const long n = static_cast<long>(tr.times.size());
        for (long i = (3 * n) / 4; i < n; ++i)
            m = std::max(m, std::abs(tr.voltages(i, node - 1)));
        return m;
    };
    CsvWriter ws(out_path(a, "transient_summary.csv"));
    stamp(ws, cfg, opts.str());
    ws.columns({"probe", "node", "tail_amplitude_v", "front_arrival_s"});
    const std::vector<std::pair<std::string, int>> probes = {
        {"input", ch.input_node}, {"mid", mid}, {"output", ch.output_node}};
    for (const auto& [name, node] : probes) {
        const double amp_v = tail_amp(node);
        double t_arr = std::numeric_limits<double>::quiet_NaN();
        try {
            t_arr = front_arrival_time(tr.times, tr.voltages.col(node - 1), 0.5 * amp_v);
        } catch (const Error&) {
            // threshold never crossed; NaN stays in the record
        }
        std::ostringstream r1, r2;
        r1 << amp_v;
        r2 << t_arr;
        ws.row_raw({name, std::to_string(node), r1.str(), r2.str()});
    }
    return kExitOk;
}

int cmd_hb(const CommonArgs& a) {
    using namespace twpa;
    const Config cfg = Config::load(a.config_path);
    const ChainSpec spec = chain_from_config(cfg);
    const HBOptions opt = hb_options(cfg, a);
    const int k = a.harmonics > 0 ? a.harmonics : cfg.get_int("hb", "harmonics", 4);
    if (k < 1) throw ConfigError("harmonics must be >= 1");

    Chain ch = build_chain(spec);
    const double f_pump = cfg.get_quantity("pump", "f", "Hz");
    const double i_pump = drive_amplitude_from_config(cfg, "pump", spec.z_source);
    add_input_tone(ch, f_pump, i_pump);
    if (cfg.has("pump", "dc")) ch.circuit.sources.front().dc += cfg.get_quantity("pump", "dc", "A");

    HBProblem hb(ch.circuit, build_tone_grid({f_pump}, {k}));
    const int steps = cfg.get_int("hb", "continuation_steps", 4);
    const HBSolution sol = hb.solve_with_continuation(opt, steps);

    CsvWriter w(out_path(a, "hb_solution.csv"));
    stamp(w, cfg, options_summary(opt, k));
    w.columns({"node", "n", "m", "freq_hz", "re_v", "im_v"});
    for (int node = 1; node < ch.circuit.n_nodes; ++node) {
        const Spectrum s = hb.node_spectrum(sol.x, node);
        for (int b = 0; b < hb.grid().size(); ++b) {
            const MixIndex mi = hb.grid().index(b);
            w.row({double(node), double(mi.n), double(mi.m), hb.grid().freq(b), s[b].real(),
                   s[b].imag()});
        }
    }

    CsvWriter wl(out_path(a, "hb_log.csv"));
    stamp(wl, cfg, options_summary(opt, k));
    wl.columns({"iteration", "residual_norm_a", "step"});
    for (const auto& e : sol.log) wl.row({double(e.iteration), e.residual_norm, e.step});
    if (a.verbose)
        std::cerr << "hb: " << sol.iterations << " iterations, residual " << sol.residual_norm
                  << " A\n";
    return kExitOk;
}

int cmd_gain_sweep(const CommonArgs& a) {
    using namespace twpa;
    const Config cfg = Config::load(a.config_path);

    AmpSetup amp;
    amp.spec = chain_from_config(cfg);
    amp.f_pump = cfg.get_quantity("pump", "f", "Hz");
    amp.i_pump = drive_amplitude_from_config(cfg, "pump", amp.spec.z_source);
    amp.pump_order = a.harmonics > 0 ? a.harmonics : cfg.get_int("gain_sweep", "pump_order", 4);
    amp.signal_order = cfg.get_int("gain_sweep", "signal_order", 1);
    amp.hb = hb_options(cfg, a);
    amp.continuation_steps = cfg.get_int("hb", "continuation_steps", 4);
    if (cfg.has("signal", "amplitude") || cfg.has("signal", "power"))
        amp.i_signal = drive_amplitude_from_config(cfg, "signal", amp.spec.z_source);
    else
        amp.i_signal = amp.i_pump / 1000.0;  // small-signal default

    const double f_start = cfg.get_quantity("gain_sweep", "f_start", "Hz");
    const double f_stop = cfg.get_quantity("gain_sweep", "f_stop", "Hz");
    const int points = cfg.get_int("gain_sweep", "points");
    if (points < 1) throw ConfigError("[gain_sweep] points must be >= 1");

    const PumpState pump = solve_pump_state(amp);

    std::vector<double> freqs(static_cast<size_t>(points));
    for (int i = 0; i < points; ++i)
        freqs[static_cast<size_t>(i)] =
            points == 1 ? f_start : f_start + (f_stop - f_start) * i / (points - 1);

    std::vector<std::optional<GainPoint>> results(freqs.size());
    std::vector<std::string> failures(freqs.size());
    parallel_for(points, a.jobs, [&](int i) {
        try {
            results[static_cast<size_t>(i)] = gain_point(amp, freqs[static_cast<size_t>(i)], &pump);
        } catch (const Error& e) {
            failures[static_cast<size_t>(i)] = e.what();
        }
    });

    CsvWriter w(out_path(a, "gain.csv"));
    stamp(w, cfg, options_summary(amp.hb, amp.pump_order));
    w.columns({"f_signal_hz", "f_signal_used_hz", "gain_db", "p_idler_dbm", "converged"});
    int n_fail = 0;
    for (size_t i = 0; i < freqs.size(); ++i) {
        if (results[i]) {
            const GainPoint& pt = *results[i];
            std::ostringstream g, idl;
            g << pt.gain_db;
            idl << pt.p_idler_dbm;
            std::ostringstream fs, fu;
            fs << freqs[i];
            fu << pt.f_signal_used;
            w.row_raw({fs.str(), fu.str(), g.str(), idl.str(), "1"});
        } else {
            ++n_fail;
            std::ostringstream fs;
            fs << freqs[i];
            w.row_raw({fs.str(), "nan", "nan", "nan", "0"});
            if (a.verbose) std::cerr << "point " << freqs[i] << " Hz failed: " << failures[i] << "\n";
        }
    }
    if (n_fail == points) throw MaxIterationsError("no gain-sweep point converged");
    return n_fail > 0 ? kExitPartial : kExitOk;
}

int cmd_coupled_mode(const CommonArgs& a, int cli_modes, double cli_mu, double cli_xi_end) {
    using namespace twpa;
    Config cfg;
    if (!a.config_path.empty()) cfg = Config::load(a.config_path);

    CMParams p;
    p.n_modes = cli_modes > 0 ? cli_modes : cfg.get_int("coupled_mode", "modes", 2);
    p.mu = !std::isnan(cli_mu) ? cli_mu : cfg.get_number("coupled_mode", "mu", 0.0);
    p.xi_end = cli_xi_end > 0.0 ? cli_xi_end : cfg.get_number("coupled_mode", "xi_end", 3.0);
    p.n_steps = cfg.get_int("coupled_mode", "steps", 4096);
    p.store_every = cfg.get_int("coupled_mode", "store_every", 8);
    CMState a0;
    if (cfg.has("coupled_mode", "a1_0")) a0 = {cfg.get_number("coupled_mode", "a1_0")};

    const CMResult res = cm_integrate(p, a0);
    const double xi_per_cell = cfg.get_number("coupled_mode", "xi_per_cell", 0.0);

    CsvWriter w(out_path(a, "coupled_mode.csv"));
    std::ostringstream opts;
    opts << "modes=" << p.n_modes << " mu=" << p.mu << " xi_end=" << p.xi_end
         << " steps=" << p.n_steps;
    stamp(w, cfg, opts.str());
    std::vector<std::string> cols = {"xi"};
    for (int m = 1; m <= p.n_modes; ++m) cols.push_back("a" + std::to_string(m) + "_sq");
    if (xi_per_cell > 0.0) cols.push_back("cell_index");
    w.columns(cols);
    for (const auto& s : res.trajectory) {
        std::vector<double> row = {s.xi};
        for (const auto& v : s.a) row.push_back(std::norm(v));
        if (xi_per_cell > 0.0) row.push_back(s.xi / xi_per_cell);
        w.row(row);
    }
    return kExitOk;
}

int cmd_compare(const CommonArgs& a) {
    using namespace twpa;
    const Config cfg = Config::load(a.config_path);
    const ChainSpec spec = chain_from_config(cfg);
    const int n_modes = cfg.get_int("compare", "modes", 5);
    const HBOptions opt = hb_options(cfg, a);

    Chain ch = build_chain(spec);
    const double f_pump = cfg.get_quantity("pump", "f", "Hz");
    const double i_pump = drive_amplitude_from_config(cfg, "pump", spec.z_source);
    add_input_tone(ch, f_pump, i_pump);

    const int k = a.harmonics > 0 ? a.harmonics : std::max(n_modes, cfg.get_int("hb", "harmonics", n_modes));
    HBProblem hb(ch.circuit, build_tone_grid({f_pump}, {k}));
    const HBSolution sol = hb.solve_with_continuation(opt, cfg.get_int("hb", "continuation_steps", 4));

    std::vector<MixIndex> products;
    for (int m = 1; m <= n_modes; ++m) products.push_back({0, m});
    const Eigen::MatrixXd prof = harmonic_profile_along_chain(hb, sol.x, products);

    // envelope normalisation: a_m = m * phi_m / phi_1(input); the physical
    // power in harmonic m scales as (m * phase amplitude)^2
    const double phi1_in = prof(0, 0);
    if (!(phi1_in > 0.0)) throw NoSolutionError("compare: vanishing pump at the input cell");

    const auto* sn = std::get_if<SNAILParams>(&spec.series);
    CMScaling sc;
    if (sn != nullptr) {
        sc.c3 = extract_c3(*sn).c3;
    } else {
        throw ConfigError("compare: envelope mapping requires a snail chain (quadratic mixing)");
    }
    const LinearCell cell = linearize_chain_cell(spec, solve_snail_operating_point(0.0, *sn));
    sc.phase_amp = phi1_in;
    sc.omega_pump = kTwoPi * f_pump;
    sc.omega_cell = 1.0 / std::sqrt(cell.l_series * cell.c_shunt);
    sc.cell_pitch = 1.0;  // work in units of cells

    // dimensionless mismatch from the discrete dispersion
    const double k1 = ladder_wavenumber(sc.omega_pump, cell.l_series, cell.c_shunt);
    const double k2 = ladder_wavenumber(2.0 * sc.omega_pump, cell.l_series, cell.c_shunt);

    CMParams p;
    p.n_modes = n_modes;
    p.mu = mu_of_dispersion(sc, k1, k2);
    p.xi_end = xi_of_position(sc, static_cast<double>(spec.n_cells - 1));
    p.n_steps = std::max(4096, 64 * spec.n_cells);
    p.store_every = std::max(1, p.n_steps / std::max(1, spec.n_cells - 1));
    const CMResult cm = cm_integrate(p);

    CsvWriter w(out_path(a, "compare.csv"));
    std::ostringstream opts;
    opts << options_summary(opt, k) << " modes=" << n_modes << " mu=" << p.mu
         << " xi_end=" << p.xi_end;
    stamp(w, cfg, opts.str());
    std::vector<std::string> cols = {"cell_index"};
    for (int m = 1; m <= n_modes; ++m) cols.push_back("hb_a" + std::to_string(m) + "_sq");
    for (int m = 1; m <= n_modes; ++m) cols.push_back("cm_a" + std::to_string(m) + "_sq");
    w.columns(cols);
    const double dxi = xi_of_position(sc, 1.0);
    for (int cellidx = 0; cellidx < spec.n_cells; ++cellidx) {
        std::vector<double> row = {double(cellidx)};
        for (int m = 1; m <= n_modes; ++m) {
            const double am = m * prof(cellidx, m - 1) / phi1_in;
            row.push_back(am * am);
        }
        // nearest stored envelope sample for this cell
        const double xi = cellidx * dxi;
        const auto& traj = cm.trajectory;
        size_t best = 0;
        for (size_t i = 1; i < traj.size(); ++i)
            if (std::abs(traj[i].xi - xi) < std::abs(traj[best].xi - xi)) best = i;
        for (int m = 1; m <= n_modes; ++m) row.push_back(std::norm(traj[best].a[m - 1]));
        w.row(row);
    }
    return kExitOk;
}

int cmd_validate(const CommonArgs& a) {
    using namespace twpa;
    const Config cfg = Config::load(a.config_path);
    // schema check of the circuit block; configs without one (e.g. pure
    // envelope-model runs) are still valid
    if (cfg.has_section("chain")) (void)chain_from_config(cfg);
    std::cout << "ok: " << a.config_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nonlinear periodic-steady-state simulator for superconducting "
                 "traveling-wave parametric amplifiers"};
    app.set_version_flag("--version", twpa::kVersion);
    app.require_subcommand(1);

    CommonArgs args;
    int cm_modes = 0;
    double cm_mu = std::numeric_limits<double>::quiet_NaN();
    double cm_xi_end = 0.0;

    auto* sp = app.add_subcommand("sparams", "linear S-parameter / impedance sweep");
    add_common(sp, args);
    auto* tr = app.add_subcommand("transient", "time-domain integration with wavefront summary");
    add_common(tr, args);
    auto* hb = app.add_subcommand("hb", "harmonic-balance periodic steady state");
    add_common(hb, args);
    auto* gs = app.add_subcommand("gain-sweep", "two-tone gain vs signal frequency");
    add_common(gs, args);
    auto* cm = app.add_subcommand("coupled-mode", "reduced envelope model of pump harmonics");
    add_common(cm, args, /*config_required=*/false);
    cm->add_option("--M", cm_modes, "number of retained harmonics");
    cm->add_option("--mu", cm_mu, "dimensionless phase mismatch");
    cm->add_option("--xi-end", cm_xi_end, "integration endpoint in xi");
    auto* cp = app.add_subcommand("compare", "overlay harmonic-balance and envelope profiles");
    add_common(cp, args);
    auto* vc = app.add_subcommand("validate-config", "parse and schema-check a configuration");
    add_common(vc, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (sp->parsed()) return cmd_sparams(args);
        if (tr->parsed()) return cmd_transient(args);
        if (hb->parsed()) return cmd_hb(args);
        if (gs->parsed()) return cmd_gain_sweep(args);
        if (cm->parsed()) return cmd_coupled_mode(args, cm_modes, cm_mu, cm_xi_end);
        if (cp->parsed()) return cmd_compare(args);
        if (vc->parsed()) return cmd_validate(args);
    } catch (const twpa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const twpa::Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return kExitOk;
}
