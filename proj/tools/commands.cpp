#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "output.hpp"
#include "qtrajgeom/action.hpp"
#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"
#include "qtrajgeom/gaussian.hpp"
#include "qtrajgeom/geometry.hpp"
#include "qtrajgeom/optimal_path.hpp"
#include "qtrajgeom/trajectory.hpp"

namespace qtrajgeom::cli {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> numbers(const Json& v) { return v.get<std::vector<double>>(); }

const char* winner_name(Winner w) {
    switch (w) {
        case Winner::NonWinding: return "non_winding";
        case Winner::Winding: return "winding";
        case Winner::Degenerate: return "degenerate";
        case Winner::Merged: return "merged";
    }
    return "unknown";
}

// Collects per-point failures; any failure makes the exit code nonzero.
class Failures {
public:
    explicit Failures(std::ostream* log) : log_(log) {}

    void add(const std::string& where, const std::exception& e) {
        if (log_) *log_ << "qtrajgeom: " << where << ": " << e.what() << '\n';
        list_.push_back({{"where", where}, {"error", e.what()}});
    }
    bool empty() const { return list_.empty(); }
    const Json& json() const { return list_; }

private:
    std::ostream* log_;
    Json list_ = Json::array();
};

std::string point_label(const char* name, double v) { return std::string(name) + "=" + cell(v); }

Json metadata(const std::string& command, const Json& config, const RunContext& ctx) {
    return {{"command", command}, {"version", ctx.version}, {"config_hash", ctx.hash},
            {"config", config},   {"threads", ctx.threads}};
}

SolverOptions solver_options(const Json& c) {
    SolverOptions opt;
    opt.steps = c.at("steps").get<int>();
    opt.tol = c.at("tol").get<double>();
    return opt;
}

int cmd_simulate(const Json& c, const RunContext& ctx, Json& summary, Failures& failures) {
    MeasurementProtocol p;
    p.Theta = c.at("Theta");
    p.tau = c.at("tau");
    p.T = c.at("T");
    p.N = c.at("N");
    if (c.at("model") == "null") p.model = NullTypeModel{c.at("c").get<double>()};
    p.validate();

    BlochState init;
    const std::string rule = c.at("init");
    if (rule == "equilibrium") {
        const EquilibriumPoint e = equilibrium_point(p.Theta, p.tau, p.T);
        init = {e.theta_e, e.phi_e, 0.0};
    } else if (rule == "on_axis") {
        init = {p.Theta, p.Phi(0.0), 0.0};
    } else {
        init = {c.at("theta0"), c.at("phi0"), 0.0};
    }

    const auto n_traj = c.at("n_traj").get<std::size_t>();
    const auto dump = std::min<std::size_t>(c.at("dump_trajectories").get<std::size_t>(), n_traj);
    EnsembleOptions opt;
    opt.threads = ctx.threads;
    opt.bin_width = c.at("bin_width");
    opt.keep_records = dump > 0;
    const EnsembleSummary ens = run_ensemble(p, init, n_traj, c.at("seed").get<std::uint64_t>(), opt);

    CsvTable traj({"traj_id", "step", "t", "theta", "phi_unwrapped", "chi", "r", "log_weight"});
    for (std::size_t i = 0; i < dump; ++i) {
        const TrajectoryRecord& rec = ens.records[i];
        if (rec.states.empty()) continue;
        // log_weight on row k accumulates the steps before t_k.
        double logw = 0.0;
        for (std::size_t k = 0; k < rec.states.size(); ++k) {
            const BlochState& s = rec.states[k];
            const double r = k < rec.readouts.size() ? rec.readouts[k] : kNaN;
            traj.row(i, k, rec.times[k], s.theta, s.phi, s.chi, r, logw);
            if (k < rec.step_log_weights.size()) logw += rec.step_log_weights[k];
        }
    }
    traj.write(ctx.out_dir / "trajectories.csv", ctx.version, ctx.hash);

    CsvTable table({"traj_id", "phi_final", "chi_final", "log_weight"});
    for (std::size_t i = 0; i < n_traj; ++i) {
        table.row(i, ens.phi_final[i], ens.chi_final[i], ens.log_weight[i]);
    }
    table.write(ctx.out_dir / "ensemble.csv", ctx.version, ctx.hash);

    Json hist = {{"origin", ens.histogram.origin}, {"bin_width", ens.histogram.bin_width},
                 {"counts", ens.histogram.counts}};
    summary["init"] = {{"theta", init.theta}, {"phi", init.phi}};
    summary["histogram"] = hist;
    summary["failed_trajectories"] = ens.failed;
    for (std::size_t i : ens.failed) {
        failures.add("traj_id=" + std::to_string(i), Error(ErrorCode::DegenerateState, "propagation failed"));
    }
    try {
        const SelfClosingStats st =
            self_closing_stats(ens, opt.bin_width, init.phi, c.at("winding").get<int>());
        summary["self_closing"] = {{"count_winding", st.count_winding},
                                   {"count_nonwinding", st.count_nonwinding},
                                   {"P_winding", st.P_winding},
                                   {"P_nonwinding", st.P_nonwinding},
                                   {"R_empirical", st.R_empirical},
                                   {"R_ci95", {st.R_lo, st.R_hi}}};
    } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyBin) throw;
        summary["self_closing"] = {{"error", e.what()}};
    }
    return 0;
}

void write_path_rows(CsvTable& paths, const char* branch, double Theta, double tau,
                     const BranchSolution& b) {
    for (const PathSample& s : b.path) {
        paths.row(branch, Theta, tau, s.t, s.point.theta, s.point.phi, s.point.chi, s.r);
    }
}

int cmd_optimal(const Json& c, const RunContext& ctx, Json& summary, Failures& failures) {
    const std::string mode = c.at("mode");
    const auto taus = numbers(c.at("tau_list"));
    const auto Thetas = numbers(c.at("Theta_list"));
    const SolverOptions opt = solver_options(c);

    if (mode == "equilibrium") {
        CsvTable eq({"Theta", "tau", "theta_e", "phi_e"});
        for (double tau : taus) {
            for (double Theta : Thetas) {
                const EquilibriumPoint e = equilibrium_point(Theta, tau);
                eq.row(Theta, tau, e.theta_e, e.phi_e);
            }
        }
        eq.write(ctx.out_dir / "equilibrium.csv", ctx.version, ctx.hash);
        return 0;
    }

    CsvTable chi({"tau", "Theta", "chi_opt", "winner", "chi_n0", "chi_n1", "action_n0", "action_n1"});
    if (mode == "theta_scan") {
        Json jumps = Json::array();
        double Theta_C = kNaN;
        for (double tau : taus) {
            try {
                const ThetaJumpScan scan = scan_theta_jump(tau, c.at("n_theta"), c.at("theta_lo"), 10.0, opt);
                for (std::size_t i = 0; i < scan.Theta.size(); ++i) {
                    const OptimalPhase& ph = scan.phases[i];
                    chi.row(tau, scan.Theta[i], ph.chi_opt, winner_name(ph.winner), ph.chi_n0, ph.chi_n1,
                            ph.action_n0, ph.action_n1);
                }
                Json entry = {{"tau", tau}, {"jumps", scan.jumps}, {"merged", scan.merged}};
                jumps.push_back(entry);
                for (double j : scan.jumps) Theta_C = std::isnan(Theta_C) ? j : std::max(Theta_C, j);
            } catch (const std::exception& e) {
                failures.add(point_label("tau", tau), e);
            }
        }
        chi.write(ctx.out_dir / "chi_of_Theta.csv", ctx.version, ctx.hash);
        Json tr = {{"Theta_jump", jumps}, {"Theta_C", Theta_C}};
        write_json(ctx.out_dir / "transitions.json", tr);
        summary["Theta_C"] = Theta_C;
        return 0;
    }

    CsvTable branches({"branch", "n", "Theta", "tau", "action", "density", "chi"});
    CsvTable paths({"branch", "Theta", "tau", "t", "theta", "phi", "chi", "r"});
    for (double tau : taus) {
        for (double Theta : Thetas) {
            try {
                MeasurementProtocol p;
                p.Theta = Theta;
                p.tau = tau;
                const BranchSolution n0 = n0_branch(Theta, tau, opt);
                const BranchSolution n1 =
                    n1_branch(p, n0.path.empty() ? opt.steps : static_cast<int>(n0.path.size()) - 1);
                const OptimalPhase ph = compare_branches(n0, n1);
                branches.row("non_winding", n0.n, Theta, tau, n0.action, n0.density, n0.chi);
                branches.row("winding", n1.n, Theta, tau, n1.action, n1.density, n1.chi);
                chi.row(tau, Theta, ph.chi_opt, winner_name(ph.winner), ph.chi_n0, ph.chi_n1, ph.action_n0,
                        ph.action_n1);
                if (c.at("write_paths").get<bool>()) {
                    write_path_rows(paths, "non_winding", Theta, tau, n0);
                    write_path_rows(paths, "winding", Theta, tau, n1);
                }
            } catch (const std::exception& e) {
                failures.add(point_label("tau", tau) + " " + point_label("Theta", Theta), e);
            }
        }
    }
    branches.write(ctx.out_dir / "branches.csv", ctx.version, ctx.hash);
    chi.write(ctx.out_dir / "chi_of_Theta.csv", ctx.version, ctx.hash);
    if (c.at("write_paths").get<bool>()) paths.write(ctx.out_dir / "paths.csv", ctx.version, ctx.hash);
    return 0;
}

int cmd_transition(const Json& c, const RunContext& ctx, Json& summary, Failures& failures) {
    Json tr = Json::object();
    FamilyOptions fam;
    fam.n_theta = c.at("n_theta");
    fam.steps = c.at("steps");
    fam.threads = ctx.threads;
    const double tol = c.at("tol");

    auto attempt = [&](const char* key, auto&& fn) {
        try {
            tr[key] = fn();
        } catch (const std::exception& e) {
            tr[key] = nullptr;
            failures.add(key, e);
        }
    };
    if (c.at("equator").get<bool>()) attempt("tau_c_equator", [] { return find_tau_c_equator(); });
    if (c.at("open").get<bool>()) {
        attempt("tau_c_open", [&] {
            return open_transition_scan(InitRule::OnAxis, RecordRule::Greedy, numbers(c.at("open_tau_grid")),
                                        tol, fam)
                .tau_c;
        });
    }
    if (c.at("equilibrium_open").get<bool>()) {
        attempt("tau_c_equilibrium_open", [&] {
            return open_transition_scan(InitRule::Equilibrium, RecordRule::Unit,
                                        numbers(c.at("equilibrium_open_tau_grid")), tol, fam)
                .tau_c;
        });
    }
    if (c.at("theta_c").get<bool>()) {
        attempt("Theta_C", [&] {
            return find_Theta_C(numbers(c.at("theta_c_taus")), c.at("theta_c_n_theta")).Theta_C;
        });
    }
    if (c.at("tau_c_eff").get<bool>()) attempt("tau_c_eff", [] { return find_tau_c_eff(); });
    write_json(ctx.out_dir / "transitions.json", tr);
    summary["transitions"] = tr;
    return 0;
}

int cmd_chern(const Json& c, const RunContext& ctx, Json&, Failures& failures) {
    FamilyOptions fam;
    fam.n_theta = c.at("n_theta");
    fam.steps = c.at("steps");
    fam.eps = c.at("eps");
    fam.threads = ctx.threads;
    const InitRule init = c.at("init") == "on_axis" ? InitRule::OnAxis : InitRule::Equilibrium;
    const RecordRule record = c.at("record") == "greedy" ? RecordRule::Greedy : RecordRule::Unit;

    CsvTable chi({"tau", "Theta", "chi_g"});
    CsvTable chern({"tau", "C_curvature", "C_boundary", "mismatch", "winding", "coverage_gap", "covers_sphere"});
    for (double tau : numbers(c.at("tau_list"))) {
        try {
            const PhaseFamily f = build_family(tau, init, record, fam);
            for (std::size_t i = 0; i < f.Theta.size(); ++i) chi.row(tau, f.Theta[i], f.chi_g[i]);
            const ChernResult C = chern_number(f, fam.closure_samples);
            const int w = winding_number(f.Theta, f.chi_g);
            const double gap = coverage_gap(f);
            chern.row(tau, C.curvature, C.boundary, C.mismatch, w, gap, gap < 0.2 ? 1 : 0);
        } catch (const std::exception& e) {
            failures.add(point_label("tau", tau), e);
        }
    }
    chi.write(ctx.out_dir / "chi_of_Theta.csv", ctx.version, ctx.hash);
    chern.write(ctx.out_dir / "chern.csv", ctx.version, ctx.hash);
    return 0;
}

int cmd_corrections(const Json& c, const RunContext& ctx, Json& summary, Failures& failures) {
    const auto taus = numbers(c.at("tau_list"));
    CsvTable ratio({"tau", "R_saddle", "R_corrected", "R_empirical", "R_empirical_lo", "R_empirical_hi",
                    "action_n0", "action_n1", "det_ratio_n0", "det_ratio_n1", "u_T_n0", "u_T_n1"});
    std::vector<CorrectedRatio> rows;
    try {
        rows = corrected_ratio_scan(taus);
    } catch (const std::exception&) {
        for (double tau : taus) {
            try {
                rows.push_back(corrected_transition_ratio(tau));
            } catch (const std::exception& e) {
                failures.add(point_label("tau", tau), e);
            }
        }
    }
    const bool mc = c.at("monte_carlo");
    for (const CorrectedRatio& r : rows) {
        double R_emp = kNaN, lo = kNaN, hi = kNaN;
        if (mc) {
            MeasurementProtocol p;
            p.Theta = 0.5 * kPi;
            p.tau = r.tau;
            p.N = c.at("N");
            const EquilibriumPoint e = equilibrium_point(p.Theta, p.tau);
            EnsembleOptions opt;
            opt.threads = ctx.threads;
            opt.bin_width = c.at("bin_width");
            const EnsembleSummary ens =
                run_ensemble(p, {e.theta_e, e.phi_e, 0.0}, c.at("n_traj"), c.at("seed"), opt);
            try {
                const SelfClosingStats st = self_closing_stats(ens, opt.bin_width, e.phi_e);
                R_emp = st.R_empirical;
                lo = st.R_lo;
                hi = st.R_hi;
            } catch (const Error& err) {
                if (err.code() != ErrorCode::EmptyBin) throw;
                if (ctx.log) *ctx.log << "qtrajgeom: tau=" << r.tau << ": " << err.what() << '\n';
            }
        }
        ratio.row(r.tau, r.R_saddle, r.R_corrected, R_emp, lo, hi, r.non_winding.S_saddle, r.winding.S_saddle,
                  r.non_winding.det_ratio, r.winding.det_ratio, r.non_winding.u_T, r.winding.u_T);
    }
    ratio.write(ctx.out_dir / "ratio.csv", ctx.version, ctx.hash);

    if (c.at("find_tau_c_eff").get<bool>()) {
        try {
            summary["tau_c_eff"] = find_tau_c_eff(c.at("tau_lo"), c.at("tau_hi"));
        } catch (const std::exception& e) {
            summary["tau_c_eff"] = nullptr;
            failures.add("tau_c_eff", e);
        }
    }
    return 0;
}

}  // namespace

int run_command(const std::string& command, const Json& config, const RunContext& ctx) {
    std::filesystem::create_directories(ctx.out_dir);
    Json summary = metadata(command, config, ctx);
    Failures failures(ctx.log);
    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    if (command == "simulate") {
        code = cmd_simulate(config, ctx, summary, failures);
    } else if (command == "optimal") {
        code = cmd_optimal(config, ctx, summary, failures);
    } else if (command == "transition") {
        code = cmd_transition(config, ctx, summary, failures);
    } else if (command == "chern") {
        code = cmd_chern(config, ctx, summary, failures);
    } else if (command == "corrections") {
        code = cmd_corrections(config, ctx, summary, failures);
    } else {
        throw Error(ErrorCode::ConfigError, "unknown command '" + command + "'");
    }
    summary["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    summary["failures"] = failures.json();
    write_json(ctx.out_dir / "summary.json", summary);
    return (code == 0 && failures.empty()) ? 0 : 1;
}

}  // namespace qtrajgeom::cli
