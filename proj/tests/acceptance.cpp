// Acceptance run: one PASS/FAIL line per criterion with its measured value,
// tolerance and wall time. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qtrajgeom/action.hpp"
#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"
#include "qtrajgeom/gaussian.hpp"
#include "qtrajgeom/geometry.hpp"
#include "qtrajgeom/optimal_path.hpp"
#include "qtrajgeom/trajectory.hpp"

using namespace qtrajgeom;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

MeasurementProtocol protocol(double Theta, double tau, int N = 100) {
    MeasurementProtocol p;
    p.Theta = Theta;
    p.tau = tau;
    p.N = N;
    return p;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

Outcome action_anchor() {
    double worst = 0.0;
    for (double tau : {0.05, 0.1, 0.2}) {
        const EquilibriumPoint e = equilibrium_point(kPi / 2, tau);
        const EquilibriumMomenta m = equilibrium_momenta(kPi / 2, tau);
        PhasePoint start;
        start.theta = e.theta_e;
        start.phi = e.phi_e;
        start.p_phi = m.p_phi;
        start.p_theta = m.p_theta;
        const ExtremalEndpoint end = integrate_extremal(protocol(kPi / 2, tau), start, 0.0, 1.0, 4000);
        worst = std::max(worst, std::abs(end.action + 2 * kPi * kPi * tau));
    }
    return {worst < 1e-8, "max |S + 2 pi^2 tau| = " + fmt("%.3e", worst) + " (tol 1e-8)"};
}

Outcome equilibrium_stationarity() {
    double worst = 0.0;
    double at_Theta = 0.0, at_tau = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double Theta = 0.15 + (kPi - 0.3) * i / 9;
        for (int j = 0; j < 10; ++j) {
            const double tau = 0.05 * std::pow(40.0, j / 9.0);  // 0.05 .. 2
            const EquilibriumPoint e = equilibrium_point(Theta, tau);
            const EquilibriumMomenta m = equilibrium_momenta(Theta, tau);
            const PhasePoint rot{-e.phi_e, e.theta_e, 0.0, -m.p_phi, m.p_theta, 0.0};
            const PhaseRate r = rotating_hamilton_rhs(rot, protocol(Theta, tau), 0.0);
            const double size =
                std::max({std::abs(r.q.phi), std::abs(r.q.theta), std::abs(r.p_phi), std::abs(r.p_theta)});
            if (size > worst) {
                worst = size;
                at_Theta = Theta;
                at_tau = tau;
            }
        }
    }
    return {worst < 1e-10, "max |rhs| = " + fmt("%.3e", worst) + " at Theta=" + fmt("%.3f", at_Theta) +
                               ", tau=" + fmt("%.3f", at_tau) + " (tol 1e-10)"};
}

Outcome equator_transition() {
    const double tau_c = find_tau_c_equator();
    return {tau_c >= 0.10 && tau_c <= 0.12, "tau_c = " + fmt("%.6f", tau_c) + " (target [0.10, 0.12])"};
}

Outcome open_transition(InitRule init, RecordRule record, const std::vector<double>& grid, double lo,
                        double hi) {
    FamilyOptions opt;
    opt.n_theta = 64;
    const TransitionScan scan = open_transition_scan(init, record, grid, 1e-4, opt);
    std::ostringstream w;
    for (int x : scan.winding) w << x;
    return {scan.tau_c >= lo && scan.tau_c <= hi,
            "tau_c = " + fmt("%.5f", scan.tau_c) + " (target [" + fmt("%.2f", lo) + ", " + fmt("%.2f", hi) +
                "]), windings " + w.str()};
}

Outcome theta_c() {
    std::vector<double> taus;
    for (int i = 0; i <= 10; ++i) taus.push_back(0.10 + 0.01 * i);
    const ThetaCResult r = find_Theta_C(taus, 128);
    return {r.Theta_C >= 0.90 && r.Theta_C <= 1.00, "Theta_C = " + fmt("%.4f", r.Theta_C) + " (target [0.90, 1.00])"};
}

double det_closed(double tau) {
    const double w = std::sqrt(4 * kPi * kPi * tau * tau + 1);
    return tau * std::sinh(w / tau) / w;
}

SecondVariation equilibrium_variation(double tau) {
    const MeasurementProtocol p = protocol(kPi / 2, tau);
    return second_variation(n1_branch(p, 4000), p);
}

Outcome gy_anchor() {
    double worst = 0.0;
    for (double tau : {0.05, 0.1, 0.5}) {
        const GelfandYaglom gy = gelfand_yaglom(equilibrium_variation(tau));
        worst = std::max(worst, std::abs(gy.det_ratio / det_closed(tau) - 1.0));
    }
    return {worst < 1e-6, "max relative error = " + fmt("%.3e", worst) + " (tol 1e-6)"};
}

Outcome zeta_anchor() {
    double worst = 0.0;
    for (double tau : {0.05, 0.1, 0.5}) {
        const double u_T = equilibrium_variation(tau).clock.u_T;
        worst = std::max(worst, std::abs(std::abs(u_T) - 4 * kPi * kPi * tau / (4 * kPi * kPi * tau * tau + 1)));
    }
    return {worst < 1e-10, "max |u_T - closed form| = " + fmt("%.3e", worst) + " (tol 1e-10)"};
}

Outcome corrected_transition() {
    try {
        const double tau = find_tau_c_eff();
        return {tau >= 0.035 && tau <= 0.055, "tau_c_eff = " + fmt("%.5f", tau) + " (target [0.035, 0.055])"};
    } catch (const Error& e) {
        double hi = 0.0;
        for (const CorrectedRatio& r : corrected_ratio_scan({0.3, 0.2, 0.1, 0.05, 0.03, 0.02})) {
            hi = std::max(hi, r.R_corrected);
        }
        return {false, std::string(e.what()) + "; max R_corrected on [0.02, 0.3] = " + fmt("%.4g", hi)};
    }
}

Outcome monte_carlo() {
    const std::vector<double> taus{0.2, 0.1, 0.045, 0.02};
    const std::vector<CorrectedRatio> theory = corrected_ratio_scan(taus);
    bool pass = true;
    std::ostringstream out;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const double tau = taus[i];
        const EquilibriumPoint e = equilibrium_point(kPi / 2, tau);
        EnsembleOptions opt;
        opt.bin_width = 0.1;
        const EnsembleSummary s = run_ensemble(protocol(kPi / 2, tau), {e.theta_e, e.phi_e, 0.0}, 500, 1, opt);
        out << (i ? "; " : "") << "tau=" << tau << " R_corr=" << fmt("%.3g", theory[i].R_corrected);
        try {
            const SelfClosingStats st = self_closing_stats(s, 0.1, e.phi_e);
            const bool in = st.R_lo <= theory[i].R_corrected && theory[i].R_corrected <= st.R_hi;
            pass = pass && in;
            out << " R_emp=" << fmt("%.3g", st.R_empirical) << " CI [" << fmt("%.3g", st.R_lo) << ", "
                << fmt("%.3g", st.R_hi) << "]" << (in ? "" : " miss");
        } catch (const Error& err) {
            pass = false;
            out << " " << err.what();
        }
    }
    return {pass, out.str()};
}

Outcome chern() {
    const ChernResult strong = chern_number(build_family(0.02, InitRule::OnAxis, RecordRule::Greedy));
    const ChernResult weak = chern_number(build_family(0.5, InitRule::OnAxis, RecordRule::Greedy));
    const bool pass = std::abs(strong.curvature + 1.0) < 0.02 && std::abs(weak.curvature) < 0.02 &&
                      strong.mismatch < 0.05 && weak.mismatch < 0.05;
    return {pass, "C(0.02) = " + fmt("%.5f", strong.curvature) + " mismatch " + fmt("%.2e", strong.mismatch) +
                      ", C(0.5) = " + fmt("%.5f", weak.curvature) + " mismatch " + fmt("%.2e", weak.mismatch)};
}

// Property checks over one fixed-seed trajectory and a few oracles.
Outcome properties() {
    std::ostringstream out;
    bool pass = true;
    auto report = [&](const char* name, double value, double tol, bool below = true) {
        const bool ok = below ? value < tol : value >= tol;
        pass = pass && ok;
        out << (out.tellp() > 0 ? "; " : "") << name << " " << fmt("%.2e", value) << (ok ? "" : " FAIL");
    };

    Rng rng = substream(12, 0);
    MeasurementProtocol p = protocol(0.8, 0.05, 400);
    BlochState s{1.0, 0.2, 0.0};
    double transport = 0.0;
    for (int k = 0; k < p.N; ++k) {
        const MeasurementAxis axis = p.axis_at(p.time(k));
        const StepOutcome o = apply_kraus(s, sample_readout(s, axis, p.dt(), p.tau, rng), axis, p.dt(), p.tau);
        const cplx ov = to_spinor(o.next_state).dot(to_spinor(s));
        transport = std::max(transport, std::abs(ov.imag()) / std::abs(ov));
        s = o.next_state;
    }
    report("transport", transport, 1e-9);

    Rng rng2 = substream(12, 1);
    const TrajectoryRecord eq = propagate_sampled(protocol(kPi / 2, 0.05), {kPi / 2, 0.3, 0.0}, rng2);
    double drift = 0.0;
    for (const BlochState& x : eq.states) drift = std::max(drift, std::abs(x.theta - kPi / 2));
    report("equator", drift, 1e-9);

    const double dt = 0.01, tau = 0.1, sigma = std::sqrt(tau / dt);
    const MeasurementAxis axis{1.2, 0.4};
    Op2 sum = Op2::Zero();
    const int n = 20000;
    const double lo = -1 - 14 * sigma, h = (28 * sigma + 2) / n;
    for (int i = 0; i <= n; ++i) {
        const Op2 E = kraus_operator(lo + i * h, axis, dt, tau);
        sum += ((i == 0 || i == n) ? 0.5 * h : h) * E.adjoint() * E;
    }
    report("povm", (sum - Op2::Identity()).norm(), 1e-8);

    auto gap = [](int N) {
        MeasurementProtocol q = protocol(1.0, 0.2, N);
        BlochState a{1.2, 0.1, 0.0}, b = a;
        for (int k = 0; k < N; ++k) {
            const double t = q.time(k);
            const double r = 0.5 + 0.3 * std::sin(kTwoPi * t);
            a = apply_kraus(a, r, q.axis_at(t), q.dt(), q.tau).next_state;
            b = euler_step(b, r, q.axis_at(t), q.dt(), q.tau);
        }
        return std::hypot(a.theta - b.theta, a.phi - b.phi);
    };
    report("kraus-euler order", std::log2(gap(400) / gap(800)), 1.0 - 0.05, false);

    double partial = 0.0;
    const MeasurementProtocol hp = protocol(1.1, 0.2);
    const PhasePoint x{0.7, 1.3, 0.2, 0.4, -0.3, 0.5};
    const double eps = 1e-6, t = 0.37;
    auto H = [&](PhasePoint y) { return hamiltonian(y, hp, t); };
    auto d = [&](double PhasePoint::*m) {
        PhasePoint a = x, b = x;
        a.*m += eps;
        b.*m -= eps;
        return (H(a) - H(b)) / (2 * eps);
    };
    const PhaseRate rhs = hamilton_rhs(x, hp, t);
    partial = std::max({std::abs(rhs.q.phi - d(&PhasePoint::p_phi)), std::abs(rhs.q.theta - d(&PhasePoint::p_theta)),
                        std::abs(rhs.q.chi - d(&PhasePoint::p_chi)), std::abs(rhs.p_phi + d(&PhasePoint::phi)),
                        std::abs(rhs.p_theta + d(&PhasePoint::theta))});
    report("hamilton partials", partial, 1e-6);

    const MeasurementProtocol mp = protocol(kPi / 2, 0.1);
    EnsembleOptions one, four;
    four.threads = 4;
    const EnsembleSummary a = run_ensemble(mp, {kPi / 2, 0.0, 0.0}, 64, 99, one);
    const EnsembleSummary b = run_ensemble(mp, {kPi / 2, 0.0, 0.0}, 64, 99, four);
    const bool same = a.phi_final == b.phi_final && a.chi_final == b.chi_final && a.log_weight == b.log_weight;
    report("thread mismatch", same ? 0.0 : 1.0, 0.5);
    return {pass, out.str()};
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "closed-form action anchor", 1, action_anchor},
        {2, "equilibrium stationarity", 1, equilibrium_stationarity},
        {3, "equator transition", 30, equator_transition},
        {4, "open-phase transition, on-axis greedy", 60,
         [] {
             return open_transition(InitRule::OnAxis, RecordRule::Greedy, {0.05, 0.075, 0.1, 0.125, 0.15}, 0.08,
                                    0.12);
         }},
        {5, "open-phase transition, equilibrium init r=1", 60,
         [] {
             return open_transition(InitRule::Equilibrium, RecordRule::Unit, {0.15, 0.2, 0.25, 0.3}, 0.19, 0.25);
         }},
        {6, "Theta_C from jump scans", 600, theta_c},
        {7, "Gelfand-Yaglom anchor", 1, gy_anchor},
        {8, "zeta factor anchor", 1, zeta_anchor},
        {9, "corrected transition", 120, corrected_transition},
        {10, "Monte Carlo consistency", 120, monte_carlo},
        {11, "Chern quantization", 120, chern},
        {12, "property suites", 60, properties},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.limit_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("criterion %2d %s: %s | %s | %.2f s (limit %.0f s%s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.limit_s, in_time ? "" : ", exceeded");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed;
}
