#include "qtrajgeom/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "qtrajgeom/action.hpp"
#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"

namespace qtrajgeom {

namespace {

constexpr double kAntipodalTol = 1e-10;

template <class F>
void parallel_for(int n, int threads, F&& body) {
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) body(i);
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min(threads, n); ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

// Shortest geodesic from psi_T back to the ray of psi_0, horizontally lifted;
// it ends at e^{i chi_g} psi_0. Returns `samples` points excluding psi_T.
std::vector<Spinor> closing_geodesic(const Spinor& psi_T, const Spinor& psi_0, int samples) {
    const cplx overlap = psi_0.dot(psi_T);
    const Spinor target = std::polar(1.0, std::arg(overlap)) * psi_0;
    const double alpha = std::acos(std::clamp(std::abs(overlap), 0.0, 1.0));
    std::vector<Spinor> out;
    out.reserve(samples);
    for (int m = 1; m <= samples; ++m) {
        const double s = static_cast<double>(m) / samples;
        if (alpha < 1e-12) {
            out.push_back(((1.0 - s) * psi_T + s * target).normalized());
        } else {
            out.push_back((std::sin((1.0 - s) * alpha) * psi_T + std::sin(s * alpha) * target) /
                          std::sin(alpha));
        }
    }
    return out;
}

void unwrap_in_place(std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) v[i] = v[i - 1] + wrap_pi(v[i] - v[i - 1]);
}

// Centred difference along an index, one-sided at the ends.
template <class Get>
Spinor index_derivative(int k, int n, Get&& get) {
    if (k == 0) return get(1) - get(0);
    if (k == n - 1) return get(n - 1) - get(n - 2);
    return 0.5 * (get(k + 1) - get(k - 1));
}

}  // namespace

double geometric_phase_open(const TrajectoryRecord& traj) {
    if (traj.states.empty()) throw Error(ErrorCode::InvalidArgument, "empty trajectory");
    const BlochState& a = traj.states.front();
    const BlochState& b = traj.states.back();
    const cplx closure = std::cos(0.5 * a.theta) * std::cos(0.5 * b.theta) +
                         std::polar(std::sin(0.5 * a.theta) * std::sin(0.5 * b.theta), b.phi - a.phi);
    if (std::abs(closure) < kAntipodalTol) {
        throw Error(ErrorCode::AntipodalEndpoints, "endpoints are antipodal");
    }
    return (b.chi - a.chi) + std::arg(closure);
}

BlochState initial_state(InitRule rule, double Theta, double tau) {
    if (rule == InitRule::OnAxis) return {Theta, 0.0, 0.0};
    const EquilibriumPoint e = equilibrium_point(Theta, tau);
    return {e.theta_e, e.phi_e, 0.0};
}

PhaseFamily build_family(double tau, InitRule init, RecordRule record,
                         const FamilyOptions& options) {
    if (options.n_theta < 3) throw Error(ErrorCode::InvalidArgument, "n_theta must be at least 3");
    if (!(options.eps > 0.0) || options.eps >= 0.5 * kPi) {
        throw Error(ErrorCode::InvalidArgument, "eps must lie in (0, pi/2)");
    }
    PhaseFamily fam;
    fam.tau = tau;
    fam.init = init;
    fam.record = record;
    const double lo = options.eps, hi = kPi - options.eps;
    for (int i = 0; i < options.n_theta; ++i) {
        fam.Theta.push_back(lo + (hi - lo) * i / (options.n_theta - 1));
    }
    const double half = 0.5 * kPi;
    const auto pos = std::lower_bound(fam.Theta.begin(), fam.Theta.end(), half);
    if (pos == fam.Theta.end() || std::abs(*pos - half) > 1e-15) {
        fam.Theta.insert(pos, half);
    } else {
        *pos = half;
    }

    const int n = static_cast<int>(fam.Theta.size());
    fam.members.resize(n);
    fam.chi_g.resize(n);
    std::vector<std::exception_ptr> errors(n);
    parallel_for(n, options.threads, [&](int i) {
        try {
            MeasurementProtocol p;
            p.Theta = fam.Theta[i];
            p.tau = tau;
            p.N = options.steps;
            const BlochState s0 = initial_state(init, fam.Theta[i], tau);
            fam.members[i] = record == RecordRule::Greedy
                                 ? propagate_greedy(p, s0)
                                 : propagate_with_record(p, s0, [](double) { return 1.0; });
            fam.chi_g[i] = geometric_phase_open(fam.members[i]);
            fam.members[i].geometric_phase = fam.chi_g[i];
        } catch (const Error&) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    unwrap_in_place(fam.chi_g);
    return fam;
}

ChernResult chern_number(const PhaseFamily& family, int closure_samples) {
    const int nT = static_cast<int>(family.members.size());
    if (nT < 3) throw Error(ErrorCode::InvalidArgument, "family too small");
    const int nt = static_cast<int>(family.members.front().states.size());

    // Closed loops: trajectory samples followed by the closing geodesic.
    const int nl = nt + closure_samples;
    std::vector<std::vector<Spinor>> loop(nT);
    for (int i = 0; i < nT; ++i) {
        const auto& states = family.members[i].states;
        if (static_cast<int>(states.size()) != nt) {
            throw Error(ErrorCode::InvalidArgument, "members use different time grids");
        }
        loop[i].reserve(nl);
        for (const BlochState& s : states) loop[i].push_back(to_spinor(s));
        const auto closure = closing_geodesic(loop[i].back(), loop[i].front(), closure_samples);
        loop[i].insert(loop[i].end(), closure.begin(), closure.end());
    }

    // Berry connection in index coordinates; C does not depend on the
    // parameterization, so unit spacing is used in both directions.
    std::vector<double> A_Theta(static_cast<std::size_t>(nT) * nl), A_t(A_Theta.size());
    auto at = [nl](int i, int j) { return static_cast<std::size_t>(i) * nl + j; };
    for (int i = 0; i < nT; ++i) {
        for (int j = 0; j < nl; ++j) {
            const Spinor& psi = loop[i][j];
            const Spinor dT = index_derivative(i, nT, [&](int k) { return loop[k][j]; });
            const Spinor dt = index_derivative(j, nl, [&](int k) { return loop[i][k]; });
            A_Theta[at(i, j)] = psi.dot(dT).imag();
            A_t[at(i, j)] = psi.dot(dt).imag();
        }
    }
    auto d_index = [](int k, int n, auto&& get) {
        if (k == 0) return get(1) - get(0);
        if (k == n - 1) return get(n - 1) - get(n - 2);
        return 0.5 * (get(k + 1) - get(k - 1));
    };
    double integral = 0.0;
    for (int i = 0; i < nT; ++i) {
        const double wi = (i == 0 || i == nT - 1) ? 0.5 : 1.0;
        for (int j = 0; j < nl; ++j) {
            const double wj = (j == 0 || j == nl - 1) ? 0.5 : 1.0;
            const double dA_Theta_dt = d_index(j, nl, [&](int k) { return A_Theta[at(i, k)]; });
            const double dA_t_dTheta = d_index(i, nT, [&](int k) { return A_t[at(k, j)]; });
            integral += wi * wj * (dA_Theta_dt - dA_t_dTheta);
        }
    }

    ChernResult res;
    res.curvature = integral / kTwoPi;
    res.boundary = (family.chi_g.back() - family.chi_g.front()) / kTwoPi;
    res.mismatch = std::abs(res.curvature - res.boundary);
    if (res.mismatch > 0.05) {
        std::ostringstream msg;
        msg << "curvature " << res.curvature << " vs boundary " << res.boundary;
        throw Error(ErrorCode::GridTooCoarse, msg.str());
    }
    return res;
}

int winding_number(const std::vector<double>& Theta, const std::vector<double>& chi) {
    if (Theta.size() != chi.size() || Theta.empty()) {
        throw Error(ErrorCode::InvalidArgument, "Theta and chi sizes differ");
    }
    const auto it = std::find_if(Theta.begin(), Theta.end(),
                                 [](double x) { return std::abs(x - 0.5 * kPi) < 1e-12; });
    if (it == Theta.end()) throw Error(ErrorCode::InvalidArgument, "grid lacks pi/2");
    const double ratio = std::abs(chi[it - Theta.begin()] - chi.front()) / kPi;
    const double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) > 0.1) {
        throw Error(ErrorCode::NonQuantized, "|chi(pi/2) - chi(0)| / pi = " + std::to_string(ratio));
    }
    return nearest >= 1.0 ? 1 : 0;
}

double coverage_gap(const PhaseFamily& family, int probes) {
    std::vector<Vec3> samples;
    for (const auto& m : family.members) {
        for (const auto& s : m.states) samples.push_back(bloch_vector(s));
    }
    if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "empty family");
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    double worst = 0.0;
    for (int i = 0; i < probes; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / probes;
        const double rho = std::sqrt(1.0 - z * z);
        const Vec3 q(rho * std::cos(golden * i), rho * std::sin(golden * i), z);
        double best = -1.0;
        for (const Vec3& v : samples) best = std::max(best, q.dot(v));
        worst = std::max(worst, std::acos(std::clamp(best, -1.0, 1.0)));
    }
    return worst;
}

bool covers_sphere(const PhaseFamily& family, double margin) { return coverage_gap(family) < margin; }

TransitionScan open_transition_scan(InitRule init, RecordRule record,
                                    const std::vector<double>& tau_grid, double tol,
                                    const FamilyOptions& options) {
    if (tau_grid.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two taus");
    auto winding_at = [&](double tau) {
        const PhaseFamily fam = build_family(tau, init, record, options);
        return winding_number(fam.Theta, fam.chi_g);
    };
    TransitionScan scan;
    scan.tau = tau_grid;
    for (double tau : tau_grid) scan.winding.push_back(winding_at(tau));

    int flips = 0;
    std::size_t first = 0;
    for (std::size_t k = 1; k < scan.winding.size(); ++k) {
        if (scan.winding[k] != scan.winding[k - 1]) {
            if (flips == 0) first = k;
            ++flips;
        }
    }
    if (flips == 0) throw Error(ErrorCode::NoFlip, "winding number constant over the window");
    scan.monotone = flips == 1;

    double a = tau_grid[first - 1], b = tau_grid[first];
    const int w_a = scan.winding[first - 1];
    while (std::abs(b - a) > tol) {
        const double mid = 0.5 * (a + b);
        (winding_at(mid) == w_a ? a : b) = mid;
    }
    scan.tau_c = 0.5 * (a + b);
    return scan;
}

}  // namespace qtrajgeom
