#include "qtrajgeom/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Eigenvalues>

#include "hamilton_kernel.hpp"
#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"

namespace qtrajgeom {

namespace {

constexpr double kClockFloor = 1e-14;

void require_equator(const MeasurementProtocol& protocol) {
    if (std::abs(protocol.Theta - 0.5 * kPi) > 1e-12) {
        throw Error(ErrorCode::InvalidArgument, "Gaussian corrections are defined on the equator only");
    }
}

MeasurementProtocol equator_protocol(double tau) {
    MeasurementProtocol p;
    p.Theta = 0.5 * kPi;
    p.tau = tau;
    return p;
}

// Linear interpolation on a monotone grid.
double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
    if (at <= x.front()) return y.front();
    if (at >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), at);
    const std::size_t j = static_cast<std::size_t>(it - x.begin());
    const double w = (at - x[j - 1]) / (x[j] - x[j - 1]);
    return (1.0 - w) * y[j - 1] + w * y[j];
}

double crossing(double u0, double f0, double u1, double f1) { return u0 + (u1 - u0) * f0 / (f0 - f1); }

struct LogProduct {
    double log_abs = 0.0;
    int sign = 1;
};

LogProduct log_ratio(const Eigen::VectorXd& lambda, const Eigen::VectorXd& lambda0, int n) {
    LogProduct out;
    for (int i = 0; i < n; ++i) {
        const double q = lambda(i) / lambda0(i);
        out.log_abs += std::log(std::abs(q));
        if (q < 0.0) out.sign = -out.sign;
    }
    return out;
}

Eigen::VectorXd dirichlet_spectrum(const Eigen::VectorXd& potential, double h) {
    const Eigen::Index m = potential.size();
    Eigen::VectorXd diag = potential.array() + 2.0 / (h * h);
    Eigen::VectorXd sub = Eigen::VectorXd::Constant(m - 1, -1.0 / (h * h));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::NotConverged, "tridiagonal eigenvalue solver failed");
    }
    return solver.eigenvalues();
}

}  // namespace

Clock reparameterize_time(const std::vector<PathSample>& path, double tau, double T) {
    if (path.size() < 2) throw Error(ErrorCode::InvalidArgument, "path needs at least two samples");
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidStrength, "tau must be positive");
    const double omega = kTwoPi / T;
    std::vector<double> w(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        const double s = std::sin(omega * path[i].t - path[i].point.phi);
        w[i] = s * s / tau;
        if (i > 0 && w[i] < kClockFloor && w[i - 1] < kClockFloor) {
            throw Error(ErrorCode::DegenerateClock, "clock rate vanishes on an interval");
        }
    }
    Clock out;
    out.u.resize(path.size());
    out.u[0] = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        out.u[i] = out.u[i - 1] + 0.5 * (w[i] + w[i - 1]) * (path[i].t - path[i - 1].t);
    }
    out.u_T = out.u.back();
    return out;
}

double zeta_determinant(double u_T) {
    if (!(u_T > 0.0)) throw Error(ErrorCode::InvalidArgument, "u_T must be positive");
    return std::abs(u_T);
}

double sturm_liouville_potential(const PathSample& sample, const MeasurementProtocol& protocol) {
    const double tau = protocol.tau;
    const double omega = kTwoPi / protocol.T;
    const double psi = sample.point.phi - protocol.Phi(sample.t);
    const double s = std::sin(psi), c = std::cos(psi);
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    const double cot = c / s;
    const double csc2 = 1.0 / (s * s);
    const double v = -sample.r * s / tau;
    const double psi_dot = v - omega;
    // Euler-Lagrange equation solved for the acceleration.
    const double v_dot = -omega / tau + v * cot * (v - 2.0 * omega);
    const double k = 2.0 * csc2 * cot * cot + csc2 * csc2;
    const double L_pp = -2.0 * v * csc2 * cot - tau * v * v * k;
    const double dL_vp = psi_dot * (-2.0 * csc2 * cot - 2.0 * tau * v * k) + 2.0 * tau * v_dot * csc2 * cot;
    const double Q = -L_pp + dL_vp;
    const double P = tau * csc2;
    return P * Q;
}

SecondVariation second_variation(const BranchSolution& branch, const MeasurementProtocol& protocol) {
    require_equator(protocol);
    SecondVariation sv;
    sv.protocol = protocol;
    sv.path = branch.path;
    sv.clock = reparameterize_time(branch.path, protocol.tau, protocol.T);
    sv.V.reserve(branch.path.size());
    for (const PathSample& s : branch.path) sv.V.push_back(sturm_liouville_potential(s, protocol));
    return sv;
}

GelfandYaglom gelfand_yaglom(const SecondVariation& sv, bool strict) {
    using C = std::complex<double>;
    constexpr double h = 1e-30;
    const detail::KernelParams kp{0.5 * kPi, sv.protocol.tau, kTwoPi / sv.protocol.T, true};
    // Jacobi field (d phi, d p_phi) started from (0, 1); then f'(0) = 1 in u.
    double dphi = 0.0, dp = 1.0;
    GelfandYaglom out;
    for (std::size_t i = 0; i + 1 < sv.path.size(); ++i) {
        const PhasePoint& x = sv.path[i].point;
        const double t = sv.path[i].t;
        const double dt = sv.path[i + 1].t - t;
        double M[2][2];
        const int idx[2] = {0, 3};
        for (int j = 0; j < 2; ++j) {
            detail::KernelState<C> y{x.phi, 0.5 * kPi, x.chi, x.p_phi, 0.0, 0.0};
            y[idx[j]] += C(0.0, h);
            detail::kernel_rk4_step(y, t, dt, kp);
            M[0][j] = y[0].imag() / h;
            M[1][j] = y[3].imag() / h;
        }
        const double nphi = M[0][0] * dphi + M[0][1] * dp;
        const double np = M[1][0] * dphi + M[1][1] * dp;
        if (i > 0 && i + 2 < sv.path.size() && (nphi > 0.0) != (dphi > 0.0) && dphi != 0.0) {
            out.conjugate_u.push_back(crossing(sv.clock.u[i], dphi, sv.clock.u[i + 1], nphi));
        }
        dphi = nphi;
        dp = np;
        if (!std::isfinite(dphi)) throw Error(ErrorCode::NotConverged, "Jacobi field overflowed");
    }
    out.f_T = dphi;
    out.det_ratio = dphi / sv.clock.u_T;
    if (strict && !out.conjugate_u.empty()) {
        throw Error(ErrorCode::ConjugatePoint, "Jacobi field vanishes inside the interval");
    }
    return out;
}

GelfandYaglom gelfand_yaglom(const std::vector<double>& u, const std::vector<double>& V, bool strict) {
    if (u.size() != V.size() || u.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "u and V must have equal length of at least two");
    }
    double f = 0.0, g = 1.0;
    GelfandYaglom out;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
        const double du = u[i + 1] - u[i];
        if (!(du > 0.0)) throw Error(ErrorCode::InvalidArgument, "u grid must be strictly increasing");
        const double V0 = V[i], V1 = V[i + 1], Vm = 0.5 * (V0 + V1);
        const double k1f = g, k1g = V0 * f;
        const double k2f = g + 0.5 * du * k1g, k2g = Vm * (f + 0.5 * du * k1f);
        const double k3f = g + 0.5 * du * k2g, k3g = Vm * (f + 0.5 * du * k2f);
        const double k4f = g + du * k3g, k4g = V1 * (f + du * k3f);
        const double nf = f + du / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
        g += du / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
        if (i > 0 && i + 2 < u.size() && (nf > 0.0) != (f > 0.0) && f != 0.0) {
            out.conjugate_u.push_back(crossing(u[i], f, u[i + 1], nf));
        }
        f = nf;
    }
    out.f_T = f;
    out.det_ratio = f / (u.back() - u.front());
    if (strict && !out.conjugate_u.empty()) {
        throw Error(ErrorCode::ConjugatePoint, "solution vanishes inside the interval");
    }
    return out;
}

EigenDetRatio eigen_det_ratio(const std::vector<double>& u, const std::vector<double>& V, int N, int grid,
                              double max_change) {
    if (N < 8) throw Error(ErrorCode::InvalidArgument, "eigenvalue count must be at least 8");
    if (grid <= N) throw Error(ErrorCode::InvalidArgument, "grid must exceed the eigenvalue count");
    if (u.size() != V.size() || u.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "u and V must have equal length of at least two");
    }
    const double u0 = u.front(), uT = u.back();
    const double h = (uT - u0) / grid;
    Eigen::VectorXd potential(grid - 1);
    for (int k = 1; k < grid; ++k) potential(k - 1) = interpolate(u, V, u0 + k * h);
    if (!potential.allFinite()) throw Error(ErrorCode::DegenerateClock, "potential is not finite on the grid");

    const Eigen::VectorXd lambda = dirichlet_spectrum(potential, h);
    const Eigen::VectorXd lambda0 = dirichlet_spectrum(Eigen::VectorXd::Zero(grid - 1), h);

    auto estimate = [&](int n) {
        const LogProduct a = log_ratio(lambda, lambda0, n);
        const LogProduct b = log_ratio(lambda, lambda0, n / 2);
        return a.sign * std::exp(2.0 * a.log_abs - b.log_abs);
    };
    EigenDetRatio out;
    const LogProduct full = log_ratio(lambda, lambda0, N);
    const LogProduct half = log_ratio(lambda, lambda0, N / 2);
    out.raw = full.sign * std::exp(full.log_abs);
    out.raw_half = half.sign * std::exp(half.log_abs);
    out.ratio = estimate(N);
    const double previous = estimate(N / 2);
    out.convergence = std::abs(out.ratio - previous) / std::abs(out.ratio);
    out.lambda.assign(lambda.data(), lambda.data() + N);
    out.lambda0.assign(lambda0.data(), lambda0.data() + N);
    if (out.convergence > max_change) {
        throw Error(ErrorCode::NotConverged, "eigenvalue product changed by " + std::to_string(out.convergence) +
                                                 " between N/2 and N");
    }
    return out;
}

EigenDetRatio eigen_det_ratio(const SecondVariation& sv, int N, int grid, double max_change) {
    return eigen_det_ratio(sv.clock.u, sv.V, N, grid, max_change);
}

CorrectionReport correct_branch(const BranchSolution& branch, const MeasurementProtocol& protocol) {
    const SecondVariation sv = second_variation(branch, protocol);
    const GelfandYaglom gy = gelfand_yaglom(sv, false);
    CorrectionReport out;
    out.S_saddle = branch.action;
    out.u_T = sv.clock.u_T;
    out.det_zeta = zeta_determinant(sv.clock.u_T);
    out.det_ratio = gy.det_ratio;
    out.conjugate_u = gy.conjugate_u;
    if (!(gy.det_ratio > 0.0)) {
        throw Error(ErrorCode::ConjugatePoint, "determinant ratio is not positive");
    }
    out.log_corrected = branch.action - 0.5 * std::log(out.det_ratio) - 0.5 * std::log(out.det_zeta);
    out.corrected_prob = std::exp(out.log_corrected);
    return out;
}

namespace {

CorrectedRatio ratio_from(double tau, const BranchSolution& n0) {
    const MeasurementProtocol p = equator_protocol(tau);
    const BranchSolution n1 = n1_branch(p, static_cast<int>(n0.path.size()) - 1);
    CorrectedRatio out;
    out.tau = tau;
    out.winding = correct_branch(n1, p);
    out.non_winding = correct_branch(n0, p);
    out.R_saddle = std::exp(n1.action - n0.action);
    out.R_corrected = std::exp(out.winding.log_corrected - out.non_winding.log_corrected);
    return out;
}

}  // namespace

CorrectedRatio corrected_transition_ratio(double tau, const SolverOptions& options) {
    return ratio_from(tau, equator_n0_family({tau}, options).front());
}

std::vector<CorrectedRatio> corrected_ratio_scan(const std::vector<double>& taus, const SolverOptions& options) {
    const std::vector<BranchSolution> family = equator_n0_family(taus, options);
    std::vector<CorrectedRatio> out;
    out.reserve(taus.size());
    for (std::size_t i = 0; i < taus.size(); ++i) out.push_back(ratio_from(taus[i], family[i]));
    return out;
}

double find_tau_c_eff(double lo, double hi, double tol, const SolverOptions& options) {
    constexpr int kScan = 15;
    std::vector<double> taus(kScan);
    for (int i = 0; i < kScan; ++i) taus[i] = hi + (lo - hi) * i / (kScan - 1);
    const std::vector<BranchSolution> family = equator_n0_family(taus, options);
    auto log_R = [](double tau, const BranchSolution& n0) { return std::log(ratio_from(tau, n0).R_corrected); };

    std::vector<double> g(kScan);
    int bracket = -1;
    for (int i = 0; i < kScan; ++i) {
        g[i] = log_R(taus[i], family[i]);
        if (i > 0 && (g[i] > 0.0) != (g[i - 1] > 0.0)) {
            bracket = i - 1;
            break;
        }
    }
    if (bracket < 0) throw Error(ErrorCode::NoBracket, "R_corrected - 1 keeps its sign on the scan window");

    auto setup = [](double tau) {
        const EquilibriumPoint e = equilibrium_point(0.5 * kPi, tau);
        return std::make_pair(equator_protocol(tau), BoundaryCondition::self_closing(e.theta_e, e.phi_e, 0));
    };
    double a = taus[bracket], b = taus[bracket + 1];
    BranchSolution sa = family[bracket];
    double ga = g[bracket];
    while (std::abs(b - a) > tol) {
        const double m = 0.5 * (a + b);
        BranchSolution sm = track_branch(setup, {a, m}, sa, options).back();
        const double gm = log_R(m, sm);
        if (gm == 0.0) return m;
        if ((gm > 0.0) == (ga > 0.0)) {
            a = m;
            sa = std::move(sm);
            ga = gm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

double u_T_eq_closed(double tau, double T) {
    const double y = std::pow(kTwoPi * tau / T, 2);
    return T / tau * y / (1.0 + y);
}

double det_ratio_eq_closed(double tau, double T) {
    const double y = std::pow(kTwoPi * tau / T, 2);
    const double mu = T * std::sqrt(1.0 + y) / tau;
    return std::sinh(mu) / mu;
}

double log_corrected_eq_closed(double tau, double T) {
    const double y = std::pow(kTwoPi * tau / T, 2);
    const double mu = T * std::sqrt(1.0 + y) / tau;
    const double log_det = mu + std::log1p(-std::exp(-2.0 * mu)) - std::log(2.0 * mu);
    return action_n1_closed(0.5 * kPi, tau, T) - 0.5 * log_det -
           0.5 * std::log(u_T_eq_closed(tau, T));
}

}  // namespace qtrajgeom
