#pragma once

// Gaussian (saddle-point) corrections to equator branch probabilities.
//
// Along an equator extremal the 1D Lagrangian has P = tau / sin^2(psi),
// psi = phi - Phi(t). With the clock du/dt = sin^2(psi) / tau the second
// variation takes the Sturm-Liouville form Sigma = -d^2/du^2 + V(u).

#include <vector>

#include "qtrajgeom/optimal_path.hpp"

namespace qtrajgeom {

struct Clock {
    std::vector<double> u;  // one entry per path sample
    double u_T = 0.0;
};

// u(t) = (1/tau) int_0^t sin^2(2 pi t'/T - phi(t')) dt' by the trapezoid rule.
// Throws DegenerateClock when the integrand vanishes on two consecutive samples.
Clock reparameterize_time(const std::vector<PathSample>& path, double tau, double T = 1.0);

double zeta_determinant(double u_T);

struct SecondVariation {
    MeasurementProtocol protocol;
    std::vector<PathSample> path;
    Clock clock;
    // Potential at each path sample; infinite where sin(psi) = 0.
    std::vector<double> V;
};

// Potential V = P Q of the Jacobi operator at one equator path sample.
double sturm_liouville_potential(const PathSample& sample, const MeasurementProtocol& protocol);

SecondVariation second_variation(const BranchSolution& branch, const MeasurementProtocol& protocol);

struct GelfandYaglom {
    double det_ratio = 0.0;  // f(u_T) / u_T
    double f_T = 0.0;
    // Zeros of f inside (0, u_T), reported by clock time.
    std::vector<double> conjugate_u;
};

// f solves Sigma f = 0 with f(0) = 0, f'(0) = 1. It equals the Jacobi field
// d phi(t) / d p_phi(0) of the Hamilton flow, which is integrated here
// because it stays regular where sin(psi) vanishes. With `strict`, a zero of f
// inside the interval throws ConjugatePoint.
GelfandYaglom gelfand_yaglom(const SecondVariation& sv, bool strict = true);

// Same ratio for a potential given on a monotone u grid, by RK4 with linear
// interpolation of V.
GelfandYaglom gelfand_yaglom(const std::vector<double>& u, const std::vector<double>& V,
                             bool strict = true);

struct EigenDetRatio {
    double ratio = 0.0;       // Richardson estimate from N and N/2
    double raw = 0.0;         // prod_{i<=N} lambda_i / lambda0_i
    double raw_half = 0.0;    // same with N/2
    double convergence = 0.0; // relative change of the estimate from N/2 to N
    std::vector<double> lambda;
    std::vector<double> lambda0;
};

// Dirichlet second-order finite differences of Sigma and of -d^2/du^2 on a
// uniform u grid with `grid` intervals. Truncating the product at N leaves a
// tail that decays like 1/N, so log(ratio) is extrapolated linearly in 1/N
// from N and N/2. Throws NotConverged when the N and N/2 estimates differ by
// more than `max_change` relative; pass a large value to only report it.
EigenDetRatio eigen_det_ratio(const SecondVariation& sv, int N = 64, int grid = 2048,
                              double max_change = 0.01);
EigenDetRatio eigen_det_ratio(const std::vector<double>& u, const std::vector<double>& V, int N = 64,
                              int grid = 2048, double max_change = 0.01);

struct CorrectionReport {
    double S_saddle = 0.0;
    double u_T = 0.0;
    double det_ratio = 0.0;
    double det_zeta = 0.0;
    // log of e^S det_ratio^(-1/2) det_zeta^(-1/2); the normalization shared by
    // both branches is left out.
    double log_corrected = 0.0;
    double corrected_prob = 0.0;
    std::vector<double> conjugate_u;
};

CorrectionReport correct_branch(const BranchSolution& branch, const MeasurementProtocol& protocol);

struct CorrectedRatio {
    double tau = 0.0;
    CorrectionReport winding;
    CorrectionReport non_winding;
    double R_saddle = 0.0;     // p^{n=1} / p^{n=0}
    double R_corrected = 0.0;  // corrected winding / corrected non-winding
};

CorrectedRatio corrected_transition_ratio(double tau, const SolverOptions& options = {});

// Tabulates R on `taus` (continuing the non-winding branch down the list).
std::vector<CorrectedRatio> corrected_ratio_scan(const std::vector<double>& taus,
                                                 const SolverOptions& options = {});

// Root of R_corrected = 1 in [lo, hi]; NoBracket when R - 1 keeps its sign on a
// scan of the window.
double find_tau_c_eff(double lo = 0.02, double hi = 0.3, double tol = 1e-6,
                      const SolverOptions& options = {});

// Closed forms on the equilibrium orbit at Theta = pi/2.
double u_T_eq_closed(double tau, double T = 1.0);
double det_ratio_eq_closed(double tau, double T = 1.0);
double log_corrected_eq_closed(double tau, double T = 1.0);

}  // namespace qtrajgeom
