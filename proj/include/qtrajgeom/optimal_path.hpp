#pragma once

// Extremal (most-likely) paths of the phase-augmented CDJ Hamilton system,
// found by shooting on the initial momenta, and the branch competition built
// on top of them.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qtrajgeom/action.hpp"

namespace qtrajgeom {

struct PathSample {
    double t = 0.0;
    PhasePoint point;
    double r = 0.0;
};

struct BoundaryCondition {
    double theta0 = 0.5 * 3.141592653589793;
    double phi0 = 0.0;
    double theta_T = 0.5 * 3.141592653589793;
    double phi_T = 0.0;
    int n = 0;

    // Self-closing: (theta_T, phi_T) = (theta0, phi0 + 2 pi n).
    static BoundaryCondition self_closing(double theta0, double phi0, int n);
};

struct BranchSolution {
    int n = 0;
    std::vector<PathSample> path;
    double action = 0.0;
    double density = 0.0;
    double chi = 0.0;
    bool converged = false;
    double residual = 0.0;
    double p_phi0 = 0.0;
    double p_theta0 = 0.0;
};

struct InitialGuess {
    double p_phi = 0.0;
    double p_theta = 0.0;
    // A nearby converged path seeds the interior nodes of multiple shooting.
    const BranchSolution* path = nullptr;
};

struct SolverOptions {
    // RK4 steps over [0, T]; raised when needed so that dt stays below tau / 80.
    int steps = 2000;
    double tol = 1e-9;
    int max_iter = 25;
    int segments = 4;
    bool allow_multiple_shooting = true;
    // Keep the path on the equator when the axis and both endpoints lie on it.
    bool reduce_equator = true;
};

// Integrates the Hamilton system from `start` over [t0, t1] with `steps` RK4
// steps, accumulating the action. Samples are appended when requested.
struct ExtremalEndpoint {
    PhasePoint point;
    double action = 0.0;
};
ExtremalEndpoint integrate_extremal(const MeasurementProtocol& protocol, const PhasePoint& start,
                                    double t0, double t1, int steps,
                                    std::vector<PathSample>* samples = nullptr);

BranchSolution solve_bvp(const MeasurementProtocol& protocol, const BoundaryCondition& bc,
                         const InitialGuess& guess, const SolverOptions& options = {});

// Natural continuation along `params`; `setup` maps a parameter value to the
// protocol and boundary condition. The step between listed values is halved
// on failure down to `min_step`, after which BranchLost is thrown carrying
// the last good parameter in the message. Returned solutions line up with
// `params`.
using BranchSetup = std::function<std::pair<MeasurementProtocol, BoundaryCondition>(double)>;
std::vector<BranchSolution> track_branch(const BranchSetup& setup, const std::vector<double>& params,
                                         const BranchSolution& seed, const SolverOptions& options = {},
                                         double min_step = 1e-5);

double chi_n1_closed(double Theta, double tau, double T = 1.0);
double p_n1_closed(double Theta, double tau, double T = 1.0);
double action_n1_closed(double Theta, double tau, double T = 1.0);

// Equilibrium orbit theta = theta_e, phi = phi_e + Phi(t) with the readout
// that keeps it co-rotating. It is the exact extremal on the equator; off the
// equator its action is the closed form, while the true extremal with the same
// endpoints is obtained from solve_bvp.
BranchSolution n1_branch(const MeasurementProtocol& protocol, int steps = 2000);

// Non-winding branch at (Theta, tau), seeded at tau = 0.5 for the given
// latitude and continued downward in tau. On the equator the reduced 1D
// problem is solved; off it theta is free and the branch is a separate 2D
// family that does not reduce to the equator solution as Theta -> pi/2.
BranchSolution n0_branch(double Theta, double tau, const SolverOptions& options = {});

enum class Winner { NonWinding, Winding, Degenerate, Merged };

struct OptimalPhase {
    double chi_opt = 0.0;
    Winner winner = Winner::NonWinding;
    double action_n0 = 0.0;
    double action_n1 = 0.0;
    double chi_n0 = 0.0;
    double chi_n1 = 0.0;
};

// Paths within `merge_tol` in sup-norm are reported as Merged.
OptimalPhase compare_branches(const BranchSolution& n0, const BranchSolution& n1,
                              double merge_tol = 1e-4, double tie_tol = 1e-12);
OptimalPhase optimal_geometric_phase(double Theta, double tau, const SolverOptions& options = {});

// Equator non-winding action on a tau grid, continued downward from 0.5.
std::vector<BranchSolution> equator_n0_family(const std::vector<double>& taus,
                                              const SolverOptions& options = {});

double find_tau_c_equator(double lo = 0.02, double hi = 0.5, double tol = 1e-10,
                          const SolverOptions& options = {});

struct ThetaJumpScan {
    double tau = 0.0;
    std::vector<double> Theta;
    std::vector<OptimalPhase> phases;
    std::vector<double> jumps;
    bool merged = false;
};

// Scans Theta from pi/2 down to theta_lo for discontinuities of chi_opt at
// fixed tau. A lost non-winding branch counts as merged into the winding one.
ThetaJumpScan scan_theta_jump(double tau, int n_theta = 128, double theta_lo = 0.05,
                              double jump_factor = 10.0, const SolverOptions& options = {});

struct ThetaCResult {
    double Theta_C = 0.0;
    std::vector<ThetaJumpScan> scans;
};
ThetaCResult find_Theta_C(const std::vector<double>& taus, int n_theta = 128,
                          const SolverOptions& options = {});

}  // namespace qtrajgeom
