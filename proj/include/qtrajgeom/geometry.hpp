#pragma once

// Geometric phases of open and closed trajectories, Chern and winding numbers
// of trajectory families parameterized by the axis latitude, and the open-phase
// transition scans.

#include <vector>

#include "qtrajgeom/trajectory.hpp"

namespace qtrajgeom {

// arg <psi(0)|psi(T)> for a parallel-transported record, i.e. the phase of the
// path closed by the shortest geodesic. The value is chi(T) - chi(0) plus the
// argument of the closure factor in (-pi, pi], so it equals chi(T) - chi(0)
// exactly for a self-closed path. Throws AntipodalEndpoints when
// |<psi(0)|psi(T)>| < 1e-10.
double geometric_phase_open(const TrajectoryRecord& traj);

enum class InitRule { OnAxis, Equilibrium };
enum class RecordRule { Greedy, Unit };  // Unit: r(t) = 1

struct FamilyOptions {
    int n_theta = 128;
    int steps = 256;
    double eps = 1e-3;
    int closure_samples = 32;
    int threads = 1;
};

struct PhaseFamily {
    double tau = 0.0;
    InitRule init = InitRule::OnAxis;
    RecordRule record = RecordRule::Greedy;
    // n_theta points on [eps, pi - eps], with pi/2 inserted when missing.
    std::vector<double> Theta;
    std::vector<TrajectoryRecord> members;
    // Geometric phase per member, unwrapped along Theta.
    std::vector<double> chi_g;
};

PhaseFamily build_family(double tau, InitRule init, RecordRule record,
                         const FamilyOptions& options = {});

BlochState initial_state(InitRule rule, double Theta, double tau);

struct ChernResult {
    double curvature = 0.0;  // (1 / 2 pi) double integral of B
    double boundary = 0.0;   // (chi(pi) - chi(0)) / 2 pi
    double mismatch = 0.0;
};

// Curvature integral over the (Theta, t) grid of the family with each member
// closed by its geodesic, using centred differences of the Berry connection.
// Throws GridTooCoarse when the two evaluations differ by more than 0.05.
ChernResult chern_number(const PhaseFamily& family, int closure_samples = 32);

// w = round(|chi(pi/2) - chi(Theta_0)| / pi) clamped to {0, 1}. The grid must
// contain pi/2. Throws NonQuantized when the ratio is more than 0.1 away from
// 0 or 1.
int winding_number(const std::vector<double>& Theta, const std::vector<double>& chi);

// Largest angular distance from a point of the sphere to the nearest
// trajectory sample, over a Fibonacci grid of `probes` points.
double coverage_gap(const PhaseFamily& family, int probes = 2048);
bool covers_sphere(const PhaseFamily& family, double margin = 0.2);

struct TransitionScan {
    std::vector<double> tau;
    std::vector<int> winding;
    bool monotone = true;
    double tau_c = 0.0;
};

// Winding number on `tau_grid`, then bisection to `tol` between the two grid
// points where it flips. Throws NoFlip when the winding is constant.
TransitionScan open_transition_scan(InitRule init, RecordRule record,
                                    const std::vector<double>& tau_grid, double tol = 1e-4,
                                    const FamilyOptions& options = {});

}  // namespace qtrajgeom
