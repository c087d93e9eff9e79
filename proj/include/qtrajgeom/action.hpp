#pragma once

// Phase-augmented CDJ action for the rotating-axis Gaussian measurement.
//
// Sign convention: the action value S is the log-probability density of a
// path, so the path density is exp(S). With r eliminated through the optimal
// readout, the Hamiltonian is H = ((a + K)^2 - 1) / (2 tau) where
// K = p_theta g - p_phi f + p_chi h / 2, and along any extremal the action
// density reduces to (r (2a - r) - 1) / (2 tau).

#include "qtrajgeom/bloch.hpp"

namespace qtrajgeom {

struct PhasePoint {
    double phi = 0.0;
    double theta = 0.0;
    double chi = 0.0;
    double p_phi = 0.0;
    double p_theta = 0.0;
    double p_chi = 0.0;
};

struct Velocity {
    double phi = 0.0;
    double theta = 0.0;
    double chi = 0.0;
};

struct FGH {
    double f = 0.0;
    double g = 0.0;
    double h = 0.0;
};

// f, g, h, a and their first partials in (theta, phi).
struct FGHPartials {
    FGH value;
    double a = 0.0;
    double f_phi = 0.0, f_theta = 0.0;
    double g_phi = 0.0, g_theta = 0.0;
    double h_phi = 0.0, h_theta = 0.0;
    double a_phi = 0.0, a_theta = 0.0;
};

struct PhaseRate {
    Velocity q;
    double p_phi = 0.0;
    double p_theta = 0.0;
    double p_chi = 0.0;
};

struct EquilibriumPoint {
    double theta_e = 0.0;
    double phi_e = 0.0;
};

// Momenta solving p_dot = 0 at the equilibrium point, and the readout that
// keeps the orbit (theta_e, phi_e + Phi(t)) co-rotating. On the equator the
// pair is an exact stationary point of the co-rotating Hamilton flow.
struct EquilibriumMomenta {
    double p_phi = 0.0;
    double p_theta = 0.0;
    double r = 0.0;
};

struct LagrangianValue {
    double lagrangian = 0.0;
    double measure = 0.0;
    double theta_dot = 0.0;
    double chi_dot = 0.0;
};

// Throws SingularCoordinate where sin(theta) or cos(theta/2) vanishes.
FGH fgh(double theta, double phi, double Theta, double Phi);
FGHPartials fgh_partials(double theta, double phi, double Theta, double Phi);

// Readout maximizing the action density at fixed (q, p).
double optimal_r(const PhasePoint& point, const MeasurementProtocol& protocol, double t);

// (phi, theta, chi) velocity of the conditioned dynamics for a given readout.
Velocity coordinate_rate(const PhasePoint& point, double r, const MeasurementProtocol& protocol,
                         double t);

// Action integrand with the velocity taken from the dynamics, i.e. the
// readout log-likelihood (r (2a - r) - 1) / (2 tau).
double action_density(const PhasePoint& point, double r, const MeasurementProtocol& protocol,
                      double t);

// Full integrand -p.(qdot - F(q, r)) + (r (2a - r) - 1) / (2 tau).
double action_density(const PhasePoint& point, const Velocity& qdot, double r,
                      const MeasurementProtocol& protocol, double t);

double hamiltonian(const PhasePoint& point, const MeasurementProtocol& protocol, double t);

PhaseRate hamilton_rhs(const PhasePoint& point, const MeasurementProtocol& protocol, double t);

// phi~ = Phi(t) - phi, p~_phi = -p_phi. The map is its own inverse.
PhasePoint corotate(const PhasePoint& point, const MeasurementProtocol& protocol, double t);
PhasePoint corotate_inverse(const PhasePoint& rotating, const MeasurementProtocol& protocol,
                            double t);

// Rates of the co-rotating coordinates and momenta induced by the lab flow.
PhaseRate rotating_hamilton_rhs(const PhasePoint& rotating, const MeasurementProtocol& protocol,
                                double t);

EquilibriumPoint equilibrium_point(double Theta, double tau, double T = 1.0);
EquilibriumMomenta equilibrium_momenta(double Theta, double tau, double T = 1.0);

// Exact fixed point of the co-rotating Hamilton flow, found by Newton's
// method from the closed-form equilibrium. Off the equator it differs from
// equilibrium_point; `action_rate` is the action density along its orbit.
struct StationaryPoint {
    double theta = 0.0;
    double phi = 0.0;
    double p_phi = 0.0;
    double p_theta = 0.0;
    double r = 0.0;
    double action_rate = 0.0;
};
StationaryPoint stationary_point(double Theta, double tau, double T = 1.0);

// Rotating-frame action integrand. Phi_dot is the axis angular velocity.
double rotating_action_density(const PhasePoint& rotating, const Velocity& qdot_rotating, double r,
                               double tau, double Theta, double Phi_dot);

// Lagrangian with r and p eliminated, the per-step measure factor, and the
// constrained theta and chi velocities. Throws SingularMeasure when
// sin(phi - Phi) vanishes.
LagrangianValue lagrangian_and_measure(double theta, double phi, double phi_dot,
                                       const MeasurementProtocol& protocol, double t);

}  // namespace qtrajgeom
