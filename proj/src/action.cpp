#include "qtrajgeom/action.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"

namespace qtrajgeom {

namespace {

constexpr double kPoleGuard = 1e-12;

void check_chart(double theta) {
    if (std::abs(std::sin(theta)) < kPoleGuard || std::abs(std::cos(0.5 * theta)) < kPoleGuard) {
        throw Error(ErrorCode::SingularCoordinate, "theta at a pole of the coordinate chart");
    }
}

double axis_rate_T(double T) { return kTwoPi / T; }

double axis_rate(const MeasurementProtocol& protocol) { return axis_rate_T(protocol.T); }

}  // namespace

FGH fgh(double theta, double phi, double Theta, double Phi) {
    check_chart(theta);
    const double d = phi - Phi;
    const double sT = std::sin(Theta);
    return {sT * std::sin(d) / std::sin(theta),
            std::cos(theta) * sT * std::cos(d) - std::sin(theta) * std::cos(Theta),
            std::tan(0.5 * theta) * sT * std::sin(d)};
}

FGHPartials fgh_partials(double theta, double phi, double Theta, double Phi) {
    FGHPartials out;
    out.value = fgh(theta, phi, Theta, Phi);
    const double d = phi - Phi;
    const double sd = std::sin(d), cd = std::cos(d);
    const double sT = std::sin(Theta), cT = std::cos(Theta);
    const double s = std::sin(theta), c = std::cos(theta);
    const double t2 = std::tan(0.5 * theta);
    const double c2 = std::cos(0.5 * theta);

    out.a = c * cT + s * sT * cd;
    out.f_phi = sT * cd / s;
    out.f_theta = -sT * sd * c / (s * s);
    out.g_phi = -c * sT * sd;
    out.g_theta = -s * sT * cd - c * cT;
    out.h_phi = t2 * sT * cd;
    out.h_theta = 0.5 * sT * sd / (c2 * c2);
    out.a_phi = -s * sT * sd;
    out.a_theta = out.value.g;
    return out;
}

double optimal_r(const PhasePoint& pt, const MeasurementProtocol& protocol, double t) {
    const FGH v = fgh(pt.theta, pt.phi, protocol.Theta, protocol.Phi(t));
    const double a = mean_readout(protocol.Theta, protocol.Phi(t), pt.theta, pt.phi);
    return 0.5 * pt.p_chi * v.h - pt.p_phi * v.f + pt.p_theta * v.g + a;
}

Velocity coordinate_rate(const PhasePoint& pt, double r, const MeasurementProtocol& protocol,
                         double t) {
    const FGH v = fgh(pt.theta, pt.phi, protocol.Theta, protocol.Phi(t));
    const double k = r / protocol.tau;
    return {-k * v.f, k * v.g, 0.5 * k * v.h};
}

double action_density(const PhasePoint& pt, double r, const MeasurementProtocol& protocol,
                      double t) {
    const double a = mean_readout(protocol.Theta, protocol.Phi(t), pt.theta, pt.phi);
    return (r * (2.0 * a - r) - 1.0) / (2.0 * protocol.tau);
}

double action_density(const PhasePoint& pt, const Velocity& qdot, double r,
                      const MeasurementProtocol& protocol, double t) {
    const Velocity F = coordinate_rate(pt, r, protocol, t);
    return -pt.p_phi * (qdot.phi - F.phi) - pt.p_theta * (qdot.theta - F.theta) -
           pt.p_chi * (qdot.chi - F.chi) + action_density(pt, r, protocol, t);
}

double hamiltonian(const PhasePoint& pt, const MeasurementProtocol& protocol, double t) {
    const double r = optimal_r(pt, protocol, t);
    return (r * r - 1.0) / (2.0 * protocol.tau);
}

PhaseRate hamilton_rhs(const PhasePoint& pt, const MeasurementProtocol& protocol, double t) {
    const FGHPartials d = fgh_partials(pt.theta, pt.phi, protocol.Theta, protocol.Phi(t));
    const double r = 0.5 * pt.p_chi * d.value.h - pt.p_phi * d.value.f + pt.p_theta * d.value.g + d.a;
    const double k = r / protocol.tau;
    PhaseRate out;
    out.q = {-k * d.value.f, k * d.value.g, 0.5 * k * d.value.h};
    out.p_phi = k * (pt.p_phi * d.f_phi - pt.p_theta * d.g_phi - 0.5 * pt.p_chi * d.h_phi - d.a_phi);
    out.p_theta =
        k * (pt.p_phi * d.f_theta - pt.p_theta * d.g_theta - 0.5 * pt.p_chi * d.h_theta - d.a_theta);
    out.p_chi = 0.0;
    return out;
}

PhasePoint corotate(const PhasePoint& pt, const MeasurementProtocol& protocol, double t) {
    PhasePoint out = pt;
    out.phi = protocol.Phi(t) - pt.phi;
    out.p_phi = -pt.p_phi;
    return out;
}

PhasePoint corotate_inverse(const PhasePoint& rotating, const MeasurementProtocol& protocol,
                            double t) {
    return corotate(rotating, protocol, t);
}

PhaseRate rotating_hamilton_rhs(const PhasePoint& rotating, const MeasurementProtocol& protocol,
                                double t) {
    const PhaseRate lab = hamilton_rhs(corotate_inverse(rotating, protocol, t), protocol, t);
    PhaseRate out = lab;
    out.q.phi = axis_rate(protocol) - lab.q.phi;
    out.p_phi = -lab.p_phi;
    return out;
}

EquilibriumPoint equilibrium_point(double Theta, double tau, double T) {
    const double w = kTwoPi * tau / T;
    return {std::atan2(std::sin(Theta), std::cos(Theta) * std::sqrt(w * w + 1.0)), -std::atan(w)};
}

EquilibriumMomenta equilibrium_momenta(double Theta, double tau, double T) {
    const EquilibriumPoint e = equilibrium_point(Theta, tau, T);
    const FGHPartials d = fgh_partials(e.theta_e, e.phi_e, Theta, 0.0);
    // Stationary momenta solve a_q + p_theta g_q - p_phi f_q = 0 for q in {theta, phi}.
    const double m11 = d.g_theta, m12 = -d.f_theta;
    const double m21 = d.g_phi, m22 = -d.f_phi;
    const double det = m11 * m22 - m12 * m21;
    if (std::abs(det) < 1e-14) {
        throw Error(ErrorCode::SingularJacobian, "equilibrium momentum system is singular");
    }
    EquilibriumMomenta out;
    out.p_theta = (-d.a_theta * m22 + d.a_phi * m12) / det;
    out.p_phi = (-m11 * d.a_phi + m21 * d.a_theta) / det;
    out.r = -axis_rate_T(T) * tau / d.value.f;
    return out;
}

StationaryPoint stationary_point(double Theta, double tau, double T) {
    MeasurementProtocol protocol;
    protocol.Theta = Theta;
    protocol.tau = tau;
    protocol.T = T;
    const EquilibriumPoint e = equilibrium_point(Theta, tau, T);
    const EquilibriumMomenta m = equilibrium_momenta(Theta, tau, T);
    Eigen::Vector4d x(e.theta_e, e.phi_e, m.p_phi, m.p_theta);
    auto F = [&](const Eigen::Vector4d& y) {
        PhasePoint rot;
        rot.theta = y(0);
        rot.phi = -y(1);
        rot.p_phi = -y(2);
        rot.p_theta = y(3);
        const PhaseRate k = rotating_hamilton_rhs(rot, protocol, 0.0);
        return Eigen::Vector4d(k.q.theta, k.q.phi, k.p_phi, k.p_theta);
    };
    Eigen::Vector4d Fx = F(x);
    for (int iter = 0; iter < 50 && Fx.lpNorm<Eigen::Infinity>() > 1e-13; ++iter) {
        Eigen::Matrix4d J;
        for (int j = 0; j < 4; ++j) {
            Eigen::Vector4d xp = x, xm = x;
            xp(j) += 1e-7;
            xm(j) -= 1e-7;
            J.col(j) = (F(xp) - F(xm)) / 2e-7;
        }
        x += J.fullPivLu().solve(-Fx);
        Fx = F(x);
    }
    if (!(Fx.lpNorm<Eigen::Infinity>() < 1e-10)) {
        throw Error(ErrorCode::NoConvergence, "stationary point search failed");
    }
    StationaryPoint out{x(0), x(1), x(2), x(3), 0.0, 0.0};
    PhasePoint lab;
    lab.theta = out.theta;
    lab.phi = out.phi;
    lab.p_phi = out.p_phi;
    lab.p_theta = out.p_theta;
    out.r = optimal_r(lab, protocol, 0.0);
    out.action_rate = action_density(lab, out.r, protocol, 0.0);
    return out;
}

double rotating_action_density(const PhasePoint& rot, const Velocity& qdot, double r, double tau,
                               double Theta, double Phi_dot) {
    const double s = std::sin(rot.theta), c = std::cos(rot.theta);
    if (std::abs(s) < kPoleGuard) {
        throw Error(ErrorCode::SingularCoordinate, "rotating density at a pole");
    }
    const double sT = std::sin(Theta), cT = std::cos(Theta);
    const double a = s * sT * std::cos(rot.phi) + c * cT;
    const double g = c * sT * std::cos(rot.phi) - s * cT;
    const double f = sT * std::sin(rot.phi) / s;
    return (2.0 * r * a - r * r - 1.0 + 2.0 * rot.p_theta * (r * g - tau * qdot.theta) +
            2.0 * rot.p_phi * (tau * (Phi_dot - qdot.phi) - r * f)) /
           (2.0 * tau);
}

LagrangianValue lagrangian_and_measure(double theta, double phi, double phi_dot,
                                       const MeasurementProtocol& protocol, double t) {
    const double Phi = protocol.Phi(t);
    const double sd = std::sin(phi - Phi);
    if (std::abs(sd) < kPoleGuard || std::abs(std::sin(protocol.Theta)) < kPoleGuard) {
        throw Error(ErrorCode::SingularMeasure, "sin(phi - Phi) or sin(Theta) vanishes");
    }
    const FGH v = fgh(theta, phi, protocol.Theta, Phi);
    const double a = mean_readout(protocol.Theta, Phi, theta, phi);
    const double tau = protocol.tau;
    LagrangianValue out;
    out.lagrangian = -phi_dot * a / v.f - 0.5 * tau * phi_dot * phi_dot / (v.f * v.f) - 0.5 / tau;
    out.measure = 1.0 / std::sqrt(v.f * v.f / (2.0 * tau));
    out.theta_dot = -phi_dot * v.g / v.f;
    out.chi_dot = 0.5 * phi_dot * (std::cos(theta) - 1.0);
    return out;
}

}  // namespace qtrajgeom
