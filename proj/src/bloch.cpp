#include "qtrajgeom/bloch.hpp"

#include <cmath>
#include <string>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"

namespace qtrajgeom {

namespace {

constexpr double kComponentFloor = 1e-14;

Op2 apply_rotation(const Op2& diag, const MeasurementAxis& axis) {
    const Op2 R = rotation_to_axis(axis.Theta, axis.Phi);
    return R.adjoint() * diag * R;
}

StepOutcome apply_operator(const BlochState& state, const Op2& E, double readout) {
    const Spinor psi = to_spinor(state);
    const Spinor out = E * psi;
    const double weight = out.squaredNorm();
    if (!(weight > 0.0)) {
        throw Error(ErrorCode::DegenerateState, "Kraus operator annihilated the state");
    }
    return {readout, weight, from_spinor(out / std::sqrt(weight), state)};
}

}  // namespace

Vec3 MeasurementAxis::unit() const {
    return {std::sin(Theta) * std::cos(Phi), std::sin(Theta) * std::sin(Phi), std::cos(Theta)};
}

double MeasurementProtocol::Phi(double t) const { return kTwoPi * t / T; }

void MeasurementProtocol::validate() const {
    if (N < 2) throw Error(ErrorCode::InvalidArgument, "N must be at least 2");
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
    if (!(T > 0.0)) throw Error(ErrorCode::InvalidArgument, "T must be positive");
    if (!std::isfinite(Theta)) throw Error(ErrorCode::InvalidArgument, "Theta must be finite");
    if (const auto* null = std::get_if<NullTypeModel>(&model)) {
        if (4.0 * null->c * dt() / T > 1.0) {
            throw Error(ErrorCode::InvalidStrength, "4 c dt / T exceeds 1");
        }
    }
}

Vec3 bloch_vector(const BlochState& s) {
    return {std::sin(s.theta) * std::cos(s.phi), std::sin(s.theta) * std::sin(s.phi),
            std::cos(s.theta)};
}

Spinor to_spinor(const BlochState& s) {
    const cplx g = std::polar(1.0, s.chi);
    return Spinor(g * std::cos(0.5 * s.theta), g * std::polar(1.0, s.phi) * std::sin(0.5 * s.theta));
}

BlochState from_spinor(const Spinor& psi, const BlochState& previous) {
    const double m0 = std::abs(psi(0));
    const double m1 = std::abs(psi(1));
    if (m0 < kComponentFloor && m1 < kComponentFloor) {
        throw Error(ErrorCode::DegenerateState, "both spinor components vanish");
    }
    BlochState next;
    next.theta = 2.0 * std::atan2(m1, m0);

    // phi is undefined at the poles; hold it there.
    next.phi = previous.phi;
    if (m0 >= kComponentFloor && m1 >= kComponentFloor) {
        const double rel = std::arg(psi(1)) - std::arg(psi(0));
        next.phi = previous.phi + wrap_pi(rel - previous.phi);
    }

    const double chi_mod = next.theta <= 0.5 * kPi ? std::arg(psi(0)) : std::arg(psi(1)) - next.phi;
    next.chi = previous.chi + wrap_pi(chi_mod - previous.chi);
    return next;
}

double mean_readout(double Theta, double Phi, double theta, double phi) {
    return std::cos(theta) * std::cos(Theta) + std::sin(theta) * std::sin(Theta) * std::cos(phi - Phi);
}

double mean_readout(const MeasurementAxis& axis, const BlochState& s) {
    return mean_readout(axis.Theta, axis.Phi, s.theta, s.phi);
}

Op2 rotation_to_axis(double theta, double phi) {
    // Rows are <n+| and <n-| with |n+> = (c, e^{i phi} s), |n-> = (-e^{-i phi} s, c).
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    Op2 R;
    R << c, std::polar(s, -phi), -std::polar(s, phi), c;
    return R;
}

Op2 kraus_operator(double r, const MeasurementAxis& axis, double dt, double tau) {
    const double prefactor = std::pow(dt / (kTwoPi * tau), 0.25);
    Op2 M = Op2::Zero();
    M(0, 0) = prefactor * std::exp(-dt * (r - 1.0) * (r - 1.0) / (4.0 * tau));
    M(1, 1) = prefactor * std::exp(-dt * (r + 1.0) * (r + 1.0) / (4.0 * tau));
    return apply_rotation(M, axis);
}

double sample_readout(const BlochState& state, const MeasurementAxis& axis, double dt, double tau,
                      Rng& rng) {
    const double a = mean_readout(axis, state);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double centre = uniform(rng) < 0.5 * (1.0 + a) ? 1.0 : -1.0;
    return centre + std::sqrt(tau / dt) * normal(rng);
}

StepOutcome apply_kraus(const BlochState& state, double r, const MeasurementAxis& axis, double dt,
                        double tau) {
    return apply_operator(state, kraus_operator(r, axis, dt, tau), r);
}

BlochState euler_step(const BlochState& s, double r, const MeasurementAxis& axis, double dt,
                      double tau) {
    const double d = s.phi - axis.Phi;
    const double sT = std::sin(axis.Theta);
    const double cT = std::cos(axis.Theta);
    const double st = std::sin(s.theta);
    const double ct = std::cos(s.theta);
    if (std::abs(st) < 1e-12) {
        throw Error(ErrorCode::SingularCoordinate, "Euler step at a pole");
    }
    const double f = sT * std::sin(d) / st;
    const double g = ct * sT * std::cos(d) - st * cT;
    const double h = std::tan(0.5 * s.theta) * sT * std::sin(d);
    return {s.theta + dt * r * g / tau, s.phi - dt * r * f / tau, s.chi + dt * r * h / (2.0 * tau)};
}

Op2 null_kraus(int j, double c, double dt, double T) {
    if (j != 0 && j != 1) throw Error(ErrorCode::InvalidArgument, "null outcome must be 0 or 1");
    const double q = 4.0 * c * dt / T;
    if (q > 1.0 || q < 0.0) {
        throw Error(ErrorCode::InvalidStrength, "4 c dt / T = " + std::to_string(q));
    }
    Op2 M = Op2::Zero();
    if (j == 1) {
        M(0, 0) = 1.0;
        M(1, 1) = std::sqrt(1.0 - q);
    } else {
        M(1, 1) = std::sqrt(q);
    }
    return M;
}

Op2 null_kraus(int j, double c, double dt, double T, const MeasurementAxis& axis) {
    return apply_rotation(null_kraus(j, c, dt, T), axis);
}

StepOutcome apply_null_kraus(const BlochState& state, int j, const MeasurementAxis& axis, double c,
                             double dt, double T) {
    return apply_operator(state, null_kraus(j, c, dt, T, axis), static_cast<double>(j));
}

int sample_null_outcome(const BlochState& state, const MeasurementAxis& axis, double c, double dt,
                        double T, Rng& rng) {
    const Spinor psi = to_spinor(state);
    const double p0 = (null_kraus(0, c, dt, T, axis) * psi).squaredNorm();
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    return uniform(rng) < p0 ? 0 : 1;
}

}  // namespace qtrajgeom
