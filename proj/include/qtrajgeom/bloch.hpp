#pragma once

// Pure-qubit states on the Bloch sphere with an explicit global phase, and the
// rotating-axis measurement models acting on them.
//
// State convention:
//     |psi> = e^{i chi} ( cos(theta/2), e^{i phi} sin(theta/2) )
// phi and chi are carried unwrapped so that winding survives many steps.

#include <complex>
#include <random>
#include <variant>

#include <Eigen/Core>

namespace qtrajgeom {

using cplx = std::complex<double>;
using Spinor = Eigen::Vector2cd;
using Op2 = Eigen::Matrix2cd;
using Vec3 = Eigen::Vector3d;
using Rng = std::mt19937_64;

struct BlochState {
    double theta = 0.0;
    double phi = 0.0;
    double chi = 0.0;
};

struct MeasurementAxis {
    double Theta = 0.0;
    double Phi = 0.0;

    Vec3 unit() const;
};

struct GaussianModel {};

// Binary-outcome measurement with dimensionless strength c.
struct NullTypeModel {
    double c = 1.0;
};

using MeasurementModel = std::variant<GaussianModel, NullTypeModel>;

// Cyclic protocol: the axis sits at latitude Theta and its azimuth advances
// as Phi(t) = 2 pi t / T over N steps of width T / N.
struct MeasurementProtocol {
    double Theta = 0.0;
    double tau = 0.1;
    double T = 1.0;
    int N = 100;
    MeasurementModel model = GaussianModel{};

    double dt() const { return T / N; }
    double time(int k) const { return k * dt(); }
    double Phi(double t) const;
    MeasurementAxis axis_at(double t) const { return {Theta, Phi(t)}; }

    // Throws InvalidArgument on N < 2, tau <= 0, T <= 0, or non-finite Theta.
    void validate() const;
};

struct StepOutcome {
    double readout = 0.0;
    double weight = 0.0;
    BlochState next_state;
};

Vec3 bloch_vector(const BlochState& state);
Spinor to_spinor(const BlochState& state);

// Reads (theta, phi, chi) back from a normalized spinor. phi and chi are
// unwrapped relative to `previous`: each increment is taken in (-pi, pi].
// chi is read from whichever component has the larger magnitude.
BlochState from_spinor(const Spinor& psi, const BlochState& previous);

double mean_readout(double Theta, double Phi, double theta, double phi);
double mean_readout(const MeasurementAxis& axis, const BlochState& state);

// Unitary taking the Bloch point (theta, phi) to |0>.
Op2 rotation_to_axis(double theta, double phi);

// Gaussian Kraus operator E(r) = R^-1 M_dt(r) R for the given axis.
Op2 kraus_operator(double r, const MeasurementAxis& axis, double dt, double tau);

// Draws r from Tr[E(r)^dagger E(r) rho]: the mixture
// p+ N(+1, tau/dt) + p- N(-1, tau/dt) with p+- = (1 +- a) / 2.
double sample_readout(const BlochState& state, const MeasurementAxis& axis, double dt, double tau,
                      Rng& rng);

StepOutcome apply_kraus(const BlochState& state, double r, const MeasurementAxis& axis, double dt,
                        double tau);

// One explicit Euler step of the continuum update equations with readout r.
BlochState euler_step(const BlochState& state, double r, const MeasurementAxis& axis, double dt,
                      double tau);

// Null-type Kraus operators M_1 (j = 1, no click) and M_0 (j = 0), rotated to
// the axis when one is given. Throws InvalidStrength if 4 c dt / T > 1.
Op2 null_kraus(int j, double c, double dt, double T);
Op2 null_kraus(int j, double c, double dt, double T, const MeasurementAxis& axis);

StepOutcome apply_null_kraus(const BlochState& state, int j, const MeasurementAxis& axis, double c,
                             double dt, double T);

int sample_null_outcome(const BlochState& state, const MeasurementAxis& axis, double c, double dt,
                        double T, Rng& rng);

}  // namespace qtrajgeom
