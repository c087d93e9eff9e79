#pragma once

// Scalar-generic Hamilton flow with p_chi = 0, used by the shooting solver.
// Instantiated with double for integration and with std::complex<double> for
// complex-step derivatives of the discrete RK4 map.

#include <array>
#include <cmath>
#include <complex>

namespace qtrajgeom::detail {

// State layout: phi, theta, chi, p_phi, p_theta, action.
template <class S>
using KernelState = std::array<S, 6>;

struct KernelParams {
    double Theta = 0.0;
    double tau = 0.1;
    double omega = 0.0;  // axis angular velocity 2 pi / T
    bool equator = false;
};

template <class S>
S kernel_readout(const KernelState<S>& y, double t, const KernelParams& k) {
    using std::cos;
    using std::sin;
    const S d = y[0] - k.omega * t;
    const double sT = std::sin(k.Theta), cT = std::cos(k.Theta);
    const S s = sin(y[1]), c = cos(y[1]);
    const S f = sT * sin(d) / s;
    const S g = c * sT * cos(d) - s * cT;
    const S a = c * cT + s * sT * cos(d);
    return a - y[3] * f + y[4] * g;
}

template <class S>
KernelState<S> kernel_rhs(const KernelState<S>& y, double t, const KernelParams& k) {
    using std::cos;
    using std::sin;
    using std::tan;
    const S d = y[0] - k.omega * t;
    const S sd = sin(d), cd = cos(d);
    const double sT = std::sin(k.Theta), cT = std::cos(k.Theta);
    const S s = sin(y[1]), c = cos(y[1]);

    const S f = sT * sd / s;
    const S g = c * sT * cd - s * cT;
    const S h = tan(0.5 * y[1]) * sT * sd;
    const S a = c * cT + s * sT * cd;
    const S f_phi = sT * cd / s;
    const S f_theta = -sT * sd * c / (s * s);
    const S g_phi = -c * sT * sd;
    const S g_theta = -s * sT * cd - c * cT;
    const S a_phi = -s * sT * sd;
    const S& a_theta = g;

    const S r = a - y[3] * f + y[4] * g;
    const S kr = r / k.tau;
    KernelState<S> out;
    out[0] = -kr * f;
    out[1] = k.equator ? S(0.0) : kr * g;
    out[2] = 0.5 * kr * h;
    out[3] = kr * (y[3] * f_phi - y[4] * g_phi - a_phi);
    out[4] = k.equator ? S(0.0) : kr * (y[3] * f_theta - y[4] * g_theta - a_theta);
    out[5] = (r * (2.0 * a - r) - 1.0) / (2.0 * k.tau);
    return out;
}

template <class S>
void kernel_rk4_step(KernelState<S>& y, double t, double h, const KernelParams& k) {
    auto shifted = [&](const KernelState<S>& dy, double w) {
        KernelState<S> z = y;
        for (int i = 0; i < 6; ++i) z[i] += w * dy[i];
        return z;
    };
    const KernelState<S> k1 = kernel_rhs(y, t, k);
    const KernelState<S> k2 = kernel_rhs(shifted(k1, 0.5 * h), t + 0.5 * h, k);
    const KernelState<S> k3 = kernel_rhs(shifted(k2, 0.5 * h), t + 0.5 * h, k);
    const KernelState<S> k4 = kernel_rhs(shifted(k3, h), t + h, k);
    for (int i = 0; i < 6; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

inline double real_part(double x) { return x; }
inline double real_part(const std::complex<double>& x) { return x.real(); }

}  // namespace qtrajgeom::detail
