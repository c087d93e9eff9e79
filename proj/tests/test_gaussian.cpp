#include <doctest.h>

#include <cmath>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"
#include "qtrajgeom/gaussian.hpp"

using namespace qtrajgeom;

namespace {

double det_closed(double tau) {
    const double w = std::sqrt(4 * kPi * kPi * tau * tau + 1);
    return tau * std::sinh(w / tau) / w;
}

SecondVariation equilibrium_variation(double tau) {
    MeasurementProtocol p;
    p.Theta = kPi / 2;
    p.tau = tau;
    return second_variation(n1_branch(p, 4000), p);
}

}  // namespace

TEST_CASE("closed forms on the equilibrium orbit") {
    for (double tau : {0.05, 0.1, 0.5}) {
        CHECK(u_T_eq_closed(tau) == doctest::Approx(4 * kPi * kPi * tau / (4 * kPi * kPi * tau * tau + 1)).epsilon(1e-14));
        CHECK(det_ratio_eq_closed(tau) == doctest::Approx(det_closed(tau)).epsilon(1e-14));
    }
}

TEST_CASE("clock length on the equilibrium orbit") {
    for (double tau : {0.05, 0.1, 0.5}) {
        const SecondVariation sv = equilibrium_variation(tau);
        const double expect = 4 * kPi * kPi * tau / (4 * kPi * kPi * tau * tau + 1);
        CHECK(std::abs(std::abs(sv.clock.u_T) - expect) < 1e-10);
        CHECK(zeta_determinant(sv.clock.u_T) == doctest::Approx(std::abs(sv.clock.u_T)));
    }
}

TEST_CASE("Gelfand-Yaglom ratio on the equilibrium orbit") {
    for (double tau : {0.05, 0.1, 0.5}) {
        const SecondVariation sv = equilibrium_variation(tau);
        const GelfandYaglom gy = gelfand_yaglom(sv);
        CHECK(std::abs(gy.det_ratio / det_closed(tau) - 1.0) < 1e-6);
        CHECK(gy.conjugate_u.empty());

        // The same ratio from the Sturm-Liouville potential in u.
        const GelfandYaglom in_u = gelfand_yaglom(sv.clock.u, sv.V);
        CHECK(std::abs(in_u.det_ratio / gy.det_ratio - 1.0) < 1e-6);
    }
}

TEST_CASE("free operator") {
    std::vector<double> u, V;
    for (int i = 0; i <= 200; ++i) {
        u.push_back(0.01 * i);
        V.push_back(0.0);
    }
    CHECK(gelfand_yaglom(u, V).det_ratio == doctest::Approx(1.0).epsilon(1e-12));
    const EigenDetRatio e = eigen_det_ratio(u, V, 16, 1024);
    CHECK(e.ratio == doctest::Approx(1.0).epsilon(1e-12));
    const double uT = u.back();
    for (int i = 1; i <= 4; ++i) {
        CHECK(e.lambda0[i - 1] == doctest::Approx(kPi * kPi * i * i / (uT * uT)).epsilon(1e-4));
    }
}

TEST_CASE("constant potential against its closed form") {
    // Sigma = -d2/du2 + k^2 gives sinh(k u_T) / (k u_T).
    const double k = 3.0, uT = 1.5;
    std::vector<double> u, V;
    for (int i = 0; i <= 600; ++i) {
        u.push_back(uT * i / 600);
        V.push_back(k * k);
    }
    const double expect = std::sinh(k * uT) / (k * uT);
    CHECK(gelfand_yaglom(u, V).det_ratio == doctest::Approx(expect).epsilon(1e-8));
    const EigenDetRatio e = eigen_det_ratio(u, V, 64, 2048);
    CHECK(e.ratio == doctest::Approx(expect).epsilon(1e-2));
}

TEST_CASE("conjugate points") {
    // -d2/du2 - k^2 with k u_T > pi has a zero of f inside the interval.
    std::vector<double> u, V;
    for (int i = 0; i <= 400; ++i) {
        u.push_back(2.0 * i / 400);
        V.push_back(-4.0);
    }
    CHECK_THROWS_AS(gelfand_yaglom(u, V, true), Error);
    const GelfandYaglom gy = gelfand_yaglom(u, V, false);
    REQUIRE(gy.conjugate_u.size() == 1);
    CHECK(gy.conjugate_u[0] == doctest::Approx(kPi / 2).epsilon(1e-4));
}

TEST_CASE("degenerate clock") {
    std::vector<PathSample> path(3);
    for (int i = 0; i < 3; ++i) {
        path[i].t = 0.5 * i;
        path[i].point.phi = kPi * path[i].t * 2;  // co-moving with the axis
    }
    CHECK_THROWS_AS(reparameterize_time(path, 0.1), Error);
}

TEST_CASE("corrected ratio on the equator") {
    const CorrectedRatio r = corrected_transition_ratio(0.2);
    CHECK(r.R_saddle == doctest::Approx(std::exp(r.winding.S_saddle - r.non_winding.S_saddle)));
    CHECK(r.winding.det_ratio == doctest::Approx(det_closed(0.2)).epsilon(1e-6));
    CHECK(r.winding.log_corrected == doctest::Approx(log_corrected_eq_closed(0.2)).epsilon(1e-6));
    CHECK(std::isfinite(r.R_corrected));
    CHECK(r.R_corrected > 0.0);
}
