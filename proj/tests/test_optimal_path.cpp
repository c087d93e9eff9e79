#include <doctest.h>

#include <cmath>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"
#include "qtrajgeom/optimal_path.hpp"

using namespace qtrajgeom;

namespace {

MeasurementProtocol protocol(double Theta, double tau) {
    MeasurementProtocol p;
    p.Theta = Theta;
    p.tau = tau;
    return p;
}

}  // namespace

TEST_CASE("winding closed forms") {
    for (double tau : {0.05, 0.1, 0.3}) {
        CHECK(action_n1_closed(kPi / 2, tau) == doctest::Approx(-2 * kPi * kPi * tau).epsilon(1e-12));
        CHECK(std::abs(chi_n1_closed(kPi / 2, tau) + kPi) < 1e-12);
    }
    // Projective limit: the state follows the axis and picks up -pi (1 - cos Theta).
    const double Theta = 0.8;
    CHECK(chi_n1_closed(Theta, 1e-6) == doctest::Approx(-kPi * (1 - std::cos(Theta))).epsilon(1e-4));
}

TEST_CASE("n1 branch is the equilibrium orbit") {
    const MeasurementProtocol p = protocol(kPi / 2, 0.1);
    const BranchSolution b = n1_branch(p, 2000);
    CHECK(b.converged);
    CHECK(b.action == doctest::Approx(-2 * kPi * kPi * 0.1).epsilon(1e-9));
    CHECK(b.path.back().point.phi - b.path.front().point.phi == doctest::Approx(kTwoPi).epsilon(1e-9));
    CHECK(b.chi == doctest::Approx(chi_n1_closed(kPi / 2, 0.1)).epsilon(1e-9));
}

TEST_CASE("integrated action along the equilibrium orbit") {
    for (double tau : {0.05, 0.1, 0.2}) {
        const MeasurementProtocol p = protocol(kPi / 2, tau);
        const EquilibriumPoint e = equilibrium_point(kPi / 2, tau);
        const EquilibriumMomenta m = equilibrium_momenta(kPi / 2, tau);
        PhasePoint start;
        start.theta = e.theta_e;
        start.phi = e.phi_e;
        start.p_phi = m.p_phi;
        start.p_theta = m.p_theta;
        const ExtremalEndpoint end = integrate_extremal(p, start, 0.0, 1.0, 4000);
        CHECK(std::abs(end.action + 2 * kPi * kPi * tau) < 1e-8);
        CHECK(end.point.phi - start.phi == doctest::Approx(kTwoPi).epsilon(1e-9));
    }
}

TEST_CASE("self-closing boundary condition") {
    const BoundaryCondition bc = BoundaryCondition::self_closing(1.0, -0.3, 1);
    CHECK(bc.theta_T == 1.0);
    CHECK(bc.phi_T == doctest::Approx(-0.3 + kTwoPi));
    CHECK(bc.n == 1);
}

TEST_CASE("equator non-winding branch") {
    const BranchSolution b = n0_branch(kPi / 2, 0.3);
    REQUIRE(b.converged);
    CHECK(b.residual < 1e-9);
    CHECK(b.path.back().point.phi == doctest::Approx(b.path.front().point.phi).epsilon(1e-9));
    for (const PathSample& s : b.path) CHECK(std::abs(s.point.theta - kPi / 2) < 1e-12);
    // At weak measurement the non-winding path is the more likely one.
    CHECK(b.action > action_n1_closed(kPi / 2, 0.3));
}

TEST_CASE("equator branches exchange dominance near 0.11") {
    const OptimalPhase weak = optimal_geometric_phase(kPi / 2, 0.2);
    CHECK(weak.winner == Winner::NonWinding);
    const OptimalPhase strong = optimal_geometric_phase(kPi / 2, 0.05);
    CHECK(strong.winner == Winner::Winding);
    CHECK(strong.chi_opt == doctest::Approx(strong.chi_n1));

    const double tau_c = find_tau_c_equator(0.02, 0.5, 1e-8);
    CHECK(tau_c >= 0.10);
    CHECK(tau_c <= 0.12);
}

TEST_CASE("compare_branches tie and merge handling") {
    BranchSolution a, b;
    a.action = -1.0;
    b.action = -1.0;
    a.chi = 0.0;
    b.chi = -kPi;
    PathSample s;
    s.point.theta = kPi / 2;
    s.point.phi = 0.0;
    a.path = {s, s};
    s.point.phi = 1.0;
    b.path = {s, s};
    CHECK(compare_branches(a, b).winner == Winner::Degenerate);
    b.action = -0.5;
    const OptimalPhase w = compare_branches(a, b);
    CHECK(w.winner == Winner::Winding);
    CHECK(w.chi_opt == -kPi);
    b.path = a.path;
    CHECK(compare_branches(a, b).winner == Winner::Merged);
}

TEST_CASE("continuation in tau matches a fresh solve") {
    const BranchSolution seed = n0_branch(kPi / 2, 0.3);
    BranchSetup setup = [](double tau) {
        MeasurementProtocol p;
        p.Theta = kPi / 2;
        p.tau = tau;
        return std::make_pair(p, BoundaryCondition::self_closing(kPi / 2, equilibrium_point(kPi / 2, tau).phi_e, 0));
    };
    const std::vector<BranchSolution> out = track_branch(setup, {0.3, 0.25, 0.2}, seed);
    REQUIRE(out.size() == 3);
    for (const BranchSolution& b : out) CHECK(b.converged);
    CHECK(out[2].action == doctest::Approx(n0_branch(kPi / 2, 0.2).action).epsilon(1e-7));
}
