#include <doctest.h>

#include <cmath>

#include "qtrajgeom/action.hpp"
#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"
#include "qtrajgeom/geometry.hpp"

using namespace qtrajgeom;

namespace {

TrajectoryRecord two_point(const BlochState& a, const BlochState& b) {
    TrajectoryRecord rec;
    rec.times = {0.0, 1.0};
    rec.states = {a, b};
    return rec;
}

double wrap(double x) { return std::remainder(x, kTwoPi); }

}  // namespace

TEST_CASE("open phase equals the overlap phase of the endpoints") {
    SUBCASE("equator, nearly antipodal") {
        const double phi = kPi - 0.01;
        const TrajectoryRecord rec = two_point({kPi / 2, 0.0, 0.0}, {kPi / 2, phi, -0.5 * phi});
        const cplx overlap = to_spinor(rec.states.front()).dot(to_spinor(rec.states.back()));
        CHECK(std::abs(wrap(geometric_phase_open(rec) - std::arg(overlap))) < 1e-12);
    }
    SUBCASE("driven trajectory off the equator") {
        MeasurementProtocol p;
        p.Theta = 0.7;
        p.tau = 0.2;
        p.N = 400;
        const TrajectoryRecord rec = propagate_with_record(
            p, {1.2, 0.3, 0.0}, [](double t) { return std::cos(5.0 * t); }, Stepping::Kraus);
        const cplx overlap = to_spinor(rec.states.front()).dot(to_spinor(rec.states.back()));
        CHECK(std::abs(wrap(geometric_phase_open(rec) - std::arg(overlap))) < 1e-10);
    }
}

TEST_CASE("open phase special cases") {
    // Self-closed path: no closure correction.
    const TrajectoryRecord closed = two_point({1.0, 0.2, 0.0}, {1.0, 0.2 + kTwoPi, -2.1});
    CHECK(geometric_phase_open(closed) == doctest::Approx(-2.1).epsilon(1e-14));

    const TrajectoryRecord still = two_point({0.7, 0.4, 0.0}, {0.7, 0.4, 0.0});
    CHECK(geometric_phase_open(still) == 0.0);

    // A common phase on every state drops out.
    const TrajectoryRecord a = two_point({0.6, 0.0, 0.0}, {1.9, 2.0, 0.4});
    const TrajectoryRecord b = two_point({0.6, 0.0, 1.3}, {1.9, 2.0, 1.7});
    CHECK(geometric_phase_open(a) == doctest::Approx(geometric_phase_open(b)).epsilon(1e-14));

    CHECK_THROWS_AS(geometric_phase_open(two_point({kPi / 2, 0.0, 0.0}, {kPi / 2, kPi, 0.0})), Error);
}

TEST_CASE("winding number") {
    const std::vector<double> Theta{0.0, kPi / 4, kPi / 2, 3 * kPi / 4, kPi};
    CHECK(winding_number(Theta, {0.0, 0.0, 0.0, 0.0, 0.0}) == 0);
    CHECK(winding_number(Theta, {0.0, -1.0, -kPi, -4.0, -kTwoPi}) == 1);
    CHECK(winding_number(Theta, {0.0, -1.0, -kPi - 0.05, -4.0, -kTwoPi}) == 1);
    CHECK_THROWS_AS(winding_number(Theta, {0.0, 0.0, -1.5, 0.0, 0.0}), Error);
    CHECK_THROWS_AS(winding_number({0.0, 1.0, 2.0}, {0.0, 0.0, 0.0}), Error);
}

TEST_CASE("greedy families on either side of the open-phase transition") {
    FamilyOptions opt;
    opt.n_theta = 64;
    const PhaseFamily strong = build_family(0.05, InitRule::OnAxis, RecordRule::Greedy, opt);
    CHECK(winding_number(strong.Theta, strong.chi_g) == 1);
    CHECK(covers_sphere(strong));
    const PhaseFamily weak = build_family(0.2, InitRule::OnAxis, RecordRule::Greedy, opt);
    CHECK(winding_number(weak.Theta, weak.chi_g) == 0);
    CHECK_FALSE(covers_sphere(weak));
}

TEST_CASE("chern number of greedy families") {
    const PhaseFamily strong = build_family(0.02, InitRule::OnAxis, RecordRule::Greedy);
    const ChernResult c1 = chern_number(strong);
    CHECK(std::abs(c1.curvature + 1.0) < 0.02);
    CHECK(c1.mismatch < 0.05);

    const PhaseFamily weak = build_family(0.5, InitRule::OnAxis, RecordRule::Greedy);
    const ChernResult c0 = chern_number(weak);
    CHECK(std::abs(c0.curvature) < 0.02);
    CHECK(c0.mismatch < 0.05);
}

TEST_CASE("chern number is stable under grid refinement") {
    FamilyOptions coarse, fine;
    coarse.n_theta = 64;
    coarse.steps = 128;
    const ChernResult a = chern_number(build_family(0.03, InitRule::OnAxis, RecordRule::Greedy, coarse));
    const ChernResult b = chern_number(build_family(0.03, InitRule::OnAxis, RecordRule::Greedy, fine));
    CHECK(std::abs(b.curvature - std::round(b.curvature)) <= std::abs(a.curvature - std::round(a.curvature)) + 1e-3);
    CHECK(std::round(a.curvature) == std::round(b.curvature));
}

TEST_CASE("a family that does not move has zero curvature") {
    PhaseFamily fam;
    for (int i = 0; i < 9; ++i) {
        const double Theta = 0.1 + 0.3 * i;
        fam.Theta.push_back(Theta);
        TrajectoryRecord rec;
        for (int k = 0; k <= 16; ++k) {
            rec.times.push_back(k / 16.0);
            rec.states.push_back({Theta, 0.5, 0.0});
        }
        fam.members.push_back(rec);
        fam.chi_g.push_back(0.0);
    }
    const ChernResult c = chern_number(fam);
    CHECK(std::abs(c.curvature) < 1e-12);
    CHECK(c.boundary == 0.0);
}

TEST_CASE("family construction") {
    FamilyOptions opt;
    opt.n_theta = 10;
    opt.steps = 64;
    const PhaseFamily fam = build_family(0.1, InitRule::Equilibrium, RecordRule::Unit, opt);
    CHECK(fam.Theta.size() == 11);  // pi/2 inserted
    CHECK(fam.Theta.front() == doctest::Approx(1e-3));
    CHECK(fam.Theta.back() == doctest::Approx(kPi - 1e-3));
    for (std::size_t i = 0; i < fam.Theta.size(); ++i) {
        const EquilibriumPoint e = equilibrium_point(fam.Theta[i], 0.1);
        CHECK(fam.members[i].states.front().theta == e.theta_e);
        CHECK(fam.members[i].states.front().phi == e.phi_e);
    }
    CHECK_THROWS_AS(open_transition_scan(InitRule::OnAxis, RecordRule::Greedy, {0.3, 0.4}, 1e-3, opt), Error);
}
