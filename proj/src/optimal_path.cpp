#include "qtrajgeom/optimal_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <complex>

#include <Eigen/Dense>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"
#include "hamilton_kernel.hpp"

namespace qtrajgeom {

namespace {

constexpr double kEquatorTol = 1e-14;
constexpr double kSegmentRate = 4.0;
constexpr double kSingleShotLimit = 15.0;
constexpr double kStepsPerTau = 80.0;

struct State {
    PhasePoint x;
    double S = 0.0;
};

State axpy(const State& s, double h, const PhaseRate& k, double dS) {
    State out = s;
    out.x.phi += h * k.q.phi;
    out.x.theta += h * k.q.theta;
    out.x.chi += h * k.q.chi;
    out.x.p_phi += h * k.p_phi;
    out.x.p_theta += h * k.p_theta;
    out.S += h * dS;
    return out;
}

double density_at(const PhasePoint& x, const MeasurementProtocol& protocol, double t) {
    return action_density(x, optimal_r(x, protocol, t), protocol, t);
}

bool finite(const PhasePoint& x) {
    return std::isfinite(x.phi) && std::isfinite(x.theta) && std::isfinite(x.p_phi) &&
           std::isfinite(x.p_theta) && std::isfinite(x.chi);
}

bool on_equator(const MeasurementProtocol& protocol, const BoundaryCondition& bc) {
    return std::abs(protocol.Theta - 0.5 * kPi) < kEquatorTol &&
           std::abs(bc.theta0 - 0.5 * kPi) < kEquatorTol &&
           std::abs(bc.theta_T - 0.5 * kPi) < kEquatorTol;
}

// Shooting problem over K segments. Unknown vector: initial momenta (m
// entries), then the full reduced state (2m entries) at each interior node.
class Shooter {
public:
    Shooter(const MeasurementProtocol& protocol, const BoundaryCondition& bc, bool reduced,
            int segments, int steps)
        : protocol_(protocol), bc_(bc), reduced_(reduced), K_(segments),
          m_(reduced ? 1 : 2), steps_per_segment_(std::max(1, steps / segments)) {}

    int size() const { return m_ + 2 * m_ * (K_ - 1); }
    int segments() const { return K_; }
    int steps_per_segment() const { return steps_per_segment_; }
    double node_time(int k) const { return protocol_.T * k / K_; }

    PhasePoint start_point(const Eigen::VectorXd& x) const {
        PhasePoint p;
        p.phi = bc_.phi0;
        p.theta = bc_.theta0;
        p.p_phi = x(0);
        p.p_theta = reduced_ ? 0.0 : x(1);
        return p;
    }

    PhasePoint node_point(const Eigen::VectorXd& x, int k) const {
        const int o = m_ + 2 * m_ * (k - 1);
        PhasePoint p;
        if (reduced_) {
            p.phi = x(o);
            p.theta = 0.5 * kPi;
            p.p_phi = x(o + 1);
        } else {
            p.phi = x(o);
            p.theta = x(o + 1);
            p.p_phi = x(o + 2);
            p.p_theta = x(o + 3);
        }
        return p;
    }

    void set_node(Eigen::VectorXd& x, int k, const PhasePoint& p) const {
        const int o = m_ + 2 * m_ * (k - 1);
        if (reduced_) {
            x(o) = p.phi;
            x(o + 1) = p.p_phi;
        } else {
            x(o) = p.phi;
            x(o + 1) = p.theta;
            x(o + 2) = p.p_phi;
            x(o + 3) = p.p_theta;
        }
    }

    PhasePoint segment_start(const Eigen::VectorXd& x, int k) const {
        return k == 0 ? start_point(x) : node_point(x, k);
    }

    // State indices touched by the unknowns of a segment start, in node order.
    std::vector<int> start_indices(int k) const {
        if (k == 0) return reduced_ ? std::vector<int>{3} : std::vector<int>{3, 4};
        return reduced_ ? std::vector<int>{0, 3} : std::vector<int>{0, 1, 3, 4};
    }

    template <class S>
    detail::KernelState<S> propagate(detail::KernelState<S> y, int k,
                                     std::vector<PathSample>* samples) const {
        const detail::KernelParams kp{protocol_.Theta, protocol_.tau, kTwoPi / protocol_.T, reduced_};
        const double t0 = node_time(k);
        const double h = (node_time(k + 1) - t0) / steps_per_segment_;
        auto record = [&](double t) {
            if (!samples) return;
            PathSample ps;
            ps.t = t;
            ps.point.phi = detail::real_part(y[0]);
            ps.point.theta = detail::real_part(y[1]);
            ps.point.chi = detail::real_part(y[2]);
            ps.point.p_phi = detail::real_part(y[3]);
            ps.point.p_theta = detail::real_part(y[4]);
            ps.r = detail::real_part(detail::kernel_readout(y, t, kp));
            samples->push_back(ps);
        };
        record(t0);
        for (int i = 0; i < steps_per_segment_; ++i) {
            const double t = t0 + i * h;
            detail::kernel_rk4_step(y, t, h, kp);
            const double th = detail::real_part(y[1]);
            for (const auto& v : y) {
                if (!std::isfinite(detail::real_part(v))) {
                    throw Error(ErrorCode::NoConvergence, "extremal integration diverged");
                }
            }
            if (th <= 0.0 || th >= kPi) throw Error(ErrorCode::SingularCoordinate, "extremal crossed a pole");
            record(t + h);
        }
        return y;
    }

    static detail::KernelState<double> to_kernel(const PhasePoint& p) {
        return {p.phi, p.theta, p.chi, p.p_phi, p.p_theta, 0.0};
    }

    ExtremalEndpoint run_segment(const PhasePoint& start, int k,
                                 std::vector<PathSample>* samples) const {
        PhasePoint s = start;
        if (reduced_) {
            // The equator is invariant; pin it against round-off drift.
            s.theta = 0.5 * kPi;
            s.p_theta = 0.0;
        }
        const auto y = propagate(to_kernel(s), k, samples);
        PhasePoint end;
        end.phi = y[0];
        end.theta = y[1];
        end.chi = y[2];
        end.p_phi = y[3];
        end.p_theta = y[4];
        return {end, y[5]};
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
        Eigen::VectorXd F(size());
        int row = 0;
        for (int k = 0; k < K_; ++k) {
            const PhasePoint end = run_segment(segment_start(x, k), k, nullptr).point;
            if (k + 1 < K_) {
                const PhasePoint node = node_point(x, k + 1);
                F(row++) = end.phi - node.phi;
                if (!reduced_) F(row++) = end.theta - node.theta;
                F(row++) = end.p_phi - node.p_phi;
                if (!reduced_) F(row++) = end.p_theta - node.p_theta;
            } else {
                F(row++) = end.phi - bc_.phi_T;
                if (!reduced_) F(row++) = end.theta - bc_.theta_T;
            }
        }
        return F;
    }

    // Block-sparse Jacobian: each segment end depends only on its own start.
    // Columns come from complex-step differentiation of the discrete flow,
    // which is free of cancellation error.
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
        using C = std::complex<double>;
        constexpr double h = 1e-30;
        const int n = size();
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
        const std::vector<int> out_idx = start_indices(1);
        int row = 0;
        for (int k = 0; k < K_; ++k) {
            const int col0 = k == 0 ? 0 : m_ + 2 * m_ * (k - 1);
            const int nrows = k + 1 < K_ ? 2 * m_ : m_;
            PhasePoint s = segment_start(x, k);
            if (reduced_) {
                s.theta = 0.5 * kPi;
                s.p_theta = 0.0;
            }
            const detail::KernelState<double> y0 = to_kernel(s);
            const std::vector<int> in_idx = start_indices(k);
            for (std::size_t j = 0; j < in_idx.size(); ++j) {
                detail::KernelState<C> y;
                for (int i = 0; i < 6; ++i) y[i] = y0[i];
                y[in_idx[j]] += C(0.0, h);
                const detail::KernelState<C> e = propagate(y, k, nullptr);
                for (int r = 0; r < nrows; ++r) J(row + r, col0 + j) = e[out_idx[r]].imag() / h;
            }
            if (k + 1 < K_) {
                J.block(row, m_ + 2 * m_ * k, nrows, nrows) -= Eigen::MatrixXd::Identity(nrows, nrows);
            }
            row += nrows;
        }
        return J;
    }

    const MeasurementProtocol& protocol() const { return protocol_; }
    const BoundaryCondition& bc() const { return bc_; }
    bool reduced() const { return reduced_; }

private:
    MeasurementProtocol protocol_;
    BoundaryCondition bc_;
    bool reduced_;
    int K_;
    int m_;
    int steps_per_segment_;
};

struct NewtonResult {
    Eigen::VectorXd x;
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;
};

NewtonResult newton(const Shooter& sh, Eigen::VectorXd x, const SolverOptions& opt) {
    auto safe_residual = [&](const Eigen::VectorXd& y, Eigen::VectorXd& F) {
        try {
            F = sh.residual(y);
            return F.allFinite();
        } catch (const Error&) {
            return false;
        }
    };
    NewtonResult out;
    Eigen::VectorXd F;
    if (!safe_residual(x, F)) {
        out.x = x;
        return out;
    }
    double norm = F.lpNorm<Eigen::Infinity>();
    const int n = sh.size();
    for (int iter = 0; iter < opt.max_iter && norm >= opt.tol; ++iter) {
        Eigen::MatrixXd J;
        try {
            J = sh.jacobian(x);
        } catch (const Error&) {
            break;
        }
        if (!J.allFinite()) break;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
        qr.setThreshold(1e-13);
        if (qr.rank() < n) throw Error(ErrorCode::SingularJacobian, "shooting Jacobian is singular");
        const Eigen::VectorXd dx = qr.solve(-F);
        const double dx_norm = dx.lpNorm<Eigen::Infinity>();

        // Natural monotonicity: the simplified Newton correction at the trial
        // point must shrink relative to the full correction.
        double lambda = 1.0;
        bool accepted = false;
        while (lambda > 1.0 / 4096.0) {
            Eigen::VectorXd trial = x + lambda * dx, Ft;
            if (safe_residual(trial, Ft)) {
                const double simplified = qr.solve(-Ft).lpNorm<Eigen::Infinity>();
                if (simplified <= (1.0 - 0.25 * lambda) * dx_norm || Ft.lpNorm<Eigen::Infinity>() < opt.tol) {
                    x = trial;
                    F = Ft;
                    norm = Ft.lpNorm<Eigen::Infinity>();
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
    }
    out.x = x;
    out.residual = norm;
    out.converged = norm < opt.tol;
    return out;
}

// Interior node values for multiple shooting taken from a guess path, or by
// integrating the guess momenta forward when no path is available.
Eigen::VectorXd initial_unknowns(const Shooter& sh, const InitialGuess& guess) {
    Eigen::VectorXd x(sh.size());
    x(0) = guess.p_phi;
    if (!sh.reduced()) x(1) = guess.p_theta;
    if (sh.segments() == 1) return x;

    if (guess.path && !guess.path->path.empty()) {
        const auto& path = guess.path->path;
        for (int k = 1; k < sh.segments(); ++k) {
            const double tk = sh.node_time(k);
            const auto it = std::min_element(path.begin(), path.end(), [&](const auto& a, const auto& b) {
                return std::abs(a.t - tk) < std::abs(b.t - tk);
            });
            sh.set_node(x, k, it->point);
        }
        return x;
    }
    // Straight line between the boundary values with constant momenta.
    for (int k = 1; k < sh.segments(); ++k) {
        const double s = static_cast<double>(k) / sh.segments();
        PhasePoint p = sh.start_point(x);
        p.phi = sh.bc().phi0 + s * (sh.bc().phi_T - sh.bc().phi0);
        p.theta = sh.bc().theta0 + s * (sh.bc().theta_T - sh.bc().theta0);
        sh.set_node(x, k, p);
    }
    return x;
}

BranchSolution assemble(const Shooter& sh, const NewtonResult& res, int n) {
    BranchSolution sol;
    sol.n = n;
    sol.converged = res.converged;
    sol.residual = res.residual;
    sol.p_phi0 = res.x(0);
    sol.p_theta0 = sh.reduced() ? 0.0 : res.x(1);
    double S = 0.0;
    double chi_offset = 0.0;
    for (int k = 0; k < sh.segments(); ++k) {
        std::vector<PathSample> seg;
        PhasePoint start = sh.segment_start(res.x, k);
        start.chi = chi_offset;
        const ExtremalEndpoint end = sh.run_segment(start, k, &seg);
        S += end.action;
        chi_offset = end.point.chi;
        if (!sol.path.empty()) seg.erase(seg.begin());
        sol.path.insert(sol.path.end(), seg.begin(), seg.end());
    }
    sol.action = S;
    sol.density = std::exp(S);
    sol.chi = sol.path.back().point.chi;
    return sol;
}

// Linear extrapolation of a branch: current + s (current - previous).
BranchSolution secant_prediction(const BranchSolution& previous, const BranchSolution& current, double s) {
    BranchSolution out = current;
    auto lerp = [s](double a, double b) { return b + s * (b - a); };
    out.p_phi0 = lerp(previous.p_phi0, current.p_phi0);
    out.p_theta0 = lerp(previous.p_theta0, current.p_theta0);
    for (std::size_t i = 0; i < out.path.size(); ++i) {
        const PhasePoint& a = previous.path[i].point;
        PhasePoint& b = out.path[i].point;
        b.phi = lerp(a.phi, b.phi);
        b.theta = lerp(a.theta, b.theta);
        b.p_phi = lerp(a.p_phi, b.p_phi);
        b.p_theta = lerp(a.p_theta, b.p_theta);
    }
    return out;
}

// Truncation error of the flow must stay well below the soft directions of
// the shooting problem, which become exponentially weak as tau shrinks.
int resolved_steps(int steps, const MeasurementProtocol& protocol) {
    const double needed = kStepsPerTau * protocol.T / protocol.tau;
    if (steps >= needed) return steps;
    return static_cast<int>(std::ceil(needed / 1000.0)) * 1000;
}

}  // namespace

BoundaryCondition BoundaryCondition::self_closing(double theta0, double phi0, int n) {
    return {theta0, phi0, theta0, phi0 + kTwoPi * n, n};
}

ExtremalEndpoint integrate_extremal(const MeasurementProtocol& protocol, const PhasePoint& start,
                                    double t0, double t1, int steps,
                                    std::vector<PathSample>* samples) {
    State s{start, 0.0};
    const double h = (t1 - t0) / steps;
    auto rhs = [&](const State& y, double t, double& dS) {
        const PhaseRate k = hamilton_rhs(y.x, protocol, t);
        dS = density_at(y.x, protocol, t);
        return k;
    };
    if (samples) samples->push_back({t0, s.x, optimal_r(s.x, protocol, t0)});
    for (int i = 0; i < steps; ++i) {
        const double t = t0 + i * h;
        double d1, d2, d3, d4;
        const PhaseRate k1 = rhs(s, t, d1);
        const PhaseRate k2 = rhs(axpy(s, 0.5 * h, k1, d1), t + 0.5 * h, d2);
        const PhaseRate k3 = rhs(axpy(s, 0.5 * h, k2, d2), t + 0.5 * h, d3);
        const PhaseRate k4 = rhs(axpy(s, h, k3, d3), t + h, d4);
        auto comb = [&](double a1, double a2, double a3, double a4) {
            return h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
        };
        s.x.phi += comb(k1.q.phi, k2.q.phi, k3.q.phi, k4.q.phi);
        s.x.theta += comb(k1.q.theta, k2.q.theta, k3.q.theta, k4.q.theta);
        s.x.chi += comb(k1.q.chi, k2.q.chi, k3.q.chi, k4.q.chi);
        s.x.p_phi += comb(k1.p_phi, k2.p_phi, k3.p_phi, k4.p_phi);
        s.x.p_theta += comb(k1.p_theta, k2.p_theta, k3.p_theta, k4.p_theta);
        s.S += comb(d1, d2, d3, d4);
        if (!finite(s.x)) throw Error(ErrorCode::NoConvergence, "extremal integration diverged");
        if (s.x.theta <= 0.0 || s.x.theta >= kPi) {
            throw Error(ErrorCode::SingularCoordinate, "extremal crossed a pole");
        }
        if (samples) samples->push_back({t + h, s.x, optimal_r(s.x, protocol, t + h)});
    }
    return {s.x, s.S};
}

BranchSolution solve_bvp(const MeasurementProtocol& protocol, const BoundaryCondition& bc,
                         const InitialGuess& guess, const SolverOptions& options) {
    protocol.validate();
    SolverOptions opt = options;
    opt.steps = resolved_steps(options.steps, protocol);
    const bool reduced = opt.reduce_equator && on_equator(protocol, bc);

    // Single shooting loses all precision once perturbations grow by more
    // than about e^15 over the horizon. Off the equator the transverse
    // direction is strongly unstable even at moderate tau.
    std::vector<int> attempts;
    if (!opt.allow_multiple_shooting || (reduced && protocol.T / protocol.tau < kSingleShotLimit)) {
        attempts.push_back(1);
    }
    if (opt.allow_multiple_shooting) {
        // Keep the growth of perturbations within a segment moderate.
        // Segment boundaries must fall on the step grid so that every path
        // shares the same sample times.
        int K = std::max(opt.segments,
                         static_cast<int>(std::ceil(protocol.T / (kSegmentRate * protocol.tau))));
        while (K < opt.steps && opt.steps % K != 0) ++K;
        if (K > 1) attempts.push_back(K);
    }

    std::string last_error = "no attempt made";
    for (int K : attempts) {
        Shooter sh(protocol, bc, reduced, K, opt.steps);
        try {
            const NewtonResult res = newton(sh, initial_unknowns(sh, guess), opt);
            if (res.converged) return assemble(sh, res, bc.n);
            last_error = "residual " + std::to_string(res.residual) + " with " + std::to_string(K) +
                         " segment(s)";
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    throw Error(ErrorCode::NoConvergence, "shooting failed: " + last_error);
}

std::vector<BranchSolution> track_branch(const BranchSetup& setup, const std::vector<double>& params,
                                         const BranchSolution& seed, const SolverOptions& options,
                                         double min_step) {
    if (params.empty()) return {};
    if (!seed.converged) throw Error(ErrorCode::InvalidArgument, "continuation seed not converged");
    // One time grid for the whole branch keeps neighbouring paths comparable.
    SolverOptions opt = options;
    for (double p : params) opt.steps = std::max(opt.steps, resolved_steps(options.steps, setup(p).first));
    std::vector<BranchSolution> out;
    out.push_back(seed);
    BranchSolution current = seed;
    std::optional<BranchSolution> previous;
    double c = params.front();
    double c_prev = c;
    for (std::size_t i = 1; i < params.size(); ++i) {
        const double target = params[i];
        double step = target - c;
        bool leaped = false;
        while (std::abs(target - c) > 0.0) {
            const double next = std::abs(step) >= std::abs(target - c) ? target : c + step;
            const auto [protocol, bc] = setup(next);
            BranchSolution predicted = current;
            if (!leaped && previous && previous->path.size() == current.path.size() && c != c_prev) {
                predicted = secant_prediction(*previous, current, (next - c) / (c - c_prev));
            }
            try {
                BranchSolution sol = solve_bvp(protocol, bc,
                                               {predicted.p_phi0, predicted.p_theta0, &predicted}, opt);
                previous = std::move(current);
                current = std::move(sol);
                c_prev = c;
                c = next;
                step *= 2.0;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoConvergence && e.code() != ErrorCode::SingularJacobian &&
                    e.code() != ErrorCode::SingularCoordinate) {
                    throw;
                }
                step *= 0.5;
                if (std::abs(step) < min_step && !leaped && next != target) {
                    // Small steps walk into near-singular points of the
                    // branch; stepping straight over them often succeeds.
                    leaped = true;
                    step = target - c;
                    continue;
                }
                if (std::abs(step) < min_step) {
                    std::ostringstream msg;
                    msg.precision(17);
                    msg << "continuation stalled; last good parameter " << c;
                    throw Error(ErrorCode::BranchLost, msg.str());
                }
            }
        }
        out.push_back(current);
    }
    return out;
}

double chi_n1_closed(double Theta, double tau, double T) {
    const double s = std::sin(0.5 * equilibrium_point(Theta, tau, T).theta_e);
    return -kTwoPi * s * s;
}

double action_n1_closed(double Theta, double tau, double T) {
    const double t = tau / T;
    const double x = 2.0 * kPi * kPi * t * t;
    const double s = std::sin(Theta);
    return -2.0 * kPi * kPi * t * s * s / (x * std::cos(2.0 * Theta) + x + 1.0);
}

double p_n1_closed(double Theta, double tau, double T) { return std::exp(action_n1_closed(Theta, tau, T)); }

BranchSolution n1_branch(const MeasurementProtocol& protocol, int steps) {
    const EquilibriumPoint e = equilibrium_point(protocol.Theta, protocol.tau, protocol.T);
    const EquilibriumMomenta m = equilibrium_momenta(protocol.Theta, protocol.tau, protocol.T);
    const FGH v = fgh(e.theta_e, e.phi_e, protocol.Theta, 0.0);
    const double a = mean_readout(protocol.Theta, 0.0, e.theta_e, e.phi_e);
    const double chi_rate = m.r * v.h / (2.0 * protocol.tau);
    const double density = (m.r * (2.0 * a - m.r) - 1.0) / (2.0 * protocol.tau);

    BranchSolution sol;
    sol.n = 1;
    sol.path.reserve(steps + 1);
    for (int i = 0; i <= steps; ++i) {
        const double t = protocol.T * i / steps;
        PhasePoint p;
        p.phi = e.phi_e + protocol.Phi(t);
        p.theta = e.theta_e;
        p.chi = chi_rate * t;
        p.p_phi = m.p_phi;
        p.p_theta = m.p_theta;
        sol.path.push_back({t, p, m.r});
    }
    sol.action = density * protocol.T;
    sol.density = std::exp(sol.action);
    sol.chi = chi_rate * protocol.T;
    sol.p_phi0 = m.p_phi;
    sol.p_theta0 = m.p_theta;
    sol.converged = true;
    return sol;
}

namespace {

constexpr double kSeedTau = 0.5;
constexpr double kSeedMomentum = -0.11;

MeasurementProtocol equator_protocol(double tau) {
    MeasurementProtocol p;
    p.Theta = 0.5 * kPi;
    p.tau = tau;
    return p;
}

BoundaryCondition equilibrium_bc(double Theta, double tau, int n) {
    const EquilibriumPoint e = equilibrium_point(Theta, tau);
    return BoundaryCondition::self_closing(e.theta_e, e.phi_e, n);
}

BranchSolution equator_n0_seed(const SolverOptions& options) {
    return solve_bvp(equator_protocol(kSeedTau), equilibrium_bc(0.5 * kPi, kSeedTau, 0),
                     {kSeedMomentum, 0.0, nullptr}, options);
}

}  // namespace

std::vector<BranchSolution> equator_n0_family(const std::vector<double>& taus,
                                              const SolverOptions& options) {
    std::vector<double> params{kSeedTau};
    params.insert(params.end(), taus.begin(), taus.end());
    auto setup = [](double tau) {
        return std::make_pair(equator_protocol(tau), equilibrium_bc(0.5 * kPi, tau, 0));
    };
    auto family = track_branch(setup, params, equator_n0_seed(options), options);
    family.erase(family.begin());
    return family;
}

BranchSolution n0_branch(double Theta, double tau, const SolverOptions& options) {
    if (std::abs(Theta - 0.5 * kPi) < kEquatorTol) return equator_n0_family({tau}, options).front();
    // Off the equator theta is no longer frozen and the branch does not
    // connect to the equator solution, so it is seeded afresh at weak
    // measurement for this latitude.
    SolverOptions full = options;
    full.reduce_equator = false;
    auto setup = [Theta](double t) {
        MeasurementProtocol p = equator_protocol(t);
        p.Theta = Theta;
        return std::make_pair(p, equilibrium_bc(Theta, t, 0));
    };
    const auto [protocol, bc] = setup(kSeedTau);
    const BranchSolution seed = solve_bvp(protocol, bc, {kSeedMomentum, 0.0, nullptr}, full);
    if (tau == kSeedTau) return seed;
    return track_branch(setup, {kSeedTau, tau}, seed, full).back();
}

OptimalPhase compare_branches(const BranchSolution& n0, const BranchSolution& n1, double merge_tol,
                              double tie_tol) {
    OptimalPhase out;
    out.action_n0 = n0.action;
    out.action_n1 = n1.action;
    out.chi_n0 = n0.chi;
    out.chi_n1 = n1.chi;
    if (n0.path.size() == n1.path.size()) {
        double dist = 0.0;
        for (std::size_t i = 0; i < n0.path.size(); ++i) {
            const BlochState a{n0.path[i].point.theta, n0.path[i].point.phi, 0.0};
            const BlochState b{n1.path[i].point.theta, n1.path[i].point.phi, 0.0};
            dist = std::max(dist, (bloch_vector(a) - bloch_vector(b)).lpNorm<Eigen::Infinity>());
        }
        if (dist < merge_tol) {
            out.winner = Winner::Merged;
            out.chi_opt = n1.chi;
            return out;
        }
    }
    const double diff = n1.action - n0.action;
    if (std::abs(diff) <= tie_tol) {
        out.winner = Winner::Degenerate;
        out.chi_opt = n0.chi;
    } else if (diff > 0.0) {
        out.winner = Winner::Winding;
        out.chi_opt = n1.chi;
    } else {
        out.winner = Winner::NonWinding;
        out.chi_opt = n0.chi;
    }
    return out;
}

OptimalPhase optimal_geometric_phase(double Theta, double tau, const SolverOptions& options) {
    MeasurementProtocol p = equator_protocol(tau);
    p.Theta = Theta;
    try {
        const BranchSolution n0 = n0_branch(Theta, tau, options);
        return compare_branches(n0, n1_branch(p, static_cast<int>(n0.path.size()) - 1));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::BranchLost) throw;
        const BranchSolution n1 = n1_branch(p, options.steps);
        OptimalPhase out;
        out.winner = Winner::Merged;
        out.chi_opt = n1.chi;
        out.action_n1 = out.action_n0 = n1.action;
        out.chi_n1 = out.chi_n0 = n1.chi;
        return out;
    }
}

double find_tau_c_equator(double lo, double hi, double tol, const SolverOptions& options) {
    constexpr int kScan = 25;
    std::vector<double> taus(kScan);
    for (int i = 0; i < kScan; ++i) taus[i] = hi + (lo - hi) * i / (kScan - 1);
    auto gap = [](double tau, const BranchSolution& n0) { return action_n1_closed(0.5 * kPi, tau) - n0.action; };
    // Walk down the window and stop at the first sign change.
    std::vector<BranchSolution> family = equator_n0_family({taus.front()}, options);
    for (int i = 1; i < kScan; ++i) {
        auto setup = [](double tau) {
            return std::make_pair(equator_protocol(tau), equilibrium_bc(0.5 * kPi, tau, 0));
        };
        family.push_back(track_branch(setup, {taus[i - 1], taus[i]}, family.back(), options).back());
        if ((gap(taus[i - 1], family[i - 1]) > 0.0) != (gap(taus[i], family[i]) > 0.0)) break;
    }

    int bracket = -1;
    for (int i = 0; i + 1 < static_cast<int>(family.size()) && bracket < 0; ++i) {
        if ((gap(taus[i], family[i]) > 0.0) != (gap(taus[i + 1], family[i + 1]) > 0.0)) bracket = i;
    }
    if (bracket < 0) throw Error(ErrorCode::NoBracket, "no sign change of S1 - S0 in scan window");

    auto setup = [](double tau) {
        return std::make_pair(equator_protocol(tau), equilibrium_bc(0.5 * kPi, tau, 0));
    };
    // Illinois regula falsi; each trial is continued from the nearer end.
    double a = taus[bracket], b = taus[bracket + 1];
    BranchSolution sa = family[bracket], sb = family[bracket + 1];
    double ga = gap(a, sa), gb = gap(b, sb);
    int side = 0;
    for (int iter = 0; iter < 100; ++iter) {
        const double m = (a * gb - b * ga) / (gb - ga);
        const BranchSolution& from = std::abs(m - a) < std::abs(m - b) ? sa : sb;
        const double from_tau = &from == &sa ? a : b;
        BranchSolution sm = track_branch(setup, {from_tau, m}, from, options).back();
        const double gm = gap(m, sm);
        if (std::abs(gm) < 1e-10 || std::abs(b - a) < tol) return m;
        if ((gm > 0.0) == (ga > 0.0)) {
            a = m;
            sa = std::move(sm);
            ga = gm;
            if (side == -1) gb *= 0.5;
            side = -1;
        } else {
            b = m;
            sb = std::move(sm);
            gb = gm;
            if (side == 1) ga *= 0.5;
            side = 1;
        }
    }
    throw Error(ErrorCode::NoConvergence, "tau_c refinement did not converge");
}

ThetaJumpScan scan_theta_jump(double tau, int n_theta, double theta_lo, double jump_factor,
                              const SolverOptions& options) {
    if (n_theta < 3) throw Error(ErrorCode::InvalidArgument, "Theta grid needs at least 3 points");
    ThetaJumpScan scan;
    scan.tau = tau;
    for (int i = 0; i < n_theta; ++i) {
        scan.Theta.push_back(0.5 * kPi + (theta_lo - 0.5 * kPi) * i / (n_theta - 1));
    }
    SolverOptions full = options;
    full.reduce_equator = false;
    auto setup = [tau](double Th) {
        MeasurementProtocol p = equator_protocol(tau);
        p.Theta = Th;
        return std::make_pair(p, equilibrium_bc(Th, tau, 0));
    };
    auto merged_phase = [](const BranchSolution& n1) {
        OptimalPhase ph;
        ph.winner = Winner::Merged;
        ph.chi_opt = ph.chi_n0 = ph.chi_n1 = n1.chi;
        ph.action_n0 = ph.action_n1 = n1.action;
        return ph;
    };

    const BranchSolution eq = equator_n0_family({tau}, options).front();
    scan.phases.push_back(compare_branches(eq, n1_branch(setup(0.5 * kPi).first, eq.path.size() - 1)));

    // Off-equator points follow one branch, continued downward in Theta.
    BranchSolution current;
    bool lost = false;
    for (std::size_t i = 1; i < scan.Theta.size(); ++i) {
        const double Th = scan.Theta[i];
        if (!lost) {
            try {
                current = i == 1 ? n0_branch(Th, tau, options)
                                 : track_branch(setup, {scan.Theta[i - 1], Th}, current, full).back();
            } catch (const Error& e) {
                if (e.code() != ErrorCode::BranchLost) throw;
                lost = true;
            }
        }
        const int steps = lost ? options.steps : static_cast<int>(current.path.size()) - 1;
        const BranchSolution n1 = n1_branch(setup(Th).first, steps);
        const OptimalPhase ph = lost ? merged_phase(n1) : compare_branches(current, n1);
        if (ph.winner == Winner::Merged) scan.merged = true;
        scan.phases.push_back(ph);
    }

    // A jump is a switch of winner with a step in chi_opt much larger than
    // the neighbouring steps. The equator point is excluded: there theta is
    // frozen and the non-winding solution is not the limit of the family.
    const std::size_t n = scan.phases.size();
    auto step_at = [&](std::size_t i) { return std::abs(scan.phases[i + 1].chi_opt - scan.phases[i].chi_opt); };
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double d = step_at(i);
        double local = 0.0;
        if (i > 1) local = std::max(local, step_at(i - 1));
        if (i + 2 < n) local = std::max(local, step_at(i + 1));
        const Winner a = scan.phases[i].winner, b = scan.phases[i + 1].winner;
        const bool switched = a != b && a != Winner::Degenerate && b != Winner::Degenerate;
        if (switched && d > jump_factor * local && d > 1e-3) {
            scan.jumps.push_back(0.5 * (scan.Theta[i] + scan.Theta[i + 1]));
        }
    }
    return scan;
}

ThetaCResult find_Theta_C(const std::vector<double>& taus, int n_theta, const SolverOptions& options) {
    ThetaCResult out;
    out.Theta_C = 0.0;
    for (double tau : taus) {
        out.scans.push_back(scan_theta_jump(tau, n_theta, 0.05, 10.0, options));
        for (double j : out.scans.back().jumps) out.Theta_C = std::max(out.Theta_C, j);
    }
    return out;
}

}  // namespace qtrajgeom
