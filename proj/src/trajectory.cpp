#include "qtrajgeom/trajectory.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "qtrajgeom/constants.hpp"
#include "qtrajgeom/error.hpp"

namespace qtrajgeom {

namespace {

constexpr double kPoleMargin = 1e-3;

struct Angles {
    double theta, phi, chi;
};

bool near_pole(double theta) { return std::min(theta, kPi - theta) < kPoleMargin; }

// Readout rule evaluated on the current state at time t.
using ReadoutRule = std::function<double(const MeasurementAxis& axis, double theta, double phi,
                                         double t)>;

Angles angle_rhs(const Angles& y, double t, const MeasurementProtocol& p, const ReadoutRule& rule) {
    const MeasurementAxis axis = p.axis_at(t);
    const double d = y.phi - axis.Phi;
    const double sT = std::sin(axis.Theta), cT = std::cos(axis.Theta);
    const double s = std::sin(y.theta), c = std::cos(y.theta);
    const double f = sT * std::sin(d) / s;
    const double g = c * sT * std::cos(d) - s * cT;
    const double h = std::tan(0.5 * y.theta) * sT * std::sin(d);
    const double kr = rule(axis, y.theta, y.phi, t) / p.tau;
    return {kr * g, -kr * f, 0.5 * kr * h};
}

bool angle_step(Angles& y, double t, double h, const MeasurementProtocol& p,
                const ReadoutRule& rule) {
    auto shifted = [&](const Angles& dy, double w) {
        return Angles{y.theta + w * dy.theta, y.phi + w * dy.phi, y.chi + w * dy.chi};
    };
    auto inside = [](const Angles& z) { return z.theta > 0.0 && z.theta < kPi; };
    const Angles k1 = angle_rhs(y, t, p, rule);
    const Angles y2 = shifted(k1, 0.5 * h);
    if (!inside(y2)) return false;
    const Angles k2 = angle_rhs(y2, t + 0.5 * h, p, rule);
    const Angles y3 = shifted(k2, 0.5 * h);
    if (!inside(y3)) return false;
    const Angles k3 = angle_rhs(y3, t + 0.5 * h, p, rule);
    const Angles y4 = shifted(k3, h);
    if (!inside(y4)) return false;
    const Angles k4 = angle_rhs(y4, t + h, p, rule);
    Angles out;
    out.theta = y.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
    out.phi = y.phi + h / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi);
    out.chi = y.chi + h / 6.0 * (k1.chi + 2.0 * k2.chi + 2.0 * k3.chi + k4.chi);
    if (!inside(out) || !std::isfinite(out.phi) || !std::isfinite(out.chi)) return false;
    y = out;
    return true;
}

Op2 pauli_along(const MeasurementAxis& axis) {
    const Vec3 n = axis.unit();
    Op2 s;
    s << n.z(), cplx(n.x(), -n.y()), cplx(n.x(), n.y()), -n.z();
    return s;
}

// d psi / dt = (r / 2 tau) (sigma.n - a) psi, which is the continuum limit of
// the normalized Kraus update and is regular at the poles.
Spinor spinor_rhs(const Spinor& psi, double t, const MeasurementProtocol& p,
                  const ReadoutRule& rule) {
    const MeasurementAxis axis = p.axis_at(t);
    const Op2 sn = pauli_along(axis);
    const Spinor s_psi = sn * psi;
    const double a = psi.dot(s_psi).real() / psi.squaredNorm();
    const double m0 = std::abs(psi(0)), m1 = std::abs(psi(1));
    const double theta = 2.0 * std::atan2(m1, m0);
    const double phi = std::arg(psi(1)) - std::arg(psi(0));
    const double r = rule(axis, theta, phi, t);
    return (r / (2.0 * p.tau)) * (s_psi - a * psi);
}

BlochState spinor_step(const BlochState& state, double t, double h, const MeasurementProtocol& p,
                       const ReadoutRule& rule) {
    const Spinor psi = to_spinor(state);
    const Spinor k1 = spinor_rhs(psi, t, p, rule);
    const Spinor k2 = spinor_rhs(psi + 0.5 * h * k1, t + 0.5 * h, p, rule);
    const Spinor k3 = spinor_rhs(psi + 0.5 * h * k2, t + 0.5 * h, p, rule);
    const Spinor k4 = spinor_rhs(psi + h * k3, t + h, p, rule);
    const Spinor out = psi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return from_spinor(out.normalized(), state);
}

double gaussian_weight(const BlochState& state, double r, const MeasurementAxis& axis, double dt,
                       double tau) {
    return (kraus_operator(r, axis, dt, tau) * to_spinor(state)).squaredNorm();
}

TrajectoryRecord start_record(const MeasurementProtocol& protocol, const BlochState& init) {
    protocol.validate();
    TrajectoryRecord rec;
    rec.times.reserve(protocol.N + 1);
    rec.states.reserve(protocol.N + 1);
    rec.readouts.reserve(protocol.N);
    rec.step_log_weights.reserve(protocol.N);
    rec.times.push_back(0.0);
    rec.states.push_back(init);
    return rec;
}

void finish_record(TrajectoryRecord& rec) {
    rec.log_weight = 0.0;
    for (double w : rec.step_log_weights) rec.log_weight += w;
    rec.phi_unwrapped_final = rec.states.back().phi;
}

TrajectoryRecord integrate_ode(const MeasurementProtocol& protocol, const BlochState& init,
                               const ReadoutRule& rule) {
    if (!std::holds_alternative<GaussianModel>(protocol.model)) {
        throw Error(ErrorCode::InvalidArgument, "ODE stepping needs the Gaussian model");
    }
    TrajectoryRecord rec = start_record(protocol, init);
    const double dt = protocol.dt();
    BlochState s = init;
    for (int k = 0; k < protocol.N; ++k) {
        const double t = protocol.time(k);
        const MeasurementAxis axis = protocol.axis_at(t);
        const double r = rule(axis, s.theta, s.phi, t);
        rec.readouts.push_back(r);
        rec.step_log_weights.push_back(std::log(gaussian_weight(s, r, axis, dt, protocol.tau)));

        Angles y{s.theta, s.phi, s.chi};
        if (!near_pole(s.theta) && angle_step(y, t, dt, protocol, rule)) {
            s = {y.theta, y.phi, y.chi};
        } else {
            s = spinor_step(s, t, dt, protocol, rule);
        }
        rec.times.push_back(protocol.time(k + 1));
        rec.states.push_back(s);
    }
    finish_record(rec);
    return rec;
}

}  // namespace

Rng substream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

TrajectoryRecord propagate_sampled(const MeasurementProtocol& protocol, const BlochState& init,
                                   Rng& rng) {
    TrajectoryRecord rec = start_record(protocol, init);
    const double dt = protocol.dt();
    BlochState s = init;
    for (int k = 0; k < protocol.N; ++k) {
        const MeasurementAxis axis = protocol.axis_at(protocol.time(k));
        StepOutcome out;
        if (const auto* null = std::get_if<NullTypeModel>(&protocol.model)) {
            const int j = sample_null_outcome(s, axis, null->c, dt, protocol.T, rng);
            out = apply_null_kraus(s, j, axis, null->c, dt, protocol.T);
        } else {
            const double r = sample_readout(s, axis, dt, protocol.tau, rng);
            out = apply_kraus(s, r, axis, dt, protocol.tau);
        }
        rec.readouts.push_back(out.readout);
        rec.step_log_weights.push_back(std::log(out.weight));
        s = out.next_state;
        rec.times.push_back(protocol.time(k + 1));
        rec.states.push_back(s);
    }
    finish_record(rec);
    return rec;
}

TrajectoryRecord propagate_with_record(const MeasurementProtocol& protocol, const BlochState& init,
                                       const ReadoutRecord& record, Stepping stepping) {
    if (!record) throw Error(ErrorCode::InvalidArgument, "empty readout record");
    if (stepping == Stepping::Ode) {
        return integrate_ode(protocol, init,
                             [&](const MeasurementAxis&, double, double, double t) {
                                 return record(t);
                             });
    }
    TrajectoryRecord rec = start_record(protocol, init);
    const double dt = protocol.dt();
    BlochState s = init;
    for (int k = 0; k < protocol.N; ++k) {
        const double t = protocol.time(k);
        const MeasurementAxis axis = protocol.axis_at(t);
        StepOutcome out;
        if (const auto* null = std::get_if<NullTypeModel>(&protocol.model)) {
            out = apply_null_kraus(s, record(t) > 0.5 ? 1 : 0, axis, null->c, dt, protocol.T);
        } else {
            out = apply_kraus(s, record(t), axis, dt, protocol.tau);
        }
        rec.readouts.push_back(out.readout);
        rec.step_log_weights.push_back(std::log(out.weight));
        s = out.next_state;
        rec.times.push_back(protocol.time(k + 1));
        rec.states.push_back(s);
    }
    finish_record(rec);
    return rec;
}

TrajectoryRecord propagate_greedy(const MeasurementProtocol& protocol, const BlochState& init) {
    return integrate_ode(protocol, init,
                         [](const MeasurementAxis& axis, double theta, double phi, double) {
                             return mean_readout(axis.Theta, axis.Phi, theta, phi);
                         });
}

Histogram make_histogram(const std::vector<double>& values, double origin, double bin_width) {
    if (!(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be positive");
    Histogram hist;
    hist.bin_width = bin_width;
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    std::vector<long> bins;
    bins.reserve(values.size());
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        const long b = static_cast<long>(std::floor((v - origin) / bin_width));
        bins.push_back(b);
        lo = std::min(lo, b);
        hi = std::max(hi, b);
    }
    if (bins.empty()) {
        hist.origin = origin;
        return hist;
    }
    hist.origin = origin + lo * bin_width;
    hist.counts.assign(static_cast<std::size_t>(hi - lo + 1), 0);
    for (long b : bins) ++hist.counts[static_cast<std::size_t>(b - lo)];
    return hist;
}

EnsembleSummary run_ensemble(const MeasurementProtocol& protocol, const BlochState& init,
                             std::size_t n_traj, std::uint64_t seed,
                             const EnsembleOptions& options) {
    if (n_traj < 1) throw Error(ErrorCode::InvalidArgument, "n_traj must be at least 1");
    protocol.validate();

    EnsembleSummary summary;
    summary.n_traj = n_traj;
    summary.seed = seed;
    summary.init = init;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    summary.phi_final.assign(n_traj, nan);
    summary.chi_final.assign(n_traj, nan);
    summary.log_weight.assign(n_traj, nan);
    if (options.keep_records) summary.records.resize(n_traj);
    std::vector<char> ok(n_traj, 0);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n_traj; i = next++) {
            try {
                Rng rng = substream(seed, i);
                TrajectoryRecord rec = propagate_sampled(protocol, init, rng);
                summary.phi_final[i] = rec.phi_unwrapped_final;
                summary.chi_final[i] = rec.states.back().chi;
                summary.log_weight[i] = rec.log_weight;
                if (options.keep_records) summary.records[i] = std::move(rec);
                ok[i] = 1;
            } catch (const Error&) {
                ok[i] = 0;
            }
        }
    };
    const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(n_traj)));
    std::vector<std::thread> pool;
    for (int w = 1; w < threads; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    for (std::size_t i = 0; i < n_traj; ++i) {
        if (!ok[i]) summary.failed.push_back(i);
    }
    summary.histogram =
        make_histogram(summary.phi_final, init.phi - 0.5 * options.bin_width, options.bin_width);
    return summary;
}

SelfClosingStats self_closing_stats(const EnsembleSummary& summary, double bin_width, double phi_e,
                                    int n, int resamples, std::uint64_t bootstrap_seed) {
    if (!(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be positive");
    std::vector<int> label;  // 1 winding, 0 non-winding, -1 neither
    for (double phi : summary.phi_final) {
        if (!std::isfinite(phi)) continue;
        if (std::abs(phi - (phi_e + kTwoPi * n)) < 0.5 * bin_width) {
            label.push_back(1);
        } else if (std::abs(phi - phi_e) < 0.5 * bin_width) {
            label.push_back(0);
        } else {
            label.push_back(-1);
        }
    }
    SelfClosingStats st;
    st.n_used = label.size();
    st.count_winding = static_cast<std::size_t>(std::count(label.begin(), label.end(), 1));
    st.count_nonwinding = static_cast<std::size_t>(std::count(label.begin(), label.end(), 0));
    if (st.n_used == 0) throw Error(ErrorCode::EmptyBin, "no completed trajectories");
    const double n_used = static_cast<double>(st.n_used);
    st.P_winding = st.count_winding / n_used;
    st.P_nonwinding = st.count_nonwinding / n_used;
    if (st.count_winding == 0 || st.count_nonwinding == 0) {
        std::ostringstream msg;
        msg << (st.count_winding == 0 ? "winding" : "non-winding")
            << " bin is empty; 95% upper bound on its fraction " << 3.0 / n_used
            << ", other fraction " << std::max(st.P_winding, st.P_nonwinding);
        throw Error(ErrorCode::EmptyBin, msg.str());
    }
    st.R_empirical = st.P_winding / st.P_nonwinding;

    Rng rng(bootstrap_seed);
    std::uniform_int_distribution<std::size_t> pick(0, label.size() - 1);
    std::vector<double> ratios;
    ratios.reserve(resamples);
    for (int b = 0; b < resamples; ++b) {
        std::size_t w = 0, nw = 0;
        for (std::size_t i = 0; i < label.size(); ++i) {
            const int l = label[pick(rng)];
            w += l == 1;
            nw += l == 0;
        }
        ratios.push_back(nw == 0 ? std::numeric_limits<double>::infinity()
                                 : static_cast<double>(w) / static_cast<double>(nw));
    }
    std::sort(ratios.begin(), ratios.end());
    auto quantile = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * (ratios.size() - 1) + 0.5));
        return ratios[idx];
    };
    st.R_lo = quantile(0.025);
    st.R_hi = quantile(0.975);
    return st;
}

}  // namespace qtrajgeom
