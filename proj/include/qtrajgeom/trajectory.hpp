#pragma once

// Monitored trajectories: sampled Monte Carlo runs, trajectories driven by a
// prescribed or greedy readout record, and ensemble statistics.

#include <cstdint>
#include <functional>
#include <vector>

#include "qtrajgeom/bloch.hpp"

namespace qtrajgeom {

struct TrajectoryRecord {
    std::vector<double> times;       // N + 1 instants
    std::vector<BlochState> states;  // N + 1 states
    std::vector<double> readouts;    // N readouts, r_k taken at times[k]
    std::vector<double> step_log_weights;  // log P(r_k) per step
    double log_weight = 0.0;               // their sum
    double phi_unwrapped_final = 0.0;
    double geometric_phase = 0.0;    // filled by the geometry routines
};

// Independent generator for trajectory `index` of an ensemble with `seed`.
Rng substream(std::uint64_t seed, std::uint64_t index);

// N steps of readout sampling followed by the exact Kraus update, with the
// axis at Phi(t_k) during step k.
TrajectoryRecord propagate_sampled(const MeasurementProtocol& protocol, const BlochState& init,
                                   Rng& rng);

using ReadoutRecord = std::function<double(double t)>;

enum class Stepping {
    Ode,    // RK4 on the (theta, phi, chi) update equations
    Kraus,  // exact Kraus operator per step, r_k = r(t_k)
};

// Trajectory for a fixed readout record r(t). In Ode mode the state is
// integrated in spinor form while it is within 1e-3 of a pole, where the
// angular equations are singular. The weights are P(r_k) evaluated with the
// Gaussian Kraus operator at the start of each step.
TrajectoryRecord propagate_with_record(const MeasurementProtocol& protocol, const BlochState& init,
                                       const ReadoutRecord& record,
                                       Stepping stepping = Stepping::Ode);

// Greedy trajectory: r(t) = a(t) is substituted continuously into the RK4
// stages.
TrajectoryRecord propagate_greedy(const MeasurementProtocol& protocol, const BlochState& init);

struct Histogram {
    double origin = 0.0;  // left edge of bin 0
    double bin_width = 0.1;
    std::vector<std::size_t> counts;

    double centre(std::size_t bin) const { return origin + (bin + 0.5) * bin_width; }
};

struct EnsembleSummary {
    std::size_t n_traj = 0;
    std::uint64_t seed = 0;
    BlochState init;
    std::vector<double> phi_final;
    std::vector<double> chi_final;
    std::vector<double> log_weight;
    // Indices whose propagation threw; their entries above are NaN and they
    // are left out of the histogram.
    std::vector<std::size_t> failed;
    Histogram histogram;
    // Full records, kept only on request.
    std::vector<TrajectoryRecord> records;
};

struct EnsembleOptions {
    int threads = 1;
    double bin_width = 0.1;
    bool keep_records = false;
};

// Bins are centred on init.phi + k * bin_width. The result does not depend on
// the thread count.
EnsembleSummary run_ensemble(const MeasurementProtocol& protocol, const BlochState& init,
                             std::size_t n_traj, std::uint64_t seed,
                             const EnsembleOptions& options = {});

Histogram make_histogram(const std::vector<double>& values, double origin, double bin_width);

struct SelfClosingStats {
    std::size_t n_used = 0;
    std::size_t count_winding = 0;
    std::size_t count_nonwinding = 0;
    double P_winding = 0.0;
    double P_nonwinding = 0.0;
    double R_empirical = 0.0;
    // Percentile bootstrap 95% interval for R; resamples with an empty
    // non-winding bin count as +infinity.
    double R_lo = 0.0;
    double R_hi = 0.0;
};

// Fractions ending within bin_width / 2 of phi_e + 2 pi n (winding) and of
// phi_e (non-winding). Throws EmptyBin when either count is zero; the message
// carries the 95% upper bound 3 / n for the empty fraction.
SelfClosingStats self_closing_stats(const EnsembleSummary& summary, double bin_width, double phi_e,
                                    int n = 1, int resamples = 2000,
                                    std::uint64_t bootstrap_seed = 1);

}  // namespace qtrajgeom
