#pragma once

#include "endodyn/linalg.hpp"
#include "endodyn/models.hpp"
#include "endodyn/rng.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace endodyn {

// Frozen copy of the engine at step k: the operational stand-in for the
// history up to k. Conditional expectations given that history are realized
// by restoring the snapshot and resampling the next transition.
struct Snapshot {
    long step = 0;
    StateVector state;
    std::unique_ptr<ProcessModel> model;
    RandomStream rng;  // mainline stream position, for exact replay
    std::vector<double> flow_accumulator;  // m*m, symmetric

    Snapshot(long step, StateVector state, std::unique_ptr<ProcessModel> model, RandomStream rng,
             std::vector<double> flow_acc)
        : step(step),
          state(std::move(state)),
          model(std::move(model)),
          rng(rng),
          flow_accumulator(std::move(flow_acc)) {}

    Snapshot clone() const {
        return Snapshot(step, state, model->clone(), rng, flow_accumulator);
    }

    int dim() const { return model->dim(); }
};

// Convenience factory for probe snapshots constructed outside a simulation
// (e.g. at an injected consensus state).
Snapshot make_snapshot(long step, StateVector state, const ProcessModel& model,
                       const SeedSpec& seeds, const std::string& stream_label = "probe");

struct SimulateOptions {
    // Keep the per-step matrices when m <= retain_threshold.
    int retain_threshold = 64;
    // Steps (ascending) at which to freeze a snapshot; step 0 allowed.
    std::vector<long> snapshot_steps;
    std::string stream_label = "traj/0";
};

struct Trajectory {
    int m = 0;
    std::vector<StateVector> states;         // x(0..K)
    std::vector<StochasticMatrix> matrices;  // W(1..K) when retained
    std::vector<Snapshot> snapshots;
    std::vector<double> flow_accumulator;      // sum over all steps of W_ij + W_ji
    std::vector<double> flow_accumulator_mid;  // the same sum frozen at the half point

    long steps() const { return static_cast<long>(states.size()) - 1; }
    const StateVector& final_state() const { return states.back(); }
};

// K applications of sample_next + apply from x(0) = x0. The caller's model is
// cloned, so the same prototype can seed many runs.
Trajectory simulate(const ProcessModel& model, const StateVector& x0, long steps,
                    const SeedSpec& seeds, const SimulateOptions& opts = {});

// Continue the dynamics from a snapshot using its stored stream position;
// replaying a snapshot taken at step k reproduces the original steps k+1..K
// bit-for-bit.
Trajectory simulate_from(const Snapshot& snap, long steps, const SimulateOptions& opts = {});

// N independent draws of W(k+1) given the snapshot's history, each from a
// fresh restore with stream "resample/<k>/<sample>". The snapshot and its
// mainline evolution are untouched.
std::vector<StochasticMatrix> resample_next(const Snapshot& snap, int n_samples,
                                            const SeedSpec& seeds);

// Streaming variant: fn(sample_index, W) over the same draws as resample_next,
// chunked across workers; fn must be safe to call concurrently for distinct
// indices.
void for_each_resample(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                       const std::function<void(int, const StochasticMatrix&)>& fn);

// Single draw with index `sample_index`, identical to the corresponding
// element of resample_next. Lets callers run their own chunked accumulation.
StochasticMatrix resample_one(const Snapshot& snap, int sample_index, const SeedSpec& seeds);

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
    int n = 0;
};

// Monte-Carlo conditional mean of f(W(k+1)) given the snapshot's history.
MeanEstimate conditional_mean(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                              const std::function<double(const StochasticMatrix&)>& f);

}  // namespace endodyn
