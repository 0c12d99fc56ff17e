#include "endodyn/engine.hpp"

#include "endodyn/errors.hpp"
#include "endodyn/parallel.hpp"
#include "endodyn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace endodyn {

namespace {

void accumulate_flows(std::vector<double>& acc, const StochasticMatrix& w) {
    const int m = w.dim();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            acc[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                static_cast<std::size_t>(j)] += w(i, j) + w(j, i);
        }
    }
}

std::string resample_label(long step, int sample) {
    return "resample/" + std::to_string(step) + "/" + std::to_string(sample);
}

Trajectory run_loop(std::unique_ptr<ProcessModel> model, StateVector x, RandomStream rng,
                    long start_step, long steps, std::vector<double> flow_acc,
                    const SimulateOptions& opts) {
    const int m = model->dim();
    Trajectory traj;
    traj.m = m;
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    traj.states.push_back(x);
    const bool retain = m <= opts.retain_threshold;
    if (retain) traj.matrices.reserve(static_cast<std::size_t>(steps));
    if (flow_acc.empty()) {
        flow_acc.assign(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    }

    auto want_snapshot = [&opts](long k) {
        return std::binary_search(opts.snapshot_steps.begin(), opts.snapshot_steps.end(), k);
    };
    if (want_snapshot(start_step)) {
        traj.snapshots.emplace_back(start_step, x, model->clone(), rng, flow_acc);
    }

    const long mid = steps / 2;
    if (mid == 0) traj.flow_accumulator_mid = flow_acc;
    for (long t = 0; t < steps; ++t) {
        StochasticMatrix w = model->sample_next(x, rng);
        x = endodyn::apply(w, x);
        accumulate_flows(flow_acc, w);
        traj.states.push_back(x);
        if (retain) traj.matrices.push_back(std::move(w));
        if (t + 1 == mid) traj.flow_accumulator_mid = flow_acc;
        const long k = start_step + t + 1;
        if (want_snapshot(k)) {
            traj.snapshots.emplace_back(k, x, model->clone(), rng, flow_acc);
        }
    }
    traj.flow_accumulator = std::move(flow_acc);
    return traj;
}

}  // namespace

Snapshot make_snapshot(long step, StateVector state, const ProcessModel& model,
                       const SeedSpec& seeds, const std::string& stream_label) {
    ensure_finite(state);
    if (state.size() != static_cast<std::size_t>(model.dim())) {
        throw DimensionMismatch("make_snapshot: state length vs model dim");
    }
    const int m = model.dim();
    return Snapshot(step, std::move(state), model.clone(), seeds.child_stream(stream_label),
                    std::vector<double>(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0));
}

Trajectory simulate(const ProcessModel& model, const StateVector& x0, long steps,
                    const SeedSpec& seeds, const SimulateOptions& opts) {
    if (steps < 1) throw InvalidArgument("simulate: steps must be >= 1");
    ensure_finite(x0);
    if (x0.size() != static_cast<std::size_t>(model.dim())) {
        throw DimensionMismatch("simulate: x0 length vs model dim");
    }
    SimulateOptions sorted_opts = opts;
    std::sort(sorted_opts.snapshot_steps.begin(), sorted_opts.snapshot_steps.end());
    return run_loop(model.clone(), x0, seeds.child_stream(opts.stream_label), 0, steps, {},
                    sorted_opts);
}

Trajectory simulate_from(const Snapshot& snap, long steps, const SimulateOptions& opts) {
    if (steps < 1) throw InvalidArgument("simulate_from: steps must be >= 1");
    SimulateOptions sorted_opts = opts;
    std::sort(sorted_opts.snapshot_steps.begin(), sorted_opts.snapshot_steps.end());
    return run_loop(snap.model->clone(), snap.state, snap.rng, snap.step, steps,
                    snap.flow_accumulator, sorted_opts);
}

std::vector<StochasticMatrix> resample_next(const Snapshot& snap, int n_samples,
                                            const SeedSpec& seeds) {
    if (n_samples < 1) throw InvalidArgument("resample_next: n_samples must be >= 1");
    std::vector<StochasticMatrix> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        auto model = snap.model->clone();
        RandomStream rng = seeds.child_stream(resample_label(snap.step, s));
        out.push_back(model->sample_next(snap.state, rng));
    }
    return out;
}

void for_each_resample(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                       const std::function<void(int, const StochasticMatrix&)>& fn) {
    if (n_samples < 1) throw InvalidArgument("for_each_resample: n_samples must be >= 1");
    struct Empty {};
    run_chunked<Empty>(
        n_samples, 256,
        [&](long begin, long end, Empty&) {
            for (long s = begin; s < end; ++s) {
                auto model = snap.model->clone();
                RandomStream rng = seeds.child_stream(resample_label(snap.step, static_cast<int>(s)));
                const StochasticMatrix w = model->sample_next(snap.state, rng);
                fn(static_cast<int>(s), w);
            }
        },
        [](Empty&, const Empty&) {});
}

StochasticMatrix resample_one(const Snapshot& snap, int sample_index, const SeedSpec& seeds) {
    auto model = snap.model->clone();
    RandomStream rng = seeds.child_stream(resample_label(snap.step, sample_index));
    return model->sample_next(snap.state, rng);
}

MeanEstimate conditional_mean(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                              const std::function<double(const StochasticMatrix&)>& f) {
    const RunningMoments acc = run_chunked<RunningMoments>(
        n_samples, 256,
        [&](long begin, long end, RunningMoments& a) {
            for (long s = begin; s < end; ++s) {
                auto model = snap.model->clone();
                RandomStream rng = seeds.child_stream(resample_label(snap.step, static_cast<int>(s)));
                a.add(f(model->sample_next(snap.state, rng)));
            }
        },
        [](RunningMoments& total, const RunningMoments& part) { total.merge(part); });

    MeanEstimate est;
    est.n = n_samples;
    est.mean = acc.mean;
    est.se = acc.se();
    return est;
}

}  // namespace endodyn
