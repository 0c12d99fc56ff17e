#include "endodyn/engine.hpp"

#include "endodyn/diagnostics.hpp"
#include "endodyn/errors.hpp"
#include "endodyn/models.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

using namespace endodyn;

namespace {

HkAsyncModel uniform_async(int m, double epsilon) {
    AsyncHkParams p;
    p.base = {m, epsilon};
    p.pick_probabilities.assign(static_cast<std::size_t>(m), 1.0 / m);
    return HkAsyncModel(p);
}

}  // namespace

TEST_CASE("simulate: two-cluster fixed point of the synchronous dynamics") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{1};
    const Trajectory traj = simulate(model, {0.0, 0.4, 1.0}, 50, seeds);
    REQUIRE(traj.states.size() == 51);
    // One step reaches the fixed point (0.2, 0.2, 1.0); it must then hold.
    CHECK(traj.final_state() == StateVector{0.2, 0.2, 1.0});
    CHECK(traj.states[1] == StateVector{0.2, 0.2, 1.0});
}

TEST_CASE("simulate: consensus states are invariant for every model") {
    const SeedSpec seeds{2};
    const StateVector c(4, 1.25);

    const HkSyncModel sync({4, 0.3});
    CHECK(simulate(sync, c, 20, seeds).final_state() == c);

    GossipParams gp;
    gp.m = 4;
    gp.epsilon = 0.3;
    gp.gamma_lower = 0.2;
    gp.gamma_upper = 0.8;
    gp.gamma_sampler = ScalarSampler::uniform(0.2, 0.8);
    const GossipModel gossip(gp);
    CHECK(simulate(gossip, c, 20, seeds).final_state() == c);
}

TEST_CASE("simulate: one step equals manual sample + apply") {
    const auto model = uniform_async(4, 0.5);
    const SeedSpec seeds{3};
    const StateVector x0 = {0.0, 0.2, 0.4, 0.9};

    const Trajectory traj = simulate(model, x0, 1, seeds, {.stream_label = "traj/0"});

    auto manual = model.clone();
    RandomStream rng = seeds.child_stream("traj/0");
    const StochasticMatrix w = manual->sample_next(x0, rng);
    CHECK(traj.states[1] == endodyn::apply(w, x0));
    REQUIRE(traj.matrices.size() == 1);
    CHECK(traj.matrices[0] == w);
}

TEST_CASE("simulate rejects bad arguments") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{4};
    CHECK_THROWS_AS(simulate(model, {0, 0, 0}, 0, seeds), InvalidArgument);
    CHECK_THROWS_AS(simulate(model, {0, 0}, 5, seeds), DimensionMismatch);
    CHECK_THROWS_AS(simulate(model, {0, std::nan(""), 0}, 5, seeds), NonFinite);
}

TEST_CASE("trajectory invariants: recomposition and flow accumulator") {
    const auto model = uniform_async(5, 0.6);
    const SeedSpec seeds{5};
    StateVector x0 = {0.0, 0.2, 0.5, 0.8, 1.0};
    const Trajectory traj = simulate(model, x0, 200, seeds);

    REQUIRE(traj.matrices.size() == 200);
    for (std::size_t k = 0; k < traj.matrices.size(); ++k) {
        const StateVector expect = endodyn::apply(traj.matrices[k], traj.states[k]);
        for (int i = 0; i < traj.m; ++i) {
            CHECK(std::abs(expect[static_cast<std::size_t>(i)] -
                           traj.states[k + 1][static_cast<std::size_t>(i)]) <= 1e-12);
        }
    }

    // Symmetric and equal to the matrix-sum definition.
    std::vector<double> manual(static_cast<std::size_t>(traj.m) * static_cast<std::size_t>(traj.m), 0.0);
    for (const auto& w : traj.matrices) {
        for (int i = 0; i < traj.m; ++i) {
            for (int j = 0; j < traj.m; ++j) {
                manual[static_cast<std::size_t>(i) * static_cast<std::size_t>(traj.m) +
                       static_cast<std::size_t>(j)] += w(i, j) + w(j, i);
            }
        }
    }
    for (std::size_t i = 0; i < manual.size(); ++i) {
        CHECK(traj.flow_accumulator[i] == doctest::Approx(manual[i]).epsilon(1e-13));
    }
    for (int i = 0; i < traj.m; ++i) {
        for (int j = 0; j < traj.m; ++j) {
            CHECK(traj.flow_accumulator[static_cast<std::size_t>(i) * static_cast<std::size_t>(traj.m) +
                                        static_cast<std::size_t>(j)] ==
                  traj.flow_accumulator[static_cast<std::size_t>(j) * static_cast<std::size_t>(traj.m) +
                                        static_cast<std::size_t>(i)]);
        }
    }
}

TEST_CASE("retain_threshold drops matrices but keeps states and flows") {
    const auto model = uniform_async(5, 0.6);
    const SeedSpec seeds{6};
    StateVector x0 = {0.0, 0.2, 0.5, 0.8, 1.0};
    SimulateOptions so;
    so.retain_threshold = 4;  // below m: matrices dropped
    const Trajectory traj = simulate(model, x0, 50, seeds, so);
    CHECK(traj.matrices.empty());
    CHECK(traj.states.size() == 51);
    CHECK_FALSE(traj.flow_accumulator.empty());
}

TEST_CASE("two runs with the same seed are bit-identical") {
    const auto model = uniform_async(6, 0.4);
    const SeedSpec seeds{7};
    StateVector x0 = {0.0, 0.1, 0.3, 0.6, 0.8, 1.0};
    const Trajectory a = simulate(model, x0, 500, seeds);
    const Trajectory b = simulate(model, x0, 500, seeds);
    CHECK(a.states == b.states);
    CHECK(a.flow_accumulator == b.flow_accumulator);
}

TEST_CASE("snapshot replay reproduces the mainline bit-for-bit") {
    const auto model = uniform_async(5, 0.5);
    const SeedSpec seeds{8};
    StateVector x0 = {0.0, 0.25, 0.5, 0.75, 1.0};
    SimulateOptions so;
    so.snapshot_steps = {60};
    const Trajectory full = simulate(model, x0, 100, seeds, so);
    REQUIRE(full.snapshots.size() == 1);
    const Snapshot& snap = full.snapshots[0];
    CHECK(snap.step == 60);
    CHECK(snap.state == full.states[60]);

    const Trajectory tail = simulate_from(snap, 40);
    REQUIRE(tail.states.size() == 41);
    for (long k = 0; k <= 40; ++k) {
        CHECK(tail.states[static_cast<std::size_t>(k)] == full.states[static_cast<std::size_t>(60 + k)]);
    }
}

TEST_CASE("resampling is side-effect free for the mainline") {
    const auto model = uniform_async(5, 0.5);
    const SeedSpec seeds{9};
    StateVector x0 = {0.0, 0.25, 0.5, 0.75, 1.0};
    SimulateOptions so;
    so.snapshot_steps = {30};
    const Trajectory full = simulate(model, x0, 60, seeds, so);
    const Snapshot& snap = full.snapshots[0];

    const auto draws = resample_next(snap, 200, seeds);
    CHECK(draws.size() == 200);

    const Trajectory tail = simulate_from(snap, 30);
    CHECK(tail.final_state() == full.final_state());
}

TEST_CASE("resample_next: deterministic model gives identical draws") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{10};
    const Snapshot snap = make_snapshot(0, {0.0, 0.4, 1.0}, model, seeds);
    const auto draws = resample_next(snap, 50, seeds);
    const StochasticMatrix expect = hk_sync_matrix({0.0, 0.4, 1.0}, {3, 0.5});
    for (const auto& w : draws) CHECK(w == expect);

    // N=1 equals a single restored draw.
    const auto one = resample_next(snap, 1, seeds);
    CHECK(one[0] == expect);
    CHECK(one[0] == resample_one(snap, 0, seeds));
}

TEST_CASE("resample_next pick frequencies match the configured law") {
    const auto model = uniform_async(2, 1.0);
    const SeedSpec seeds{11};
    const Snapshot snap = make_snapshot(5, {0.0, 0.5}, model, seeds);
    const int n = 10000;
    const auto draws = resample_next(snap, n, seeds);
    long picked0 = 0;
    for (const auto& w : draws) {
        if (w(0, 0) == 0.5) ++picked0;
    }
    const double se = std::sqrt(0.25 / n);
    CHECK(std::abs(static_cast<double>(picked0) / n - 0.5) <= 3 * se);
}

TEST_CASE("conditional_mean: constant and deterministic functionals") {
    const SeedSpec seeds{12};
    const HkSyncModel sync({3, 0.5});
    const Snapshot snap = make_snapshot(0, {0.0, 0.4, 1.0}, sync, seeds);

    const MeanEstimate one = conditional_mean(snap, 500, seeds, [](const StochasticMatrix&) {
        return 1.0;
    });
    CHECK(one.mean == 1.0);
    CHECK(one.se == 0.0);

    const FixedMatrixModel id(StochasticMatrix::identity(3));
    const Snapshot id_snap = make_snapshot(0, {1.0, 2.0, 3.0}, id, seeds);
    const MeanEstimate diag = conditional_mean(id_snap, 500, seeds, [](const StochasticMatrix& w) {
        return w(1, 1);
    });
    CHECK(diag.mean == 1.0);
    CHECK(diag.se == 0.0);
}

TEST_CASE("conditional_mean matches exhaustive enumeration for async picks") {
    const int m = 3;
    const double eps = 0.5;
    const StateVector x = {0.0, 0.4, 1.0};
    const auto model = uniform_async(m, eps);
    const SeedSpec seeds{13};
    const Snapshot snap = make_snapshot(2, x, model, seeds);

    const SubsetMask s = SubsetMask::from_bits(m, 0b011);
    const SubsetMask sbar = s.complement();

    // Exact conditional mean: three equiprobable picks, each a deterministic
    // matrix.
    double exact = 0.0;
    for (int pick = 0; pick < m; ++pick) {
        exact += flow(hk_single_update_matrix(x, eps, pick), sbar, s) / m;
    }

    const MeanEstimate est = conditional_mean(snap, 20000, seeds, [&](const StochasticMatrix& w) {
        return flow(w, sbar, s);
    });
    CHECK(std::abs(est.mean - exact) <= 3 * est.se + 1e-12);
}

TEST_CASE("results do not depend on the worker count") {
    const auto model = uniform_async(5, 0.5);
    const SeedSpec seeds{15};
    const Snapshot snap = make_snapshot(3, {0.0, 0.2, 0.5, 0.8, 1.0}, model, seeds);
    auto f = [](const StochasticMatrix& w) { return w(0, 0) + 0.3 * w(1, 2); };

    setenv("ENDODYN_THREADS", "1", 1);
    const MeanEstimate serial = conditional_mean(snap, 5000, seeds, f);
    setenv("ENDODYN_THREADS", "7", 1);
    const MeanEstimate parallel = conditional_mean(snap, 5000, seeds, f);
    unsetenv("ENDODYN_THREADS");

    CHECK(serial.mean == parallel.mean);
    CHECK(serial.se == parallel.se);
}

TEST_CASE("conditional_mean standard error shrinks like 1/sqrt(N)") {
    const auto model = uniform_async(3, 0.5);
    const SeedSpec seeds{14};
    const Snapshot snap = make_snapshot(0, {0.0, 0.4, 1.0}, model, seeds);
    auto f = [](const StochasticMatrix& w) { return w(0, 0); };

    const MeanEstimate e2 = conditional_mean(snap, 100, seeds, f);
    const MeanEstimate e4 = conditional_mean(snap, 10000, seeds, f);
    REQUIRE(e2.se > 0.0);
    REQUIRE(e4.se > 0.0);
    const double slope = (std::log(e4.se) - std::log(e2.se)) / (std::log(10000.0) - std::log(100.0));
    CHECK(slope < -0.5 / 1.5);
    CHECK(slope > -0.5 * 1.5);
}
