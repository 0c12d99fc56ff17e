#include "endodyn/diagnostics.hpp"

#include "endodyn/errors.hpp"
#include "endodyn/models.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace endodyn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

HkAsyncModel uniform_async(int m, double epsilon) {
    AsyncHkParams p;
    p.base = {m, epsilon};
    p.pick_probabilities.assign(static_cast<std::size_t>(m), 1.0 / m);
    return HkAsyncModel(p);
}

GossipModel small_gossip(int m, double epsilon) {
    GossipParams p;
    p.m = m;
    p.epsilon = epsilon;
    p.gamma_lower = 0.2;
    p.gamma_upper = 0.8;
    p.gamma_sampler = ScalarSampler::uniform(0.2, 0.8);
    return GossipModel(p);
}

const SubsetRecord& find_subset(const BalancednessReport& r, std::uint64_t bits) {
    for (const auto& rec : r.subsets) {
        if (rec.subset_bits == bits) return rec;
    }
    REQUIRE(false);
    return r.subsets.front();
}

}  // namespace

// ---------------------------------------------------------------------------
// Balancedness / sub-symmetry
// ---------------------------------------------------------------------------

TEST_CASE("balancedness on the deterministic symmetric model is exact") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{100};
    const Snapshot snap = make_snapshot(1, {0.0, 0.4, 1.0}, model, seeds);
    const BalancednessReport r = check_balancedness(snap, 200, seeds);

    CHECK(r.subsets.size() == 6);
    for (const auto& rec : r.subsets) {
        CHECK(rec.inflow.se == 0.0);
        CHECK(rec.outflow.se == 0.0);
        CHECK(rec.inflow.mean == rec.outflow.mean);
    }
    // Cluster {0,1} exchanges flow; singleton {2} is isolated (vacuous).
    CHECK(find_subset(r, 0b001).ratio == 1.0);
    CHECK(find_subset(r, 0b100).ratio == kInf);
    CHECK(r.alpha_hat == 1.0);
    CHECK(r.alpha_certified == 1.0);
    CHECK(r.verdict == "balanced");
}

TEST_CASE("balancedness on an identity-emitting model is vacuous") {
    const FixedMatrixModel model(StochasticMatrix::identity(3));
    const SeedSpec seeds{101};
    const Snapshot snap = make_snapshot(0, {1.0, 2.0, 3.0}, model, seeds);
    const BalancednessReport r = check_balancedness(snap, 200, seeds);
    for (const auto& rec : r.subsets) {
        CHECK(rec.inflow.mean == 0.0);
        CHECK(rec.outflow.mean == 0.0);
        CHECK(rec.ratio == kInf);
    }
    CHECK(r.alpha_hat == kInf);
    CHECK(r.verdict == "vacuous");
    CHECK(r.alpha_certified == 1.0);
}

TEST_CASE("balancedness on async HK matches exhaustive enumeration") {
    const int m = 3;
    const double eps = 0.5;
    const StateVector x = {0.0, 0.4, 1.0};
    const auto model = uniform_async(m, eps);
    const SeedSpec seeds{102};
    const Snapshot snap = make_snapshot(3, x, model, seeds);
    const BalancednessReport r = check_balancedness(snap, 20000, seeds);

    for (const auto& rec : r.subsets) {
        SubsetMask s = SubsetMask::from_bits(m, rec.subset_bits);
        const SubsetMask sbar = s.complement();
        double exact_in = 0.0, exact_out = 0.0;
        for (int pick = 0; pick < m; ++pick) {
            const StochasticMatrix w = hk_single_update_matrix(x, eps, pick);
            exact_in += flow(w, sbar, s) / m;
            exact_out += flow(w, s, sbar) / m;
        }
        CHECK(std::abs(rec.inflow.mean - exact_in) <= 3 * rec.inflow.se + 1e-12);
        CHECK(std::abs(rec.outflow.mean - exact_out) <= 3 * rec.outflow.se + 1e-12);
        // The declared lower bound p_lower/m for uniform picks.
        if (rec.ratio != kInf) {
            CHECK(rec.ratio >= 1.0 / 9.0 - 3 * rec.ratio_se);
        }
    }
    CHECK(r.verdict == "balanced");
    CHECK(r.alpha_certified > 0.0);
}

TEST_CASE("balancedness flags a deterministic one-way flow") {
    const FixedMatrixModel model(
        StochasticMatrix::validated({1.0, 0.0, 0.9, 0.1}, 2), /*claims_balanced=*/true);
    const SeedSpec seeds{103};
    const Snapshot snap = make_snapshot(0, {0.0, 1.0}, model, seeds);
    const BalancednessReport r = check_balancedness(snap, 200, seeds);
    CHECK(r.verdict == "violation-suspected");
    CHECK(r.alpha_hat == 0.0);
    CHECK(r.alpha_certified == 0.0);
}

TEST_CASE("balancedness guards its preconditions") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{104};
    const Snapshot snap = make_snapshot(0, {0, 0.4, 1.0}, model, seeds);
    CHECK_THROWS_AS(check_balancedness(snap, 50, seeds), InvalidArgument);
}

TEST_CASE("subsymmetry: deterministic symmetric, vacuous, and gossip cases") {
    const SeedSpec seeds{105};

    const HkSyncModel sync({3, 0.5});
    const Snapshot s1 = make_snapshot(0, {0.0, 0.4, 1.0}, sync, seeds);
    const SubsymmetryReport r1 = check_subsymmetry(s1, 500, seeds);
    CHECK(r1.eta_hat == 1.0);
    CHECK(r1.verdict == "sub-symmetric");

    const FixedMatrixModel id(StochasticMatrix::identity(3));
    const Snapshot s2 = make_snapshot(0, {1.0, 2.0, 3.0}, id, seeds);
    const SubsymmetryReport r2 = check_subsymmetry(s2, 500, seeds);
    CHECK(r2.eta_hat == kInf);
    CHECK(r2.verdict == "vacuous");

    const GossipModel gossip = small_gossip(2, 1.0);
    const Snapshot s3 = make_snapshot(0, {0.0, 0.5}, gossip, seeds);
    const SubsymmetryReport r3 = check_subsymmetry(s3, 20000, seeds);
    REQUIRE(r3.pairs.size() == 2);
    // Mutual neighbors, symmetric rule: the two directions are exchangeable.
    CHECK(r3.eta_hat > 0.8);
    CHECK(r3.eta_hat <= 1.0);
}

TEST_CASE("async HK satisfies the entrywise sub-symmetry bound p_lower/m") {
    const int m = 4;
    const auto model = uniform_async(m, 0.6);
    const SeedSpec seeds{106};
    const Snapshot snap = make_snapshot(0, {0.0, 0.3, 0.6, 1.4}, model, seeds);
    const SubsymmetryReport r = check_subsymmetry(snap, 20000, seeds);
    const double bound = (1.0 / m) / m;
    for (const auto& pair : r.pairs) {
        if (pair.ratio == kInf) continue;
        CHECK(pair.ratio >= bound - 3.0 * pair.ratio_se);
    }
}

// ---------------------------------------------------------------------------
// Weak reciprocity
// ---------------------------------------------------------------------------

TEST_CASE("predicted weak-reciprocity coefficient") {
    CHECK(predicted_weak_reciprocity_coefficient(1.0 / 3.0, 1.0, 3) ==
          doctest::Approx(1.0 / 36.0).epsilon(1e-15));
    CHECK_THROWS_AS(predicted_weak_reciprocity_coefficient(0.0, 1.0, 3), InvalidArgument);
    CHECK_THROWS_AS(predicted_weak_reciprocity_coefficient(0.5, 1.5, 3), InvalidArgument);
}

TEST_CASE("constant rule pair reduces to balancedness for that subset") {
    const int m = 3;
    const double eps = 0.5;
    const StateVector x = {0.0, 0.4, 1.0};
    const auto model = uniform_async(m, eps);
    const SeedSpec seeds{107};
    const Snapshot snap = make_snapshot(5, x, model, seeds);

    const SubsetMask s = SubsetMask::from_bits(m, 0b011);
    const auto rule = AdaptedSequenceRule::constant(s);
    const WeakReciprocityReport r =
        check_weak_reciprocity(snap, {{rule, rule}}, 20000, seeds, 1.0 / m, 1.0);

    double exact_in = 0.0, exact_out = 0.0;
    for (int pick = 0; pick < m; ++pick) {
        const StochasticMatrix w = hk_single_update_matrix(x, eps, pick);
        exact_in += flow(w, s.complement(), s) / m;
        exact_out += flow(w, s, s.complement()) / m;
    }
    REQUIRE(r.rules.size() == 1);
    CHECK(std::abs(r.rules[0].inflow.mean - exact_in) <= 3 * r.rules[0].inflow.se + 1e-12);
    CHECK(std::abs(r.rules[0].outflow.mean - exact_out) <= 3 * r.rules[0].outflow.se + 1e-12);
    CHECK_FALSE(r.rules[0].violated);
}

TEST_CASE("sorted-prefix rules match exhaustive enumeration on async HK") {
    const int m = 3;
    const double eps = 0.6;
    const StateVector x = {0.1, 0.45, 0.9};
    const auto model = uniform_async(m, eps);
    const SeedSpec seeds{108};
    const Snapshot snap = make_snapshot(7, x, model, seeds);

    const auto rule_pairs = default_rule_pairs(m);
    const WeakReciprocityReport r =
        check_weak_reciprocity(snap, rule_pairs, 20000, seeds, 1.0 / m, 0.5);

    REQUIRE(r.rules.size() == rule_pairs.size());
    for (std::size_t idx = 0; idx < rule_pairs.size(); ++idx) {
        const auto& [rule_k, rule_k1] = rule_pairs[idx];
        const SubsetMask s_k = rule_k.select(x);
        double exact_in = 0.0, exact_out = 0.0;
        for (int pick = 0; pick < m; ++pick) {
            const StochasticMatrix w = hk_single_update_matrix(x, eps, pick);
            const StateVector x_next = endodyn::apply(w, x);
            const SubsetMask s_k1 = rule_k1.select(x_next);
            exact_in += flow(w, s_k1.complement(), s_k) / m;
            exact_out += flow(w, s_k1, s_k.complement()) / m;
        }
        const RulePairRecord& rec = r.rules[idx];
        CHECK(std::abs(rec.inflow.mean - exact_in) <= 3 * rec.inflow.se + 1e-12);
        CHECK(std::abs(rec.outflow.mean - exact_out) <= 3 * rec.outflow.se + 1e-12);
        CHECK_FALSE(rec.violated);
    }
    CHECK(r.verdict == "weakly-reciprocal-consistent");
    CHECK(r.predicted_coefficient == doctest::Approx((1.0 / 3.0) * 0.5 / 12.0));
}

TEST_CASE("custom rules must keep their cardinality") {
    AdaptedSequenceRule bad;
    bad.kind = AdaptedSequenceRule::Kind::Custom;
    bad.ell = 2;
    bad.name = "broken";
    bad.custom = [](const StateVector& x) {
        SubsetMask s(static_cast<int>(x.size()));
        s.set(0);
        return s;  // cardinality 1, not 2
    };
    CHECK_THROWS_AS(bad.select({0.0, 0.5, 1.0}), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Martingale probes
// ---------------------------------------------------------------------------

TEST_CASE("V_l increments vanish exactly at consensus probes") {
    const auto model = uniform_async(4, 0.5);
    const SeedSpec seeds{109};
    std::vector<Snapshot> probes;
    probes.push_back(make_snapshot(11, StateVector(4, 0.7), model, seeds));
    for (int ell = 1; ell <= 4; ++ell) {
        const MartingaleReport r = martingale_test_v_ell(probes, ell, 0.25, 200, seeds, true);
        REQUIRE(r.probes.size() == 1);
        CHECK(r.probes[0].increment_mean == 0.0);
        CHECK(r.probes[0].increment_se == 0.0);
        CHECK_FALSE(r.probes[0].violation);
        CHECK(r.verdict == "submartingale-consistent");
    }
}

TEST_CASE("V_l increments of the deterministic model are single-outcome exact") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{110};
    const StateVector x = {0.0, 0.4, 1.0};
    std::vector<Snapshot> probes;
    probes.push_back(make_snapshot(0, x, model, seeds));

    const StochasticMatrix w = hk_sync_matrix(x, {3, 0.5});
    const StateVector x_next = endodyn::apply(w, x);
    for (int ell = 1; ell <= 3; ++ell) {
        const double beta = 0.25;
        const double expect = v_ell(ordering(x_next), ell, beta) - v_ell(ordering(x), ell, beta);
        const MartingaleReport r = martingale_test_v_ell(probes, ell, beta, 200, seeds, true);
        CHECK(r.probes[0].increment_mean == expect);
        CHECK(r.probes[0].increment_se == 0.0);
        CHECK(r.probes[0].increment_mean >= -1e-12);
    }
}

TEST_CASE("out-of-hypothesis dynamics are reported, not asserted") {
    // A fixed permutation matrix: zero diagonal, not weakly reciprocal.
    const FixedMatrixModel model(StochasticMatrix::validated({0, 1, 1, 0}, 2));
    const SeedSpec seeds{111};
    std::vector<Snapshot> probes;
    probes.push_back(make_snapshot(0, {0.0, 1.0}, model, seeds));
    const MartingaleReport r = martingale_test_v_ell(probes, 2, 0.25, 200, seeds, false);
    CHECK(r.verdict == "reported (bound not asserted)");
    CHECK(r.violation_count == 0);
    CHECK_FALSE(r.probes[0].violation);
}

// ---------------------------------------------------------------------------
// Absolute probability process
// ---------------------------------------------------------------------------

TEST_CASE("abs-prob estimate: identity model stays uniform") {
    const FixedMatrixModel model(StochasticMatrix::identity(3));
    const SeedSpec seeds{112};
    const Snapshot snap = make_snapshot(0, {1.0, 2.0, 3.0}, model, seeds);
    const AbsProbEstimate e = estimate_abs_prob(snap, 20, 50, seeds);
    for (int i = 0; i < 3; ++i) {
        CHECK(e.pi_mean[static_cast<std::size_t>(i)] == doctest::Approx(1.0 / 3).epsilon(1e-15));
        CHECK(e.pi_se[static_cast<std::size_t>(i)] == 0.0);
    }
    // Identity product never mixes: the spread proxy stays at 1.
    CHECK(e.column_spread == 1.0);
}

TEST_CASE("abs-prob estimate: doubly stochastic mixing chain tends to uniform") {
    const auto w = StochasticMatrix::validated(
        {0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5}, 3);
    const FixedMatrixModel model(w);
    const SeedSpec seeds{113};
    const Snapshot snap = make_snapshot(0, {0.0, 1.0, 5.0}, model, seeds);
    const AbsProbEstimate e = estimate_abs_prob(snap, 100, 10, seeds);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(e.pi_mean[static_cast<std::size_t>(i)] - 1.0 / 3) < 1e-12);
    }
    CHECK(e.column_spread < 1e-12);
    CHECK(e.column_spread <= e.column_spread_half);
}

TEST_CASE("abs-prob estimate: absorbing chain concentrates on the absorbing agent") {
    const auto w = StochasticMatrix::validated({1, 0, 0, 0.5, 0.5, 0, 0, 0.5, 0.5}, 3);
    const FixedMatrixModel model(w);
    const SeedSpec seeds{114};
    const Snapshot snap = make_snapshot(0, {0.0, 1.0, 5.0}, model, seeds);
    const AbsProbEstimate e = estimate_abs_prob(snap, 200, 10, seeds);

    // Direct product oracle: P = W^200, pi = column average.
    const int m = 3;
    std::vector<double> p(9, 0.0);
    for (int i = 0; i < m; ++i) p[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(i)] = 1.0;
    std::vector<double> next(9);
    for (int t = 0; t < 200; ++t) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                double s = 0.0;
                for (int l = 0; l < m; ++l) {
                    s += w(i, l) * p[static_cast<std::size_t>(l) * 3 + static_cast<std::size_t>(j)];
                }
                next[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(j)] = s;
            }
        }
        p = next;
    }
    for (int j = 0; j < m; ++j) {
        double col = 0.0;
        for (int i = 0; i < m; ++i) col += p[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(j)];
        CHECK(e.pi_mean[static_cast<std::size_t>(j)] == doctest::Approx(col / 3).epsilon(1e-12));
    }
    CHECK(e.pi_mean[0] > 0.99);
}

TEST_CASE("abs-prob estimates sum to one and multi-horizon shares futures") {
    const auto model = uniform_async(4, 0.5);
    const SeedSpec seeds{115};
    const Snapshot snap = make_snapshot(0, {0.0, 0.3, 0.8, 1.5}, model, seeds);
    const int horizons[2] = {10, 40};
    const auto estimates = estimate_abs_prob_multi(snap, horizons, 200, seeds);
    REQUIRE(estimates.size() == 2);
    for (const auto& e : estimates) {
        double sum = 0.0;
        for (double v : e.pi_mean) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(estimates[1].column_spread <= estimates[0].column_spread + 1e-12);
}

// ---------------------------------------------------------------------------
// Lyapunov tests
// ---------------------------------------------------------------------------

TEST_CASE("lyapunov catalog") {
    CHECK(lyapunov_catalog("square").g(3.0) == 9.0);
    CHECK(lyapunov_catalog("abs").g(-2.0) == 2.0);
    CHECK(lyapunov_catalog("linear").g(4.0) == 4.0);
    CHECK(lyapunov_catalog("exp").g(0.0) == 1.0);
    CHECK_THROWS_AS(lyapunov_catalog("cube"), NonConvexCatalog);
}

TEST_CASE("lyapunov: consensus state gives zero now and next") {
    const auto model = uniform_async(3, 0.5);
    const SeedSpec seeds{116};
    std::vector<Snapshot> probes;
    probes.push_back(make_snapshot(21, StateVector(3, 0.4), model, seeds));
    const LyapunovReport r =
        lyapunov_test(probes, lyapunov_catalog("square"), 30, 100, 20, 5, seeds);
    REQUIRE(r.probes.size() == 1);
    CHECK(std::abs(r.probes[0].v_now) <= 1e-12);
    CHECK(std::abs(r.probes[0].v_next_mean) <= 1e-12);
    CHECK_FALSE(r.probes[0].violation);
}

TEST_CASE("lyapunov: linear g gives an identically zero Jensen gap") {
    const auto model = uniform_async(3, 0.5);
    const SeedSpec seeds{117};
    std::vector<Snapshot> probes;
    probes.push_back(make_snapshot(13, {0.0, 0.4, 1.0}, model, seeds));
    const LyapunovReport r =
        lyapunov_test(probes, lyapunov_catalog("linear"), 30, 100, 20, 5, seeds);
    CHECK(std::abs(r.probes[0].v_now) <= 1e-12);
    CHECK(std::abs(r.probes[0].v_next_mean) <= 1e-12);
}

TEST_CASE("lyapunov with square g: value is the weighted variance and decreases") {
    const int m = 3;
    const double eps = 0.5;
    const StateVector x = {0.0, 0.4, 1.0};
    const auto model = uniform_async(m, eps);
    const SeedSpec seeds{118};
    std::vector<Snapshot> probes;
    probes.push_back(make_snapshot(17, x, model, seeds));

    const int horizon = 60;
    const LyapunovReport r =
        lyapunov_test(probes, lyapunov_catalog("square"), horizon, 2000, 120, 16, seeds);
    const LyapunovProbe& probe = r.probes[0];

    // V equals the empirical variance of x under the estimated weights.
    double mean = 0.0, second = 0.0;
    for (int i = 0; i < m; ++i) {
        mean += probe.pi_now[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        second += probe.pi_now[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)] *
                  x[static_cast<std::size_t>(i)];
    }
    CHECK(probe.v_now == doctest::Approx(second - mean * mean).epsilon(1e-12));
    CHECK(probe.v_now >= -1e-12);

    // Exhaustive outer enumeration oracle: three equiprobable picks, inner
    // weights estimated with the same machinery.
    double oracle = 0.0;
    for (int pick = 0; pick < m; ++pick) {
        const StochasticMatrix w = hk_single_update_matrix(x, eps, pick);
        const StateVector x_next = endodyn::apply(w, x);
        auto advanced = model.clone();
        {
            // Reproduce the one-step advance so the clone's internal step matches.
            RandomStream tmp = seeds.child_stream("oracle/advance/" + std::to_string(pick));
            (void)advanced->sample_next(x, tmp);
        }
        const Snapshot next_snap(probes[0].step + 1, x_next, advanced->clone(),
                                 seeds.child_stream("oracle/next"),
                                 std::vector<double>(9, 0.0));
        const AbsProbEstimate pi_next = estimate_abs_prob(next_snap, horizon, 400, seeds);
        double nmean = 0.0, nsecond = 0.0;
        for (int i = 0; i < m; ++i) {
            nmean += pi_next.pi_mean[static_cast<std::size_t>(i)] * x_next[static_cast<std::size_t>(i)];
            nsecond += pi_next.pi_mean[static_cast<std::size_t>(i)] * x_next[static_cast<std::size_t>(i)] *
                       x_next[static_cast<std::size_t>(i)];
        }
        oracle += (nsecond - nmean * nmean) / m;
    }
    CHECK(std::abs(probe.v_next_mean - oracle) <= 3 * probe.v_next_se + 5e-3);

    // Supermartingale direction for a certified-balanced model.
    CHECK_FALSE(probe.violation);
    CHECK(probe.v_next_mean <= probe.v_now + 3 * std::sqrt(probe.v_now_se * probe.v_now_se +
                                                           probe.v_next_se * probe.v_next_se) +
                                   1e-12);
}

// ---------------------------------------------------------------------------
// Flow graph, clusters, convergence
// ---------------------------------------------------------------------------

TEST_CASE("flow graph: identity trajectory has no edges") {
    const FixedMatrixModel model(StochasticMatrix::identity(3));
    const SeedSpec seeds{119};
    const Trajectory traj = simulate(model, {1.0, 2.0, 3.0}, 20, seeds);
    const FlowGraph g = flow_graph(traj, 1.0);
    CHECK(g.edges().empty());
    const ClusterPartition p = components(g);
    CHECK(p.n_blocks() == 3);
}

TEST_CASE("flow graph of the worked synchronous example splits {0,1} from {2}") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{120};
    const Trajectory traj = simulate(model, {0.0, 0.4, 1.0}, 50, seeds);
    const ClusterPartition p = components(flow_graph(traj, 1.0));
    REQUIRE(p.n_blocks() == 2);
    CHECK(p.blocks[0] == std::vector<int>{0, 1});
    CHECK(p.blocks[1] == std::vector<int>{2});
}

TEST_CASE("flow graph of the uniform averaging model is complete") {
    const double third = 1.0 / 3.0;
    const FixedMatrixModel model(
        StochasticMatrix::validated(std::vector<double>(9, third), 3));
    const SeedSpec seeds{121};
    const Trajectory traj = simulate(model, {0.0, 1.0, 2.0}, 30, seeds);
    const FlowGraph g = flow_graph(traj, 1.0);
    CHECK(g.edges().size() == 3);
    CHECK(components(g).n_blocks() == 1);
}

TEST_CASE("consensus clusters: single-linkage on the final profile") {
    CHECK(consensus_clusters(StateVector(5, 2.0), 1e-6).n_blocks() == 1);

    const ClusterPartition p = consensus_clusters({0.2, 0.2, 1.0}, 1e-6);
    REQUIRE(p.n_blocks() == 2);
    CHECK(p.blocks[0] == std::vector<int>{0, 1});
    CHECK(p.blocks[1] == std::vector<int>{2});

    CHECK(consensus_clusters({0.0, 0.5, 1.0}, 1e-6).n_blocks() == 3);

    // Chaining: consecutive gaps below tolerance merge transitively.
    const ClusterPartition chain = consensus_clusters({0.0, 0.5e-6, 1.0e-6}, 0.6e-6);
    CHECK(chain.n_blocks() == 1);
}

TEST_CASE("compare_partitions relations") {
    ClusterPartition a, b;
    a.blocks = {{0, 1}, {2}};
    b.blocks = {{0, 1}, {2}};
    CHECK(compare_partitions(a, b).relation == PartitionRelation::Equal);

    b.blocks = {{0, 1, 2}};
    CHECK(compare_partitions(a, b).relation == PartitionRelation::ARefinesB);
    CHECK(compare_partitions(b, a).relation == PartitionRelation::BRefinesA);

    ClusterPartition c;
    c.blocks = {{0, 2}, {1}};
    CHECK(compare_partitions(a, c).relation == PartitionRelation::Mismatch);
}

TEST_CASE("ordering convergence: constant trajectory converges at step 0") {
    const FixedMatrixModel model(StochasticMatrix::identity(2));
    const SeedSpec seeds{122};
    const Trajectory traj = simulate(model, {1.0, 2.0}, 30, seeds);
    const ConvergenceScan scan = ordering_convergence(traj, 10, 1e-9);
    CHECK(scan.converged);
    CHECK(scan.step == 0);
    CHECK(scan.trailing_max == 0.0);
}

TEST_CASE("ordering convergence on the worked synchronous example") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{123};
    const Trajectory traj = simulate(model, {0.0, 0.4, 1.0}, 50, seeds);
    const ConvergenceScan scan = ordering_convergence(traj, 10, 1e-9);
    CHECK(scan.converged);
    const Ordering z = ordering(traj.final_state());
    CHECK(z.sorted == std::vector<double>{0.2, 0.2, 1.0});
}

TEST_CASE("periodic swap: ordering converges while the state does not") {
    const FixedMatrixModel model(StochasticMatrix::validated({0, 1, 1, 0}, 2));
    const SeedSpec seeds{124};
    const Trajectory traj = simulate(model, {0.0, 1.0}, 40, seeds);
    const ConvergenceScan z_scan = ordering_convergence(traj, 10, 1e-9);
    const ConvergenceScan x_scan = state_convergence(traj, 10, 1e-9);
    CHECK(z_scan.converged);
    CHECK(z_scan.step == 0);
    CHECK_FALSE(x_scan.converged);
    CHECK(x_scan.trailing_max == 1.0);
}

TEST_CASE("symmetric function series") {
    // Doubly stochastic steps conserve the sum exactly as a series verdict.
    const auto ds = StochasticMatrix::validated(
        {0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5}, 3);
    const FixedMatrixModel model(ds);
    const SeedSpec seeds{125};
    const Trajectory traj = simulate(model, {0.0, 1.0, 5.0}, 100, seeds);

    const SymmetricSeries sum = symmetric_function_series(traj, "sum", 10, 1e-9);
    CHECK(sum.converged);
    for (double v : sum.values) CHECK(v == doctest::Approx(6.0).epsilon(1e-12));

    const SymmetricSeries range = symmetric_function_series(traj, "range", 10, 1e-9);
    CHECK(range.converged);
    for (std::size_t k = 1; k < range.values.size(); ++k) {
        CHECK(range.values[k] <= range.values[k - 1] + 1e-12);
    }

    const HkSyncModel consensus_model({3, 10.0});
    const Trajectory ctraj = simulate(consensus_model, {1.0, 1.0, 1.0}, 10, seeds);
    const SymmetricSeries csum = symmetric_function_series(ctraj, "sum", 5, 1e-9);
    for (double v : csum.values) CHECK(v == 3.0);

    CHECK_THROWS_AS(symmetric_function_series(traj, "median", 10, 1e-9), InvalidArgument);
    CHECK_NOTHROW(symmetric_function_series(traj, "pnorm:2", 10, 1e-9));
}

// ---------------------------------------------------------------------------
// Gossip pair probabilities
// ---------------------------------------------------------------------------

TEST_CASE("pair probability: mutual gossip pair is near-symmetric") {
    const GossipModel model = small_gossip(2, 1.0);
    const SeedSpec seeds{126};
    const Snapshot snap = make_snapshot(0, {0.0, 0.5}, model, seeds);
    const PairProbabilityReport r = check_pair_probability(snap, 20000, seeds);
    CHECK(r.n_undecodable == 0);
    CHECK(r.n_noop == 0);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].count_fwd + r.pairs[0].count_rev == 20000);
    CHECK(r.alpha_hat > 0.9);
    CHECK(r.verdict == "satisfied");
}

TEST_CASE("pair probability: isolated agents are vacuous no-ops") {
    const GossipModel model = small_gossip(2, 0.1);
    const SeedSpec seeds{127};
    const Snapshot snap = make_snapshot(0, {0.0, 9.0}, model, seeds);
    const PairProbabilityReport r = check_pair_probability(snap, 500, seeds);
    CHECK(r.n_noop == 500);
    CHECK(r.verdict == "vacuous");
    CHECK(r.alpha_hat == kInf);
}

TEST_CASE("pair probability: non-gossip matrices are counted undecodable") {
    const HkSyncModel model({3, 0.5});
    const SeedSpec seeds{128};
    const Snapshot snap = make_snapshot(0, {0.0, 0.4, 1.0}, model, seeds);
    const PairProbabilityReport r = check_pair_probability(snap, 300, seeds);
    CHECK(r.n_undecodable == 300);
}
