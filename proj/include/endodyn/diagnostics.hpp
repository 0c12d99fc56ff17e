#pragma once

#include "endodyn/engine.hpp"
#include "endodyn/linalg.hpp"
#include "endodyn/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace endodyn {

// Statistical verdict convention used throughout: one-sided tolerance of
// n_sigma standard errors (default 3).
inline constexpr double kDefaultNSigma = 3.0;

// ---------------------------------------------------------------------------
// Flow graph and consensus clusters
// ---------------------------------------------------------------------------

// Finite-horizon approximation of the infinite flow graph. Divergence of the
// pairwise flow sum is a tail property, so edges threshold the flow gathered
// over the trailing half of the run: a pair that merely exchanged a bounded
// amount early (and then separated for good) contributes nothing, while a
// pair whose flow keeps growing clears any fixed threshold once the run is
// long enough. The full-horizon accumulation is kept alongside for reporting.
struct FlowGraph {
    int m = 0;
    std::vector<double> accumulated;  // m*m symmetric, whole horizon
    std::vector<double> tail;         // m*m symmetric, trailing half
    long horizon = 0;
    long tail_start = 0;
    double edge_threshold = 1.0;

    double at(int i, int j) const {
        return accumulated[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                           static_cast<std::size_t>(j)];
    }
    double tail_at(int i, int j) const {
        return tail[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                    static_cast<std::size_t>(j)];
    }
    std::vector<std::pair<int, int>> edges() const;  // i < j, tail flow >= threshold
};

FlowGraph flow_graph(const Trajectory& traj, double tau);

struct ClusterPartition {
    std::vector<std::vector<int>> blocks;  // each block sorted; blocks sorted by first member

    int n_blocks() const { return static_cast<int>(blocks.size()); }
    int block_of(int i) const;
};

ClusterPartition components(const FlowGraph& graph);

// Single-linkage clustering of the final profile: indices whose values chain
// within tol_cluster land in one block.
ClusterPartition consensus_clusters(const StateVector& x_final, double tol_cluster);

enum class PartitionRelation { Equal, ARefinesB, BRefinesA, Mismatch };

struct PartitionComparison {
    PartitionRelation relation = PartitionRelation::Mismatch;
    std::string detail;
};

PartitionComparison compare_partitions(const ClusterPartition& a, const ClusterPartition& b);

// ---------------------------------------------------------------------------
// Convergence scans
// ---------------------------------------------------------------------------

struct ConvergenceScan {
    bool converged = false;
    long step = -1;               // first step whose trailing window stays under tol
    std::vector<double> drift;    // drift[k-1] = sup-norm step k-1 -> k
    double trailing_max = 0.0;    // max drift over the final window
};

// Drift of the ordering z(k); z converges almost surely under the certified
// conditions even when x itself does not.
ConvergenceScan ordering_convergence(const Trajectory& traj, long window, double tol);

// Same scan on x(k) itself; differs from ordering_convergence exactly when
// the profile keeps permuting a converged multiset (e.g. periodic swaps).
ConvergenceScan state_convergence(const Trajectory& traj, long window, double tol);

struct SymmetricSeries {
    std::string name;
    std::vector<double> values;  // one per retained step
    bool converged = false;
    long step = -1;
};

// Catalog: "sum", "range" (max - min), "pnorm:<p>" for p >= 1.
SymmetricSeries symmetric_function_series(const Trajectory& traj, const std::string& name,
                                          long window, double tol);

// ---------------------------------------------------------------------------
// Balancedness / sub-symmetry
// ---------------------------------------------------------------------------

struct FlowEstimate {
    double mean = 0.0;
    double se = 0.0;
};

struct SubsetRecord {
    std::uint64_t subset_bits = 0;
    int cardinality = 0;
    FlowEstimate inflow;   // E[W_{S̄S}(k+1) | history]
    FlowEstimate outflow;  // E[W_{SS̄}(k+1) | history]
    double ratio = 0.0;    // +inf when the outflow estimate is within n_sigma SE of 0
    double ratio_se = 0.0;
};

struct BalancednessReport {
    long step = 0;
    int n_samples = 0;
    double n_sigma = kDefaultNSigma;
    std::vector<SubsetRecord> subsets;
    double alpha_hat = 0.0;     // min ratio over non-vacuous subsets; +inf if all vacuous
    double alpha_hat_se = 0.0;  // ratio SE at the minimizing subset
    // alpha_hat - n_sigma SE clamped into [0,1]; 1 in the vacuous case.
    double alpha_certified = 0.0;
    std::string verdict;  // "balanced" | "vacuous" | "violation-suspected"
};

// Shared-batch estimate of both conditional flows for every nontrivial subset
// (same draws reused across subsets). Requires m <= 20.
BalancednessReport check_balancedness(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                                      double n_sigma = kDefaultNSigma);

struct PairRecord {
    int i = 0, j = 0;
    FlowEstimate fwd;  // E[W_ij]
    FlowEstimate rev;  // E[W_ji]
    double ratio = 0.0;
    double ratio_se = 0.0;
};

struct SubsymmetryReport {
    long step = 0;
    int n_samples = 0;
    double n_sigma = kDefaultNSigma;
    std::vector<PairRecord> pairs;  // all ordered pairs i != j
    double eta_hat = 0.0;
    double eta_hat_se = 0.0;
    double eta_certified = 0.0;
    std::string verdict;
    // Entrywise bound implies the subset bound with the same coefficient.
    static constexpr const char* kNote = "entrywise sub-symmetry implies balancedness";
};

SubsymmetryReport check_subsymmetry(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                                    double n_sigma = kDefaultNSigma);

// ---------------------------------------------------------------------------
// Weak reciprocity
// ---------------------------------------------------------------------------

// Deterministic rule mapping a state to a subset of fixed cardinality.
struct AdaptedSequenceRule {
    enum class Kind { SortedPrefix, SortedSuffix, Constant, Custom };

    Kind kind = Kind::SortedPrefix;
    int ell = 1;
    std::string name;
    SubsetMask constant_mask;
    std::function<SubsetMask(const StateVector&)> custom;

    static AdaptedSequenceRule sorted_prefix(int ell);
    static AdaptedSequenceRule sorted_suffix(int ell);
    static AdaptedSequenceRule constant(const SubsetMask& mask);

    SubsetMask select(const StateVector& x) const;
};

// gamma * a / (4m): the weak-reciprocity coefficient guaranteed for a
// balanced process with coefficient a and diagonal bound gamma.
double predicted_weak_reciprocity_coefficient(double gamma, double a, int m);

// The prefix/suffix family for all cardinalities 1..m-1, paired with itself
// at steps k and k+1.
std::vector<std::pair<AdaptedSequenceRule, AdaptedSequenceRule>> default_rule_pairs(int m);

struct RulePairRecord {
    std::string name;
    FlowEstimate inflow;   // E[W_{S̄(k+1)S(k)}]
    FlowEstimate outflow;  // E[W_{S(k+1)S̄(k)}]
    double ratio = 0.0;
    double ratio_se = 0.0;
    bool violated = false;
};

struct WeakReciprocityReport {
    long step = 0;
    int n_samples = 0;
    double n_sigma = kDefaultNSigma;
    double gamma = 0.0;
    double balancedness_a = 0.0;
    double predicted_coefficient = 0.0;  // gamma * a / (4m)
    std::vector<RulePairRecord> rules;
    int violation_count = 0;
    std::string verdict;
    // The check covers a finite rule family, not every adapted regular
    // sequence; it is a partial certificate by construction.
    static constexpr const char* kScopeNote =
        "checked on the sorted prefix/suffix family (plus any user rules); "
        "a partial certificate of the quantified definition";
};

WeakReciprocityReport check_weak_reciprocity(
    const Snapshot& snap,
    const std::vector<std::pair<AdaptedSequenceRule, AdaptedSequenceRule>>& rule_pairs,
    int n_samples, const SeedSpec& seeds, double gamma, double balancedness_a,
    double n_sigma = kDefaultNSigma);

// ---------------------------------------------------------------------------
// Martingale probes
// ---------------------------------------------------------------------------

struct MartingaleProbe {
    long step = 0;
    double value = 0.0;            // V at the probe
    double value_se = 0.0;
    double increment_mean = 0.0;   // E[V(k+1) - V(k) | history], estimated
    double increment_se = 0.0;
    bool violation = false;
};

struct MartingaleReport {
    std::string quantity;
    bool asserted = true;  // false when the hypotheses are not certified
    int n_samples = 0;     // resamples per probe
    double n_sigma = kDefaultNSigma;
    std::vector<MartingaleProbe> probes;
    int violation_count = 0;
    std::string verdict;  // "submartingale-consistent" etc.
};

// Conditional increment of V_l at each probe: resample W(k+1), apply it,
// re-order, recompute V_l. Submartingale direction (increments >= 0) when
// asserted.
MartingaleReport martingale_test_v_ell(std::span<const Snapshot> probes, int ell, double beta,
                                       int n_samples, const SeedSpec& seeds, bool assert_bound,
                                       double n_sigma = kDefaultNSigma);

// ---------------------------------------------------------------------------
// Absolute probability process
// ---------------------------------------------------------------------------

struct AbsProbEstimate {
    long step = 0;
    int horizon = 0;
    int n_futures = 0;
    std::vector<double> pi_mean;  // probability-vector estimate
    std::vector<double> pi_se;
    // Truncation proxy: mean over futures of the max column spread of the
    // backward product at the horizon and at half the horizon.
    double column_spread = 0.0;
    double column_spread_half = 0.0;
};

// For each future: run T steps ahead, form the backward product
// P = W(k+T)...W(k+1), and take the column-average row (1/m) 1^T P. Horizons
// must be ascending; one estimate per horizon, sharing the same futures.
std::vector<AbsProbEstimate> estimate_abs_prob_multi(const Snapshot& snap,
                                                     std::span<const int> horizons, int n_futures,
                                                     const SeedSpec& seeds);

AbsProbEstimate estimate_abs_prob(const Snapshot& snap, int horizon, int n_futures,
                                  const SeedSpec& seeds);

// ---------------------------------------------------------------------------
// Lyapunov family
// ---------------------------------------------------------------------------

struct LyapunovFunction {
    std::string name;
    std::function<double(double)> g;
    std::function<double(double)> gprime;  // (sub)gradient, used for SE propagation
    bool from_catalog = false;
};

// Catalog: "square", "abs", "exp", "linear". Unknown names throw
// NonConvexCatalog; user-supplied functions are accepted unverified.
LyapunovFunction lyapunov_catalog(const std::string& name);

struct LyapunovProbe {
    long step = 0;
    double v_now = 0.0;
    double v_now_se = 0.0;
    double v_next_mean = 0.0;  // E[V(k+1) | history]
    double v_next_se = 0.0;
    bool violation = false;
    std::vector<double> pi_now;
    // sup-norm residual of the one-step identity E[pi(k+1)^T W(k+1)] = pi(k)^T
    double identity_residual = 0.0;
    double identity_residual_se = 0.0;
};

struct LyapunovReport {
    std::string g_name;
    int horizon = 0;
    int n_pi = 0;     // futures for the probe-time weight estimate
    int n_outer = 0;  // draws of W(k+1)
    int n_inner = 0;  // futures per draw for the advanced weight estimate
    double n_sigma = kDefaultNSigma;
    bool g_from_catalog = true;
    std::vector<LyapunovProbe> probes;
    int violation_count = 0;
    std::string verdict;  // "supermartingale-consistent" etc.
};

// V = sum_i pi_i g(x_i) - g(pi^T x), with pi the absolute-probability
// estimate. Supermartingale direction: E[V(k+1)] <= V(k) + n_sigma combined SE.
LyapunovReport lyapunov_test(std::span<const Snapshot> probes, const LyapunovFunction& g,
                             int horizon, int n_pi, int n_outer, int n_inner,
                             const SeedSpec& seeds, double n_sigma = kDefaultNSigma);

// ---------------------------------------------------------------------------
// Gossip pair-probability condition
// ---------------------------------------------------------------------------

struct PairProbabilityRecord {
    int i = 0, j = 0;      // ordered pair, i < j in the report
    long count_fwd = 0;    // (i,j) observed
    long count_rev = 0;    // (j,i) observed
    double ratio = 0.0;    // min(fwd/rev, rev/fwd); +inf when vacuous
};

struct PairProbabilityReport {
    long step = 0;
    int n_samples = 0;
    long n_noop = 0;         // identity draws (isolated sender)
    long n_undecodable = 0;  // non-gossip-shaped matrices
    std::vector<PairProbabilityRecord> pairs;
    double alpha_hat = 0.0;  // min ratio over decodable, non-vacuous pairs
    std::string verdict;
};

// Decodes (sender, receiver) from resampled one-step matrices of gossip shape
// and estimates the ordered-pair probability ratios.
PairProbabilityReport check_pair_probability(const Snapshot& snap, int n_samples,
                                             const SeedSpec& seeds);

}  // namespace endodyn
