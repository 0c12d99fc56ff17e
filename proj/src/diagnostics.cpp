#include "endodyn/diagnostics.hpp"

#include "endodyn/errors.hpp"
#include "endodyn/parallel.hpp"
#include "endodyn/stats.hpp"
#include "endodyn/union_find.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace endodyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Ratio estimate in/out with the zero-denominator convention: an out-flow
// within n_sigma SE of 0 makes the constraint vacuous (+inf ratio). SE by the
// delta method, using the covariance of the two means (same draws).
struct RatioEst {
    double ratio = 0.0;
    double ratio_se = 0.0;
    bool vacuous = false;
};

RatioEst make_ratio(double in_mean, double in_se, double out_mean, double out_se,
                    double cov_means, double n_sigma) {
    RatioEst r;
    if (out_mean <= n_sigma * out_se || out_mean <= 0.0) {
        r.ratio = kInf;
        r.vacuous = true;
        return r;
    }
    r.ratio = in_mean / out_mean;
    const double d_in = 1.0 / out_mean;
    const double d_out = -in_mean / (out_mean * out_mean);
    double var = d_in * d_in * in_se * in_se + d_out * d_out * out_se * out_se +
                 2.0 * d_in * d_out * cov_means;
    if (var < 0.0) var = 0.0;
    r.ratio_se = std::sqrt(var);
    return r;
}

void finalize_pair(const RunningPairMoments& acc, FlowEstimate& a, FlowEstimate& b,
                   double& cov_means) {
    a.mean = acc.mean_a;
    b.mean = acc.mean_b;
    a.se = acc.se_a();
    b.se = acc.se_b();
    cov_means = acc.cov_means();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

// Shared scan: first step after which the per-step sup-norm drift stays under
// tol, plus the trailing-window verdict.
ConvergenceScan scan_drift(const std::vector<std::vector<double>>& series, long window,
                           double tol) {
    if (window < 1) throw InvalidArgument("convergence scan: window must be >= 1");
    ConvergenceScan out;
    const long k_max = static_cast<long>(series.size()) - 1;
    out.drift.reserve(static_cast<std::size_t>(std::max<long>(k_max, 0)));
    for (long k = 1; k <= k_max; ++k) {
        out.drift.push_back(max_abs_diff(series[static_cast<std::size_t>(k)],
                                         series[static_cast<std::size_t>(k - 1)]));
    }
    long last_bad = 0;  // step index whose incoming drift broke tol
    for (long k = 1; k <= k_max; ++k) {
        if (out.drift[static_cast<std::size_t>(k - 1)] >= tol) last_bad = k;
    }
    const long tail = std::min<long>(window, k_max);
    out.trailing_max = 0.0;
    for (long k = k_max - tail + 1; k <= k_max; ++k) {
        if (k >= 1) {
            out.trailing_max = std::max(out.trailing_max, out.drift[static_cast<std::size_t>(k - 1)]);
        }
    }
    out.converged = out.trailing_max < tol;
    out.step = out.converged ? last_bad : -1;
    return out;
}

SubsetMask mask_from_ordering(const Ordering& ord, AdaptedSequenceRule::Kind kind, int ell) {
    const int m = static_cast<int>(ord.permutation.size());
    SubsetMask mask(m);
    if (kind == AdaptedSequenceRule::Kind::SortedPrefix) {
        for (int i = 0; i < ell; ++i) mask.set(ord.permutation[static_cast<std::size_t>(i)]);
    } else {
        for (int i = m - ell; i < m; ++i) mask.set(ord.permutation[static_cast<std::size_t>(i)]);
    }
    return mask;
}

// Per-future accumulation for the absolute-probability estimate.
struct PiAcc {
    std::vector<RunningVectorMoments> pi;  // indexed per horizon
    std::vector<RunningMoments> spread;
    std::vector<RunningMoments> spread_half;

    void init(std::size_t n_horizons, int m) {
        if (!pi.empty()) return;
        pi.resize(n_horizons);
        for (auto& p : pi) p.init(m);
        spread.resize(n_horizons);
        spread_half.resize(n_horizons);
    }
    void merge(const PiAcc& o) {
        if (o.pi.empty()) return;
        if (pi.empty()) {
            *this = o;
            return;
        }
        for (std::size_t h = 0; h < pi.size(); ++h) {
            pi[h].merge(o.pi[h]);
            spread[h].merge(o.spread[h]);
            spread_half[h].merge(o.spread_half[h]);
        }
    }
};

double column_spread(const std::vector<double>& p, int m) {
    double worst = 0.0;
    for (int j = 0; j < m; ++j) {
        double lo = kInf, hi = -kInf;
        for (int i = 0; i < m; ++i) {
            const double v = p[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                               static_cast<std::size_t>(j)];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        worst = std::max(worst, hi - lo);
    }
    return worst;
}

// Backward-product futures from (model, state). For each future: advance the
// dynamics T steps, maintain P = W(k+T)...W(k+1), and record the column
// average (1/m) 1^T P at each requested horizon.
PiAcc run_pi_futures(const ProcessModel& model, const StateVector& state,
                     std::span<const int> horizons, int n_futures, const SeedSpec& seeds,
                     const std::string& label_prefix) {
    const int m = model.dim();
    const int t_max = horizons.back();
    std::vector<long> record_half(horizons.size());
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        record_half[h] = std::max(1, horizons[h] / 2);
    }

    return run_chunked<PiAcc>(
        n_futures, 16,
        [&](long begin, long end, PiAcc& acc) {
            acc.init(horizons.size(), m);
            std::vector<double> p(static_cast<std::size_t>(m) * static_cast<std::size_t>(m));
            std::vector<double> p_next(p.size());
            for (long f = begin; f < end; ++f) {
                auto local = model.clone();
                RandomStream rng = seeds.child_stream(label_prefix + "/" + std::to_string(f));
                StateVector x = state;
                std::fill(p.begin(), p.end(), 0.0);
                for (int i = 0; i < m; ++i) {
                    p[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                      static_cast<std::size_t>(i)] = 1.0;
                }
                for (long t = 1; t <= t_max; ++t) {
                    const StochasticMatrix w = local->sample_next(x, rng);
                    x = endodyn::apply(w, x);
                    // P <- W * P
                    for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < m; ++j) {
                            double s = 0.0;
                            for (int l = 0; l < m; ++l) {
                                s += w(i, l) *
                                     p[static_cast<std::size_t>(l) * static_cast<std::size_t>(m) +
                                       static_cast<std::size_t>(j)];
                            }
                            p_next[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                                   static_cast<std::size_t>(j)] = s;
                        }
                    }
                    p.swap(p_next);
                    for (std::size_t h = 0; h < horizons.size(); ++h) {
                        if (t == record_half[h]) acc.spread_half[h].add(column_spread(p, m));
                        if (t == horizons[h]) {
                            acc.spread[h].add(column_spread(p, m));
                            std::vector<double> pi(static_cast<std::size_t>(m), 0.0);
                            for (int j = 0; j < m; ++j) {
                                double s = 0.0;
                                for (int i = 0; i < m; ++i) {
                                    s += p[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                                           static_cast<std::size_t>(j)];
                                }
                                pi[static_cast<std::size_t>(j)] = s / m;
                            }
                            acc.pi[h].add(pi);
                        }
                    }
                }
            }
        },
        [](PiAcc& total, const PiAcc& part) { total.merge(part); });
}

std::vector<AbsProbEstimate> finalize_pi(const PiAcc& acc, long step,
                                         std::span<const int> horizons, int n_futures, int m) {
    std::vector<AbsProbEstimate> out(horizons.size());
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        AbsProbEstimate& e = out[h];
        e.step = step;
        e.horizon = horizons[h];
        e.n_futures = n_futures;
        e.pi_mean = acc.pi[h].mean;
        e.pi_se.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) e.pi_se[static_cast<std::size_t>(i)] = acc.pi[h].se(i);
        e.column_spread = acc.spread[h].mean;
        e.column_spread_half = acc.spread_half[h].mean;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Flow graph / clusters
// ---------------------------------------------------------------------------

std::vector<std::pair<int, int>> FlowGraph::edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            if (tail_at(i, j) >= edge_threshold) out.emplace_back(i, j);
        }
    }
    return out;
}

FlowGraph flow_graph(const Trajectory& traj, double tau) {
    if (traj.flow_accumulator.empty()) throw InvalidArgument("flow_graph: no accumulator");
    if (!(tau > 0.0)) throw InvalidArgument("flow_graph: tau must be positive");
    FlowGraph g;
    g.m = traj.m;
    g.accumulated = traj.flow_accumulator;
    g.horizon = traj.steps();
    g.tail_start = traj.steps() - traj.steps() / 2;
    g.tail.resize(g.accumulated.size());
    // The mid snapshot may carry flow from before this trajectory segment
    // (snapshot restarts); the difference is exactly this segment's tail.
    for (std::size_t i = 0; i < g.tail.size(); ++i) {
        g.tail[i] = std::max(0.0, g.accumulated[i] - traj.flow_accumulator_mid[i]);
    }
    g.edge_threshold = tau;
    return g;
}

int ClusterPartition::block_of(int i) const {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (std::binary_search(blocks[b].begin(), blocks[b].end(), i)) return static_cast<int>(b);
    }
    return -1;
}

namespace {

ClusterPartition canonical_partition(std::vector<std::vector<int>> blocks) {
    for (auto& b : blocks) std::sort(b.begin(), b.end());
    std::sort(blocks.begin(), blocks.end(),
              [](const std::vector<int>& a, const std::vector<int>& b) { return a.front() < b.front(); });
    ClusterPartition p;
    p.blocks = std::move(blocks);
    return p;
}

}  // namespace

ClusterPartition components(const FlowGraph& graph) {
    UnionFind uf(graph.m);
    for (const auto& [i, j] : graph.edges()) uf.unite(i, j);
    std::vector<std::vector<int>> by_root(static_cast<std::size_t>(graph.m));
    for (int i = 0; i < graph.m; ++i) by_root[static_cast<std::size_t>(uf.find(i))].push_back(i);
    std::vector<std::vector<int>> blocks;
    for (auto& b : by_root) {
        if (!b.empty()) blocks.push_back(std::move(b));
    }
    return canonical_partition(std::move(blocks));
}

ClusterPartition consensus_clusters(const StateVector& x_final, double tol_cluster) {
    ensure_finite(x_final);
    if (!(tol_cluster >= 0.0)) throw InvalidArgument("consensus_clusters: negative tolerance");
    const Ordering ord = ordering(x_final);
    std::vector<std::vector<int>> blocks;
    std::vector<int> current;
    for (std::size_t i = 0; i < ord.sorted.size(); ++i) {
        if (!current.empty() && ord.sorted[i] - ord.sorted[i - 1] > tol_cluster) {
            blocks.push_back(std::move(current));
            current.clear();
        }
        current.push_back(ord.permutation[i]);
    }
    if (!current.empty()) blocks.push_back(std::move(current));
    return canonical_partition(std::move(blocks));
}

PartitionComparison compare_partitions(const ClusterPartition& a, const ClusterPartition& b) {
    auto refines = [](const ClusterPartition& fine, const ClusterPartition& coarse) {
        for (const auto& fb : fine.blocks) {
            const int cb = coarse.block_of(fb.front());
            if (cb < 0) return false;
            for (int v : fb) {
                if (coarse.block_of(v) != cb) return false;
            }
        }
        return true;
    };
    PartitionComparison cmp;
    const bool ab = refines(a, b);
    const bool ba = refines(b, a);
    if (ab && ba) {
        cmp.relation = PartitionRelation::Equal;
        cmp.detail = "identical partitions";
    } else if (ab) {
        cmp.relation = PartitionRelation::ARefinesB;
        cmp.detail = "first partition refines the second";
    } else if (ba) {
        cmp.relation = PartitionRelation::BRefinesA;
        cmp.detail = "second partition refines the first";
    } else {
        cmp.relation = PartitionRelation::Mismatch;
        for (const auto& fb : a.blocks) {
            const int cb = b.block_of(fb.front());
            for (int v : fb) {
                if (b.block_of(v) != cb) {
                    cmp.detail = "agents " + std::to_string(fb.front() + 1) + " and " +
                                 std::to_string(v + 1) +
                                 " share a block in one partition but not the other";
                    return cmp;
                }
            }
        }
        cmp.detail = "partitions cross";
    }
    return cmp;
}

// ---------------------------------------------------------------------------
// Convergence scans
// ---------------------------------------------------------------------------

ConvergenceScan ordering_convergence(const Trajectory& traj, long window, double tol) {
    std::vector<std::vector<double>> z;
    z.reserve(traj.states.size());
    for (const auto& x : traj.states) z.push_back(ordering(x).sorted);
    return scan_drift(z, window, tol);
}

ConvergenceScan state_convergence(const Trajectory& traj, long window, double tol) {
    return scan_drift(traj.states, window, tol);
}

SymmetricSeries symmetric_function_series(const Trajectory& traj, const std::string& name,
                                          long window, double tol) {
    std::function<double(const StateVector&)> fn;
    if (name == "sum") {
        fn = [](const StateVector& x) { return std::accumulate(x.begin(), x.end(), 0.0); };
    } else if (name == "range" || name == "max-min") {
        fn = [](const StateVector& x) {
            const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
            return *hi - *lo;
        };
    } else if (name.rfind("pnorm:", 0) == 0) {
        const double p = std::stod(name.substr(6));
        if (!(p >= 1.0)) throw InvalidArgument("pnorm requires p >= 1");
        fn = [p](const StateVector& x) {
            double s = 0.0;
            for (double v : x) s += std::pow(std::abs(v), p);
            return std::pow(s, 1.0 / p);
        };
    } else {
        throw InvalidArgument("unknown symmetric function: " + name);
    }

    SymmetricSeries out;
    out.name = name;
    out.values.reserve(traj.states.size());
    for (const auto& x : traj.states) out.values.push_back(fn(x));

    std::vector<std::vector<double>> wrapped;
    wrapped.reserve(out.values.size());
    for (double v : out.values) wrapped.push_back({v});
    const ConvergenceScan scan = scan_drift(wrapped, window, tol);
    out.converged = scan.converged;
    out.step = scan.step;
    return out;
}

// ---------------------------------------------------------------------------
// Balancedness
// ---------------------------------------------------------------------------

BalancednessReport check_balancedness(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                                      double n_sigma) {
    const int m = snap.dim();
    if (m > 20) throw TooLarge("check_balancedness: m > 20");
    if (n_samples < 100) throw InvalidArgument("check_balancedness: need at least 100 samples");

    const auto subsets = enumerate_nontrivial_subsets(m);
    const std::size_t n_subsets = subsets.size();
    const std::uint64_t full = (std::uint64_t{1} << m) - 1;
    // subset_bits - 1 indexes records (masks are 1..2^m-2).
    auto record_index = [](std::uint64_t bits) { return static_cast<std::size_t>(bits - 1); };

    using Acc = std::vector<RunningPairMoments>;
    // Large subset families fall back to a single chunk to bound memory.
    const long chunk = n_subsets > 5000 ? n_samples : 256;
    const Acc acc = run_chunked<Acc>(
        n_samples, chunk,
        [&](long begin, long end, Acc& a) {
            if (a.empty()) a.assign(n_subsets, RunningPairMoments{});
            std::vector<double> inflow(n_subsets);
            for (long s = begin; s < end; ++s) {
                const StochasticMatrix w = resample_one(snap, static_cast<int>(s), seeds);
                for (const SubsetMask& sub : subsets) {
                    const std::uint64_t bits = sub.low_bits();
                    double v = 0.0;
                    for (int i = 0; i < m; ++i) {
                        if ((bits >> i) & 1u) continue;  // i must lie in the complement
                        const auto row = w.row(i);
                        for (int j = 0; j < m; ++j) {
                            if ((bits >> j) & 1u) v += row[static_cast<std::size_t>(j)];
                        }
                    }
                    inflow[record_index(bits)] = v;
                }
                // W_{S S̄} equals the inflow of the complement subset.
                for (const SubsetMask& sub : subsets) {
                    const std::uint64_t bits = sub.low_bits();
                    a[record_index(bits)].add(inflow[record_index(bits)],
                                              inflow[record_index(full ^ bits)]);
                }
            }
        },
        [](Acc& total, const Acc& part) {
            if (total.empty()) {
                total = part;
                return;
            }
            for (std::size_t i = 0; i < total.size(); ++i) total[i].merge(part[i]);
        });

    BalancednessReport report;
    report.step = snap.step;
    report.n_samples = n_samples;
    report.n_sigma = n_sigma;
    report.subsets.resize(n_subsets);

    double min_ratio = kInf;
    double min_ratio_se = 0.0;
    bool any_finite = false;
    bool violation = false;
    for (std::size_t r = 0; r < n_subsets; ++r) {
        SubsetRecord& rec = report.subsets[r];
        rec.subset_bits = subsets[r].low_bits();
        rec.cardinality = subsets[r].count();
        double cov = 0.0;
        finalize_pair(acc[r], rec.inflow, rec.outflow, cov);
        const RatioEst ratio = make_ratio(rec.inflow.mean, rec.inflow.se, rec.outflow.mean,
                                          rec.outflow.se, cov, n_sigma);
        rec.ratio = ratio.ratio;
        rec.ratio_se = ratio.ratio_se;
        if (!ratio.vacuous) {
            any_finite = true;
            if (ratio.ratio < min_ratio) {
                min_ratio = ratio.ratio;
                min_ratio_se = ratio.ratio_se;
            }
            // Evidence of a zero inflow against a significant outflow rules
            // out every positive coefficient.
            if (rec.inflow.mean <= n_sigma * rec.inflow.se &&
                rec.outflow.mean > n_sigma * rec.outflow.se) {
                violation = true;
            }
        }
    }

    if (!any_finite) {
        report.alpha_hat = kInf;
        report.alpha_hat_se = 0.0;
        report.alpha_certified = 1.0;  // vacuously balanced; the theory caps alpha at 1
        report.verdict = "vacuous";
    } else {
        report.alpha_hat = min_ratio;
        report.alpha_hat_se = min_ratio_se;
        report.alpha_certified =
            std::clamp(min_ratio - n_sigma * min_ratio_se, 0.0, 1.0);
        report.verdict = violation ? "violation-suspected" : "balanced";
        if (violation) report.alpha_certified = 0.0;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Sub-symmetry
// ---------------------------------------------------------------------------

SubsymmetryReport check_subsymmetry(const Snapshot& snap, int n_samples, const SeedSpec& seeds,
                                    double n_sigma) {
    const int m = snap.dim();
    if (n_samples < 2) throw InvalidArgument("check_subsymmetry: need at least 2 samples");

    using Acc = std::vector<RunningPairMoments>;  // ordered pairs i != j, index i*m+j
    const Acc acc = run_chunked<Acc>(
        n_samples, 256,
        [&](long begin, long end, Acc& a) {
            if (a.empty()) {
                a.assign(static_cast<std::size_t>(m) * static_cast<std::size_t>(m),
                         RunningPairMoments{});
            }
            for (long s = begin; s < end; ++s) {
                const StochasticMatrix w = resample_one(snap, static_cast<int>(s), seeds);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < m; ++j) {
                        if (i == j) continue;
                        a[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                          static_cast<std::size_t>(j)]
                            .add(w(i, j), w(j, i));
                    }
                }
            }
        },
        [](Acc& total, const Acc& part) {
            if (total.empty()) {
                total = part;
                return;
            }
            for (std::size_t i = 0; i < total.size(); ++i) total[i].merge(part[i]);
        });

    SubsymmetryReport report;
    report.step = snap.step;
    report.n_samples = n_samples;
    report.n_sigma = n_sigma;

    double min_ratio = kInf;
    double min_ratio_se = 0.0;
    bool any_finite = false;
    bool violation = false;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            PairRecord rec;
            rec.i = i;
            rec.j = j;
            double cov = 0.0;
            finalize_pair(
                acc[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)],
                rec.fwd, rec.rev, cov);
            const RatioEst ratio =
                make_ratio(rec.fwd.mean, rec.fwd.se, rec.rev.mean, rec.rev.se, cov, n_sigma);
            rec.ratio = ratio.ratio;
            rec.ratio_se = ratio.ratio_se;
            if (!ratio.vacuous) {
                any_finite = true;
                if (ratio.ratio < min_ratio) {
                    min_ratio = ratio.ratio;
                    min_ratio_se = ratio.ratio_se;
                }
                if (rec.fwd.mean <= n_sigma * rec.fwd.se && rec.rev.mean > n_sigma * rec.rev.se) {
                    violation = true;
                }
            }
            report.pairs.push_back(rec);
        }
    }

    if (!any_finite) {
        report.eta_hat = kInf;
        report.eta_hat_se = 0.0;
        report.eta_certified = 1.0;
        report.verdict = "vacuous";
    } else {
        report.eta_hat = min_ratio;
        report.eta_hat_se = min_ratio_se;
        report.eta_certified = std::clamp(min_ratio - n_sigma * min_ratio_se, 0.0, 1.0);
        report.verdict = violation ? "violation-suspected" : "sub-symmetric";
        if (violation) report.eta_certified = 0.0;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Weak reciprocity
// ---------------------------------------------------------------------------

AdaptedSequenceRule AdaptedSequenceRule::sorted_prefix(int ell) {
    AdaptedSequenceRule r;
    r.kind = Kind::SortedPrefix;
    r.ell = ell;
    r.name = "sorted-prefix-" + std::to_string(ell);
    return r;
}

AdaptedSequenceRule AdaptedSequenceRule::sorted_suffix(int ell) {
    AdaptedSequenceRule r;
    r.kind = Kind::SortedSuffix;
    r.ell = ell;
    r.name = "sorted-suffix-" + std::to_string(ell);
    return r;
}

AdaptedSequenceRule AdaptedSequenceRule::constant(const SubsetMask& mask) {
    AdaptedSequenceRule r;
    r.kind = Kind::Constant;
    r.ell = mask.count();
    r.constant_mask = mask;
    r.name = "constant-" + std::to_string(mask.low_bits());
    return r;
}

SubsetMask AdaptedSequenceRule::select(const StateVector& x) const {
    const int m = static_cast<int>(x.size());
    if (ell < 1 || ell > m) throw IndexOutOfRange("rule cardinality outside [1,m]");
    switch (kind) {
        case Kind::SortedPrefix:
        case Kind::SortedSuffix:
            return mask_from_ordering(ordering(x), kind, ell);
        case Kind::Constant:
            return constant_mask;
        case Kind::Custom: {
            if (!custom) throw InvalidArgument("custom rule without a function");
            SubsetMask mask = custom(x);
            if (mask.count() != ell) {
                throw InvalidArgument("custom rule broke regularity: |S| != " + std::to_string(ell));
            }
            return mask;
        }
    }
    throw InvalidArgument("unknown rule kind");
}

double predicted_weak_reciprocity_coefficient(double gamma, double a, int m) {
    if (m < 2) throw InvalidArgument("predicted coefficient: m must be >= 2");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("predicted coefficient: gamma in (0,1]");
    if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument("predicted coefficient: a in (0,1]");
    return gamma * a / (4.0 * m);
}

std::vector<std::pair<AdaptedSequenceRule, AdaptedSequenceRule>> default_rule_pairs(int m) {
    std::vector<std::pair<AdaptedSequenceRule, AdaptedSequenceRule>> out;
    for (int ell = 1; ell <= m - 1; ++ell) {
        out.emplace_back(AdaptedSequenceRule::sorted_prefix(ell),
                         AdaptedSequenceRule::sorted_prefix(ell));
        out.emplace_back(AdaptedSequenceRule::sorted_suffix(ell),
                         AdaptedSequenceRule::sorted_suffix(ell));
    }
    return out;
}

WeakReciprocityReport check_weak_reciprocity(
    const Snapshot& snap,
    const std::vector<std::pair<AdaptedSequenceRule, AdaptedSequenceRule>>& rule_pairs,
    int n_samples, const SeedSpec& seeds, double gamma, double balancedness_a, double n_sigma) {
    const int m = snap.dim();
    if (rule_pairs.empty()) throw InvalidArgument("check_weak_reciprocity: no rules");
    if (n_samples < 2) throw InvalidArgument("check_weak_reciprocity: need at least 2 samples");

    // S(k) is a deterministic function of the frozen state.
    std::vector<SubsetMask> s_now;
    std::vector<SubsetMask> s_now_complement;
    s_now.reserve(rule_pairs.size());
    for (const auto& [rule_k, rule_k1] : rule_pairs) {
        s_now.push_back(rule_k.select(snap.state));
        s_now_complement.push_back(s_now.back().complement());
    }

    using Acc = std::vector<RunningPairMoments>;
    const Acc acc = run_chunked<Acc>(
        n_samples, 256,
        [&](long begin, long end, Acc& a) {
            if (a.empty()) a.assign(rule_pairs.size(), RunningPairMoments{});
            for (long s = begin; s < end; ++s) {
                const StochasticMatrix w = resample_one(snap, static_cast<int>(s), seeds);
                const StateVector x_next = endodyn::apply(w, snap.state);
                for (std::size_t r = 0; r < rule_pairs.size(); ++r) {
                    const SubsetMask s_next = rule_pairs[r].second.select(x_next);
                    const double in = flow(w, s_next.complement(), s_now[r]);
                    const double out = flow(w, s_next, s_now_complement[r]);
                    a[r].add(in, out);
                }
            }
        },
        [](Acc& total, const Acc& part) {
            if (total.empty()) {
                total = part;
                return;
            }
            for (std::size_t i = 0; i < total.size(); ++i) total[i].merge(part[i]);
        });

    WeakReciprocityReport report;
    report.step = snap.step;
    report.n_samples = n_samples;
    report.n_sigma = n_sigma;
    report.gamma = gamma;
    report.balancedness_a = balancedness_a;
    report.predicted_coefficient = predicted_weak_reciprocity_coefficient(gamma, balancedness_a, m);

    for (std::size_t r = 0; r < rule_pairs.size(); ++r) {
        RulePairRecord rec;
        rec.name = rule_pairs[r].first.name + "|" + rule_pairs[r].second.name;
        double cov = 0.0;
        finalize_pair(acc[r], rec.inflow, rec.outflow, cov);
        const RatioEst ratio = make_ratio(rec.inflow.mean, rec.inflow.se, rec.outflow.mean,
                                          rec.outflow.se, cov, n_sigma);
        rec.ratio = ratio.ratio;
        rec.ratio_se = ratio.ratio_se;
        rec.violated =
            !ratio.vacuous && ratio.ratio < report.predicted_coefficient - n_sigma * ratio.ratio_se;
        if (rec.violated) ++report.violation_count;
        report.rules.push_back(std::move(rec));
    }
    report.verdict = report.violation_count == 0 ? "weakly-reciprocal-consistent" : "violated";
    return report;
}

// ---------------------------------------------------------------------------
// V_l martingale probes
// ---------------------------------------------------------------------------

MartingaleReport martingale_test_v_ell(std::span<const Snapshot> probes, int ell, double beta,
                                       int n_samples, const SeedSpec& seeds, bool assert_bound,
                                       double n_sigma) {
    if (probes.empty()) throw InvalidArgument("martingale_test_v_ell: no probes");
    if (n_samples < 2) throw InvalidArgument("martingale_test_v_ell: need at least 2 samples");

    MartingaleReport report;
    report.quantity = "V_" + std::to_string(ell);
    report.asserted = assert_bound;
    report.n_samples = n_samples;
    report.n_sigma = n_sigma;

    for (const Snapshot& snap : probes) {
        const double v_now = v_ell(ordering(snap.state), ell, beta);

        const RunningMoments acc = run_chunked<RunningMoments>(
            n_samples, 256,
            [&](long begin, long end, RunningMoments& a) {
                for (long s = begin; s < end; ++s) {
                    const StochasticMatrix w = resample_one(snap, static_cast<int>(s), seeds);
                    const double v_next = v_ell(ordering(endodyn::apply(w, snap.state)), ell, beta);
                    a.add(v_next - v_now);
                }
            },
            [](RunningMoments& total, const RunningMoments& part) { total.merge(part); });

        MartingaleProbe probe;
        probe.step = snap.step;
        probe.value = v_now;
        probe.increment_mean = acc.mean;
        probe.increment_se = acc.se();
        probe.violation =
            assert_bound && probe.increment_mean < -(n_sigma * probe.increment_se + 1e-12);
        if (probe.violation) ++report.violation_count;
        report.probes.push_back(probe);
    }

    if (!assert_bound) {
        report.verdict = "reported (bound not asserted)";
    } else {
        report.verdict = report.violation_count == 0 ? "submartingale-consistent" : "violated";
    }
    return report;
}

// ---------------------------------------------------------------------------
// Absolute probability process
// ---------------------------------------------------------------------------

std::vector<AbsProbEstimate> estimate_abs_prob_multi(const Snapshot& snap,
                                                     std::span<const int> horizons, int n_futures,
                                                     const SeedSpec& seeds) {
    if (horizons.empty()) throw InvalidArgument("estimate_abs_prob: no horizons");
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        if (horizons[h] < 1) throw InvalidArgument("estimate_abs_prob: horizon must be >= 1");
        if (h > 0 && horizons[h] <= horizons[h - 1]) {
            throw InvalidArgument("estimate_abs_prob: horizons must be ascending");
        }
    }
    if (n_futures < 1) throw InvalidArgument("estimate_abs_prob: n_futures must be >= 1");
    const PiAcc acc = run_pi_futures(*snap.model, snap.state, horizons, n_futures, seeds,
                                     "absprob/" + std::to_string(snap.step));
    return finalize_pi(acc, snap.step, horizons, n_futures, snap.dim());
}

AbsProbEstimate estimate_abs_prob(const Snapshot& snap, int horizon, int n_futures,
                                  const SeedSpec& seeds) {
    const int hs[1] = {horizon};
    return estimate_abs_prob_multi(snap, hs, n_futures, seeds)[0];
}

// ---------------------------------------------------------------------------
// Lyapunov family
// ---------------------------------------------------------------------------

LyapunovFunction lyapunov_catalog(const std::string& name) {
    LyapunovFunction f;
    f.name = name;
    f.from_catalog = true;
    if (name == "square") {
        f.g = [](double t) { return t * t; };
        f.gprime = [](double t) { return 2.0 * t; };
    } else if (name == "abs") {
        f.g = [](double t) { return std::abs(t); };
        f.gprime = [](double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); };
    } else if (name == "exp") {
        f.g = [](double t) { return std::exp(t); };
        f.gprime = [](double t) { return std::exp(t); };
    } else if (name == "linear") {
        f.g = [](double t) { return t; };
        f.gprime = [](double) { return 1.0; };
    } else {
        throw NonConvexCatalog("unknown convex catalog function: " + name);
    }
    return f;
}

namespace {

double jensen_gap(const std::vector<double>& pi, const StateVector& x,
                  const LyapunovFunction& g) {
    double lin = 0.0, mix = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lin += pi[i] * g.g(x[i]);
        mix += pi[i] * x[i];
    }
    return lin - g.g(mix);
}

// Delta-method SE of the Jensen gap under uncertainty in pi (covariance of
// the mean estimate), gradient d V / d pi_i = g(x_i) - g'(pi^T x) x_i.
double jensen_gap_se(const RunningVectorMoments& pi_stats, const StateVector& x,
                     const LyapunovFunction& g) {
    if (pi_stats.n < 2) return 0.0;
    const int m = static_cast<int>(x.size());
    double mix = 0.0;
    for (int i = 0; i < m; ++i) mix += pi_stats.mean[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    const double slope = g.gprime(mix);
    std::vector<double> grad(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        grad[static_cast<std::size_t>(i)] = g.g(x[static_cast<std::size_t>(i)]) - slope * x[static_cast<std::size_t>(i)];
    }
    double quad = 0.0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            quad += grad[static_cast<std::size_t>(i)] * pi_stats.cov_of_mean(i, j) *
                    grad[static_cast<std::size_t>(j)];
        }
    }
    if (quad < 0.0) quad = 0.0;
    return std::sqrt(quad);
}

}  // namespace

LyapunovReport lyapunov_test(std::span<const Snapshot> probes, const LyapunovFunction& g,
                             int horizon, int n_pi, int n_outer, int n_inner,
                             const SeedSpec& seeds, double n_sigma) {
    if (probes.empty()) throw InvalidArgument("lyapunov_test: no probes");
    if (!g.g) throw InvalidArgument("lyapunov_test: missing g");
    if (horizon < 1 || n_pi < 2 || n_outer < 2 || n_inner < 1) {
        throw InvalidArgument("lyapunov_test: bad sample counts");
    }

    LyapunovReport report;
    report.g_name = g.name;
    report.horizon = horizon;
    report.n_pi = n_pi;
    report.n_outer = n_outer;
    report.n_inner = n_inner;
    report.n_sigma = n_sigma;
    report.g_from_catalog = g.from_catalog;

    const int hs[1] = {horizon};

    for (const Snapshot& snap : probes) {
        const int m = snap.dim();
        const std::string tag = std::to_string(snap.step);

        // pi at the probe time.
        const PiAcc now_acc =
            run_pi_futures(*snap.model, snap.state, hs, n_pi, seeds, "lyap-pi/" + tag);
        const std::vector<AbsProbEstimate> now = finalize_pi(now_acc, snap.step, hs, n_pi, m);
        const std::vector<double>& pi_now = now[0].pi_mean;

        LyapunovProbe probe;
        probe.step = snap.step;
        probe.pi_now = pi_now;
        probe.v_now = jensen_gap(pi_now, snap.state, g);
        probe.v_now_se = jensen_gap_se(now_acc.pi[0], snap.state, g);

        // One-step-ahead side: draws of W(k+1), each with its own advanced
        // weight estimate.
        struct Acc {
            RunningMoments v;
            RunningVectorMoments w_row;  // pi(k+1)^T W(k+1) per draw
        };
        const Acc acc = run_chunked<Acc>(
            n_outer, 8,
            [&](long begin, long end, Acc& a) {
                a.w_row.init(m);
                std::vector<double> row(static_cast<std::size_t>(m));
                for (long s = begin; s < end; ++s) {
                    auto model = snap.model->clone();
                    RandomStream rng =
                        seeds.child_stream("lyap-outer/" + tag + "/" + std::to_string(s));
                    const StochasticMatrix w = model->sample_next(snap.state, rng);
                    const StateVector x_next = endodyn::apply(w, snap.state);
                    const PiAcc inner = run_pi_futures(
                        *model, x_next, hs, n_inner, seeds,
                        "lyap-inner/" + tag + "/" + std::to_string(s));
                    const std::vector<double>& pi_next = inner.pi[0].mean;
                    a.v.add(jensen_gap(pi_next, x_next, g));
                    for (int j = 0; j < m; ++j) {
                        double dot = 0.0;
                        for (int i = 0; i < m; ++i) {
                            dot += pi_next[static_cast<std::size_t>(i)] * w(i, j);
                        }
                        row[static_cast<std::size_t>(j)] = dot;
                    }
                    a.w_row.add(row);
                }
            },
            [](Acc& total, const Acc& part) {
                total.v.merge(part.v);
                total.w_row.merge(part.w_row);
            });

        probe.v_next_mean = acc.v.mean;
        probe.v_next_se = acc.v.se();

        // One-step identity residual and its SE at the worst entry.
        probe.identity_residual = 0.0;
        probe.identity_residual_se = 0.0;
        for (int j = 0; j < m; ++j) {
            const double se_w = acc.w_row.se(j);
            const double resid =
                std::abs(acc.w_row.mean[static_cast<std::size_t>(j)] - pi_now[static_cast<std::size_t>(j)]);
            if (resid > probe.identity_residual) {
                probe.identity_residual = resid;
                const double se_pi = now[0].pi_se[static_cast<std::size_t>(j)];
                probe.identity_residual_se = std::sqrt(se_w * se_w + se_pi * se_pi);
            }
        }

        const double combined_se =
            std::sqrt(probe.v_now_se * probe.v_now_se + probe.v_next_se * probe.v_next_se);
        probe.violation = probe.v_next_mean > probe.v_now + n_sigma * combined_se + 1e-12;
        if (probe.violation) ++report.violation_count;
        report.probes.push_back(std::move(probe));
    }

    report.verdict =
        report.violation_count == 0 ? "supermartingale-consistent" : "violated";
    return report;
}

// ---------------------------------------------------------------------------
// Gossip pair probabilities
// ---------------------------------------------------------------------------

namespace {

// Gossip-shaped matrix -> (sender, receiver); identity -> no-op; anything
// else is undecodable.
enum class DecodeKind { Pair, Noop, Other };

DecodeKind decode_gossip(const StochasticMatrix& w, int& sender, int& receiver) {
    const int m = w.dim();
    int special_row = -1;
    for (int i = 0; i < m; ++i) {
        bool identity_row = true;
        for (int j = 0; j < m; ++j) {
            if (w(i, j) != (i == j ? 1.0 : 0.0)) {
                identity_row = false;
                break;
            }
        }
        if (identity_row) continue;
        if (special_row >= 0) return DecodeKind::Other;
        special_row = i;
    }
    if (special_row < 0) return DecodeKind::Noop;
    int off = -1;
    for (int j = 0; j < m; ++j) {
        if (j == special_row) continue;
        if (w(special_row, j) > 0.0) {
            if (off >= 0) return DecodeKind::Other;
            off = j;
        }
    }
    if (off < 0) return DecodeKind::Other;
    receiver = special_row;
    sender = off;
    return DecodeKind::Pair;
}

}  // namespace

PairProbabilityReport check_pair_probability(const Snapshot& snap, int n_samples,
                                             const SeedSpec& seeds) {
    const int m = snap.dim();
    if (n_samples < 2) throw InvalidArgument("check_pair_probability: need at least 2 samples");

    struct Acc {
        std::vector<long> counts;  // ordered (sender, receiver) -> count
        long noop = 0;
        long other = 0;
    };
    const Acc acc = run_chunked<Acc>(
        n_samples, 256,
        [&](long begin, long end, Acc& a) {
            if (a.counts.empty()) {
                a.counts.assign(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0);
            }
            for (long s = begin; s < end; ++s) {
                const StochasticMatrix w = resample_one(snap, static_cast<int>(s), seeds);
                int sender = -1, receiver = -1;
                switch (decode_gossip(w, sender, receiver)) {
                    case DecodeKind::Pair:
                        ++a.counts[static_cast<std::size_t>(sender) * static_cast<std::size_t>(m) +
                                   static_cast<std::size_t>(receiver)];
                        break;
                    case DecodeKind::Noop:
                        ++a.noop;
                        break;
                    case DecodeKind::Other:
                        ++a.other;
                        break;
                }
            }
        },
        [](Acc& total, const Acc& part) {
            if (total.counts.empty()) {
                total = part;
                return;
            }
            for (std::size_t i = 0; i < total.counts.size(); ++i) total.counts[i] += part.counts[i];
            total.noop += part.noop;
            total.other += part.other;
        });

    PairProbabilityReport report;
    report.step = snap.step;
    report.n_samples = n_samples;
    report.n_noop = acc.noop;
    report.n_undecodable = acc.other;

    double min_ratio = kInf;
    bool any = false;
    bool violation = false;
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            PairProbabilityRecord rec;
            rec.i = i;
            rec.j = j;
            rec.count_fwd = acc.counts[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                                       static_cast<std::size_t>(j)];
            rec.count_rev = acc.counts[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) +
                                       static_cast<std::size_t>(i)];
            if (rec.count_fwd == 0 && rec.count_rev == 0) {
                rec.ratio = kInf;  // vacuous: the pair never interacts at this state
            } else if (rec.count_fwd == 0 || rec.count_rev == 0) {
                const long seen = std::max(rec.count_fwd, rec.count_rev);
                // A single-direction count that is itself statistically zero
                // stays vacuous; a significant one witnesses ratio 0.
                if (seen >= 9) {
                    rec.ratio = 0.0;
                    violation = true;
                    any = true;
                    min_ratio = 0.0;
                } else {
                    rec.ratio = kInf;
                }
            } else {
                const double fwd = static_cast<double>(rec.count_fwd);
                const double rev = static_cast<double>(rec.count_rev);
                rec.ratio = std::min(fwd / rev, rev / fwd);
                any = true;
                min_ratio = std::min(min_ratio, rec.ratio);
            }
            report.pairs.push_back(rec);
        }
    }

    if (!any) {
        report.alpha_hat = kInf;
        report.verdict = "vacuous";
    } else {
        report.alpha_hat = min_ratio;
        report.verdict = violation ? "violation-suspected" : "satisfied";
    }
    return report;
}

}  // namespace endodyn
