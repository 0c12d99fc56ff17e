#include "endodyn/commands.hpp"

#include "endodyn/config.hpp"
#include "endodyn/diagnostics.hpp"
#include "endodyn/engine.hpp"
#include "endodyn/errors.hpp"
#include "endodyn/io.hpp"
#include "endodyn/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace endodyn {

namespace {

using nlohmann::json;

json num_or_string(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
}

json partition_json(const ClusterPartition& p) {
    json blocks = json::array();
    for (const auto& block : p.blocks) {
        json members = json::array();
        for (int i : block) members.push_back(i + 1);  // 1-based in reports
        blocks.push_back(members);
    }
    return blocks;
}

std::string relation_name(PartitionRelation r) {
    switch (r) {
        case PartitionRelation::Equal: return "equal";
        case PartitionRelation::ARefinesB: return "first-refines-second";
        case PartitionRelation::BRefinesA: return "second-refines-first";
        case PartitionRelation::Mismatch: return "mismatch";
    }
    return "mismatch";
}

json members_json(std::uint64_t bits, int m) {
    json out = json::array();
    for (int i = 0; i < m; ++i) {
        if ((bits >> i) & 1u) out.push_back(i + 1);
    }
    return out;
}

RunConfig load_with_overrides(const CliOptions& opts) {
    RunConfig rc = load_config(opts.config_path);
    if (opts.seed_override) {
        rc.master_seed = *opts.seed_override;
        rc.raw["master_seed"] = *opts.seed_override;
    }
    if (opts.out_dir) rc.output_dir = *opts.out_dir;
    return rc;
}

std::vector<long> probe_steps(long steps, int probes) {
    const long count = std::min<long>(probes, steps);
    std::vector<long> out;
    for (long j = 1; j <= count; ++j) {
        const long k = steps * j / count;
        if (out.empty() || out.back() != k) out.push_back(k);
    }
    return out;
}

struct ReplicaSummary {
    int replica = 0;
    json body;
};

ReplicaSummary summarize_replica(int replica, const Trajectory& traj,
                                 const DiagnosticsConfig& dc) {
    ReplicaSummary rs;
    rs.replica = replica;
    const ConvergenceScan scan =
        ordering_convergence(traj, dc.ordering_window, dc.ordering_tol);
    const ClusterPartition clusters =
        consensus_clusters(traj.final_state(), dc.tol_cluster);
    const ClusterPartition comps = components(flow_graph(traj, dc.tau));
    const PartitionComparison cmp = compare_partitions(clusters, comps);

    json final_state = json::array();
    for (double v : traj.final_state()) final_state.push_back(v);

    rs.body = json{
        {"replica", replica},
        {"final_state", final_state},
        {"ordering",
         {{"converged", scan.converged},
          {"converged_step", scan.step},
          {"trailing_max_drift", scan.trailing_max}}},
        {"clusters", partition_json(clusters)},
        {"flow_components", partition_json(comps)},
        {"partition_comparison",
         {{"relation", relation_name(cmp.relation)}, {"detail", cmp.detail}}},
    };
    return rs;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const CliOptions& opts) {
    return run_guarded([&]() -> int {
        const RunConfig rc = load_with_overrides(opts);
        if (rc.sweep) throw ConfigError("sweep block present; use the sweep command");
        const DiagnosticsConfig dc = rc.diagnostics.value_or(DiagnosticsConfig{});
        const auto model = build_model(rc.model);
        const SeedSpec seeds{rc.master_seed};
        const std::filesystem::path out_dir(rc.output_dir);
        std::filesystem::create_directories(out_dir);

        using Acc = std::vector<ReplicaSummary>;
        Acc summaries = run_chunked<Acc>(
            rc.replicas, 1,
            [&](long begin, long end, Acc& acc) {
                for (long r = begin; r < end; ++r) {
                    const StateVector x0 =
                        build_x0(rc.x0, rc.model.m, seeds, static_cast<int>(r));
                    SimulateOptions so;
                    so.retain_threshold = rc.retain_threshold;
                    so.stream_label = "traj/" + std::to_string(r);
                    const Trajectory traj = simulate(*model, x0, rc.steps, seeds, so);
                    atomic_write(out_dir / ("trajectory_r" + std::to_string(r) + ".csv"),
                                 trajectory_csv(traj));
                    acc.push_back(summarize_replica(static_cast<int>(r), traj, dc));
                }
            },
            [](Acc& total, const Acc& part) {
                total.insert(total.end(), part.begin(), part.end());
            });

        json replicas = json::array();
        for (const auto& rs : summaries) replicas.push_back(rs.body);
        const json summary{
            {"version", kVersionTag},
            {"schema_version", kSchemaVersion},
            {"command", "simulate"},
            {"master_seed", rc.master_seed},
            {"config", rc.raw},
            {"replicas", replicas},
        };
        atomic_write(out_dir / "summary.json", summary.dump(2) + "\n");
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

namespace {

json flow_estimate_json(const FlowEstimate& e) {
    return json{{"mean", e.mean}, {"se", e.se}};
}

json balancedness_json(const BalancednessReport& r, int m) {
    json subsets = json::array();
    const bool include_records = r.subsets.size() <= 256;
    if (include_records) {
        for (const auto& rec : r.subsets) {
            subsets.push_back(json{
                {"members", members_json(rec.subset_bits, m)},
                {"inflow", flow_estimate_json(rec.inflow)},
                {"outflow", flow_estimate_json(rec.outflow)},
                {"ratio", num_or_string(rec.ratio)},
                {"ratio_se", rec.ratio_se},
            });
        }
    }
    return json{
        {"step", r.step},
        {"n_samples", r.n_samples},
        {"alpha_hat", num_or_string(r.alpha_hat)},
        {"alpha_hat_se", r.alpha_hat_se},
        {"alpha_certified", r.alpha_certified},
        {"verdict", r.verdict},
        {"subsets_included", include_records},
        {"subsets", subsets},
    };
}

json subsymmetry_json(const SubsymmetryReport& r) {
    json pairs = json::array();
    if (r.pairs.size() <= 512) {
        for (const auto& p : r.pairs) {
            pairs.push_back(json{
                {"i", p.i + 1},
                {"j", p.j + 1},
                {"fwd", flow_estimate_json(p.fwd)},
                {"rev", flow_estimate_json(p.rev)},
                {"ratio", num_or_string(p.ratio)},
                {"ratio_se", p.ratio_se},
            });
        }
    }
    return json{
        {"step", r.step},
        {"n_samples", r.n_samples},
        {"eta_hat", num_or_string(r.eta_hat)},
        {"eta_hat_se", r.eta_hat_se},
        {"eta_certified", r.eta_certified},
        {"verdict", r.verdict},
        {"note", SubsymmetryReport::kNote},
        {"pairs", pairs},
    };
}

json weak_reciprocity_json(const WeakReciprocityReport& r) {
    json rules = json::array();
    for (const auto& rec : r.rules) {
        rules.push_back(json{
            {"rule", rec.name},
            {"inflow", flow_estimate_json(rec.inflow)},
            {"outflow", flow_estimate_json(rec.outflow)},
            {"ratio", num_or_string(rec.ratio)},
            {"ratio_se", rec.ratio_se},
            {"violated", rec.violated},
        });
    }
    return json{
        {"step", r.step},
        {"n_samples", r.n_samples},
        {"gamma", r.gamma},
        {"balancedness_a", r.balancedness_a},
        {"predicted_coefficient", r.predicted_coefficient},
        {"violations", r.violation_count},
        {"verdict", r.verdict},
        {"scope_note", WeakReciprocityReport::kScopeNote},
        {"rules", rules},
    };
}

json martingale_json(const MartingaleReport& r) {
    json probes = json::array();
    for (const auto& p : r.probes) {
        probes.push_back(json{
            {"step", p.step},
            {"value", p.value},
            {"increment_mean", p.increment_mean},
            {"increment_se", p.increment_se},
            {"violation", p.violation},
        });
    }
    return json{
        {"quantity", r.quantity},
        {"asserted", r.asserted},
        {"n_samples", r.n_samples},
        {"violations", r.violation_count},
        {"verdict", r.verdict},
        {"probes", probes},
    };
}

json abs_prob_json(const AbsProbEstimate& e) {
    json pi = json::array();
    json se = json::array();
    for (double v : e.pi_mean) pi.push_back(v);
    for (double v : e.pi_se) se.push_back(v);
    return json{
        {"step", e.step},
        {"horizon", e.horizon},
        {"n_futures", e.n_futures},
        {"pi", pi},
        {"pi_se", se},
        {"column_spread", e.column_spread},
        {"column_spread_half", e.column_spread_half},
    };
}

json lyapunov_json(const LyapunovReport& r, bool asserted) {
    json probes = json::array();
    for (const auto& p : r.probes) {
        json pi = json::array();
        for (double v : p.pi_now) pi.push_back(v);
        probes.push_back(json{
            {"step", p.step},
            {"v_now", p.v_now},
            {"v_now_se", p.v_now_se},
            {"v_next_mean", p.v_next_mean},
            {"v_next_se", p.v_next_se},
            {"violation", p.violation},
            {"pi", pi},
            {"identity_residual", p.identity_residual},
            {"identity_residual_se", p.identity_residual_se},
        });
    }
    return json{
        {"g", r.g_name},
        {"g_from_catalog", r.g_from_catalog},
        {"horizon", r.horizon},
        {"n_pi", r.n_pi},
        {"n_outer", r.n_outer},
        {"n_inner", r.n_inner},
        {"asserted", asserted},
        {"violations", r.violation_count},
        {"verdict", r.verdict},
        {"probes", probes},
    };
}

json pair_probability_json(const PairProbabilityReport& r) {
    json pairs = json::array();
    for (const auto& p : r.pairs) {
        pairs.push_back(json{
            {"i", p.i + 1},
            {"j", p.j + 1},
            {"count_fwd", p.count_fwd},
            {"count_rev", p.count_rev},
            {"ratio", num_or_string(p.ratio)},
        });
    }
    return json{
        {"step", r.step},
        {"n_samples", r.n_samples},
        {"n_noop", r.n_noop},
        {"n_undecodable", r.n_undecodable},
        {"alpha_hat", num_or_string(r.alpha_hat)},
        {"verdict", r.verdict},
        {"pairs", pairs},
    };
}

}  // namespace

int cmd_diagnose(const CliOptions& opts) {
    return run_guarded([&]() -> int {
        const RunConfig rc = load_with_overrides(opts);
        if (rc.sweep) throw ConfigError("sweep block present; use the sweep command");
        if (!rc.diagnostics) throw ConfigError("diagnose requires a diagnostics block");
        const DiagnosticsConfig& dc = *rc.diagnostics;
        const auto model = build_model(rc.model);
        const int m = rc.model.m;
        const SeedSpec seeds{rc.master_seed};
        const std::filesystem::path out_dir(rc.output_dir);
        std::filesystem::create_directories(out_dir);

        std::set<std::string> requested(dc.checks.begin(), dc.checks.end());
        if (requested.empty()) {
            requested = {"balancedness",        "subsymmetry",
                         "weak_reciprocity",    "martingale_v_ell",
                         "lyapunov",            "abs_prob",
                         "flow_graph_vs_clusters", "ordering_convergence",
                         "symmetric_functions"};
            if (rc.model.kind == "gossip") requested.insert("pair_probability");
        }
        const bool need_balancedness = requested.contains("balancedness") ||
                                       requested.contains("weak_reciprocity") ||
                                       requested.contains("martingale_v_ell");

        const StateVector x0 = build_x0(rc.x0, m, seeds, 0);
        SimulateOptions so;
        so.retain_threshold = rc.retain_threshold;
        so.stream_label = "traj/0";
        so.snapshot_steps = probe_steps(rc.steps, dc.probes);
        const Trajectory traj = simulate(*model, x0, rc.steps, seeds, so);
        const std::span<const Snapshot> probes(traj.snapshots);

        json checks;
        std::vector<std::string> hard_reasons;
        std::vector<std::string> warnings;
        const bool claims = model->claims_balancedness();

        // Trajectory-level checks -------------------------------------------
        const ConvergenceScan scan =
            ordering_convergence(traj, dc.ordering_window, dc.ordering_tol);
        if (requested.contains("ordering_convergence")) {
            const ConvergenceScan xs =
                state_convergence(traj, dc.ordering_window, dc.ordering_tol);
            checks["ordering_convergence"] = json{
                {"window", dc.ordering_window},
                {"tol", dc.ordering_tol},
                {"ordering",
                 {{"converged", scan.converged},
                  {"converged_step", scan.step},
                  {"trailing_max_drift", scan.trailing_max}}},
                {"state",
                 {{"converged", xs.converged},
                  {"converged_step", xs.step},
                  {"trailing_max_drift", xs.trailing_max}}},
            };
            if (!scan.converged) warnings.push_back("ordering drift above tolerance");
        }

        if (requested.contains("symmetric_functions")) {
            json series = json::array();
            for (const std::string& name : {std::string("sum"), std::string("range")}) {
                const SymmetricSeries s =
                    symmetric_function_series(traj, name, dc.ordering_window, dc.ordering_tol);
                series.push_back(json{
                    {"name", s.name},
                    {"converged", s.converged},
                    {"converged_step", s.step},
                    {"initial", s.values.front()},
                    {"final", s.values.back()},
                });
            }
            checks["symmetric_functions"] = json{{"series", series}};
        }

        if (requested.contains("flow_graph_vs_clusters")) {
            const ClusterPartition clusters =
                consensus_clusters(traj.final_state(), dc.tol_cluster);
            const ClusterPartition comps = components(flow_graph(traj, dc.tau));
            const PartitionComparison cmp = compare_partitions(clusters, comps);
            json robustness = json::array();
            bool stable = true;
            for (double factor : {0.5, 2.0}) {
                const ClusterPartition alt = components(flow_graph(traj, dc.tau * factor));
                const PartitionComparison acmp = compare_partitions(clusters, alt);
                robustness.push_back(json{{"tau", dc.tau * factor},
                                          {"relation", relation_name(acmp.relation)}});
                stable = stable && acmp.relation == cmp.relation;
            }
            checks["flow_graph_vs_clusters"] = json{
                {"tau", dc.tau},
                {"tol_cluster", dc.tol_cluster},
                {"ordering_converged", scan.converged},
                {"clusters", partition_json(clusters)},
                {"components", partition_json(comps)},
                {"relation", relation_name(cmp.relation)},
                {"detail", cmp.detail},
                {"tau_robustness", robustness},
                {"tau_stable", stable},
            };
            if (!scan.converged) {
                warnings.push_back("cluster comparison on a run that has not converged");
            } else if (cmp.relation != PartitionRelation::Equal) {
                warnings.push_back("consensus clusters differ from flow-graph components");
            }
        }

        // Probe-level checks ------------------------------------------------
        double a_global = 1.0;
        if (need_balancedness) {
            json per_probe = json::array();
            double alpha_min = std::numeric_limits<double>::infinity();
            bool violated = false;
            for (const Snapshot& snap : probes) {
                const BalancednessReport r =
                    check_balancedness(snap, dc.n_samples, seeds, dc.n_sigma);
                per_probe.push_back(balancedness_json(r, m));
                a_global = std::min(a_global, r.alpha_certified);
                alpha_min = std::min(alpha_min, r.alpha_hat);
                violated = violated || r.verdict == "violation-suspected";
            }
            checks["balancedness"] = json{
                {"requested", requested.contains("balancedness")},
                {"alpha_hat_min", num_or_string(alpha_min)},
                {"alpha_certified", a_global},
                {"verdict", violated ? "violation-suspected" : "balanced"},
                {"per_probe", per_probe},
            };
            if (violated && claims) {
                hard_reasons.push_back("balancedness violated for a model that declares it");
            }
        }

        if (requested.contains("subsymmetry")) {
            json per_probe = json::array();
            double eta_min = std::numeric_limits<double>::infinity();
            bool violated = false;
            for (const Snapshot& snap : probes) {
                const SubsymmetryReport r =
                    check_subsymmetry(snap, dc.n_samples, seeds, dc.n_sigma);
                per_probe.push_back(subsymmetry_json(r));
                eta_min = std::min(eta_min, r.eta_hat);
                violated = violated || r.verdict == "violation-suspected";
            }
            checks["subsymmetry"] = json{
                {"eta_hat_min", num_or_string(eta_min)},
                {"verdict", violated ? "violation-suspected" : "sub-symmetric"},
                {"per_probe", per_probe},
            };
            if (violated) warnings.push_back("entrywise sub-symmetry violated");
        }

        double wr_coefficient = 0.0;
        if (requested.contains("weak_reciprocity") || requested.contains("martingale_v_ell")) {
            const double gamma = model->diagonal_bound();
            wr_coefficient =
                a_global > 0.0 ? predicted_weak_reciprocity_coefficient(gamma, a_global, m) : 0.0;
            if (requested.contains("weak_reciprocity")) {
                if (a_global <= 0.0) {
                    checks["weak_reciprocity"] = json{
                        {"skipped", true},
                        {"reason", "no positive certified balancedness coefficient"},
                    };
                    warnings.push_back("weak reciprocity skipped: balancedness not certified");
                } else {
                    const auto rule_pairs = default_rule_pairs(m);
                    json per_probe = json::array();
                    int violations = 0;
                    for (const Snapshot& snap : probes) {
                        const WeakReciprocityReport r = check_weak_reciprocity(
                            snap, rule_pairs, dc.n_samples, seeds, gamma, a_global, dc.n_sigma);
                        per_probe.push_back(weak_reciprocity_json(r));
                        violations += r.violation_count;
                    }
                    checks["weak_reciprocity"] = json{
                        {"gamma", gamma},
                        {"balancedness_a", a_global},
                        {"predicted_coefficient", wr_coefficient},
                        {"violations", violations},
                        {"verdict", violations == 0 ? "weakly-reciprocal-consistent" : "violated"},
                        {"per_probe", per_probe},
                    };
                    if (violations > 0 && claims) {
                        hard_reasons.push_back("weak reciprocity bound violated");
                    }
                }
            }
        }

        if (requested.contains("martingale_v_ell")) {
            const bool certified = claims && wr_coefficient > 0.0;
            double beta = dc.v_ell_beta;
            bool asserted = certified;
            if (beta <= 0.0) {
                beta = certified ? std::min(0.5, wr_coefficient / 2.0) : 0.25;
            } else if (!(beta <= wr_coefficient / 2.0)) {
                asserted = false;  // user beta above the certificate: report only
            }
            std::vector<int> ells = dc.v_ell_values;
            if (ells.empty()) {
                for (int ell = 1; ell <= m; ++ell) ells.push_back(ell);
            }
            json per_ell = json::array();
            int violations = 0;
            for (int ell : ells) {
                if (ell < 1 || ell > m) throw ConfigError("diagnostics.v_ell_values: ell outside [1,m]");
                const MartingaleReport r = martingale_test_v_ell(
                    probes, ell, beta, dc.n_samples, seeds, asserted, dc.n_sigma);
                json entry = martingale_json(r);
                entry["ell"] = ell;
                per_ell.push_back(entry);
                violations += r.violation_count;
            }
            checks["martingale_v_ell"] = json{
                {"beta", beta},
                {"asserted", asserted},
                {"violations", violations},
                {"verdict", !asserted          ? "reported (bound not asserted)"
                            : violations == 0 ? "submartingale-consistent"
                                              : "violated"},
                {"per_ell", per_ell},
            };
            if (violations > 0 && asserted) {
                hard_reasons.push_back("V_l submartingale inequality violated");
            }
        }

        const int horizon = dc.abs_prob_horizon > 0
                                ? dc.abs_prob_horizon
                                : Defaults::abs_prob_horizon_per_agent * m;

        if (requested.contains("abs_prob")) {
            json per_probe = json::array();
            for (const Snapshot& snap : probes) {
                per_probe.push_back(abs_prob_json(
                    estimate_abs_prob(snap, horizon, dc.n_samples, seeds)));
            }
            checks["abs_prob"] = json{{"horizon", horizon}, {"per_probe", per_probe}};
        }

        if (requested.contains("lyapunov")) {
            const LyapunovFunction g = lyapunov_catalog(dc.lyapunov_g);
            const int n_outer = dc.n_outer > 0 ? dc.n_outer : std::max(50, dc.n_samples / 20);
            const int n_inner =
                dc.n_inner > 0 ? dc.n_inner : std::max(1, dc.n_samples / n_outer);
            const LyapunovReport r = lyapunov_test(probes, g, horizon, dc.n_samples, n_outer,
                                                   n_inner, seeds, dc.n_sigma);
            checks["lyapunov"] = lyapunov_json(r, claims);
            if (r.violation_count > 0 && claims) {
                hard_reasons.push_back("Lyapunov supermartingale inequality violated");
            }
        }

        if (requested.contains("pair_probability")) {
            json per_probe = json::array();
            double alpha_min = std::numeric_limits<double>::infinity();
            bool violated = false;
            for (const Snapshot& snap : probes) {
                const PairProbabilityReport r =
                    check_pair_probability(snap, dc.n_samples, seeds);
                per_probe.push_back(pair_probability_json(r));
                alpha_min = std::min(alpha_min, r.alpha_hat);
                violated = violated || r.verdict == "violation-suspected";
            }
            checks["pair_probability"] = json{
                {"alpha_hat_min", num_or_string(alpha_min)},
                {"verdict", violated ? "violation-suspected" : "satisfied"},
                {"per_probe", per_probe},
            };
            if (violated && claims) {
                hard_reasons.push_back("pair-probability condition violated");
            }
        }

        json steps_json = json::array();
        for (const Snapshot& snap : probes) steps_json.push_back(snap.step);

        const json report{
            {"version", kVersionTag},
            {"schema_version", kSchemaVersion},
            {"command", "diagnose"},
            {"master_seed", rc.master_seed},
            {"config", rc.raw},
            {"model",
             {{"kind", rc.model.kind},
              {"m", m},
              {"diagonal_bound", model->diagonal_bound()},
              {"claims_balancedness", claims}}},
            {"probe_steps", steps_json},
            {"checks", checks},
            {"verdicts",
             {{"hard_violation", !hard_reasons.empty()},
              {"reasons", hard_reasons},
              {"warnings", warnings}}},
        };
        atomic_write(out_dir / "diagnostics.json", report.dump(2) + "\n");
        return hard_reasons.empty() ? kExitOk : kExitViolation;
    });
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

namespace {

void set_path(json& doc, const std::string& dotted, double value) {
    json* node = &doc;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw ConfigError("sweep.parameter: empty path segment");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) {
            throw ConfigError("sweep.parameter: path '" + dotted + "' not found");
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

}  // namespace

int cmd_sweep(const CliOptions& opts) {
    return run_guarded([&]() -> int {
        const RunConfig base = load_with_overrides(opts);
        if (!base.sweep) throw ConfigError("sweep command requires a sweep block");
        const SweepConfig& sc = *base.sweep;
        const DiagnosticsConfig dc = base.diagnostics.value_or(DiagnosticsConfig{});
        const std::filesystem::path out_dir(base.output_dir);
        std::filesystem::create_directories(out_dir);

        struct Combo {
            double value;
            std::uint64_t seed;
        };
        std::vector<Combo> combos;
        for (double v : sc.values) {
            for (std::uint64_t s : sc.seeds) combos.push_back({v, s});
        }

        using Acc = std::vector<std::string>;
        Acc rows = run_chunked<Acc>(
            static_cast<long>(combos.size()), 1,
            [&](long begin, long end, Acc& acc) {
                for (long c = begin; c < end; ++c) {
                    const Combo& combo = combos[static_cast<std::size_t>(c)];
                    json doc = base.raw;
                    doc.erase("sweep");
                    set_path(doc, sc.parameter, combo.value);
                    doc["master_seed"] = combo.seed;
                    RunConfig rc = parse_config(doc);
                    const auto model = build_model(rc.model);
                    const SeedSpec seeds{rc.master_seed};
                    const StateVector x0 = build_x0(rc.x0, rc.model.m, seeds, 0);
                    SimulateOptions so;
                    so.retain_threshold = rc.retain_threshold;
                    so.stream_label = "traj/0";
                    const Trajectory traj = simulate(*model, x0, rc.steps, seeds, so);
                    const ConvergenceScan scan =
                        ordering_convergence(traj, dc.ordering_window, dc.ordering_tol);
                    const ClusterPartition clusters =
                        consensus_clusters(traj.final_state(), dc.tol_cluster);
                    const auto [lo, hi] = std::minmax_element(traj.final_state().begin(),
                                                              traj.final_state().end());
                    std::string row = format_g17(combo.value);
                    row += "," + std::to_string(combo.seed);
                    row += "," + std::to_string(scan.converged ? scan.step : -1);
                    row += "," + std::to_string(clusters.n_blocks());
                    row += "," + format_g17(*hi - *lo);
                    acc.push_back(std::move(row));
                }
            },
            [](Acc& total, const Acc& part) {
                total.insert(total.end(), part.begin(), part.end());
            });

        std::string csv = "param,seed,converged_step,n_clusters,final_spread\n";
        for (const std::string& row : rows) csv += row + "\n";
        atomic_write(out_dir / "sweep.csv", csv);
        return kExitOk;
    });
}

}  // namespace endodyn
