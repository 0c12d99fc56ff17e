#include "endodyn/config.hpp"

#include "endodyn/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace endodyn {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& path) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("unknown key '" + path + "." + key + "'");
        }
    }
}

const json* find(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double get_number(const json& obj, const std::string& key, const std::string& path) {
    const json* v = find(obj, key);
    if (!v || !v->is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v->get<double>();
}

double get_number_or(const json& obj, const std::string& key, const std::string& path,
                     double fallback) {
    if (!find(obj, key)) return fallback;
    return get_number(obj, key, path);
}

long get_integer(const json& obj, const std::string& key, const std::string& path) {
    const json* v = find(obj, key);
    if (!v || !v->is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
    return v->get<long>();
}

long get_integer_or(const json& obj, const std::string& key, const std::string& path,
                    long fallback) {
    if (!find(obj, key)) return fallback;
    return get_integer(obj, key, path);
}

std::string get_string(const json& obj, const std::string& key, const std::string& path) {
    const json* v = find(obj, key);
    if (!v || !v->is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return v->get<std::string>();
}

std::vector<double> get_number_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw ConfigError(path + ": expected numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

ScalarSampler parse_sampler(const json& j, const std::string& path) {
    require_object(j, path);
    const std::string kind = get_string(j, "kind", path);
    if (kind == "constant") {
        reject_unknown(j, {"kind", "value"}, path);
        return ScalarSampler::constant(get_number(j, "value", path));
    }
    if (kind == "uniform") {
        reject_unknown(j, {"kind", "lo", "hi"}, path);
        return ScalarSampler::uniform(get_number(j, "lo", path), get_number(j, "hi", path));
    }
    if (kind == "two_point") {
        reject_unknown(j, {"kind", "a", "b", "p_a"}, path);
        return ScalarSampler::two_point(get_number(j, "a", path), get_number(j, "b", path),
                                        get_number(j, "p_a", path));
    }
    throw ConfigError(path + ".kind: unknown sampler kind '" + kind + "'");
}

Schedule parse_schedule(const json& j, const std::string& path) {
    if (j.is_number()) return Schedule::constant(j.get<double>());
    if (j.is_array()) return Schedule::per_step(get_number_array(j, path));
    throw ConfigError(path + ": expected a number or an array of per-step values");
}

ModelConfig parse_model(const json& j) {
    require_object(j, "model");
    ModelConfig mc;
    mc.kind = get_string(j, "kind", "model");
    const long m = get_integer(j, "m", "model");
    if (m < 2) throw ConfigError("model.m: must be >= 2");
    mc.m = static_cast<int>(m);

    if (mc.kind == "hk_sync") {
        reject_unknown(j, {"kind", "m", "epsilon"}, "model");
        mc.epsilon = get_number(j, "epsilon", "model");
    } else if (mc.kind == "hk_async") {
        reject_unknown(j, {"kind", "m", "epsilon", "pick_probabilities"}, "model");
        mc.epsilon = get_number(j, "epsilon", "model");
        if (const json* p = find(j, "pick_probabilities")) {
            if (p->is_string()) {
                if (p->get<std::string>() != "uniform") {
                    throw ConfigError("model.pick_probabilities: expected \"uniform\" or an array");
                }
            } else {
                mc.pick_probabilities = get_number_array(*p, "model.pick_probabilities");
            }
        }
    } else if (mc.kind == "hk_linkfail") {
        reject_unknown(j, {"kind", "m", "epsilon", "failure_prob"}, "model");
        mc.epsilon = get_number(j, "epsilon", "model");
        const json* p = find(j, "failure_prob");
        if (!p) throw ConfigError("model.failure_prob: required for hk_linkfail");
        mc.failure_prob = parse_schedule(*p, "model.failure_prob");
    } else if (mc.kind == "hk_randconf") {
        reject_unknown(j, {"kind", "m", "confidence_sampler"}, "model");
        const json* p = find(j, "confidence_sampler");
        if (!p) throw ConfigError("model.confidence_sampler: required for hk_randconf");
        mc.confidence = parse_sampler(*p, "model.confidence_sampler");
    } else if (mc.kind == "gossip") {
        reject_unknown(j, {"kind", "m", "epsilon", "gamma_lower", "gamma_upper", "gamma_sampler"},
                       "model");
        mc.epsilon = get_number(j, "epsilon", "model");
        mc.gamma_lower = get_number(j, "gamma_lower", "model");
        mc.gamma_upper = get_number(j, "gamma_upper", "model");
        if (const json* p = find(j, "gamma_sampler")) {
            mc.gamma_sampler = parse_sampler(*p, "model.gamma_sampler");
        } else {
            mc.gamma_sampler = ScalarSampler::uniform(mc.gamma_lower, mc.gamma_upper);
        }
    } else if (mc.kind == "fixed") {
        reject_unknown(j, {"kind", "m", "entries", "claims_balancedness"}, "model");
        const json* p = find(j, "entries");
        if (!p || !p->is_array()) throw ConfigError("model.entries: required matrix for fixed");
        for (const auto& row : *p) {
            const auto vals = get_number_array(row, "model.entries");
            if (vals.size() != static_cast<std::size_t>(mc.m)) {
                throw ConfigError("model.entries: each row must have m entries");
            }
            mc.fixed_entries.insert(mc.fixed_entries.end(), vals.begin(), vals.end());
        }
        if (mc.fixed_entries.size() != static_cast<std::size_t>(mc.m) * static_cast<std::size_t>(mc.m)) {
            throw ConfigError("model.entries: expected m rows");
        }
        if (const json* c = find(j, "claims_balancedness")) {
            if (!c->is_boolean()) throw ConfigError("model.claims_balancedness: expected a bool");
            mc.claims_balancedness = c->get<bool>();
        }
    } else {
        throw ConfigError("model.kind: unknown model '" + mc.kind + "'");
    }
    return mc;
}

XZeroSpec parse_x0(const json& j, int m) {
    XZeroSpec spec;
    if (j.is_array()) {
        spec.kind = XZeroSpec::Kind::Explicit;
        spec.values = get_number_array(j, "x0");
        if (spec.values.size() != static_cast<std::size_t>(m)) {
            throw ConfigError("x0: array length must equal model.m");
        }
        for (double v : spec.values) {
            if (!std::isfinite(v)) throw ConfigError("x0: entries must be finite");
        }
        return spec;
    }
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        double lo = 0.0, hi = 0.0;
        char tail = 0;
        if (std::sscanf(s.c_str(), "uniform(%lf,%lf%c", &lo, &hi, &tail) == 3 && tail == ')') {
            spec.kind = XZeroSpec::Kind::Uniform;
        } else if (std::sscanf(s.c_str(), "equally-spaced(%lf,%lf%c", &lo, &hi, &tail) == 3 &&
                   tail == ')') {
            spec.kind = XZeroSpec::Kind::EquallySpaced;
        } else {
            throw ConfigError("x0: expected an array, \"uniform(lo,hi)\" or \"equally-spaced(lo,hi)\"");
        }
        if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
            throw ConfigError("x0: need finite lo <= hi");
        }
        spec.lo = lo;
        spec.hi = hi;
        return spec;
    }
    throw ConfigError("x0: expected an array or a string spec");
}

DiagnosticsConfig parse_diagnostics(const json& j) {
    require_object(j, "diagnostics");
    reject_unknown(j,
                   {"checks", "n_samples", "probes", "abs_prob_horizon", "tau", "tol_cluster",
                    "ordering_window", "ordering_tol", "n_sigma", "v_ell_values", "v_ell_beta",
                    "lyapunov_g", "n_outer", "n_inner"},
                   "diagnostics");
    DiagnosticsConfig dc;
    static const std::set<std::string> known_checks = {
        "balancedness",       "subsymmetry",          "weak_reciprocity",
        "martingale_v_ell",   "lyapunov",             "abs_prob",
        "flow_graph_vs_clusters", "ordering_convergence", "symmetric_functions",
        "pair_probability"};
    if (const json* c = find(j, "checks")) {
        if (!c->is_array()) throw ConfigError("diagnostics.checks: expected an array of names");
        for (const auto& v : *c) {
            if (!v.is_string()) throw ConfigError("diagnostics.checks: expected strings");
            const std::string name = v.get<std::string>();
            if (!known_checks.contains(name)) {
                throw ConfigError("diagnostics.checks: unknown check '" + name + "'");
            }
            dc.checks.push_back(name);
        }
    }
    dc.n_samples = static_cast<int>(get_integer_or(j, "n_samples", "diagnostics", dc.n_samples));
    dc.probes = static_cast<int>(get_integer_or(j, "probes", "diagnostics", dc.probes));
    dc.abs_prob_horizon =
        static_cast<int>(get_integer_or(j, "abs_prob_horizon", "diagnostics", 0));
    dc.tau = get_number_or(j, "tau", "diagnostics", dc.tau);
    dc.tol_cluster = get_number_or(j, "tol_cluster", "diagnostics", dc.tol_cluster);
    dc.ordering_window = get_integer_or(j, "ordering_window", "diagnostics", dc.ordering_window);
    dc.ordering_tol = get_number_or(j, "ordering_tol", "diagnostics", dc.ordering_tol);
    dc.n_sigma = get_number_or(j, "n_sigma", "diagnostics", dc.n_sigma);
    if (const json* v = find(j, "v_ell_values")) {
        if (!v->is_array()) throw ConfigError("diagnostics.v_ell_values: expected an array");
        for (const auto& e : *v) {
            if (!e.is_number_integer()) throw ConfigError("diagnostics.v_ell_values: integers only");
            dc.v_ell_values.push_back(e.get<int>());
        }
    }
    dc.v_ell_beta = get_number_or(j, "v_ell_beta", "diagnostics", 0.0);
    if (find(j, "lyapunov_g")) dc.lyapunov_g = get_string(j, "lyapunov_g", "diagnostics");
    dc.n_outer = static_cast<int>(get_integer_or(j, "n_outer", "diagnostics", 0));
    dc.n_inner = static_cast<int>(get_integer_or(j, "n_inner", "diagnostics", 0));

    if (dc.n_samples < 100) throw ConfigError("diagnostics.n_samples: must be >= 100");
    if (dc.probes < 1) throw ConfigError("diagnostics.probes: must be >= 1");
    if (!(dc.tau > 0.0)) throw ConfigError("diagnostics.tau: must be positive");
    if (dc.ordering_window < 1) throw ConfigError("diagnostics.ordering_window: must be >= 1");
    if (!(dc.n_sigma > 0.0)) throw ConfigError("diagnostics.n_sigma: must be positive");
    return dc;
}

SweepConfig parse_sweep(const json& j) {
    require_object(j, "sweep");
    reject_unknown(j, {"parameter", "values", "seeds"}, "sweep");
    SweepConfig sc;
    sc.parameter = get_string(j, "parameter", "sweep");
    const json* values = find(j, "values");
    if (!values) throw ConfigError("sweep.values: required");
    sc.values = get_number_array(*values, "sweep.values");
    if (sc.values.empty()) throw ConfigError("sweep.values: must be nonempty");
    const json* seeds = find(j, "seeds");
    if (!seeds || !seeds->is_array()) throw ConfigError("sweep.seeds: required array");
    for (const auto& s : *seeds) {
        if (!s.is_number_integer() || s.get<long long>() < 0) {
            throw ConfigError("sweep.seeds: expected nonnegative integers");
        }
        sc.seeds.push_back(s.get<std::uint64_t>());
    }
    if (sc.seeds.empty()) throw ConfigError("sweep.seeds: must be nonempty");
    return sc;
}

}  // namespace

RunConfig parse_config(const nlohmann::json& doc) {
    require_object(doc, "config");
    reject_unknown(doc,
                   {"model", "x0", "steps", "master_seed", "replicas", "output_dir",
                    "retain_threshold", "diagnostics", "sweep"},
                   "config");

    RunConfig rc;
    rc.raw = doc;
    const json* model = find(doc, "model");
    if (!model) throw ConfigError("config.model: required");
    rc.model = parse_model(*model);

    const json* x0 = find(doc, "x0");
    if (!x0) throw ConfigError("config.x0: required");
    rc.x0 = parse_x0(*x0, rc.model.m);

    rc.steps = get_integer(doc, "steps", "config");
    if (rc.steps < 1) throw ConfigError("config.steps: must be >= 1");

    const json* seed = find(doc, "master_seed");
    if (!seed || !seed->is_number_integer() || seed->get<long long>() < 0) {
        throw ConfigError("config.master_seed: required nonnegative integer");
    }
    rc.master_seed = seed->get<std::uint64_t>();

    rc.replicas = static_cast<int>(get_integer_or(doc, "replicas", "config", Defaults::replicas));
    if (rc.replicas < 1) throw ConfigError("config.replicas: must be >= 1");
    if (find(doc, "output_dir")) rc.output_dir = get_string(doc, "output_dir", "config");
    rc.retain_threshold = static_cast<int>(
        get_integer_or(doc, "retain_threshold", "config", Defaults::retain_threshold));

    if (const json* d = find(doc, "diagnostics")) rc.diagnostics = parse_diagnostics(*d);
    if (const json* s = find(doc, "sweep")) rc.sweep = parse_sweep(*s);
    return rc;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ConfigError("config parse failure: " + std::string(e.what()));
    }
    return parse_config(doc);
}

std::unique_ptr<ProcessModel> build_model(const ModelConfig& mc) {
    try {
        if (mc.kind == "hk_sync") {
            return std::make_unique<HkSyncModel>(HkParams{mc.m, mc.epsilon});
        }
        if (mc.kind == "hk_async") {
            AsyncHkParams p;
            p.base = HkParams{mc.m, mc.epsilon};
            p.pick_probabilities = mc.pick_probabilities;
            if (p.pick_probabilities.empty()) {
                p.pick_probabilities.assign(static_cast<std::size_t>(mc.m), 1.0 / mc.m);
            }
            return std::make_unique<HkAsyncModel>(std::move(p));
        }
        if (mc.kind == "hk_linkfail") {
            return std::make_unique<HkLinkFailModel>(
                LinkFailParams{HkParams{mc.m, mc.epsilon}, mc.failure_prob});
        }
        if (mc.kind == "hk_randconf") {
            return std::make_unique<HkRandConfModel>(
                RandConfParams{HkParams{mc.m, 0.0}, mc.confidence});
        }
        if (mc.kind == "gossip") {
            GossipParams p;
            p.m = mc.m;
            p.epsilon = mc.epsilon;
            p.gamma_lower = mc.gamma_lower;
            p.gamma_upper = mc.gamma_upper;
            p.gamma_sampler = mc.gamma_sampler;
            return std::make_unique<GossipModel>(std::move(p));
        }
        if (mc.kind == "fixed") {
            return std::make_unique<FixedMatrixModel>(
                StochasticMatrix::validated(mc.fixed_entries, mc.m), mc.claims_balancedness);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("model parameters rejected: " + std::string(e.what()));
    }
    throw ConfigError("unknown model kind: " + mc.kind);
}

StateVector build_x0(const XZeroSpec& spec, int m, const SeedSpec& seeds, int replica) {
    switch (spec.kind) {
        case XZeroSpec::Kind::Explicit:
            return spec.values;
        case XZeroSpec::Kind::Uniform: {
            RandomStream rng = seeds.child_stream("x0/" + std::to_string(replica));
            StateVector x(static_cast<std::size_t>(m));
            for (auto& v : x) v = rng.uniform(spec.lo, spec.hi);
            return x;
        }
        case XZeroSpec::Kind::EquallySpaced: {
            StateVector x(static_cast<std::size_t>(m));
            if (m == 1) {
                x[0] = spec.lo;
                return x;
            }
            for (int i = 0; i < m; ++i) {
                x[static_cast<std::size_t>(i)] = spec.lo + (spec.hi - spec.lo) * i / (m - 1);
            }
            return x;
        }
    }
    throw ConfigError("invalid x0 spec");
}

}  // namespace endodyn
