#pragma once

#include "endodyn/linalg.hpp"
#include "endodyn/models.hpp"
#include "endodyn/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace endodyn {

// Centralized defaults (also documented in the README schema section).
struct Defaults {
    static constexpr int retain_threshold = 64;
    static constexpr int replicas = 1;
    static constexpr int n_samples = 10000;
    static constexpr int probes = 20;
    static constexpr double tau = 1.0;
    static constexpr double tol_cluster = 1e-6;
    static constexpr long ordering_window = 50;
    static constexpr double ordering_tol = 1e-9;
    static constexpr double n_sigma = 3.0;
    static constexpr int abs_prob_horizon_per_agent = 50;  // T = 50 * m
};

struct ModelConfig {
    std::string kind;  // hk_sync | hk_async | hk_linkfail | hk_randconf | gossip | fixed
    int m = 0;
    double epsilon = 0.0;
    std::vector<double> pick_probabilities;  // hk_async; empty => uniform
    Schedule failure_prob = Schedule::constant(0.0);
    ScalarSampler confidence;
    double gamma_lower = 0.0, gamma_upper = 0.0;
    ScalarSampler gamma_sampler;
    std::vector<double> fixed_entries;
    bool claims_balancedness = false;  // fixed model only; the named dynamics always claim
};

struct XZeroSpec {
    enum class Kind { Explicit, Uniform, EquallySpaced };
    Kind kind = Kind::Explicit;
    std::vector<double> values;
    double lo = 0.0, hi = 1.0;
};

struct DiagnosticsConfig {
    std::vector<std::string> checks;  // empty => all applicable
    int n_samples = Defaults::n_samples;
    int probes = Defaults::probes;
    int abs_prob_horizon = 0;  // 0 => 50*m
    double tau = Defaults::tau;
    double tol_cluster = Defaults::tol_cluster;
    long ordering_window = Defaults::ordering_window;
    double ordering_tol = Defaults::ordering_tol;
    double n_sigma = Defaults::n_sigma;
    std::vector<int> v_ell_values;  // empty => 1..m
    double v_ell_beta = 0.0;        // 0 => certified coefficient / 2
    std::string lyapunov_g = "square";
    int n_outer = 0;  // 0 => max(50, n_samples/20)
    int n_inner = 0;  // 0 => n_samples / n_outer
};

struct SweepConfig {
    std::string parameter;  // dotted path into the config, e.g. "model.epsilon"
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
};

struct RunConfig {
    ModelConfig model;
    XZeroSpec x0;
    long steps = 0;
    std::uint64_t master_seed = 0;
    int replicas = Defaults::replicas;
    std::string output_dir = "out";
    int retain_threshold = Defaults::retain_threshold;
    std::optional<DiagnosticsConfig> diagnostics;
    std::optional<SweepConfig> sweep;
    nlohmann::json raw;  // echo of the parsed document
};

// Strict parsing: unknown keys anywhere are ConfigError.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

std::unique_ptr<ProcessModel> build_model(const ModelConfig& mc);

// Replica-dependent only for random x0 (stream "x0/<replica>").
StateVector build_x0(const XZeroSpec& spec, int m, const SeedSpec& seeds, int replica);

}  // namespace endodyn
