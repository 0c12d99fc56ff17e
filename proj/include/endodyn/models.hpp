#pragma once

#include "endodyn/linalg.hpp"
#include "endodyn/rng.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace endodyn {

// Scalar sampler used for random confidence levels and gossip mixing weights.
// The step index is passed through so schedules like E(k) can vary with time.
struct ScalarSampler {
    enum class Kind { Constant, Uniform, TwoPoint, Custom };

    Kind kind = Kind::Constant;
    double value = 0.0;               // Constant
    double lo = 0.0, hi = 0.0;        // Uniform
    double a = 0.0, b = 0.0, p_a = 0.5;  // TwoPoint: a with prob p_a, else b
    std::function<double(long, RandomStream&)> custom;

    static ScalarSampler constant(double v);
    static ScalarSampler uniform(double lo, double hi);
    static ScalarSampler two_point(double a, double b, double p_a);

    double sample(long step, RandomStream& rng) const;
};

// Per-step scalar schedule: a constant, or an explicit array (steps past the
// end hold the last value).
struct Schedule {
    std::vector<double> values;  // size 1 => constant

    static Schedule constant(double v) { return Schedule{{v}}; }
    static Schedule per_step(std::vector<double> v);

    double at(long step) const;
};

struct HkParams {
    int m = 0;
    double epsilon = 0.0;  // confidence level
};

struct AsyncHkParams {
    HkParams base;
    std::vector<double> pick_probabilities;  // length m, min entry > 0, sums to 1

    double p_lower() const;
    void validate() const;
};

struct LinkFailParams {
    HkParams base;
    Schedule failure_prob;  // p_k in [0,1]
};

struct RandConfParams {
    HkParams base;  // epsilon unused; confidence comes from the sampler
    ScalarSampler confidence;
};

struct GossipParams {
    int m = 0;
    double epsilon = 0.0;       // neighborhood radius for the endogenous pick
    double gamma_lower = 0.0;   // l
    double gamma_upper = 0.0;   // h, 0 < l <= h < 1
    ScalarSampler gamma_sampler;  // samples clamped into [l,h]
    // Optional replacement for the endogenous-uniform pair rule.
    std::function<std::optional<std::pair<int, int>>(const StateVector&, RandomStream&)>
        custom_pair;
};

// N_i(x,eps) = { j : |x_i - x_j| <= eps }; always contains i.
SubsetMask neighborhood(const StateVector& x, int i, double epsilon);

// Synchronous update: row i carries 1/|N_i| on each member of N_i.
StochasticMatrix hk_sync_matrix(const StateVector& x, const HkParams& params);

// Identity matrix except row `pick`, which carries the averaging row over
// N_pick(x,eps).
StochasticMatrix hk_single_update_matrix(const StateVector& x, double epsilon, int pick);

StochasticMatrix hk_async_matrix(const StateVector& x, const AsyncHkParams& params,
                                 RandomStream& rng);

// Each ordered pair (i,j), j != i, j in N_i, is dropped independently with
// probability p_k; the self-loop never drops, so every row stays well-defined.
StochasticMatrix hk_linkfail_matrix(const StateVector& x, const LinkFailParams& params,
                                    long step, RandomStream& rng);

StochasticMatrix hk_randconf_matrix(const StateVector& x, const RandConfParams& params,
                                    long step, RandomStream& rng);

// Receiver j blends toward sender i: row j = (1-gamma) e_j + gamma e_i.
StochasticMatrix gossip_matrix(int m, int i, int j, double gamma);

// Endogenous-uniform pair rule: i uniform on [m], j uniform on N_i \ {i}.
// Returns nullopt when the sender is isolated (the step becomes a no-op).
std::optional<std::pair<int, int>> gossip_sample_pair(const StateVector& x,
                                                      const GossipParams& params,
                                                      RandomStream& rng);

// Contract for sampling W(k+1) given the current state and history. A model
// instance is a single-threaded state machine; clone() captures its full
// internal state, and a clone replays bit-identical samples from the same
// stream position.
class ProcessModel {
public:
    virtual ~ProcessModel() = default;

    StochasticMatrix sample_next(const StateVector& x, RandomStream& rng) {
        StochasticMatrix w = do_sample(x, rng, step_);
        ++step_;
        return w;
    }

    virtual std::unique_ptr<ProcessModel> clone() const = 0;
    virtual int dim() const = 0;
    // Declared almost-sure lower bound on diagonal entries (the gamma of the
    // convergence hypotheses).
    virtual double diagonal_bound() const = 0;
    // Whether the model declares the balancedness inequality; diagnostics
    // only certify what is both declared and measured.
    virtual bool claims_balancedness() const = 0;
    virtual std::string name() const = 0;

    long step() const { return step_; }

protected:
    ProcessModel() = default;
    ProcessModel(const ProcessModel&) = default;
    virtual StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) = 0;

private:
    long step_ = 0;
};

class HkSyncModel final : public ProcessModel {
public:
    explicit HkSyncModel(HkParams params);
    std::unique_ptr<ProcessModel> clone() const override;
    int dim() const override { return params_.m; }
    double diagonal_bound() const override { return 1.0 / params_.m; }
    bool claims_balancedness() const override { return true; }
    std::string name() const override { return "hk_sync"; }
    const HkParams& params() const { return params_; }

protected:
    StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) override;

private:
    HkParams params_;
};

class HkAsyncModel final : public ProcessModel {
public:
    explicit HkAsyncModel(AsyncHkParams params);
    std::unique_ptr<ProcessModel> clone() const override;
    int dim() const override { return params_.base.m; }
    double diagonal_bound() const override { return 1.0 / params_.base.m; }
    bool claims_balancedness() const override { return true; }
    std::string name() const override { return "hk_async"; }
    const AsyncHkParams& params() const { return params_; }

protected:
    StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) override;

private:
    AsyncHkParams params_;
};

class HkLinkFailModel final : public ProcessModel {
public:
    explicit HkLinkFailModel(LinkFailParams params);
    std::unique_ptr<ProcessModel> clone() const override;
    int dim() const override { return params_.base.m; }
    double diagonal_bound() const override { return 1.0 / params_.base.m; }
    bool claims_balancedness() const override { return true; }
    std::string name() const override { return "hk_linkfail"; }
    const LinkFailParams& params() const { return params_; }

protected:
    StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) override;

private:
    LinkFailParams params_;
};

class HkRandConfModel final : public ProcessModel {
public:
    explicit HkRandConfModel(RandConfParams params);
    std::unique_ptr<ProcessModel> clone() const override;
    int dim() const override { return params_.base.m; }
    double diagonal_bound() const override { return 1.0 / params_.base.m; }
    bool claims_balancedness() const override { return true; }
    std::string name() const override { return "hk_randconf"; }
    const RandConfParams& params() const { return params_; }

protected:
    StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) override;

private:
    RandConfParams params_;
};

class GossipModel final : public ProcessModel {
public:
    explicit GossipModel(GossipParams params);
    std::unique_ptr<ProcessModel> clone() const override;
    int dim() const override { return params_.m; }
    double diagonal_bound() const override { return 1.0 - params_.gamma_upper; }
    bool claims_balancedness() const override { return true; }
    std::string name() const override { return "gossip"; }
    const GossipParams& params() const { return params_; }

protected:
    StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) override;

private:
    GossipParams params_;
};

// Emits one fixed matrix every step. Infrastructure model used for sanity
// checks (doubly stochastic conservation, absorbing chains, permutations).
class FixedMatrixModel final : public ProcessModel {
public:
    explicit FixedMatrixModel(StochasticMatrix w, bool claims_balanced = false);
    std::unique_ptr<ProcessModel> clone() const override;
    int dim() const override { return w_.dim(); }
    double diagonal_bound() const override { return w_.min_diagonal(); }
    bool claims_balancedness() const override { return claims_balanced_; }
    std::string name() const override { return "fixed"; }
    const StochasticMatrix& matrix() const { return w_; }

protected:
    StochasticMatrix do_sample(const StateVector& x, RandomStream& rng, long step) override;

private:
    StochasticMatrix w_;
    bool claims_balanced_;
};

}  // namespace endodyn
