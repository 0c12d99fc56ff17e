#include "endodyn/models.hpp"

#include "endodyn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace endodyn {

namespace {

void check_hk_params(const HkParams& p) {
    if (p.m < 2) throw InvalidArgument("hk params: m must be >= 2");
    if (!(p.epsilon > 0.0) || !std::isfinite(p.epsilon)) {
        throw InvalidArgument("hk params: epsilon must be positive and finite");
    }
}

// Averaging row over the given neighborhood, written into `entries` at row i.
// All member weights are the exact double 1/|N|, so the diagonal entry is
// >= 1/m whenever |N| <= m (division by a larger integer never rounds above).
void write_average_row(std::vector<double>& entries, int m, int i, const SubsetMask& nbhd) {
    const int n = nbhd.count();
    const double w = 1.0 / n;
    double* row = entries.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m);
    for (int j = 0; j < m; ++j) row[j] = nbhd.test(j) ? w : 0.0;
}

void write_identity_row(std::vector<double>& entries, int m, int i) {
    double* row = entries.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m);
    for (int j = 0; j < m; ++j) row[j] = 0.0;
    row[i] = 1.0;
}

}  // namespace

ScalarSampler ScalarSampler::constant(double v) {
    ScalarSampler s;
    s.kind = Kind::Constant;
    s.value = v;
    return s;
}

ScalarSampler ScalarSampler::uniform(double lo, double hi) {
    if (!(lo <= hi)) throw InvalidArgument("uniform sampler: lo must be <= hi");
    ScalarSampler s;
    s.kind = Kind::Uniform;
    s.lo = lo;
    s.hi = hi;
    return s;
}

ScalarSampler ScalarSampler::two_point(double a, double b, double p_a) {
    if (!(p_a >= 0.0 && p_a <= 1.0)) throw InvalidArgument("two_point sampler: p_a outside [0,1]");
    ScalarSampler s;
    s.kind = Kind::TwoPoint;
    s.a = a;
    s.b = b;
    s.p_a = p_a;
    return s;
}

double ScalarSampler::sample(long step, RandomStream& rng) const {
    switch (kind) {
        case Kind::Constant:
            return value;
        case Kind::Uniform:
            return rng.uniform(lo, hi);
        case Kind::TwoPoint:
            return rng.bernoulli(p_a) ? a : b;
        case Kind::Custom:
            if (!custom) throw InvalidArgument("custom sampler without a function");
            return custom(step, rng);
    }
    throw InvalidArgument("unknown sampler kind");
}

Schedule Schedule::per_step(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("per-step schedule must be nonempty");
    return Schedule{std::move(v)};
}

double Schedule::at(long step) const {
    if (values.empty()) throw InvalidArgument("empty schedule");
    const std::size_t idx = std::min<std::size_t>(
        static_cast<std::size_t>(std::max<long>(step, 0)), values.size() - 1);
    return values[idx];
}

double AsyncHkParams::p_lower() const {
    double lo = 1.0;
    for (double p : pick_probabilities) lo = std::min(lo, p);
    return lo;
}

void AsyncHkParams::validate() const {
    check_hk_params(base);
    if (pick_probabilities.size() != static_cast<std::size_t>(base.m)) {
        throw DimensionMismatch("pick_probabilities length must equal m");
    }
    double sum = 0.0;
    for (double p : pick_probabilities) {
        if (!(p > 0.0)) throw InvalidArgument("pick probabilities must all be positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw InvalidArgument("pick probabilities must sum to 1");
    }
}

SubsetMask neighborhood(const StateVector& x, int i, double epsilon) {
    const int m = static_cast<int>(x.size());
    if (i < 0 || i >= m) throw IndexOutOfRange("neighborhood: agent " + std::to_string(i));
    if (!(epsilon >= 0.0)) throw InvalidArgument("neighborhood: epsilon must be >= 0");
    SubsetMask nbhd(m);
    const double xi = x[static_cast<std::size_t>(i)];
    for (int j = 0; j < m; ++j) {
        if (std::abs(xi - x[static_cast<std::size_t>(j)]) <= epsilon) nbhd.set(j);
    }
    return nbhd;
}

StochasticMatrix hk_sync_matrix(const StateVector& x, const HkParams& params) {
    check_hk_params(params);
    const int m = params.m;
    if (x.size() != static_cast<std::size_t>(m)) throw DimensionMismatch("hk_sync: state length");
    std::vector<double> entries(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        write_average_row(entries, m, i, neighborhood(x, i, params.epsilon));
    }
    return StochasticMatrix::checked(std::move(entries), m);
}

StochasticMatrix hk_single_update_matrix(const StateVector& x, double epsilon, int pick) {
    const int m = static_cast<int>(x.size());
    if (pick < 0 || pick >= m) throw IndexOutOfRange("hk_single_update: pick out of range");
    std::vector<double> entries(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        if (i == pick) {
            write_average_row(entries, m, i, neighborhood(x, i, epsilon));
        } else {
            write_identity_row(entries, m, i);
        }
    }
    return StochasticMatrix::checked(std::move(entries), m);
}

StochasticMatrix hk_async_matrix(const StateVector& x, const AsyncHkParams& params,
                                 RandomStream& rng) {
    params.validate();
    if (x.size() != static_cast<std::size_t>(params.base.m)) {
        throw DimensionMismatch("hk_async: state length");
    }
    const int pick = rng.discrete(params.pick_probabilities);
    return hk_single_update_matrix(x, params.base.epsilon, pick);
}

StochasticMatrix hk_linkfail_matrix(const StateVector& x, const LinkFailParams& params,
                                    long step, RandomStream& rng) {
    check_hk_params(params.base);
    const int m = params.base.m;
    if (x.size() != static_cast<std::size_t>(m)) throw DimensionMismatch("hk_linkfail: state length");
    const double p = params.failure_prob.at(step);
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("link failure probability outside [0,1]");
    std::vector<double> entries(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        SubsetMask survivors = neighborhood(x, i, params.base.epsilon);
        for (int j = 0; j < m; ++j) {
            if (j == i || !survivors.test(j)) continue;
            if (rng.bernoulli(p)) survivors.reset(j);
        }
        write_average_row(entries, m, i, survivors);
    }
    return StochasticMatrix::checked(std::move(entries), m);
}

StochasticMatrix hk_randconf_matrix(const StateVector& x, const RandConfParams& params,
                                    long step, RandomStream& rng) {
    const int m = params.base.m;
    if (m < 2) throw InvalidArgument("hk_randconf: m must be >= 2");
    if (x.size() != static_cast<std::size_t>(m)) throw DimensionMismatch("hk_randconf: state length");
    std::vector<double> entries(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const double eps_i = params.confidence.sample(step, rng);
        if (!(eps_i >= 0.0) || !std::isfinite(eps_i)) {
            throw ModelError("sampled confidence level must be finite and >= 0");
        }
        write_average_row(entries, m, i, neighborhood(x, i, eps_i));
    }
    return StochasticMatrix::checked(std::move(entries), m);
}

StochasticMatrix gossip_matrix(int m, int i, int j, double gamma) {
    if (m < 2) throw InvalidArgument("gossip_matrix: m must be >= 2");
    if (i < 0 || i >= m || j < 0 || j >= m) throw IndexOutOfRange("gossip_matrix: agent index");
    if (i == j) throw SelfGossip("gossip_matrix: sender equals receiver");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gossip_matrix: gamma outside (0,1)");
    std::vector<double> entries(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    for (int r = 0; r < m; ++r) write_identity_row(entries, m, r);
    double* row = entries.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(m);
    row[j] = 1.0 - gamma;
    row[i] = gamma;
    return StochasticMatrix::checked(std::move(entries), m);
}

std::optional<std::pair<int, int>> gossip_sample_pair(const StateVector& x,
                                                      const GossipParams& params,
                                                      RandomStream& rng) {
    if (params.custom_pair) return params.custom_pair(x, rng);
    const int m = params.m;
    const int i = rng.uniform_int(m);
    const SubsetMask nbhd = neighborhood(x, i, params.epsilon);
    std::vector<int> candidates;
    candidates.reserve(static_cast<std::size_t>(nbhd.count()));
    for (int j : nbhd.members()) {
        if (j != i) candidates.push_back(j);
    }
    if (candidates.empty()) return std::nullopt;
    const int j = candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(candidates.size())))];
    return std::make_pair(i, j);
}

HkSyncModel::HkSyncModel(HkParams params) : params_(params) { check_hk_params(params_); }

std::unique_ptr<ProcessModel> HkSyncModel::clone() const {
    return std::make_unique<HkSyncModel>(*this);
}

StochasticMatrix HkSyncModel::do_sample(const StateVector& x, RandomStream&, long) {
    return hk_sync_matrix(x, params_);
}

HkAsyncModel::HkAsyncModel(AsyncHkParams params) : params_(std::move(params)) {
    params_.validate();
}

std::unique_ptr<ProcessModel> HkAsyncModel::clone() const {
    return std::make_unique<HkAsyncModel>(*this);
}

StochasticMatrix HkAsyncModel::do_sample(const StateVector& x, RandomStream& rng, long) {
    const int pick = rng.discrete(params_.pick_probabilities);
    return hk_single_update_matrix(x, params_.base.epsilon, pick);
}

HkLinkFailModel::HkLinkFailModel(LinkFailParams params) : params_(std::move(params)) {
    check_hk_params(params_.base);
    for (double p : params_.failure_prob.values) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("failure probabilities must lie in [0,1]");
    }
}

std::unique_ptr<ProcessModel> HkLinkFailModel::clone() const {
    return std::make_unique<HkLinkFailModel>(*this);
}

StochasticMatrix HkLinkFailModel::do_sample(const StateVector& x, RandomStream& rng, long step) {
    return hk_linkfail_matrix(x, params_, step, rng);
}

HkRandConfModel::HkRandConfModel(RandConfParams params) : params_(std::move(params)) {
    if (params_.base.m < 2) throw InvalidArgument("hk_randconf: m must be >= 2");
}

std::unique_ptr<ProcessModel> HkRandConfModel::clone() const {
    return std::make_unique<HkRandConfModel>(*this);
}

StochasticMatrix HkRandConfModel::do_sample(const StateVector& x, RandomStream& rng, long step) {
    return hk_randconf_matrix(x, params_, step, rng);
}

GossipModel::GossipModel(GossipParams params) : params_(std::move(params)) {
    if (params_.m < 2) throw InvalidArgument("gossip: m must be >= 2");
    if (!(params_.epsilon >= 0.0)) throw InvalidArgument("gossip: epsilon must be >= 0");
    if (!(params_.gamma_lower > 0.0 && params_.gamma_lower <= params_.gamma_upper &&
          params_.gamma_upper < 1.0)) {
        throw InvalidArgument("gossip: need 0 < l <= h < 1");
    }
}

std::unique_ptr<ProcessModel> GossipModel::clone() const {
    return std::make_unique<GossipModel>(*this);
}

StochasticMatrix GossipModel::do_sample(const StateVector& x, RandomStream& rng, long step) {
    const auto pair = gossip_sample_pair(x, params_, rng);
    if (!pair) return StochasticMatrix::identity(params_.m);
    double gamma = params_.gamma_sampler.sample(step, rng);
    gamma = std::clamp(gamma, params_.gamma_lower, params_.gamma_upper);
    return gossip_matrix(params_.m, pair->first, pair->second, gamma);
}

FixedMatrixModel::FixedMatrixModel(StochasticMatrix w, bool claims_balanced)
    : w_(std::move(w)), claims_balanced_(claims_balanced) {}

std::unique_ptr<ProcessModel> FixedMatrixModel::clone() const {
    return std::make_unique<FixedMatrixModel>(*this);
}

StochasticMatrix FixedMatrixModel::do_sample(const StateVector&, RandomStream&, long) {
    return w_;
}

}  // namespace endodyn
