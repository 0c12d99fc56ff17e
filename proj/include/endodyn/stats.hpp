#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace endodyn {

// Welford accumulators with Chan's parallel merge. Unlike sum-of-squares
// accumulation these are exact for constant samples (mean == the sample,
// variance == 0 bit-for-bit), which the deterministic-model diagnostics rely
// on.
struct RunningMoments {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++n;
        const double delta = v - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (v - mean);
    }

    void merge(const RunningMoments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double delta = o.mean - mean;
        const long total = n + o.n;
        mean += delta * static_cast<double>(o.n) / static_cast<double>(total);
        m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) /
                         static_cast<double>(total);
        n = total;
    }

    double variance() const { return n > 1 ? std::max(0.0, m2 / static_cast<double>(n - 1)) : 0.0; }
    double se() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

// Bivariate version tracking the cross moment, for ratio estimates whose
// numerator and denominator come from the same draws.
struct RunningPairMoments {
    long n = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double m2a = 0.0;
    double m2b = 0.0;
    double c2 = 0.0;

    void add(double a, double b) {
        ++n;
        const double da = a - mean_a;
        mean_a += da / static_cast<double>(n);
        const double db = b - mean_b;
        mean_b += db / static_cast<double>(n);
        m2a += da * (a - mean_a);
        m2b += db * (b - mean_b);
        c2 += da * (b - mean_b);
    }

    void merge(const RunningPairMoments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double da = o.mean_a - mean_a;
        const double db = o.mean_b - mean_b;
        const long total = n + o.n;
        const double w = static_cast<double>(n) * static_cast<double>(o.n) /
                         static_cast<double>(total);
        mean_a += da * static_cast<double>(o.n) / static_cast<double>(total);
        mean_b += db * static_cast<double>(o.n) / static_cast<double>(total);
        m2a += o.m2a + da * da * w;
        m2b += o.m2b + db * db * w;
        c2 += o.c2 + da * db * w;
        n = total;
    }

    double se_a() const { return n > 1 ? std::sqrt(std::max(0.0, m2a / static_cast<double>(n - 1)) / static_cast<double>(n)) : 0.0; }
    double se_b() const { return n > 1 ? std::sqrt(std::max(0.0, m2b / static_cast<double>(n - 1)) / static_cast<double>(n)) : 0.0; }
    // Covariance of the two sample means.
    double cov_means() const {
        return n > 1 ? (c2 / static_cast<double>(n - 1)) / static_cast<double>(n) : 0.0;
    }
};

// Vector samples with the full second-moment matrix, for delta-method error
// propagation through nonlinear functionals of the mean.
struct RunningVectorMoments {
    long n = 0;
    std::vector<double> mean;
    std::vector<double> m2;  // dim x dim, row-major
    std::vector<double> scratch_;

    void init(int dim) {
        if (!mean.empty()) return;
        mean.assign(static_cast<std::size_t>(dim), 0.0);
        m2.assign(static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim), 0.0);
        scratch_.assign(static_cast<std::size_t>(dim), 0.0);
    }

    void add(std::span<const double> v) {
        const std::size_t dim = mean.size();
        ++n;
        for (std::size_t i = 0; i < dim; ++i) {
            scratch_[i] = v[i] - mean[i];  // delta against the old mean
            mean[i] += scratch_[i] / static_cast<double>(n);
        }
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                m2[i * dim + j] += scratch_[i] * (v[j] - mean[j]);
            }
        }
    }

    void merge(const RunningVectorMoments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const std::size_t dim = mean.size();
        const long total = n + o.n;
        const double w = static_cast<double>(n) * static_cast<double>(o.n) /
                         static_cast<double>(total);
        for (std::size_t i = 0; i < dim; ++i) scratch_[i] = o.mean[i] - mean[i];
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                m2[i * dim + j] += o.m2[i * dim + j] + scratch_[i] * scratch_[j] * w;
            }
        }
        for (std::size_t i = 0; i < dim; ++i) {
            mean[i] += scratch_[i] * static_cast<double>(o.n) / static_cast<double>(total);
        }
        n = total;
    }

    // Covariance of the mean estimate.
    double cov_of_mean(int i, int j) const {
        if (n < 2) return 0.0;
        const std::size_t dim = mean.size();
        return (m2[static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(j)] /
                static_cast<double>(n - 1)) /
               static_cast<double>(n);
    }

    double se(int i) const {
        const double v = cov_of_mean(i, i);
        return v > 0.0 ? std::sqrt(v) : 0.0;
    }
};

}  // namespace endodyn
