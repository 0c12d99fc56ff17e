#include "endodyn/linalg.hpp"

#include "endodyn/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace endodyn {

void ensure_finite(const StateVector& x) {
    for (double v : x) {
        if (!std::isfinite(v)) throw NonFinite("state vector has a non-finite entry");
    }
}

SubsetMask SubsetMask::from_bits(int m, std::uint64_t bits) {
    if (m < 1 || m > 64) throw InvalidArgument("from_bits: m must be in [1,64]");
    if (m < 64 && (bits >> m) != 0) throw IndexOutOfRange("from_bits: bits beyond m");
    SubsetMask s(m);
    s.words_[0] = bits;
    return s;
}

SubsetMask SubsetMask::from_indices(int m, std::span<const int> indices) {
    SubsetMask s(m);
    for (int i : indices) s.set(i);
    return s;
}

SubsetMask SubsetMask::full(int m) {
    SubsetMask s(m);
    for (int i = 0; i < m; ++i) s.set(i);
    return s;
}

bool SubsetMask::test(int i) const {
    if (i < 0 || i >= m_) throw IndexOutOfRange("SubsetMask::test: index " + std::to_string(i));
    return (words_[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1u;
}

void SubsetMask::set(int i) {
    if (i < 0 || i >= m_) throw IndexOutOfRange("SubsetMask::set: index " + std::to_string(i));
    words_[static_cast<std::size_t>(i) / 64] |= (std::uint64_t{1} << (i % 64));
}

void SubsetMask::reset(int i) {
    if (i < 0 || i >= m_) throw IndexOutOfRange("SubsetMask::reset: index " + std::to_string(i));
    words_[static_cast<std::size_t>(i) / 64] &= ~(std::uint64_t{1} << (i % 64));
}

int SubsetMask::count() const {
    int c = 0;
    for (std::uint64_t w : words_) c += std::popcount(w);
    return c;
}

bool SubsetMask::nontrivial() const {
    const int c = count();
    return c >= 1 && c <= m_ - 1;
}

SubsetMask SubsetMask::complement() const {
    SubsetMask s(m_);
    for (std::size_t w = 0; w < words_.size(); ++w) s.words_[w] = ~words_[w];
    const int tail = m_ % 64;
    if (tail != 0) s.words_.back() &= (std::uint64_t{1} << tail) - 1;
    return s;
}

std::vector<int> SubsetMask::members() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count()));
    for (int i = 0; i < m_; ++i) {
        if ((words_[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1u) out.push_back(i);
    }
    return out;
}

void StochasticMatrix::validate(std::vector<double>& entries, int m, double tol,
                                bool renormalize) {
    if (m < 2) throw InvalidArgument("stochastic matrix: m must be >= 2");
    if (entries.size() != static_cast<std::size_t>(m) * static_cast<std::size_t>(m)) {
        throw DimensionMismatch("stochastic matrix: entry count does not match m*m");
    }
    for (int i = 0; i < m; ++i) {
        double* row = entries.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m);
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            const double v = row[j];
            if (!std::isfinite(v)) {
                throw NonFinite("stochastic matrix: non-finite entry at row " + std::to_string(i));
            }
            if (v < -tol) {
                throw NegativeEntry("stochastic matrix: negative entry at (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
            }
            if (v < 0.0) row[j] = 0.0;  // within -tol..0: rounding noise
            sum += row[j];
        }
        if (std::abs(sum - 1.0) > tol) {
            throw RowSumViolation("stochastic matrix: row " + std::to_string(i) + " sums to " +
                                  std::to_string(sum));
        }
        if (renormalize && sum != 1.0) {
            for (int j = 0; j < m; ++j) row[j] /= sum;
        }
    }
}

StochasticMatrix StochasticMatrix::validated(std::vector<double> entries, int m, double tol) {
    validate(entries, m, tol, /*renormalize=*/true);
    return StochasticMatrix(std::move(entries), m);
}

StochasticMatrix StochasticMatrix::checked(std::vector<double> entries, int m, double tol) {
    validate(entries, m, tol, /*renormalize=*/false);
    return StochasticMatrix(std::move(entries), m);
}

StochasticMatrix StochasticMatrix::identity(int m) {
    if (m < 2) throw InvalidArgument("identity: m must be >= 2");
    std::vector<double> e(static_cast<std::size_t>(m) * static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        e[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)] =
            1.0;
    }
    return StochasticMatrix(std::move(e), m);
}

double StochasticMatrix::min_diagonal() const {
    double lo = (*this)(0, 0);
    for (int i = 1; i < m_; ++i) lo = std::min(lo, (*this)(i, i));
    return lo;
}

bool StochasticMatrix::is_identity() const {
    for (int i = 0; i < m_; ++i) {
        for (int j = 0; j < m_; ++j) {
            if ((*this)(i, j) != (i == j ? 1.0 : 0.0)) return false;
        }
    }
    return true;
}

StateVector apply(const StochasticMatrix& w, const StateVector& x) {
    const int m = w.dim();
    if (x.size() != static_cast<std::size_t>(m)) {
        throw DimensionMismatch("apply: state length " + std::to_string(x.size()) +
                                " vs matrix dim " + std::to_string(m));
    }
    StateVector y(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const auto row = w.row(i);
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += row[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

double flow(const StochasticMatrix& w, const SubsetMask& s, const SubsetMask& t) {
    const int m = w.dim();
    if (s.size() != m || t.size() != m) {
        throw DimensionMismatch("flow: subset dimension does not match matrix");
    }
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
        if (!s.test(i)) continue;
        const auto row = w.row(i);
        for (int j = 0; j < m; ++j) {
            if (t.test(j)) acc += row[static_cast<std::size_t>(j)];
        }
    }
    return acc;
}

Ordering ordering(const StateVector& x) {
    ensure_finite(x);
    const int m = static_cast<int>(x.size());
    Ordering z;
    z.permutation.resize(static_cast<std::size_t>(m));
    std::iota(z.permutation.begin(), z.permutation.end(), 0);
    std::stable_sort(z.permutation.begin(), z.permutation.end(),
                     [&x](int a, int b) { return x[static_cast<std::size_t>(a)] < x[static_cast<std::size_t>(b)]; });
    z.sorted.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        z.sorted[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(z.permutation[static_cast<std::size_t>(i)])];
    }
    return z;
}

double v_ell(const Ordering& z, int ell, double beta) {
    const int m = static_cast<int>(z.sorted.size());
    if (ell < 1 || ell > m) {
        throw IndexOutOfRange("v_ell: ell " + std::to_string(ell) + " outside [1," +
                              std::to_string(m) + "]");
    }
    if (!(beta > 0.0 && beta <= 0.5)) {
        throw InvalidArgument("v_ell: beta must lie in (0, 1/2]");
    }
    double acc = 0.0;
    double pow_beta = 1.0;
    for (int i = 1; i <= ell; ++i) {
        pow_beta *= beta;
        acc += pow_beta * z.sorted[static_cast<std::size_t>(i - 1)];
    }
    return acc;
}

std::vector<SubsetMask> enumerate_nontrivial_subsets(int m) {
    if (m < 2) throw InvalidArgument("enumerate_nontrivial_subsets: m must be >= 2");
    if (m > 20) throw TooLarge("enumerate_nontrivial_subsets: m > 20");
    std::vector<SubsetMask> out;
    const std::uint64_t total = (std::uint64_t{1} << m) - 1;
    out.reserve(static_cast<std::size_t>(total - 1));
    for (std::uint64_t bits = 1; bits < total; ++bits) {
        out.push_back(SubsetMask::from_bits(m, bits));
    }
    return out;
}

}  // namespace endodyn
