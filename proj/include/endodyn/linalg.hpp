#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace endodyn {

// Opinion profile x(k). Validated for finiteness at the boundaries (config,
// model input); internal operations assume finite entries.
using StateVector = std::vector<double>;

inline constexpr double kRowSumTol = 1e-12;

void ensure_finite(const StateVector& x);

// Subset of {0,...,m-1}, stored as a bit mask. Used both for the flow subsets
// S,T and for neighborhoods, so m may exceed one machine word.
class SubsetMask {
public:
    SubsetMask() = default;
    explicit SubsetMask(int m) : m_(m), words_((static_cast<std::size_t>(m) + 63) / 64, 0) {}

    // Low 64 bits given directly; only valid for m <= 64.
    static SubsetMask from_bits(int m, std::uint64_t bits);
    static SubsetMask from_indices(int m, std::span<const int> indices);
    static SubsetMask full(int m);

    int size() const { return m_; }
    bool test(int i) const;
    void set(int i);
    void reset(int i);
    int count() const;
    bool empty() const { return count() == 0; }
    // Nontrivial means 1 <= |S| <= m-1.
    bool nontrivial() const;

    SubsetMask complement() const;
    std::vector<int> members() const;
    std::uint64_t low_bits() const { return words_.empty() ? 0 : words_[0]; }

    bool operator==(const SubsetMask&) const = default;

private:
    int m_ = 0;
    std::vector<std::uint64_t> words_;
};

// Row-stochastic m x m matrix. Construction always validates entries; the
// renormalizing factory additionally rescales rows whose sum drifted within
// tolerance, which is the behavior wanted for matrices read from user input.
// Model builders use checked() because their rows are exact by construction
// and rescaling by 1 + O(ulp) can push a diagonal entry one ulp below its
// guaranteed bound.
class StochasticMatrix {
public:
    // Validate + renormalize rows whose sum differs from 1 (within tol).
    static StochasticMatrix validated(std::vector<double> entries, int m,
                                      double tol = kRowSumTol);
    // Validate only; entries are kept bit-for-bit.
    static StochasticMatrix checked(std::vector<double> entries, int m,
                                    double tol = kRowSumTol);
    static StochasticMatrix identity(int m);

    int dim() const { return m_; }
    double operator()(int i, int j) const {
        return a_[static_cast<std::size_t>(i) * static_cast<std::size_t>(m_) +
                  static_cast<std::size_t>(j)];
    }
    std::span<const double> row(int i) const {
        return {a_.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m_),
                static_cast<std::size_t>(m_)};
    }
    std::span<const double> data() const { return a_; }
    double min_diagonal() const;
    bool is_identity() const;

    bool operator==(const StochasticMatrix&) const = default;

private:
    StochasticMatrix(std::vector<double> entries, int m) : m_(m), a_(std::move(entries)) {}
    static void validate(std::vector<double>& entries, int m, double tol, bool renormalize);

    int m_ = 0;
    std::vector<double> a_;
};

// Ascending rearrangement z of a vector x together with the permutation that
// produced it: sorted[i] = x[permutation[i]]. Ties keep the original index
// order (stable), so the lower-l index sets are deterministic functions of x.
struct Ordering {
    std::vector<double> sorted;
    std::vector<int> permutation;
};

// x(k+1) = W x(k).
StateVector apply(const StochasticMatrix& w, const StateVector& x);

// W_ST = sum over i in S, j in T of W_ij.
double flow(const StochasticMatrix& w, const SubsetMask& s, const SubsetMask& t);

Ordering ordering(const StateVector& x);

// V_l = sum_{i=1..l} beta^i * z_i  (z ascending, 1-based in the formula).
// Requires 1 <= l <= m and 0 < beta <= 1/2.
double v_ell(const Ordering& z, int ell, double beta);

// All 2^m - 2 nontrivial subsets in ascending bit-mask order. Guarded to
// m <= 20; the count is exponential.
std::vector<SubsetMask> enumerate_nontrivial_subsets(int m);

}  // namespace endodyn
