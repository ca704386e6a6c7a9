#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rwl/sparse_vector.hpp"

namespace rwl {

// Dense row-major matrix of non-negative ground costs.
class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    CostMatrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool square() const { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> values() const { return data_; }

    double mean() const;

    // Restriction to the given row and column indices.
    CostMatrix submatrix(std::span<const int> rows, std::span<const int> cols) const;

    // Symmetry, zero diagonal, non-negativity and the triangle inequality.
    std::vector<std::string> metric_violations(double tolerance = 1e-9) const;

    friend bool operator==(const CostMatrix&, const CostMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Assignment {
    std::vector<int> permutation;  // row i -> column permutation[i]
    double cost = 0;
};

// Exact minimum cost perfect matching. Among optimal assignments the
// lexicographically smallest permutation is returned.
Assignment min_cost_perfect_matching(const CostMatrix& costs);

// Optimal cost only; skips the tie-break pass.
double matching_cost(const CostMatrix& costs);

struct TransportPlan {
    CostMatrix plan;  // rows = source support, cols = target support
    double cost = 0;
};

// Exact optimal transport between equal-mass non-negative vectors.
TransportPlan wasserstein(std::span<const double> x, std::span<const double> y, const CostMatrix& costs);

// Cost of wasserstein(x, y, costs) on sparse vectors indexing into `costs`.
double wasserstein_cost(const SparseVector& x, const SparseVector& y, const CostMatrix& costs);

enum class BarycenterMode { exact, regularized };

struct BarycenterOptions {
    BarycenterMode mode = BarycenterMode::regularized;
    double epsilon = 0;  // <= 0 selects 0.05 * mean(costs)
    int max_iter = 200;
    double tolerance = 1e-6;  // L1 movement of the iterate
    std::size_t exact_support_cap = 200;
    std::size_t exact_constraint_cap = 2500;
};

// Fixed-support barycenter minimizing sum_s w_s * W(x_s, c). Weights default
// to 1 per vector.
std::vector<double> barycenter(std::span<const std::vector<double>> vectors, const CostMatrix& costs,
                               const BarycenterOptions& options = {}, std::span<const double> weights = {});

double barycenter_objective(std::span<const std::vector<double>> vectors, std::span<const double> center,
                            const CostMatrix& costs, std::span<const double> weights = {});

}  // namespace rwl
