#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rwl {

// Sparse non-negative vector over a dense index space.
struct SparseVector {
    std::vector<int> index;  // strictly increasing
    std::vector<double> weight;

    std::size_t nonzeros() const { return index.size(); }
    double mass() const;
    std::vector<double> dense(std::size_t dimension) const;
    static SparseVector from_dense(std::span<const double> values);
};

}  // namespace rwl
