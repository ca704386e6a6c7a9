#include "rwl/sparse_vector.hpp"

#include <numeric>

namespace rwl {

double SparseVector::mass() const { return std::accumulate(weight.begin(), weight.end(), 0.0); }

std::vector<double> SparseVector::dense(std::size_t dimension) const {
    std::vector<double> out(dimension, 0.0);
    for (std::size_t k = 0; k < index.size(); ++k) out.at(static_cast<std::size_t>(index[k])) += weight[k];
    return out;
}

SparseVector SparseVector::from_dense(std::span<const double> values) {
    SparseVector v;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] != 0.0) {
            v.index.push_back(static_cast<int>(i));
            v.weight.push_back(values[i]);
        }
    }
    return v;
}

}  // namespace rwl
