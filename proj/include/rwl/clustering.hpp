#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rwl/transport.hpp"
#include "rwl/wl_labels.hpp"

namespace rwl {

// Everything needed to compare the types of one level as unfolding tree
// vectors: root costs over labels + blank, child costs over the child
// alphabet + blank.
struct LevelGeometry {
    int level = 0;
    std::span<const TreeType> types;
    CostMatrix root_costs;   // M_r
    CostMatrix child_costs;  // M_c; 1x1 (blank only) for leaves

    std::size_t child_alphabet() const { return child_costs.rows() - 1; }
};

// 2 * maximum degree over `types`.
int common_mass(std::span<const TreeType> types);

struct ClusterCenter {
    std::vector<double> root;      // over labels + blank, mass 1
    std::vector<double> children;  // over child alphabet + blank, common mass
};

// Root and child transport cost between a tree vector and a center.
double center_distance(const UnfoldingTreeVector& vector, const ClusterCenter& center, const CostMatrix& m_r,
                       const CostMatrix& m_c);

// Pairwise center distances with the blank (all mass on the blank) as the
// last row and column.
CostMatrix center_distances(std::span<const ClusterCenter> centers, const CostMatrix& m_r, const CostMatrix& m_c);

enum class InitMode { uniform, kpp };

struct ClusteringOptions {
    int k = 1;
    std::uint64_t seed = 0;
    int max_iter = 50;
    InitMode init = InitMode::kpp;
    BarycenterOptions barycenter;
    // Child barycenters are restricted to the union of member supports (plus
    // the blank) when the child alphabet is larger than this.
    std::size_t support_cap = 256;
    bool record_objective = false;
    unsigned threads = 1;
};

struct Clustering {
    int level = 0;
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> assignment;  // type id -> cluster
    std::vector<ClusterCenter> centers;
    double objective = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_history;  // after each update, when recorded
    std::vector<std::string> warnings;

    std::vector<int> cluster_sizes() const;
};

// Lloyd iterations with Wasserstein barycenter centers. Deterministic given
// (geometry, options).
Clustering wasserstein_kmeans(const LevelGeometry& geometry, const ClusteringOptions& options);

// Deterministic draws from a seed, identical on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    std::size_t below(std::size_t n);  // uniform in [0, n)
    double unit();                     // uniform in [0, 1)

private:
    std::mt19937_64 engine_;
};

}  // namespace rwl
