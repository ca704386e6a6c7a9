#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rwl/transport.hpp"
#include "rwl/wl_labels.hpp"

namespace rwl {

// Metric on the label alphabet extended by the blank symbol.
struct CostFunction {
    CostMatrix relabel;          // alphabet x alphabet
    std::vector<double> blank;   // cost of deleting / inserting each label

    std::size_t alphabet_size() const { return blank.size(); }
    double operator()(int a, int b) const { return relabel(static_cast<std::size_t>(a), static_cast<std::size_t>(b)); }
    double deletion(int a) const { return blank[static_cast<std::size_t>(a)]; }

    // (alphabet + 1)^2 matrix with the blank as last row and column.
    CostMatrix extended() const;
    std::vector<std::string> violations(double tolerance = 1e-9) const;
    std::string describe() const;

    static CostFunction uniform(std::size_t alphabet_size, double cost = 1.0);
    static CostFunction from_extended(const CostMatrix& extended);
};

// First line: the alphabet tokens; then the (|tokens| + 1)^2 matrix with the
// blank last. Rows are mapped onto `sigma0` (dataset label tokens). Throws
// FormatError on malformed files and InputError when the result is not a metric.
CostFunction load_cost_function(const std::filesystem::path& file, std::span<const std::int64_t> sigma0);

// Symmetric distance table over the types of one level plus the blank, which
// occupies the last row and column.
struct LevelDistanceMatrix {
    int level = 0;
    CostMatrix distances;

    std::size_t type_count() const { return distances.rows() == 0 ? 0 : distances.rows() - 1; }
    int blank() const { return static_cast<int>(type_count()); }
    double operator()(int a, int b) const {
        return distances(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
};

struct DistanceOptions {
    unsigned threads = 1;
    bool identical_child_shortcut = true;
    std::atomic<std::int64_t>* matching_calls = nullptr;  // incremented per matching solved
};

// Distances between `types`, whose children index the rows of `child_distances`
// (blank last). Root labels are compared under `gamma`.
CostMatrix type_distances(std::span<const TreeType> types, const CostFunction& gamma,
                          const CostMatrix& child_distances, const DistanceOptions& options = {});

// Level-0 matrix when `previous` is null; otherwise `previous` must be the
// matrix of level - 1 (ContractError if not).
LevelDistanceMatrix level_distances(const LabelHierarchy& hierarchy, const CostFunction& gamma, int level,
                                    const LevelDistanceMatrix* previous, const DistanceOptions& options = {});

// Levels 0..hierarchy.depth().
std::vector<LevelDistanceMatrix> all_level_distances(const LabelHierarchy& hierarchy, const CostFunction& gamma,
                                                     const DistanceOptions& options = {});

// Table lookup; DomainError when the two types live on different levels.
double sdted(std::span<const LevelDistanceMatrix> levels, int level_a, int type_a, int level_b, int type_b);

// Root and child transport with vectors padded to deg(a) + deg(b).
double sdted_wasserstein(const LabelHierarchy& hierarchy, const CostFunction& gamma,
                         std::span<const LevelDistanceMatrix> levels, int level_a, int type_a, int level_b,
                         int type_b);

// Minimum mapping cost by exhaustive enumeration of all admissible mappings.
// CapacityError when either tree has more than `max_nodes` nodes.
double oracle_sdted(const LabeledTree& a, const LabeledTree& b, const CostFunction& gamma, int max_nodes = 8);

// Writes the matrix as CSV with type ids as headers and "blank" last.
void write_distance_csv(std::ostream& out, const LevelDistanceMatrix& matrix);

}  // namespace rwl
