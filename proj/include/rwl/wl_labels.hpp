#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rwl/graph.hpp"
#include "rwl/sparse_vector.hpp"

namespace rwl {

struct ChildCount {
    int type = 0;          // id at the previous level (or a surrogate label)
    int multiplicity = 0;

    friend bool operator==(const ChildCount&, const ChildCount&) = default;
    friend auto operator<=>(const ChildCount&, const ChildCount&) = default;
};

// One unfolding-tree type: original root label plus the multiset of child
// types one level down. Equal (root_label, children) at a level means the
// materialized trees are isomorphic.
struct TreeType {
    int level = 0;
    int root_label = 0;
    std::vector<ChildCount> children;  // sorted by child type id
    std::int64_t size = 1;             // node count of the materialized tree

    int degree() const;
};

// Type table and per-vertex type ids of a single refinement level.
struct LevelTable {
    std::vector<TreeType> types;
    std::vector<std::vector<int>> vertex_types;  // [graph][vertex]
};

// Builds the level whose children are `child_labels` (per graph, per vertex)
// drawn from an alphabet with sizes `child_sizes`. Ids follow the sorted order
// of (root_label, children), so the result is independent of dataset order.
LevelTable build_level(const Dataset& dataset, int level,
                       const std::vector<std::vector<int>>& child_labels,
                       std::span<const std::int64_t> child_sizes);

// Explicit rooted labeled tree; children are ordered by type id when produced
// by materialize().
struct LabeledTree {
    int label = 0;
    std::vector<LabeledTree> children;

    std::int64_t size() const;
    int height() const;  // 0 for a single node
};

class LabelHierarchy {
public:
    LabelHierarchy() = default;

    // WL refinement of every vertex of `dataset` for levels 0..depth.
    static LabelHierarchy refine(const Dataset& dataset, int depth);

    // Registers the given trees (and all their subtrees) as types of a
    // hierarchy of the given depth. Tree i is encoded at level `depth`; no
    // vertex tables are created.
    static LabelHierarchy from_trees(std::span<const LabeledTree> trees, int depth,
                                     std::size_t alphabet_size);

    int depth() const { return static_cast<int>(levels_.size()) - 1; }
    std::size_t alphabet_size() const { return alphabet_size_; }

    const LevelTable& level(int i) const { return levels_.at(static_cast<std::size_t>(i)); }
    const std::vector<TreeType>& types(int i) const { return level(i).types; }
    const TreeType& type(int i, int id) const { return types(i).at(static_cast<std::size_t>(id)); }
    std::size_t type_count(int i) const { return types(i).size(); }

    int vertex_type(int i, std::size_t graph, std::size_t vertex) const {
        return level(i).vertex_types.at(graph).at(vertex);
    }

    // Type id of `tree` truncated to depth `i`, if that type exists.
    std::optional<int> encode(const LabeledTree& tree, int i) const;
    std::optional<int> find(int i, int root_label, const std::vector<ChildCount>& children) const;

    LabeledTree materialize(int i, int id) const;

    // level<TAB>id<TAB>root_label<TAB>child:mult,...
    void dump(std::ostream& out) const;

private:
    std::vector<LevelTable> levels_;
    std::size_t alphabet_size_ = 0;
};

// (V_r, V_c): one-hot root label over sigma0 + blank, child-type counts over
// the previous level's types + blank. The blank index is the last one.
struct UnfoldingTreeVector {
    SparseVector root;
    SparseVector children;
    double mass = 0;  // |children|_1
};

// Vector of type `id` at `level`, with the blank entry of V_c topped up to
// `target_mass`. Throws PreconditionError when target_mass < degree.
UnfoldingTreeVector tree_vector(const LabelHierarchy& hierarchy, int level, int id, int target_mass);

// Same construction for an arbitrary TreeType whose children index an
// alphabet with `child_alphabet_size` entries (blank = that size).
UnfoldingTreeVector tree_vector(const TreeType& type, std::size_t child_alphabet_size, int target_mass);

}  // namespace rwl
