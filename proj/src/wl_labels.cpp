#include "rwl/wl_labels.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <tuple>

#include "rwl/error.hpp"

namespace rwl {
namespace {

using Key = std::pair<int, std::vector<ChildCount>>;

std::vector<ChildCount> count_children(std::vector<int> labels) {
    std::sort(labels.begin(), labels.end());
    std::vector<ChildCount> out;
    for (int label : labels) {
        if (!out.empty() && out.back().type == label) {
            ++out.back().multiplicity;
        } else {
            out.push_back({label, 1});
        }
    }
    return out;
}

std::int64_t tree_size(const std::vector<ChildCount>& children, std::span<const std::int64_t> child_sizes) {
    std::int64_t size = 1;
    for (const auto& c : children) {
        const std::int64_t child = child_sizes.empty() ? 1 : child_sizes[static_cast<std::size_t>(c.type)];
        size += c.multiplicity * child;
    }
    return size;
}

// Assigns ids in sorted key order.
std::vector<TreeType> make_types(const std::vector<Key>& sorted_keys, int level,
                                 std::span<const std::int64_t> child_sizes) {
    std::vector<TreeType> types;
    types.reserve(sorted_keys.size());
    for (const auto& [root, children] : sorted_keys) {
        TreeType t;
        t.level = level;
        t.root_label = root;
        t.children = children;
        t.size = tree_size(children, child_sizes);
        types.push_back(std::move(t));
    }
    return types;
}

std::vector<std::int64_t> sizes_of(const std::vector<TreeType>& types) {
    std::vector<std::int64_t> sizes;
    sizes.reserve(types.size());
    for (const auto& t : types) sizes.push_back(t.size);
    return sizes;
}

LevelTable level_zero(const Dataset& dataset) {
    std::vector<bool> present(dataset.sigma0.size(), false);
    for (const auto& g : dataset.graphs) {
        for (int label : g.node_labels) present.at(static_cast<std::size_t>(label)) = true;
    }
    // Ids at level 0 are label ids of present labels, compacted in label order.
    std::vector<int> id_of(present.size(), -1);
    LevelTable table;
    for (std::size_t a = 0; a < present.size(); ++a) {
        if (!present[a]) continue;
        id_of[a] = static_cast<int>(table.types.size());
        table.types.push_back(TreeType{0, static_cast<int>(a), {}, 1});
    }
    for (const auto& g : dataset.graphs) {
        std::vector<int> ids(g.vertex_count());
        for (std::size_t v = 0; v < ids.size(); ++v) ids[v] = id_of[static_cast<std::size_t>(g.node_labels[v])];
        table.vertex_types.push_back(std::move(ids));
    }
    return table;
}

}  // namespace

int TreeType::degree() const {
    int d = 0;
    for (const auto& c : children) d += c.multiplicity;
    return d;
}

LevelTable build_level(const Dataset& dataset, int level, const std::vector<std::vector<int>>& child_labels,
                       std::span<const std::int64_t> child_sizes) {
    std::vector<std::vector<Key>> vertex_keys(dataset.size());
    std::vector<Key> keys;
    for (std::size_t g = 0; g < dataset.size(); ++g) {
        const Graph& graph = dataset.graphs[g];
        auto& per_vertex = vertex_keys[g];
        per_vertex.reserve(graph.vertex_count());
        for (std::size_t v = 0; v < graph.vertex_count(); ++v) {
            std::vector<int> labels;
            labels.reserve(graph.adjacency[v].size());
            for (int u : graph.adjacency[v]) labels.push_back(child_labels[g][static_cast<std::size_t>(u)]);
            per_vertex.emplace_back(graph.node_labels[v], count_children(std::move(labels)));
            keys.push_back(per_vertex.back());
        }
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    LevelTable table;
    table.types = make_types(keys, level, child_sizes);
    table.vertex_types.resize(dataset.size());
    for (std::size_t g = 0; g < dataset.size(); ++g) {
        auto& ids = table.vertex_types[g];
        ids.reserve(vertex_keys[g].size());
        for (const auto& key : vertex_keys[g]) {
            ids.push_back(static_cast<int>(std::lower_bound(keys.begin(), keys.end(), key) - keys.begin()));
        }
    }
    return table;
}

LabelHierarchy LabelHierarchy::refine(const Dataset& dataset, int depth) {
    if (depth < 0) throw PreconditionError("wl-labels", "depth must be non-negative");
    LabelHierarchy h;
    h.alphabet_size_ = dataset.sigma0.size();
    h.levels_.push_back(level_zero(dataset));
    for (int i = 1; i <= depth; ++i) {
        const auto& prev = h.levels_.back();
        const auto sizes = sizes_of(prev.types);
        h.levels_.push_back(build_level(dataset, i, prev.vertex_types, sizes));
    }
    return h;
}

LabelHierarchy LabelHierarchy::from_trees(std::span<const LabeledTree> trees, int depth,
                                          std::size_t alphabet_size) {
    if (depth < 0) throw PreconditionError("wl-labels", "depth must be non-negative");
    // Collect, per level, the truncated subtrees that occur: tree t at level
    // `depth`, its children at depth-1, and so on.
    std::vector<std::vector<const LabeledTree*>> occurrences(static_cast<std::size_t>(depth) + 1);
    for (const auto& t : trees) occurrences[static_cast<std::size_t>(depth)].push_back(&t);
    for (int i = depth; i > 0; --i) {
        for (const LabeledTree* t : occurrences[static_cast<std::size_t>(i)]) {
            for (const auto& c : t->children) occurrences[static_cast<std::size_t>(i - 1)].push_back(&c);
        }
    }

    LabelHierarchy h;
    h.alphabet_size_ = alphabet_size;
    for (int i = 0; i <= depth; ++i) {
        std::vector<Key> keys;
        for (const LabeledTree* t : occurrences[static_cast<std::size_t>(i)]) {
            if (t->label < 0 || static_cast<std::size_t>(t->label) >= alphabet_size) {
                throw PreconditionError("wl-labels", "tree label outside the alphabet");
            }
            std::vector<int> child_ids;
            if (i > 0) {
                for (const auto& c : t->children) child_ids.push_back(*h.encode(c, i - 1));
            }
            keys.emplace_back(t->label, count_children(std::move(child_ids)));
        }
        std::sort(keys.begin(), keys.end());
        keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
        std::vector<std::int64_t> sizes;
        if (i > 0) sizes = sizes_of(h.levels_.back().types);
        LevelTable table;
        table.types = make_types(keys, i, sizes);
        h.levels_.push_back(std::move(table));
    }
    return h;
}

std::optional<int> LabelHierarchy::find(int i, int root_label, const std::vector<ChildCount>& children) const {
    const auto& ts = types(i);
    const auto it = std::lower_bound(ts.begin(), ts.end(), Key{root_label, children},
                                     [](const TreeType& t, const Key& k) {
                                         return std::tie(t.root_label, t.children) < std::tie(k.first, k.second);
                                     });
    if (it == ts.end() || it->root_label != root_label || it->children != children) return std::nullopt;
    return static_cast<int>(it - ts.begin());
}

std::optional<int> LabelHierarchy::encode(const LabeledTree& tree, int i) const {
    if (i < 0 || i > depth()) return std::nullopt;
    std::vector<int> child_ids;
    if (i > 0) {
        for (const auto& c : tree.children) {
            const auto id = encode(c, i - 1);
            if (!id) return std::nullopt;
            child_ids.push_back(*id);
        }
    }
    return find(i, tree.label, count_children(std::move(child_ids)));
}

LabeledTree LabelHierarchy::materialize(int i, int id) const {
    const TreeType& t = type(i, id);
    LabeledTree tree{t.root_label, {}};
    for (const auto& c : t.children) {
        const LabeledTree child = materialize(i - 1, c.type);
        for (int m = 0; m < c.multiplicity; ++m) tree.children.push_back(child);
    }
    return tree;
}

void LabelHierarchy::dump(std::ostream& out) const {
    for (int i = 0; i <= depth(); ++i) {
        const auto& ts = types(i);
        for (std::size_t id = 0; id < ts.size(); ++id) {
            out << i << '\t' << id << '\t' << ts[id].root_label << '\t';
            for (std::size_t c = 0; c < ts[id].children.size(); ++c) {
                if (c) out << ',';
                out << ts[id].children[c].type << ':' << ts[id].children[c].multiplicity;
            }
            out << '\n';
        }
    }
}

std::int64_t LabeledTree::size() const {
    std::int64_t n = 1;
    for (const auto& c : children) n += c.size();
    return n;
}

int LabeledTree::height() const {
    int h = 0;
    for (const auto& c : children) h = std::max(h, 1 + c.height());
    return h;
}

UnfoldingTreeVector tree_vector(const TreeType& type, std::size_t child_alphabet_size, int target_mass) {
    const int degree = type.degree();
    if (target_mass < degree) {
        throw PreconditionError("wl-labels", "target mass " + std::to_string(target_mass) +
                                                 " is below the type's degree " + std::to_string(degree));
    }
    UnfoldingTreeVector out;
    out.root.index = {type.root_label};
    out.root.weight = {1.0};
    for (const auto& c : type.children) {
        out.children.index.push_back(c.type);
        out.children.weight.push_back(c.multiplicity);
    }
    if (target_mass > degree) {
        out.children.index.push_back(static_cast<int>(child_alphabet_size));
        out.children.weight.push_back(target_mass - degree);
    }
    out.mass = target_mass;
    return out;
}

UnfoldingTreeVector tree_vector(const LabelHierarchy& hierarchy, int level, int id, int target_mass) {
    const std::size_t child_alphabet = level == 0 ? 0 : hierarchy.type_count(level - 1);
    return tree_vector(hierarchy.type(level, id), child_alphabet, target_mass);
}

}  // namespace rwl
