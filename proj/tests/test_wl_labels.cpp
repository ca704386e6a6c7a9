#include <doctest.h>

#include <algorithm>
#include <random>
#include <map>
#include <set>
#include <sstream>

#include "rwl/error.hpp"
#include "rwl/wl_labels.hpp"
#include "test_util.hpp"

using namespace rwl;

namespace {

LabeledTree leaf(int label) { return {label, {}}; }

// Two depth-2 trees over labels {0,1,2}: T = 0(t1, t2), T' = 0(t3) with
// t1 = 1(0, 2), t2 = 2(0), t3 = 0(0, 1, 2).
struct FigureTrees {
    LabeledTree t1{1, {leaf(0), leaf(2)}};
    LabeledTree t2{2, {leaf(0)}};
    LabeledTree t3{0, {leaf(0), leaf(1), leaf(2)}};
    LabeledTree t{0, {t1, t2}};
    LabeledTree t_prime{0, {t3}};
};

// Canonical bottom-up encoding independent of any hierarchy.
std::string canonical(const LabeledTree& t) {
    std::vector<std::string> parts;
    for (const auto& c : t.children) parts.push_back(canonical(c));
    std::sort(parts.begin(), parts.end());
    std::string s = std::to_string(t.label) + "(";
    for (const auto& p : parts) s += p + ",";
    return s + ")";
}

LabeledTree unfold(const Graph& g, int v, int depth) {
    LabeledTree t{g.node_labels[static_cast<std::size_t>(v)], {}};
    if (depth > 0) {
        for (int u : g.adjacency[static_cast<std::size_t>(v)]) t.children.push_back(unfold(g, u, depth - 1));
    }
    return t;
}

}  // namespace

TEST_CASE("refine: path on three uniform vertices") {
    const Dataset ds = test::make_dataset({test::path_graph(3)}, 1);
    const auto h = LabelHierarchy::refine(ds, 2);
    REQUIRE(h.type_count(0) == 1);
    REQUIRE(h.type_count(1) == 2);
    CHECK(h.type_count(2) == 2);
    // Endpoint X = (a; {a}) sorts before middle Y = (a; {a, a}).
    CHECK(h.type(1, 0).children == std::vector<ChildCount>{{0, 1}});
    CHECK(h.type(1, 1).children == std::vector<ChildCount>{{0, 2}});
    CHECK(h.vertex_type(1, 0, 0) == 0);
    CHECK(h.vertex_type(1, 0, 1) == 1);
    CHECK(h.vertex_type(1, 0, 2) == 0);

    const LabeledTree middle = h.materialize(2, h.vertex_type(2, 0, 1));
    CHECK(middle.size() == 5);
    CHECK(middle.children.size() == 2);
    for (const auto& c : middle.children) CHECK(c.children.size() == 1);
    CHECK(h.type(2, h.vertex_type(2, 0, 1)).size == 5);

    const LabeledTree x = h.materialize(1, 0);
    CHECK(x.size() == 2);
    CHECK(h.materialize(0, 0).children.empty());
}

TEST_CASE("refine: single vertex keeps one childless type per level") {
    const Dataset ds = test::make_dataset({Graph::from_edges({0}, {})}, 1);
    const auto h = LabelHierarchy::refine(ds, 2);
    for (int i = 0; i <= 2; ++i) {
        REQUIRE(h.type_count(i) == 1);
        CHECK(h.type(i, 0).children.empty());
        CHECK(h.type(i, 0).size == 1);
    }
}

TEST_CASE("refine: level zero holds exactly the labels present") {
    Dataset ds = test::make_dataset({test::path_graph(2, 2), test::path_graph(2, 0)}, 4);
    const auto h = LabelHierarchy::refine(ds, 0);
    REQUIRE(h.type_count(0) == 2);
    CHECK(h.type(0, 0).root_label == 0);
    CHECK(h.type(0, 1).root_label == 2);
    CHECK(h.vertex_type(0, 0, 0) == 1);
    CHECK_THROWS_AS(LabelHierarchy::refine(ds, -1), PreconditionError);
}

TEST_CASE("refine: types match explicit unfoldings on random graphs") {
    for (std::uint32_t seed = 1; seed <= 20; ++seed) {
        const Dataset ds = test::random_dataset(6, 1, 7, 0.4, 2, seed);
        const int depth = 3;
        const auto h = LabelHierarchy::refine(ds, depth);
        for (int i = 0; i <= depth; ++i) {
            std::map<std::string, int> id_of_tree;
            std::map<int, std::string> tree_of_id;
            for (std::size_t g = 0; g < ds.size(); ++g) {
                for (std::size_t v = 0; v < ds.graphs[g].vertex_count(); ++v) {
                    const LabeledTree t = unfold(ds.graphs[g], static_cast<int>(v), i);
                    const std::string key = canonical(t);
                    const int id = h.vertex_type(i, g, v);
                    // Equal types iff isomorphic unfolding trees.
                    auto [it, fresh] = id_of_tree.emplace(key, id);
                    CHECK(it->second == id);
                    auto [jt, fresh_id] = tree_of_id.emplace(id, key);
                    CHECK(jt->second == key);
                    CHECK(h.type(i, id).size == t.size());
                    CHECK(h.encode(t, i) == id);
                    CHECK(canonical(h.materialize(i, id)) == key);
                }
            }
            CHECK(tree_of_id.size() == h.type_count(i));
            // Size and refinement bounds.
            CHECK(h.type_count(i) <= ds.total_vertices());
            if (i > 0) CHECK(h.type_count(i) >= h.type_count(i - 1));
            for (const auto& t : h.types(i)) {
                std::int64_t size = 1;
                for (const auto& c : t.children) size += c.multiplicity * h.type(i - 1, c.type).size;
                if (i > 0) CHECK(t.size == size);
            }
        }
        // Level i + 1 refines level i.
        for (int i = 0; i < depth; ++i) {
            std::map<int, int> coarse;
            for (std::size_t g = 0; g < ds.size(); ++g) {
                for (std::size_t v = 0; v < ds.graphs[g].vertex_count(); ++v) {
                    auto [it, fresh] = coarse.emplace(h.vertex_type(i + 1, g, v), h.vertex_type(i, g, v));
                    CHECK(it->second == h.vertex_type(i, g, v));
                }
            }
        }
    }
}

TEST_CASE("refine: ids do not depend on graph order") {
    const Dataset ds = test::random_dataset(8, 2, 8, 0.3, 3, 77);
    Dataset reversed = ds;
    std::reverse(reversed.graphs.begin(), reversed.graphs.end());
    const auto a = LabelHierarchy::refine(ds, 3);
    const auto b = LabelHierarchy::refine(reversed, 3);
    std::ostringstream da, db;
    a.dump(da);
    b.dump(db);
    CHECK(da.str() == db.str());
    for (std::size_t g = 0; g < ds.size(); ++g) {
        CHECK(a.level(3).vertex_types[g] == b.level(3).vertex_types[ds.size() - 1 - g]);
    }
    const auto again = LabelHierarchy::refine(ds, 3);
    std::ostringstream dc;
    again.dump(dc);
    CHECK(da.str() == dc.str());
}

TEST_CASE("dump: one tab-separated line per type") {
    const Dataset ds = test::make_dataset({test::path_graph(3)}, 1);
    std::ostringstream out;
    LabelHierarchy::refine(ds, 1).dump(out);
    CHECK(out.str() == "0\t0\t0\t\n1\t0\t0\t0:1\n1\t1\t0\t0:2\n");
}

TEST_CASE("tree vectors of the two-tree example") {
    const FigureTrees f;
    const LabeledTree both[] = {f.t, f.t_prime};
    const auto h = LabelHierarchy::from_trees(both, 2, 3);
    // Child order t1, t2, t3 as in the drawn matrix, mapped to our ids.
    const int order[] = {*h.encode(f.t1, 1), *h.encode(f.t2, 1), *h.encode(f.t3, 1)};
    const auto to_drawn = [&](const SparseVector& v) {
        const auto dense = v.dense(4);
        return std::vector<double>{dense[static_cast<std::size_t>(order[0])],
                                   dense[static_cast<std::size_t>(order[1])],
                                   dense[static_cast<std::size_t>(order[2])], dense[3]};
    };
    const auto vt = tree_vector(h, 2, *h.encode(f.t, 2), 3);
    const auto vp = tree_vector(h, 2, *h.encode(f.t_prime, 2), 3);
    CHECK(vt.root.dense(4) == std::vector<double>{1, 0, 0, 0});
    CHECK(vp.root.dense(4) == std::vector<double>{1, 0, 0, 0});
    CHECK(to_drawn(vt.children) == std::vector<double>{1, 1, 0, 1});
    CHECK(to_drawn(vp.children) == std::vector<double>{0, 0, 1, 2});
    CHECK(vt.mass == 3);
    CHECK(h.type(2, *h.encode(f.t, 2)).size == 6);
    CHECK_THROWS_AS(tree_vector(h, 2, *h.encode(f.t, 2), 1), PreconditionError);
}

TEST_CASE("tree vector of a leaf puts all mass on the blank") {
    const Dataset ds = test::make_dataset({Graph::from_edges({0}, {})}, 1);
    const auto h = LabelHierarchy::refine(ds, 1);
    const auto v = tree_vector(h, 1, 0, 2);
    CHECK(v.children.dense(2) == std::vector<double>{0, 2});
    CHECK(v.root.dense(2) == std::vector<double>{1, 0});
    const auto zero = tree_vector(h, 1, 0, 0);
    CHECK(zero.children.nonzeros() == 0);
}

TEST_CASE("encode rejects trees outside the hierarchy") {
    const Dataset ds = test::make_dataset({test::path_graph(3)}, 1);
    const auto h = LabelHierarchy::refine(ds, 1);
    const LabeledTree star{0, {leaf(0), leaf(0), leaf(0)}};
    CHECK_FALSE(h.encode(star, 1).has_value());
    CHECK_FALSE(h.encode(star, 2).has_value());
    CHECK(h.encode(star, 0) == 0);
}
