#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "rwl/error.hpp"
#include "rwl/sdted.hpp"
#include "test_util.hpp"

using namespace rwl;

namespace {

LabeledTree leaf(int label) { return {label, {}}; }

struct FigureTrees {
    LabeledTree t1{1, {leaf(0), leaf(2)}};
    LabeledTree t2{2, {leaf(0)}};
    LabeledTree t3{0, {leaf(0), leaf(1), leaf(2)}};
    LabeledTree t{0, {t1, t2}};
    LabeledTree t_prime{0, {t3}};
};

LabeledTree unfold(const Graph& g, int v, int depth) {
    LabeledTree t{g.node_labels[static_cast<std::size_t>(v)], {}};
    if (depth > 0) {
        for (int u : g.adjacency[static_cast<std::size_t>(v)]) t.children.push_back(unfold(g, u, depth - 1));
    }
    return t;
}

// Checks the three mapping conditions on an arbitrary pair set, without any
// depth requirement.
struct Flat {
    std::vector<int> label, parent;
};
void flatten(const LabeledTree& t, int parent, Flat& out) {
    const int id = static_cast<int>(out.label.size());
    out.label.push_back(t.label);
    out.parent.push_back(parent);
    for (const auto& c : t.children) flatten(c, id, out);
}

double subset_brute_force(const LabeledTree& ta, const LabeledTree& tb, const CostFunction& gamma) {
    Flat a, b;
    flatten(ta, -1, a);
    flatten(tb, -1, b);
    const std::size_t na = a.label.size(), nb = b.label.size();
    const std::size_t pairs = na * nb;
    REQUIRE(pairs <= 20);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << pairs); ++mask) {
        std::vector<int> image(na, -1), preimage(nb, -1);
        bool ok = true;
        for (std::size_t p = 0; p < pairs && ok; ++p) {
            if (!(mask >> p & 1u)) continue;
            const int v = static_cast<int>(p / nb), w = static_cast<int>(p % nb);
            if (image[static_cast<std::size_t>(v)] >= 0 || preimage[static_cast<std::size_t>(w)] >= 0) ok = false;
            image[static_cast<std::size_t>(v)] = w;
            preimage[static_cast<std::size_t>(w)] = v;
        }
        if (!ok || image[0] != 0) continue;
        for (std::size_t v = 1; v < na && ok; ++v) {
            const int w = image[v];
            if (w < 0) continue;
            if (w == 0 || image[static_cast<std::size_t>(a.parent[v])] != b.parent[static_cast<std::size_t>(w)]) {
                ok = false;
            }
        }
        if (!ok) continue;
        double cost = 0;
        for (std::size_t v = 0; v < na; ++v) {
            cost += image[v] < 0 ? gamma.deletion(a.label[v]) : gamma(a.label[v], b.label[static_cast<std::size_t>(image[v])]);
        }
        for (std::size_t w = 0; w < nb; ++w) {
            if (preimage[w] < 0) cost += gamma.deletion(b.label[w]);
        }
        best = std::min(best, cost);
    }
    return best;
}

// Real-valued metric on labels plus blank: square root of an integer metric.
CostFunction random_real_gamma(std::size_t labels, std::mt19937& rng) {
    CostMatrix m = test::random_integer_metric(labels + 1, rng);
    for (std::size_t i = 0; i <= labels; ++i) {
        for (std::size_t j = 0; j <= labels; ++j) m(i, j) = std::sqrt(m(i, j));
    }
    return CostFunction::from_extended(m);
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& content) {
        path = std::filesystem::temp_directory_path() / ("rwl_gamma_" + std::to_string(std::random_device{}()));
        std::ofstream(path) << content;
    }
    ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("cost function: uniform and file loading") {
    const auto u = CostFunction::uniform(3);
    CHECK(u.violations().empty());
    CHECK(u.extended() == CostMatrix{{0, 1, 1, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}, {1, 1, 1, 0}});
    CHECK(u.describe() == "uniform(1)");

    TempFile file("5 7 9\n0 2 1 1\n2 0 1 1\n1 1 0 1\n1 1 1 0\n");
    const std::int64_t sigma0[] = {7, 9};
    const auto g = load_cost_function(file.path, sigma0);
    CHECK(g.alphabet_size() == 2);
    CHECK(g(0, 1) == 1);
    CHECK(g.deletion(0) == 1);
    const std::int64_t with_five[] = {5, 7};
    CHECK(load_cost_function(file.path, with_five)(0, 1) == 2);

    const std::int64_t missing[] = {4};
    CHECK_THROWS_AS(load_cost_function(file.path, missing), InputError);
    TempFile not_metric("1 2\n0 5 1\n5 0 1\n1 1 0\n");
    const std::int64_t both[] = {1, 2};
    CHECK_THROWS_AS(load_cost_function(not_metric.path, both), InputError);
    TempFile short_matrix("1 2\n0 1 1\n1 0\n");
    CHECK_THROWS_AS(load_cost_function(short_matrix.path, both), FormatError);
    CHECK_THROWS_AS(load_cost_function("/nonexistent/gamma.txt", both), FormatError);
}

TEST_CASE("two-tree example: matrices and all three distances") {
    const FigureTrees f;
    const LabeledTree both[] = {f.t, f.t_prime};
    const auto h = LabelHierarchy::from_trees(both, 2, 3);
    const auto gamma = CostFunction::uniform(3);
    std::atomic<std::int64_t> calls{0};
    DistanceOptions opt;
    opt.matching_calls = &calls;
    const auto levels = all_level_distances(h, gamma, opt);
    REQUIRE(levels.size() == 3);
    CHECK(levels[0].distances == gamma.extended());

    const int order[] = {*h.encode(f.t1, 1), *h.encode(f.t2, 1), *h.encode(f.t3, 1), 3};
    const double drawn[4][4] = {{0, 2, 2, 3}, {2, 0, 3, 2}, {2, 3, 0, 4}, {3, 2, 4, 0}};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(levels[1](order[i], order[j]) == drawn[i][j]);
    }
    const int a = *h.encode(f.t, 2), b = *h.encode(f.t_prime, 2);
    CHECK(sdted(levels, 2, a, 2, b) == 4);
    CHECK(sdted_wasserstein(h, gamma, levels, 2, a, 2, b) == 4);
    CHECK(oracle_sdted(f.t, f.t_prime, gamma) == 4);
    CHECK(oracle_sdted(f.t, f.t, gamma) == 0);
    CHECK(sdted(levels, 2, a, 2, a) == 0);
    CHECK(levels[2](a, levels[2].blank()) == 6);
    CHECK(calls.load() <= 9 + 9 + 4);
}

TEST_CASE("sdted: small examples") {
    const Dataset ds = test::make_dataset({test::path_graph(3)}, 1);
    const auto h = LabelHierarchy::refine(ds, 1);
    const auto gamma = CostFunction::uniform(1);
    const auto levels = all_level_distances(h, gamma);
    CHECK(sdted(levels, 1, 0, 1, 1) == 1);
    CHECK(sdted_wasserstein(h, gamma, levels, 1, 0, 1, 1) == 1);
    CHECK(oracle_sdted(leaf(0), leaf(1), CostFunction::uniform(2)) == 1);
    const LabeledTree three{0, {leaf(0), leaf(0)}};
    CHECK(oracle_sdted(three, three, gamma) == 0);
    CHECK_THROWS_AS(sdted(levels, 0, 0, 1, 0), DomainError);
    CHECK_THROWS_AS(sdted_wasserstein(h, gamma, levels, 1, 0, 0, 0), DomainError);
}

TEST_CASE("level_distances: contract checks") {
    const Dataset ds = test::random_dataset(3, 3, 5, 0.5, 2, 4);
    const auto h = LabelHierarchy::refine(ds, 2);
    const auto gamma = CostFunction::uniform(h.alphabet_size());
    const auto l0 = level_distances(h, gamma, 0, nullptr);
    CHECK_THROWS_AS(level_distances(h, gamma, 2, &l0), ContractError);
    CHECK_THROWS_AS(level_distances(h, gamma, 1, nullptr), ContractError);
    CHECK_THROWS_AS(level_distances(h, CostFunction::uniform(h.alphabet_size() + 1), 0, nullptr), ContractError);
}

TEST_CASE("oracle: size guard") {
    const LabeledTree big{0, {leaf(0), leaf(0), leaf(0), leaf(0), leaf(0), leaf(0), leaf(0), leaf(0)}};
    CHECK_THROWS_AS(oracle_sdted(big, leaf(0), CostFunction::uniform(1)), CapacityError);
    CHECK(oracle_sdted(big, leaf(0), CostFunction::uniform(1), 9) == 8);
}

TEST_CASE("oracle: depth preservation is implied by the mapping conditions") {
    std::mt19937 rng(5);
    int compared = 0;
    for (std::uint32_t seed = 0; seed < 60; ++seed) {
        std::mt19937 g_rng(seed);
        const Graph g = test::random_graph(4, 0.6, 2, g_rng);
        const auto gamma = seed % 2 ? CostFunction::uniform(2) : random_real_gamma(2, rng);
        for (int v = 0; v < 4; ++v) {
            for (int w = 0; w < 4; ++w) {
                const auto a = unfold(g, v, 2), b = unfold(g, w, 1);
                if (a.size() * b.size() > 20) continue;
                CHECK(oracle_sdted(a, b, gamma, 20) == doctest::Approx(subset_brute_force(a, b, gamma)).epsilon(1e-12));
                ++compared;
            }
        }
    }
    CHECK(compared > 100);
}

TEST_CASE("sdted equals the oracle on small random graphs") {
    std::mt19937 rng(11);
    int compared = 0;
    for (std::uint32_t seed = 0; seed < 40; ++seed) {
        const Dataset ds = test::random_dataset(3, 1, 5, 0.45, 2, seed);
        const auto h = LabelHierarchy::refine(ds, 2);
        const auto gamma = seed % 2 ? CostFunction::uniform(h.alphabet_size()) : random_real_gamma(h.alphabet_size(), rng);
        const auto levels = all_level_distances(h, gamma);
        for (int i = 0; i <= 2; ++i) {
            const auto n = static_cast<int>(h.type_count(i));
            for (int a = 0; a < n; ++a) {
                for (int b = a; b < n; ++b) {
                    const auto ta = h.materialize(i, a), tb = h.materialize(i, b);
                    if (ta.size() > 9 || tb.size() > 9) continue;
                    const double expected = oracle_sdted(ta, tb, gamma, 9);
                    if (seed % 2) {
                        CHECK(sdted(levels, i, a, i, b) == expected);
                    } else {
                        CHECK(sdted(levels, i, a, i, b) == doctest::Approx(expected).epsilon(1e-12));
                    }
                    ++compared;
                }
            }
        }
    }
    CHECK(compared > 200);
}

TEST_CASE("sdted: Wasserstein form, shortcut and call budget") {
    std::mt19937 rng(3);
    for (std::uint32_t seed = 0; seed < 8; ++seed) {
        const Dataset ds = test::random_dataset(6, 3, 9, 0.35, 3, 100 + seed);
        const auto h = LabelHierarchy::refine(ds, 3);
        const bool integral = seed % 2 == 1;
        const auto gamma = integral ? CostFunction::uniform(h.alphabet_size()) : random_real_gamma(h.alphabet_size(), rng);
        std::atomic<std::int64_t> calls{0};
        DistanceOptions fast;
        fast.matching_calls = &calls;
        fast.threads = 3;
        DistanceOptions slow;
        slow.identical_child_shortcut = false;
        const auto levels = all_level_distances(h, gamma, fast);
        const auto reference = all_level_distances(h, gamma, slow);
        std::int64_t budget = 0;
        for (int i = 0; i <= h.depth(); ++i) {
            const auto n = static_cast<std::int64_t>(h.type_count(i));
            budget += n * n;
            const auto& m = levels[static_cast<std::size_t>(i)];
            CHECK(m.distances.metric_violations(1e-9).empty());
            for (int a = 0; a <= m.blank(); ++a) {
                for (int b = 0; b <= m.blank(); ++b) {
                    if (integral) {
                        CHECK(m(a, b) == reference[static_cast<std::size_t>(i)](a, b));
                    } else {
                        CHECK(m(a, b) == doctest::Approx(reference[static_cast<std::size_t>(i)](a, b)).epsilon(1e-12));
                    }
                    if (a == m.blank() || b == m.blank()) continue;
                    CHECK((m(a, b) == 0) == (a == b));
                    const double w = sdted_wasserstein(h, gamma, levels, i, a, i, b);
                    if (integral) {
                        CHECK(w == m(a, b));
                    } else {
                        CHECK(w == doctest::Approx(m(a, b)).epsilon(1e-9));
                    }
                }
                // Blank entries are deletion costs, i.e. node counts under unit costs.
                if (integral && a < m.blank()) CHECK(m(a, m.blank()) == static_cast<double>(h.type(i, a).size));
            }
        }
        CHECK(calls.load() <= budget);
    }
}

TEST_CASE("sdted: changing a root label moves the distance by at most one") {
    std::mt19937 rng(8);
    for (std::uint32_t seed = 0; seed < 30; ++seed) {
        std::mt19937 g_rng(seed);
        const Graph g = test::random_graph(5, 0.5, 2, g_rng);
        const auto a = unfold(g, 0, 2), b = unfold(g, 1, 2);
        LabeledTree changed = a;
        changed.label = 1 - changed.label;
        const LabeledTree trees[] = {a, b, changed};
        const auto h = LabelHierarchy::from_trees(trees, 2, 2);
        const auto gamma = CostFunction::uniform(2);
        const auto levels = all_level_distances(h, gamma);
        const double before = sdted(levels, 2, *h.encode(a, 2), 2, *h.encode(b, 2));
        const double after = sdted(levels, 2, *h.encode(changed, 2), 2, *h.encode(b, 2));
        CHECK(std::abs(after - before) <= 1);
        CHECK((after - before == 0 || std::abs(after - before) == 1));
    }
}

TEST_CASE("distance CSV layout") {
    const Dataset ds = test::make_dataset({test::path_graph(3)}, 1);
    const auto h = LabelHierarchy::refine(ds, 1);
    const auto levels = all_level_distances(h, CostFunction::uniform(1));
    std::ostringstream out;
    write_distance_csv(out, levels[1]);
    CHECK(out.str() == "type,0,1,blank\n0,0,1,2\n1,1,0,3\nblank,2,3,0\n");
}
