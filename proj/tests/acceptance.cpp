// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any gated
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "rwl/kernels.hpp"
#include "rwl/sdted.hpp"
#include "test_util.hpp"

using namespace rwl;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail << "first failure: " << what << "; ";
        pass = pass && ok;
    }
};

int failures = 0;

void report(const std::string& name, const std::function<void(Outcome&)>& body, double limit_seconds) {
    Outcome o;
    const auto start = Clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.require(false, std::string("exception: ") + e.what());
    }
    const double t = since(start);
    if (limit_seconds > 0) o.require(t < limit_seconds, "runtime over " + std::to_string(limit_seconds) + " s");
    if (!o.pass) ++failures;
    std::printf("%s %s (%.2f s) %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), t, o.detail.str().c_str());
    std::fflush(stdout);
}

// Every Gram built here is also checked for positive semidefiniteness.
struct PsdLog {
    int checked = 0;
    int failed = 0;
    double worst = 0;
    std::string first;

    void add(const std::string& what, const Eigen::MatrixXd& m) {
        const auto r = psd_check(m, 1e-8);
        ++checked;
        const double rel = r.min_eigenvalue / std::max(1.0, r.max_eigenvalue);
        worst = std::min(worst, rel);
        if (!r.pass) {
            if (failed == 0) first = what;
            ++failed;
        }
    }
} psd;

LabeledTree leaf(int label) { return {label, {}}; }

CostFunction real_gamma(std::size_t labels, std::mt19937& rng) {
    CostMatrix m = test::random_integer_metric(labels + 1, rng);
    for (std::size_t i = 0; i <= labels; ++i) {
        for (std::size_t j = 0; j <= labels; ++j) m(i, j) = std::sqrt(m(i, j));
    }
    return CostFunction::from_extended(m);
}

KernelConfig config(KernelVariant v, int depth) {
    KernelConfig c;
    c.variant = v;
    c.depth = depth;
    return c;
}

void figure_example(Outcome& o) {
    const LabeledTree t1{1, {leaf(0), leaf(2)}};
    const LabeledTree t2{2, {leaf(0)}};
    const LabeledTree t3{0, {leaf(0), leaf(1), leaf(2)}};
    const LabeledTree t{0, {t1, t2}};
    const LabeledTree t_prime{0, {t3}};
    const LabeledTree both[] = {t, t_prime};
    const auto h = LabelHierarchy::from_trees(both, 2, 3);
    const auto gamma = CostFunction::uniform(3);
    const auto levels = all_level_distances(h, gamma);

    o.require(levels[0].distances == gamma.extended(), "M_r differs from unit costs");
    const int order[] = {*h.encode(t1, 1), *h.encode(t2, 1), *h.encode(t3, 1), levels[1].blank()};
    const double drawn[4][4] = {{0, 2, 2, 3}, {2, 0, 3, 2}, {2, 3, 0, 4}, {3, 2, 4, 0}};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) o.require(levels[1](order[i], order[j]) == drawn[i][j], "M_c entry");
    }
    const int a = *h.encode(t, 2), b = *h.encode(t_prime, 2);
    const auto va = tree_vector(h, 2, a, 3), vb = tree_vector(h, 2, b, 3);
    const double root = wasserstein_cost(va.root, vb.root, levels[0].distances);
    const double children = wasserstein_cost(va.children, vb.children, levels[1].distances);
    const double table = sdted(levels, 2, a, 2, b);
    const double transport = sdted_wasserstein(h, gamma, levels, 2, a, 2, b);
    const double oracle = oracle_sdted(t, t_prime, gamma);
    o.require(root == 0 && children == 4, "root/child transport");
    o.require(table == 4 && transport == 4 && oracle == 4, "distance paths");
    o.detail << "W_r=" << root << " W_c=" << children << " matching=" << table << " wasserstein=" << transport
             << " oracle=" << oracle;
}

// All labeled graphs on up to five vertices over a two-letter alphabet; 500
// type pairs drawn uniformly among the unfolding trees of depth <= 2.
void oracle_equivalence(Outcome& o) {
    std::vector<Graph> graphs;
    for (int n = 1; n <= 5; ++n) {
        std::vector<std::pair<int, int>> slots;
        for (int u = 0; u < n; ++u) {
            for (int v = u + 1; v < n; ++v) slots.emplace_back(u, v);
        }
        for (std::uint32_t edges = 0; edges < (1u << slots.size()); ++edges) {
            std::vector<Edge> es;
            for (std::size_t s = 0; s < slots.size(); ++s) {
                if (edges >> s & 1u) es.push_back({slots[s].first, slots[s].second, std::nullopt});
            }
            for (std::uint32_t labels = 0; labels < (1u << n); ++labels) {
                std::vector<int> l(static_cast<std::size_t>(n));
                for (int v = 0; v < n; ++v) l[static_cast<std::size_t>(v)] = static_cast<int>(labels >> v & 1u);
                graphs.push_back(Graph::from_edges(std::move(l), es));
            }
        }
    }
    const Dataset all = test::make_dataset(std::move(graphs), 2);
    const auto population = LabelHierarchy::refine(all, 2);

    std::mt19937 rng(2024);
    std::vector<LabeledTree> trees;
    std::vector<std::pair<int, int>> depths;  // level, position of the first tree
    for (int p = 0; p < 500; ++p) {
        const int d = p % 3;
        std::uniform_int_distribution<int> pick(0, static_cast<int>(population.type_count(d)) - 1);
        depths.emplace_back(d, static_cast<int>(trees.size()));
        trees.push_back(population.materialize(d, pick(rng)));
        trees.push_back(population.materialize(d, pick(rng)));
    }
    std::vector<LabeledTree> deepest;
    for (std::size_t i = 0; i < trees.size(); ++i) {
        if (depths[i / 2].first == 2) deepest.push_back(trees[i]);
    }
    std::size_t largest = 0;
    int mismatches = 0;
    for (int variant = 0; variant < 2; ++variant) {
        const auto gamma = variant == 0 ? CostFunction::uniform(2) : [&] {
            std::mt19937 g(7);
            return CostFunction::from_extended(test::random_integer_metric(3, g, 4));
        }();
        const auto h2 = LabelHierarchy::from_trees(deepest, 2, 2);
        std::vector<LabeledTree> shallow1;
        for (std::size_t i = 0; i < trees.size(); ++i) {
            if (depths[i / 2].first == 1) shallow1.push_back(trees[i]);
        }
        const auto h1 = LabelHierarchy::from_trees(shallow1, 1, 2);
        const auto levels2 = all_level_distances(h2, gamma);
        const auto levels1 = all_level_distances(h1, gamma);
        const auto levels0 = all_level_distances(LabelHierarchy::from_trees(std::vector<LabeledTree>{leaf(0), leaf(1)}, 0, 2), gamma);
        for (const auto& [d, first] : depths) {
            const auto& ta = trees[static_cast<std::size_t>(first)];
            const auto& tb = trees[static_cast<std::size_t>(first) + 1];
            largest = std::max<std::size_t>(largest, static_cast<std::size_t>(std::max(ta.size(), tb.size())));
            double fast = 0;
            if (d == 2) {
                fast = sdted(levels2, 2, *h2.encode(ta, 2), 2, *h2.encode(tb, 2));
            } else if (d == 1) {
                fast = sdted(levels1, 1, *h1.encode(ta, 1), 1, *h1.encode(tb, 1));
            } else {
                fast = sdted(levels0, 0, ta.label, 0, tb.label);
            }
            const double slow = oracle_sdted(ta, tb, gamma, 32);
            if (fast != slow) ++mismatches;
        }
    }
    o.require(mismatches == 0, std::to_string(mismatches) + " pairs differ from the oracle");
    o.detail << "graphs=" << all.size() << " types=" << population.type_count(0) << "/" << population.type_count(1)
             << "/" << population.type_count(2) << " pairs=500 x 2 cost functions, largest tree=" << largest
             << " nodes, mismatches=" << mismatches;
}

void metric_suite(Outcome& o) {
    std::mt19937 rng(99);
    const Dataset ds = test::random_dataset(30, 3, 12, 0.3, 3, 31);
    const auto h = LabelHierarchy::refine(ds, 3);
    int checks = 0;
    double worst_triangle = 0;
    for (int variant = 0; variant < 2; ++variant) {
        const auto gamma = variant == 0 ? CostFunction::uniform(h.alphabet_size()) : real_gamma(h.alphabet_size(), rng);
        const auto levels = all_level_distances(h, gamma);
        for (int i = 0; i <= 3; ++i) {
            const int n = static_cast<int>(h.type_count(i));
            std::uniform_int_distribution<int> pick(0, n - 1);
            for (int s = 0; s < 1000; ++s) {
                const int a = pick(rng), b = pick(rng), c = pick(rng);
                const double ab = sdted(levels, i, a, i, b);
                o.require(ab == sdted(levels, i, b, i, a), "symmetry");
                o.require((ab == 0) == (a == b), "zero iff identical");
                o.require(ab >= 0, "non-negative");
                const double excess = ab - sdted(levels, i, a, i, c) - sdted(levels, i, c, i, b);
                worst_triangle = std::max(worst_triangle, excess);
                o.require(excess <= 1e-9, "triangle inequality");
                ++checks;
            }
        }
    }
    o.detail << "triples=" << checks << " (4 levels, unit and real costs) max triangle excess=" << worst_triangle;
}

void wasserstein_identity(Outcome& o) {
    std::mt19937 rng(5);
    const Dataset ds = test::random_dataset(25, 3, 12, 0.3, 3, 77);
    const auto h = LabelHierarchy::refine(ds, 3);
    int pairs = 0, differ = 0;
    for (int variant = 0; variant < 2; ++variant) {
        const auto gamma = variant == 0 ? CostFunction::uniform(h.alphabet_size())
                                        : CostFunction::from_extended(test::random_integer_metric(h.alphabet_size() + 1, rng));
        const auto levels = all_level_distances(h, gamma);
        for (int s = 0; s < 250; ++s) {
            const int i = 1 + s % 3;
            std::uniform_int_distribution<int> pick(0, static_cast<int>(h.type_count(i)) - 1);
            const int a = pick(rng), b = pick(rng);
            if (sdted(levels, i, a, i, b) != sdted_wasserstein(h, gamma, levels, i, a, i, b)) ++differ;
            ++pairs;
        }
    }
    o.require(differ == 0, std::to_string(differ) + " pairs differ");
    o.detail << "pairs=" << pairs << " (unit and integer costs) differing=" << differ;
}

void wl_degeneration(Outcome& o) {
    const Dataset ds = test::random_dataset(20, 4, 12, 0.3, 3, 404);
    const int h = 3;
    const auto hierarchy = LabelHierarchy::refine(ds, h);
    std::vector<std::vector<std::vector<int>>> singletons;
    for (int i = 0; i <= h; ++i) {
        std::vector<int> id(hierarchy.type_count(i));
        for (std::size_t t = 0; t < id.size(); ++t) id[t] = static_cast<int>(t);
        singletons.push_back({id});
    }
    const auto wl = wl_subtree_gram(ds, config(KernelVariant::wl, h));
    const auto from_partitions = rwl_gram_from_partitions(hierarchy, singletons, {});
    o.require(from_partitions.matrix == wl.matrix, "zero-distance partitions differ from wl");

    auto c = config(KernelVariant::rwl, h);
    c.k = KChoice::parse("all");
    c.clusterings = 1;
    const auto rwl = rwl_gram(ds, c);
    o.require(rwl.matrix == wl.matrix, "rwl with every type alone differs from wl");
    c.variant = KernelVariant::rwl_star;
    const auto star = rwl_star_gram(ds, c);
    o.require(star.matrix == rwl.matrix, "rwl-star with k = |types| differs from rwl");
    psd.add("wl", wl.matrix);
    psd.add("rwl k=all", rwl.matrix);
    psd.add("rwl-star k=all", star.matrix);
    o.detail << "graphs=20 h=3 max |rwl-star - rwl|=" << (star.matrix - rwl.matrix).cwiseAbs().maxCoeff();
}

void matching_budget(Outcome& o) {
    for (std::uint32_t seed : {1u, 2u, 3u}) {
        const Dataset ds = test::random_dataset(20, 5, 12, 0.25, 4, seed);
        auto c = config(KernelVariant::rwl, 3);
        const auto g = rwl_gram(ds, c);
        std::int64_t budget = 0;
        for (const auto& level : g.levels) budget += static_cast<std::int64_t>(level.types * level.types);
        o.require(g.matching_calls <= budget, "calls over budget");
        o.require(g.matching_calls > 0, "counter not wired");
        o.detail << "rwl calls=" << g.matching_calls << "<=" << budget << " ";
        psd.add("rwl seed " + std::to_string(seed), g.matrix);
        c.variant = KernelVariant::rwl_star;
        const auto star = rwl_star_gram(ds, c);
        o.require(star.matching_calls == 0, "rwl-star should not call the matcher");
        psd.add("rwl-star seed " + std::to_string(seed), star.matrix);
        psd.add("vehist seed " + std::to_string(seed), vehist_gram(ds).matrix);
    }
    o.detail << "(rwl-star compares cluster centers and makes no matching calls)";
}

void complexity(Outcome& o) {
    // 100 graphs, 30 vertices, edge probability 4/29 for average degree 4.
    const Dataset ds = test::random_dataset(100, 30, 30, 4.0 / 29.0, 5, 2718);
    double degree = 0;
    for (const auto& g : ds.graphs) degree += 2.0 * static_cast<double>(g.edge_count()) / static_cast<double>(g.vertex_count());
    auto c = config(KernelVariant::rwl_star, 4);
    c.threads = std::max(1u, std::thread::hardware_concurrency());
    const auto g = rwl_star_gram(ds, c);
    psd.add("complexity run", g.matrix);
    for (const auto& level : g.levels) {
        const int expected = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(level.types))));
        o.require(level.k == expected, "k at level " + std::to_string(level.level));
        if (level.level < c.depth) {
            o.require(level.propagated == static_cast<std::size_t>(expected),
                      "surrogate alphabet at level " + std::to_string(level.level + 1));
        }
        o.detail << "L" << level.level << ":|types|=" << level.types << ",k=" << level.k << ",alphabet="
                 << level.propagated << " ";
    }
    o.detail << "avg degree=" << degree / 100.0 << " threads=" << c.threads;
}

}  // namespace

int main() {
    report("two-tree example", figure_example, 1);
    report("oracle equivalence", oracle_equivalence, 120);
    report("metric suite", metric_suite, 120);
    report("Wasserstein identity", wasserstein_identity, 60);
    report("WL degeneration", wl_degeneration, 60);
    report("matching-call budget", matching_budget, 0);
    report("complexity smoke test", complexity, 300);
    report("PSD", [](Outcome& o) {
        o.require(psd.failed == 0, psd.first + " is not PSD");
        o.detail << "grams=" << psd.checked << " failed=" << psd.failed << " worst relative min eigenvalue=" << psd.worst;
    }, 0);
    std::printf("NOT GATED benchmark accuracy: requires the public IMDB-BINARY and REDDIT-BINARY datasets and the "
                "evaluation harness; not run here\n");
    return failures == 0 ? 0 : 1;
}
