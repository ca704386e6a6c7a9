#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include "rwl/error.hpp"
#include "rwl/sdted.hpp"

namespace rwl {
namespace {

struct FlatTree {
    std::vector<int> label;
    std::vector<int> parent;  // -1 for the root
    std::vector<int> depth;
    std::vector<std::vector<int>> children;
    std::vector<int> shape;   // equal iff the rooted subtrees are isomorphic
};

// Preorder flattening, so every parent precedes its children.
void flatten(const LabeledTree& t, int parent, int depth, FlatTree& out) {
    const int id = static_cast<int>(out.label.size());
    out.label.push_back(t.label);
    out.parent.push_back(parent);
    out.depth.push_back(depth);
    out.children.emplace_back();
    if (parent >= 0) out.children[static_cast<std::size_t>(parent)].push_back(id);
    for (const auto& c : t.children) flatten(c, id, depth + 1, out);
}

std::string canonical(const FlatTree& t, int v, std::map<std::string, int>& ids, std::vector<int>& shape) {
    std::vector<std::string> parts;
    for (int c : t.children[static_cast<std::size_t>(v)]) parts.push_back(canonical(t, c, ids, shape));
    std::sort(parts.begin(), parts.end());
    std::string s = std::to_string(t.label[static_cast<std::size_t>(v)]) + "(";
    for (const auto& p : parts) s += p + ",";
    s += ")";
    shape[static_cast<std::size_t>(v)] = ids.emplace(s, static_cast<int>(ids.size())).first->second;
    return s;
}

void classify(FlatTree& t, std::map<std::string, int>& ids) {
    t.shape.assign(t.label.size(), -1);
    canonical(t, 0, ids, t.shape);
}

struct Search {
    const FlatTree& a;
    const FlatTree& b;
    const CostFunction& gamma;
    std::vector<int> image{};        // a-vertex -> b-vertex or -1
    std::vector<char> used{};        // b-vertex already mapped
    std::vector<double> a_floor{};   // cheapest possible cost of each a-vertex
    std::vector<double> a_suffix{};  // sum of a_floor over v.. end
    std::vector<int> a_left{};       // per depth: a-vertices not yet decided
    std::vector<int> b_free{};       // per depth: b-vertices not yet used
    double b_min_deletion = 0;
    double best = std::numeric_limits<double>::infinity();

    double b_deletions() const {
        double total = 0;
        for (std::size_t w = 0; w < used.size(); ++w) {
            if (!used[w]) total += gamma.deletion(b.label[w]);
        }
        return total;
    }

    // Every b-vertex beyond the remaining a-vertices of its depth must be deleted.
    double forced_b() const {
        double n = 0;
        for (std::size_t d = 0; d < b_free.size(); ++d) n += std::max(0, b_free[d] - a_left[d]);
        return n * b_min_deletion;
    }

    // Decides the image of a-vertex v; the parent's image is already fixed.
    void extend(std::size_t v, double spent) {
        if (v == image.size()) {
            best = std::min(best, spent + b_deletions());
            return;
        }
        if (spent + a_suffix[v] + forced_b() >= best) return;
        const auto d = static_cast<std::size_t>(a.depth[v]);
        --a_left[d];
        const int pb = image[static_cast<std::size_t>(a.parent[v])];
        if (pb >= 0) {
            std::vector<int> tried;
            for (int w : b.children[static_cast<std::size_t>(pb)]) {
                const auto wi = static_cast<std::size_t>(w);
                if (used[wi]) continue;
                // Unused isomorphic siblings are interchangeable.
                if (std::find(tried.begin(), tried.end(), b.shape[wi]) != tried.end()) continue;
                tried.push_back(b.shape[wi]);
                used[wi] = 1;
                --b_free[d];
                image[v] = w;
                extend(v + 1, spent + gamma(a.label[v], b.label[wi]));
                ++b_free[d];
                used[wi] = 0;
            }
        }
        image[v] = -1;
        extend(v + 1, spent + gamma.deletion(a.label[v]));
        ++a_left[d];
    }
};

}  // namespace

double oracle_sdted(const LabeledTree& a, const LabeledTree& b, const CostFunction& gamma, int max_nodes) {
    if (a.size() > max_nodes || b.size() > max_nodes) {
        throw CapacityError("sdted", "exhaustive search is limited to trees of at most " + std::to_string(max_nodes) +
                                         " nodes (got " + std::to_string(a.size()) + " and " +
                                         std::to_string(b.size()) + ")");
    }
    FlatTree fa, fb;
    flatten(a, -1, 0, fa);
    flatten(b, -1, 0, fb);
    std::map<std::string, int> shapes;
    classify(fb, shapes);

    const std::size_t na = fa.label.size(), nb = fb.label.size();
    const int depths = std::max(*std::max_element(fa.depth.begin(), fa.depth.end()),
                                *std::max_element(fb.depth.begin(), fb.depth.end())) + 1;
    Search s{fa, fb, gamma};
    s.image.assign(na, -1);
    s.used.assign(nb, 0);
    s.a_left.assign(static_cast<std::size_t>(depths), 0);
    s.b_free.assign(static_cast<std::size_t>(depths), 0);
    for (std::size_t v = 0; v < na; ++v) ++s.a_left[static_cast<std::size_t>(fa.depth[v])];
    for (std::size_t w = 0; w < nb; ++w) ++s.b_free[static_cast<std::size_t>(fb.depth[w])];
    s.b_min_deletion = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < nb; ++w) s.b_min_deletion = std::min(s.b_min_deletion, gamma.deletion(fb.label[w]));
    s.a_floor.resize(na);
    for (std::size_t v = 0; v < na; ++v) {
        double f = gamma.deletion(fa.label[v]);
        for (std::size_t w = 0; w < nb; ++w) {
            if (fb.depth[w] == fa.depth[v]) f = std::min(f, gamma(fa.label[v], fb.label[w]));
        }
        s.a_floor[v] = f;
    }
    s.a_suffix.assign(na + 1, 0.0);
    for (std::size_t v = na; v-- > 0;) s.a_suffix[v] = s.a_suffix[v + 1] + s.a_floor[v];

    // The roots are always mapped onto each other.
    s.image[0] = 0;
    s.used[0] = 1;
    --s.a_left[0];
    --s.b_free[0];
    s.extend(1, gamma(fa.label[0], fb.label[0]));
    return s.best;
}

}  // namespace rwl
