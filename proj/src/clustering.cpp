#include "rwl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rwl/error.hpp"
#include "rwl/parallel.hpp"

namespace rwl {

std::size_t SeededRng::below(std::size_t n) {
    if (n == 0) throw PreconditionError("clustering", "cannot draw from an empty range");
    // Rejection keeps the draw unbiased and independent of the standard library.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

double SeededRng::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

int common_mass(std::span<const TreeType> types) {
    int max_degree = 0;
    for (const auto& t : types) max_degree = std::max(max_degree, t.degree());
    return 2 * max_degree;
}

std::vector<int> Clustering::cluster_sizes() const {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
    return sizes;
}

double center_distance(const UnfoldingTreeVector& vector, const ClusterCenter& center, const CostMatrix& m_r,
                       const CostMatrix& m_c) {
    return wasserstein_cost(vector.root, SparseVector::from_dense(center.root), m_r) +
           wasserstein_cost(vector.children, SparseVector::from_dense(center.children), m_c);
}

namespace {

struct SparseCenter {
    SparseVector root;
    SparseVector children;
};

SparseCenter sparse(const ClusterCenter& c) {
    return {SparseVector::from_dense(c.root), SparseVector::from_dense(c.children)};
}

double distance(const SparseCenter& a, const SparseCenter& b, const CostMatrix& m_r, const CostMatrix& m_c) {
    return wasserstein_cost(a.root, b.root, m_r) + wasserstein_cost(a.children, b.children, m_c);
}

}  // namespace

CostMatrix center_distances(std::span<const ClusterCenter> centers, const CostMatrix& m_r, const CostMatrix& m_c) {
    const std::size_t k = centers.size();
    const std::size_t root_blank = m_r.rows() - 1;
    const std::size_t child_blank = m_c.rows() - 1;
    std::vector<SparseCenter> sc;
    for (const auto& c : centers) sc.push_back(sparse(c));
    CostMatrix out(k + 1, k + 1, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) out(a, b) = out(b, a) = distance(sc[a], sc[b], m_r, m_c);
        double del = 0;
        for (std::size_t x = 0; x < centers[a].root.size(); ++x) del += centers[a].root[x] * m_r(x, root_blank);
        for (std::size_t x = 0; x < centers[a].children.size(); ++x) {
            del += centers[a].children[x] * m_c(x, child_blank);
        }
        out(a, k) = out(k, a) = del;
    }
    return out;
}

namespace {

class KMeans {
public:
    KMeans(const LevelGeometry& g, const ClusteringOptions& o) : geo_(g), opt_(o) {
        const int mass = common_mass(g.types);
        vectors_.reserve(g.types.size());
        for (const auto& t : g.types) {
            auto v = tree_vector(t, g.child_alphabet(), mass);
            vectors_.push_back({std::move(v.root), std::move(v.children)});
        }
    }

    Clustering run() {
        const std::size_t n = vectors_.size();
        Clustering out;
        out.level = geo_.level;
        out.seed = opt_.seed;
        std::size_t k = static_cast<std::size_t>(opt_.k);
        if (k > n) {
            out.warnings.push_back("k=" + std::to_string(k) + " exceeds the " + std::to_string(n) +
                                   " types of level " + std::to_string(geo_.level) + "; using k=" +
                                   std::to_string(n));
            k = n;
        }
        out.k = static_cast<int>(k);

        SeededRng rng(opt_.seed);
        const auto seeds = opt_.init == InitMode::kpp ? kpp_seeds(k, rng) : uniform_seeds(k, rng);
        centers_.clear();
        for (std::size_t s : seeds) centers_.push_back(dense(s));
        refresh_sparse();

        assignment_.assign(n, 0);
        upper_.assign(n, 0);
        lower_.assign(n * k, 0);
        parallel_for(n, opt_.threads, [&](std::size_t t) { full_assign(t); });

        for (int iter = 0; iter < opt_.max_iter; ++iter) {
            const std::vector<SparseCenter> before = sparse_;
            repair_empty();
            update_centers();
            ++out.iterations;
            if (opt_.record_objective) out.objective_history.push_back(objective());

            std::vector<double> drift(k);
            for (std::size_t j = 0; j < k; ++j) drift[j] = distance(before[j], sparse_[j], geo_.root_costs, geo_.child_costs);
            if (!reassign(drift)) {
                out.converged = true;
                break;
            }
        }
        out.assignment.assign(assignment_.begin(), assignment_.end());
        out.centers = centers_;
        out.objective = objective();
        return out;
    }

private:
    double dist(std::size_t t, std::size_t j) const {
        return wasserstein_cost(vectors_[t].root, sparse_[j].root, geo_.root_costs) +
               wasserstein_cost(vectors_[t].children, sparse_[j].children, geo_.child_costs);
    }

    ClusterCenter dense(std::size_t t) const {
        return {vectors_[t].root.dense(geo_.root_costs.rows()), vectors_[t].children.dense(geo_.child_costs.rows())};
    }

    void refresh_sparse() {
        sparse_.clear();
        for (const auto& c : centers_) sparse_.push_back(sparse(c));
    }

    std::vector<std::size_t> uniform_seeds(std::size_t k, SeededRng& rng) const {
        std::vector<std::size_t> order(vectors_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
        order.resize(k);
        return order;
    }

    // First seed uniform, then proportional to the squared distance to the
    // nearest chosen seed.
    std::vector<std::size_t> kpp_seeds(std::size_t k, SeededRng& rng) const {
        const std::size_t n = vectors_.size();
        std::vector<std::size_t> seeds{rng.below(n)};
        std::vector<char> chosen(n, 0);
        chosen[seeds[0]] = 1;
        std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
        while (seeds.size() < k) {
            const SparseCenter last{vectors_[seeds.back()].root, vectors_[seeds.back()].children};
            parallel_for(n, opt_.threads, [&](std::size_t t) {
                if (chosen[t]) {
                    nearest[t] = 0;
                    return;
                }
                const double d = wasserstein_cost(vectors_[t].root, last.root, geo_.root_costs) +
                                 wasserstein_cost(vectors_[t].children, last.children, geo_.child_costs);
                nearest[t] = std::min(nearest[t], d);
            });
            double total = 0;
            for (std::size_t t = 0; t < n; ++t) total += nearest[t] * nearest[t];
            std::size_t pick = n;
            if (total > 0) {
                const double r = rng.unit() * total;
                double acc = 0;
                for (std::size_t t = 0; t < n; ++t) {
                    if (chosen[t] || nearest[t] <= 0) continue;
                    acc += nearest[t] * nearest[t];
                    pick = t;
                    if (acc > r) break;
                }
            }
            if (pick == n) {
                // Remaining types coincide with seeds; draw uniformly among them.
                std::vector<std::size_t> rest;
                for (std::size_t t = 0; t < n; ++t) {
                    if (!chosen[t]) rest.push_back(t);
                }
                pick = rest[rng.below(rest.size())];
            }
            chosen[pick] = 1;
            seeds.push_back(pick);
        }
        return seeds;
    }

    // Exact nearest center; ties go to the lower index. Every distance seeds
    // its lower bound.
    void full_assign(std::size_t t) {
        const std::size_t k = sparse_.size();
        double* lb = &lower_[t * k];
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double d = dist(t, j);
            lb[j] = d;
            if (d < best) {
                best = d;
                arg = static_cast<int>(j);
            }
        }
        assignment_[t] = arg;
        upper_[t] = best;
    }

    // Reassignment with one lower bound per (type, center), loosened by the
    // center drift. A center is skipped only when its bound beats the current
    // distance by a relative margin, so the result equals a full pass.
    // Returns whether any assignment changed.
    bool reassign(const std::vector<double>& drift) {
        const std::size_t n = vectors_.size();
        const std::size_t k = centers_.size();
        std::vector<char> changed(n, 0);
        parallel_for(n, opt_.threads, [&](std::size_t t) {
            double* lb = &lower_[t * k];
            for (std::size_t j = 0; j < k; ++j) lb[j] = std::max(0.0, lb[j] - drift[j]);
            auto a = static_cast<std::size_t>(assignment_[t]);
            double u = upper_[t] + drift[a];
            bool tight = false;
            const auto prunes = [&](std::size_t j) { return u + 1e-9 * (1.0 + std::abs(u)) < lb[j]; };
            for (std::size_t j = 0; j < k; ++j) {
                if (j == a || prunes(j)) continue;
                if (!tight) {
                    u = dist(t, a);
                    lb[a] = u;
                    tight = true;
                    if (prunes(j)) continue;
                }
                const double d = dist(t, j);
                lb[j] = d;
                if (d < u || (d == u && j < a)) {
                    a = j;
                    u = d;
                }
            }
            upper_[t] = u;
            changed[t] = static_cast<int>(a) != assignment_[t];
            assignment_[t] = static_cast<int>(a);
        });
        return std::any_of(changed.begin(), changed.end(), [](char c) { return c != 0; });
    }

    // Reseeds each empty cluster at the point farthest from its own center.
    void repair_empty() {
        const std::size_t k = centers_.size();
        std::vector<int> sizes(k, 0);
        for (int a : assignment_) ++sizes[static_cast<std::size_t>(a)];
        for (std::size_t j = 0; j < k; ++j) {
            if (sizes[j] > 0) continue;
            std::size_t far = vectors_.size();
            double far_d = -1;
            for (std::size_t t = 0; t < vectors_.size(); ++t) {
                if (sizes[static_cast<std::size_t>(assignment_[t])] < 2) continue;
                const double d = dist(t, static_cast<std::size_t>(assignment_[t]));
                if (d > far_d) {
                    far_d = d;
                    far = t;
                }
            }
            if (far == vectors_.size()) continue;  // cannot happen while k <= n
            --sizes[static_cast<std::size_t>(assignment_[far])];
            ++sizes[j];
            assignment_[far] = static_cast<int>(j);
            centers_[j] = dense(far);
            sparse_[j] = sparse(centers_[j]);
            if (j < members_.size()) members_[j].clear();
            upper_[far] = std::numeric_limits<double>::infinity();
            std::fill_n(lower_.begin() + static_cast<std::ptrdiff_t>(far * k), k, 0.0);
        }
    }

    void update_centers() {
        const std::size_t k = centers_.size();
        std::vector<std::vector<std::size_t>> members(k);
        for (std::size_t t = 0; t < assignment_.size(); ++t) members[static_cast<std::size_t>(assignment_[t])].push_back(t);
        members_.resize(k);
        // Barycenters are deterministic, so unchanged clusters keep their center.
        parallel_for(k, opt_.threads, [&](std::size_t j) {
            if (members[j].empty() || members[j] == members_[j]) return;
            centers_[j] = barycenter_of(members[j]);
        });
        members_ = std::move(members);
        refresh_sparse();
    }

    ClusterCenter barycenter_of(const std::vector<std::size_t>& members) const {
        ClusterCenter c;
        const std::size_t root_dim = geo_.root_costs.rows();
        std::vector<std::vector<double>> roots;
        for (std::size_t t : members) roots.push_back(vectors_[t].root.dense(root_dim));
        c.root = barycenter(roots, geo_.root_costs, opt_.barycenter);

        const std::size_t child_dim = geo_.child_costs.rows();
        if (child_dim <= opt_.support_cap) {
            std::vector<std::vector<double>> kids;
            for (std::size_t t : members) kids.push_back(vectors_[t].children.dense(child_dim));
            c.children = barycenter(kids, geo_.child_costs, opt_.barycenter);
            return c;
        }
        std::vector<int> support{static_cast<int>(child_dim - 1)};
        for (std::size_t t : members) {
            const auto& idx = vectors_[t].children.index;
            support.insert(support.end(), idx.begin(), idx.end());
        }
        std::sort(support.begin(), support.end());
        support.erase(std::unique(support.begin(), support.end()), support.end());
        std::vector<std::vector<double>> kids;
        for (std::size_t t : members) {
            std::vector<double> v(support.size(), 0.0);
            const auto& sv = vectors_[t].children;
            for (std::size_t x = 0; x < sv.nonzeros(); ++x) {
                const auto pos = std::lower_bound(support.begin(), support.end(), sv.index[x]) - support.begin();
                v[static_cast<std::size_t>(pos)] = sv.weight[x];
            }
            kids.push_back(std::move(v));
        }
        const auto restricted = barycenter(kids, geo_.child_costs.submatrix(support, support), opt_.barycenter);
        c.children.assign(child_dim, 0.0);
        for (std::size_t x = 0; x < support.size(); ++x) c.children[static_cast<std::size_t>(support[x])] = restricted[x];
        return c;
    }

    double objective() const {
        std::vector<double> d(vectors_.size());
        parallel_for(vectors_.size(), opt_.threads,
                     [&](std::size_t t) { d[t] = dist(t, static_cast<std::size_t>(assignment_[t])); });
        return std::accumulate(d.begin(), d.end(), 0.0);
    }

    const LevelGeometry& geo_;
    const ClusteringOptions& opt_;
    std::vector<SparseCenter> vectors_;
    std::vector<ClusterCenter> centers_;
    std::vector<SparseCenter> sparse_;
    std::vector<int> assignment_;
    std::vector<std::vector<std::size_t>> members_;  // as of the last center update
    std::vector<double> upper_;
    std::vector<double> lower_;
};

}  // namespace

Clustering wasserstein_kmeans(const LevelGeometry& geometry, const ClusteringOptions& options) {
    if (geometry.types.empty()) throw PreconditionError("clustering", "level has no types to cluster");
    if (options.k < 1) throw PreconditionError("clustering", "k must be at least 1");
    if (options.max_iter < 1) throw PreconditionError("clustering", "max_iter must be at least 1");
    if (geometry.child_costs.rows() == 0 || !geometry.child_costs.square() || !geometry.root_costs.square()) {
        throw ContractError("clustering", "cost matrices must be square and include the blank");
    }
    return KMeans(geometry, options).run();
}

}  // namespace rwl
