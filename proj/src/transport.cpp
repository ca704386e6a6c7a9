#include "rwl/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "rwl/error.hpp"

namespace rwl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_finite(const CostMatrix& costs) {
    for (double c : costs.values()) {
        if (!std::isfinite(c)) throw InputError("transport", "cost matrix contains a non-finite entry");
    }
}

// Hungarian method with row/column potentials (O(n^3)). Fills `row_to_col`
// and the potentials; reduced costs a[i][j] - u[i] - v[j] are >= 0 and zero on
// the returned assignment.
double hungarian(const CostMatrix& a, std::vector<int>& row_to_col, std::vector<double>& u, std::vector<double>& v) {
    const std::size_t n = a.rows();
    // 1-based arrays; index 0 is the virtual column.
    u.assign(n + 1, 0.0);
    v.assign(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<double> minv(n + 1);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    row_to_col.assign(n, -1);
    for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
    u.erase(u.begin());
    v.erase(v.begin());
    double cost = 0;
    for (std::size_t i = 0; i < n; ++i) cost += a(i, static_cast<std::size_t>(row_to_col[i]));
    return cost;
}

// Kuhn's augmenting path search restricted to rows >= first_row and columns
// not yet fixed.
bool try_augment(std::size_t row, const std::vector<std::vector<int>>& tight, const std::vector<char>& fixed_col,
                 std::vector<char>& seen, std::vector<int>& col_owner) {
    for (int j : tight[row]) {
        if (fixed_col[static_cast<std::size_t>(j)] || seen[static_cast<std::size_t>(j)]) continue;
        seen[static_cast<std::size_t>(j)] = 1;
        const int owner = col_owner[static_cast<std::size_t>(j)];
        if (owner < 0 || try_augment(static_cast<std::size_t>(owner), tight, fixed_col, seen, col_owner)) {
            col_owner[static_cast<std::size_t>(j)] = static_cast<int>(row);
            return true;
        }
    }
    return false;
}

bool has_perfect_matching(std::size_t first_row, const std::vector<std::vector<int>>& tight,
                          const std::vector<char>& fixed_col) {
    const std::size_t n = tight.size();
    std::vector<int> col_owner(n, -1);
    std::vector<char> seen(n);
    for (std::size_t i = first_row; i < n; ++i) {
        std::fill(seen.begin(), seen.end(), 0);
        if (!try_augment(i, tight, fixed_col, seen, col_owner)) return false;
    }
    return true;
}

// Successive shortest paths on the complete bipartite residual network
// (Dijkstra with potentials, dense), each search started from one source with
// remaining supply. Supplies and demands may be real.
double successive_paths(std::span<const double> supply, std::span<const double> demand, const CostMatrix& cost,
                        std::vector<double>& flow) {
    const std::size_t n = supply.size();
    const std::size_t m = demand.size();
    flow.assign(n * m, 0.0);
    thread_local std::vector<double> rem_s, rem_d, pot, dist;
    thread_local std::vector<int> prev, frontier;
    thread_local std::vector<char> done;
    rem_s.assign(supply.begin(), supply.end());
    rem_d.assign(demand.begin(), demand.end());
    const double total = std::accumulate(supply.begin(), supply.end(), 0.0);
    const double tol = 1e-13 * std::max(1.0, total);
    pot.assign(n + m, 0.0);
    dist.resize(n + m);
    prev.resize(n + m);
    done.resize(n + m);

    const auto relax = [&](std::size_t to, double d, std::size_t from) {
        if (d < dist[to]) {
            if (dist[to] == kInf) frontier.push_back(static_cast<int>(to));
            dist[to] = d;
            prev[to] = static_cast<int>(from);
        }
    };

    std::size_t source = 0;
    for (;;) {
        while (source < n && rem_s[source] <= tol) ++source;
        if (source == n) break;

        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(done.begin(), done.end(), 0);
        frontier.clear();
        dist[source] = 0;
        prev[source] = -1;
        frontier.push_back(static_cast<int>(source));
        std::size_t target = n + m;
        while (!frontier.empty()) {
            // Nearest unfinished node; ties go to the lower index.
            std::size_t pick = 0;
            for (std::size_t f = 1; f < frontier.size(); ++f) {
                const auto a = static_cast<std::size_t>(frontier[f]);
                const auto b = static_cast<std::size_t>(frontier[pick]);
                if (dist[a] < dist[b] || (dist[a] == dist[b] && a < b)) pick = f;
            }
            const auto node = static_cast<std::size_t>(frontier[pick]);
            frontier[pick] = frontier.back();
            frontier.pop_back();
            done[node] = 1;
            if (node >= n) {
                const std::size_t j = node - n;
                if (rem_d[j] > tol) {
                    target = node;
                    break;
                }
                // Backward arcs j -> i exist where flow is positive; they are tight.
                for (std::size_t i = 0; i < n; ++i) {
                    if (done[i] || flow[i * m + j] <= tol) continue;
                    relax(i, dist[node] + std::max(0.0, -(cost(i, j) + pot[i] - pot[node])), node);
                }
            } else {
                const std::size_t i = node;
                for (std::size_t j = 0; j < m; ++j) {
                    if (done[n + j]) continue;
                    relax(n + j, dist[i] + std::max(0.0, cost(i, j) + pot[i] - pot[n + j]), i);
                }
            }
        }
        if (target == n + m) break;  // demand exhausted before supply: mass mismatch within tolerance

        const double reach = dist[target];
        for (std::size_t k = 0; k < n + m; ++k) pot[k] += std::min(dist[k], reach);

        double delta = rem_d[target - n];
        std::size_t node = target;
        while (prev[node] >= 0) {
            const auto from = static_cast<std::size_t>(prev[node]);
            if (from >= n) delta = std::min(delta, flow[node * m + (from - n)]);  // backward arc
            node = from;
        }
        delta = std::min(delta, rem_s[node]);

        rem_s[node] -= delta;
        rem_d[target - n] -= delta;
        node = target;
        while (prev[node] >= 0) {
            const auto from = static_cast<std::size_t>(prev[node]);
            if (from < n) {
                flow[from * m + (node - n)] += delta;
            } else {
                flow[node * m + (from - n)] -= delta;
            }
            node = from;
        }
    }

    double result = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) result += flow[i * m + j] * cost(i, j);
    }
    return result;
}

// Transportation simplex: row-minimum start, then pivots on the most
// negative reduced cost. Empty when the start is not a spanning tree or the
// pivot budget runs out (degenerate cycling); callers then fall back.
std::optional<double> transport_simplex(std::span<const double> supply, std::span<const double> demand,
                                        const CostMatrix& cost, std::vector<double>& flow) {
    const std::size_t n = supply.size();
    const std::size_t m = demand.size();
    const std::size_t nodes = n + m;
    const double total = std::accumulate(supply.begin(), supply.end(), 0.0);
    const double tol = 1e-13 * std::max(1.0, total);
    double scale = 0;
    for (double c : cost.values()) scale = std::max(scale, std::abs(c));
    const double eps = 1e-12 * std::max(1.0, scale);

    struct Cell {
        int i, j;
    };
    thread_local std::vector<Cell> order, basis;
    thread_local std::vector<double> rem_s, rem_d, pot;
    thread_local std::vector<char> closed, seen;
    thread_local std::vector<std::vector<int>> adjacent;  // node -> basis indices
    thread_local std::vector<int> parent_cell, queue;

    // Row-minimum start: rows in order, each row's columns by ascending cost.
    order.clear();
    thread_local std::vector<int> columns;
    columns.resize(m);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(columns.begin(), columns.end(), 0);
        std::sort(columns.begin(), columns.end(), [&](int x, int y) {
            const double cx = cost(i, static_cast<std::size_t>(x));
            const double cy = cost(i, static_cast<std::size_t>(y));
            return cx != cy ? cx < cy : x < y;
        });
        for (int j : columns) order.push_back({static_cast<int>(i), j});
    }

    flow.assign(n * m, 0.0);
    rem_s.assign(supply.begin(), supply.end());
    rem_d.assign(demand.begin(), demand.end());
    closed.assign(nodes, 0);
    basis.clear();
    std::size_t open_rows = n, open_cols = m;
    for (const Cell& c : order) {
        const auto i = static_cast<std::size_t>(c.i), j = static_cast<std::size_t>(c.j);
        if (closed[i] || closed[n + j]) continue;
        const double q = std::min(rem_s[i], rem_d[j]);
        flow[i * m + j] = q;
        rem_s[i] -= q;
        rem_d[j] -= q;
        basis.push_back(c);
        // Each cell closes exactly one line, except the last which closes both.
        if (open_rows == 1 && open_cols == 1) {
            closed[i] = closed[n + j] = 1;
            open_rows = open_cols = 0;
            break;
        }
        const bool row_empty = rem_s[i] <= tol;
        const bool col_empty = rem_d[j] <= tol;
        if ((row_empty && open_rows > 1) || !col_empty || open_cols == 1) {
            closed[i] = 1;
            --open_rows;
            if (col_empty && rem_s[i] > 0) rem_d[j] = 0;
        } else {
            closed[n + j] = 1;
            --open_cols;
        }
        if (rem_s[i] < 0) rem_s[i] = 0;
    }
    if (basis.size() != nodes - 1) return std::nullopt;

    adjacent.resize(nodes);
    pot.resize(nodes);
    seen.resize(nodes);
    parent_cell.resize(nodes);
    const std::size_t budget = 50 * nodes + 100;
    for (std::size_t pivot = 0;; ++pivot) {
        if (pivot > budget) return std::nullopt;
        for (std::size_t v = 0; v < nodes; ++v) adjacent[v].clear();
        for (std::size_t b = 0; b < basis.size(); ++b) {
            adjacent[static_cast<std::size_t>(basis[b].i)].push_back(static_cast<int>(b));
            adjacent[n + static_cast<std::size_t>(basis[b].j)].push_back(static_cast<int>(b));
        }
        // Potentials: u_i + v_j = c_ij on the tree, rooted at row 0.
        std::fill(seen.begin(), seen.end(), 0);
        queue.assign(1, 0);
        seen[0] = 1;
        pot[0] = 0;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const auto v = static_cast<std::size_t>(queue[q]);
            for (int b : adjacent[v]) {
                const auto i = static_cast<std::size_t>(basis[static_cast<std::size_t>(b)].i);
                const auto j = static_cast<std::size_t>(basis[static_cast<std::size_t>(b)].j);
                const std::size_t w = v < n ? n + j : i;
                if (seen[w]) continue;
                seen[w] = 1;
                pot[w] = cost(i, j) - pot[v];
                queue.push_back(static_cast<int>(w));
            }
        }
        if (queue.size() != nodes) return std::nullopt;

        double most = -eps;
        int enter_i = -1, enter_j = -1;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double r = cost(i, j) - pot[i] - pot[n + j];
                if (r < most) {
                    most = r;
                    enter_i = static_cast<int>(i);
                    enter_j = static_cast<int>(j);
                }
            }
        }
        if (enter_i < 0) break;

        // Tree path from the entering column back to the entering row.
        std::fill(seen.begin(), seen.end(), 0);
        const std::size_t start = n + static_cast<std::size_t>(enter_j);
        const auto goal = static_cast<std::size_t>(enter_i);
        queue.assign(1, static_cast<int>(start));
        seen[start] = 1;
        parent_cell[start] = -1;
        for (std::size_t q = 0; q < queue.size() && !seen[goal]; ++q) {
            const auto v = static_cast<std::size_t>(queue[q]);
            for (int b : adjacent[v]) {
                const std::size_t w = v < n ? n + static_cast<std::size_t>(basis[static_cast<std::size_t>(b)].j)
                                            : static_cast<std::size_t>(basis[static_cast<std::size_t>(b)].i);
                if (seen[w]) continue;
                seen[w] = 1;
                parent_cell[w] = b;
                queue.push_back(static_cast<int>(w));
            }
        }
        // Walking from the row towards the column, cells alternate -, +, -, ...
        // starting with the cell adjacent to the row.
        double theta = kInf;
        int leave = -1;
        bool minus = true;
        for (std::size_t v = goal; v != start; minus = !minus) {
            const int b = parent_cell[v];
            const Cell& c = basis[static_cast<std::size_t>(b)];
            if (minus) {
                const double x = flow[static_cast<std::size_t>(c.i) * m + static_cast<std::size_t>(c.j)];
                if (x < theta) {
                    theta = x;
                    leave = b;
                }
            }
            v = v < n ? n + static_cast<std::size_t>(c.j) : static_cast<std::size_t>(c.i);
        }
        minus = true;
        for (std::size_t v = goal; v != start; minus = !minus) {
            const Cell& c = basis[static_cast<std::size_t>(parent_cell[v])];
            double& x = flow[static_cast<std::size_t>(c.i) * m + static_cast<std::size_t>(c.j)];
            x = minus ? std::max(0.0, x - theta) : x + theta;
            v = v < n ? n + static_cast<std::size_t>(c.j) : static_cast<std::size_t>(c.i);
        }
        const Cell& gone = basis[static_cast<std::size_t>(leave)];
        flow[static_cast<std::size_t>(gone.i) * m + static_cast<std::size_t>(gone.j)] = 0;
        flow[static_cast<std::size_t>(enter_i) * m + static_cast<std::size_t>(enter_j)] = theta;
        basis[static_cast<std::size_t>(leave)] = {enter_i, enter_j};
    }

    double result = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) result += flow[i * m + j] * cost(i, j);
    }
    return result;
}

double transport_cost(std::span<const double> supply, std::span<const double> demand, const CostMatrix& cost,
                      std::vector<double>& flow) {
    if (auto r = transport_simplex(supply, demand, cost, flow)) return *r;
    return successive_paths(supply, demand, cost, flow);
}

// Searches start from the side with more support points: a small mass there
// usually reaches an unsaturated partner in one step.
double solve_transport(std::span<const double> supply, std::span<const double> demand, const CostMatrix& cost,
                       CostMatrix* plan) {
    const std::size_t n = supply.size();
    const std::size_t m = demand.size();
    std::vector<double> flow;
    if (n >= m) {
        const double result = transport_cost(supply, demand, cost, flow);
        if (plan) {
            *plan = CostMatrix(n, m);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) (*plan)(i, j) = flow[i * m + j];
            }
        }
        return result;
    }
    CostMatrix transposed(m, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) transposed(j, i) = cost(i, j);
    }
    const double result = transport_cost(demand, supply, transposed, flow);
    if (plan) {
        *plan = CostMatrix(n, m);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) (*plan)(i, j) = flow[j * n + i];
        }
    }
    return result;
}

void check_masses(double a, double b) {
    if (std::abs(a - b) > 1e-9 * std::max(1.0, std::max(a, b))) {
        throw PreconditionError("transport", "vectors have different total mass (" + std::to_string(a) + " vs " +
                                                 std::to_string(b) + ")");
    }
}

}  // namespace

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InputError("transport", "ragged cost matrix");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

double CostMatrix::mean() const {
    if (data_.empty()) return 0;
    return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

CostMatrix CostMatrix::submatrix(std::span<const int> rows, std::span<const int> cols) const {
    CostMatrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = data_.data() + static_cast<std::size_t>(rows[i]) * cols_;
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = src[cols[j]];
    }
    return out;
}

std::vector<std::string> CostMatrix::metric_violations(double tolerance) const {
    std::vector<std::string> out;
    if (!square()) {
        out.push_back("matrix is not square");
        return out;
    }
    const std::size_t n = rows_;
    const auto at = [](std::size_t i, std::size_t j) { return "(" + std::to_string(i) + "," + std::to_string(j) + ")"; };
    for (std::size_t i = 0; i < n; ++i) {
        if ((*this)(i, i) != 0.0) out.push_back("non-zero diagonal at " + at(i, i));
        for (std::size_t j = 0; j < n; ++j) {
            if ((*this)(i, j) < 0) out.push_back("negative entry at " + at(i, j));
            if (std::abs((*this)(i, j) - (*this)(j, i)) > tolerance) out.push_back("asymmetric entry at " + at(i, j));
            for (std::size_t k = 0; k < n; ++k) {
                if ((*this)(i, j) > (*this)(i, k) + (*this)(k, j) + tolerance) {
                    out.push_back("triangle inequality fails for " + at(i, j) + " via " + std::to_string(k));
                }
            }
        }
    }
    return out;
}

double matching_cost(const CostMatrix& costs) {
    if (!costs.square()) throw InputError("transport", "matching requires a square cost matrix");
    if (costs.rows() == 0) return 0;
    check_finite(costs);
    std::vector<int> assignment;
    std::vector<double> u, v;
    return hungarian(costs, assignment, u, v);
}

Assignment min_cost_perfect_matching(const CostMatrix& costs) {
    if (!costs.square()) throw InputError("transport", "matching requires a square cost matrix");
    check_finite(costs);
    const std::size_t n = costs.rows();
    Assignment result;
    if (n == 0) return result;
    std::vector<int> assignment;
    std::vector<double> u, v;
    hungarian(costs, assignment, u, v);

    // Every optimal assignment lives on the tight edges of an optimal dual, so
    // the lexicographically smallest one is found greedily on that subgraph.
    double scale = 1.0;
    for (double c : costs.values()) scale = std::max(scale, std::abs(c));
    const double tol = 1e-9 * scale;
    std::vector<std::vector<int>> tight(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(costs(i, j) - u[i] - v[j]) <= tol) tight[i].push_back(static_cast<int>(j));
        }
    }
    std::vector<char> fixed_col(n, 0);
    result.permutation.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        bool placed = false;
        for (int j : tight[i]) {
            if (fixed_col[static_cast<std::size_t>(j)]) continue;
            fixed_col[static_cast<std::size_t>(j)] = 1;
            if (has_perfect_matching(i + 1, tight, fixed_col)) {
                result.permutation[i] = j;
                placed = true;
                break;
            }
            fixed_col[static_cast<std::size_t>(j)] = 0;
        }
        if (!placed) {
            // Numerical trouble with the tolerance; keep the Hungarian answer.
            result.permutation = assignment;
            break;
        }
    }
    for (std::size_t i = 0; i < n; ++i) result.cost += costs(i, static_cast<std::size_t>(result.permutation[i]));
    return result;
}

TransportPlan wasserstein(std::span<const double> x, std::span<const double> y, const CostMatrix& costs) {
    if (x.size() != costs.rows() || y.size() != costs.cols()) {
        throw InputError("transport", "vector dimensions do not match the cost matrix");
    }
    check_finite(costs);
    for (double w : x) {
        if (w < 0 || !std::isfinite(w)) throw InputError("transport", "source vector has a negative or non-finite entry");
    }
    for (double w : y) {
        if (w < 0 || !std::isfinite(w)) throw InputError("transport", "target vector has a negative or non-finite entry");
    }
    check_masses(std::accumulate(x.begin(), x.end(), 0.0), std::accumulate(y.begin(), y.end(), 0.0));
    TransportPlan result;
    result.cost = solve_transport(x, y, costs, &result.plan);
    return result;
}

double wasserstein_cost(const SparseVector& x, const SparseVector& y, const CostMatrix& costs) {
    check_masses(x.mass(), y.mass());
    if (x.nonzeros() == 0 || y.nonzeros() == 0) return 0;
    if (x.nonzeros() == 1) {
        // All mass leaves one point: the plan is forced.
        double cost = 0;
        const auto i = static_cast<std::size_t>(x.index[0]);
        for (std::size_t k = 0; k < y.nonzeros(); ++k) cost += y.weight[k] * costs(i, static_cast<std::size_t>(y.index[k]));
        return cost;
    }
    if (y.nonzeros() == 1) {
        double cost = 0;
        const auto j = static_cast<std::size_t>(y.index[0]);
        for (std::size_t k = 0; k < x.nonzeros(); ++k) cost += x.weight[k] * costs(static_cast<std::size_t>(x.index[k]), j);
        return cost;
    }
    const CostMatrix sub = costs.submatrix(x.index, y.index);
    return solve_transport(x.weight, y.weight, sub, nullptr);
}

double barycenter_objective(std::span<const std::vector<double>> vectors, std::span<const double> center,
                            const CostMatrix& costs, std::span<const double> weights) {
    double total = 0;
    const SparseVector c = SparseVector::from_dense(center);
    for (std::size_t s = 0; s < vectors.size(); ++s) {
        const double w = weights.empty() ? 1.0 : weights[s];
        total += w * wasserstein_cost(SparseVector::from_dense(vectors[s]), c, costs);
    }
    return total;
}

}  // namespace rwl
