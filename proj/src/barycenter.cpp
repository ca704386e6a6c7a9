#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "rwl/error.hpp"
#include "rwl/transport.hpp"

namespace rwl {
namespace {

struct Member {
    std::vector<int> support;     // indices with positive mass
    std::vector<double> weight;   // normalized to total mass 1
    double lambda = 1;            // barycenter weight
};

// Standard-form LP  min c'x  s.t.  Ax = b, x >= 0  with A stored by column.
struct SparseLp {
    std::size_t rows = 0;
    std::vector<std::vector<std::pair<int, double>>> columns;
    std::vector<double> cost;
    std::vector<double> rhs;
};

struct IpmResult {
    std::vector<double> x;
    std::vector<double> slack;  // reduced costs
    bool converged = false;
};

// Mehrotra predictor-corrector for  min c'x + 1/2 x'Qx  s.t.  Ax = b, x >= 0
// with diagonal Q, on the dense normal equations.
IpmResult solve_interior_point(const SparseLp& lp, std::span<const double> q_diag) {
    const std::size_t n = lp.columns.size();
    const std::size_t m = lp.rows;
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::VectorXd x = Eigen::VectorXd::Ones(N);
    Eigen::VectorXd s = Eigen::VectorXd::Ones(N);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    const Eigen::Map<const Eigen::VectorXd> c(lp.cost.data(), N);
    const Eigen::Map<const Eigen::VectorXd> b(lp.rhs.data(), static_cast<Eigen::Index>(m));
    const Eigen::VectorXd q = q_diag.empty() ? Eigen::VectorXd::Zero(N)
                                             : Eigen::Map<const Eigen::VectorXd>(q_diag.data(), N).eval();

    const auto multiply = [&](const Eigen::VectorXd& v) {  // A v
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        for (std::size_t k = 0; k < n; ++k) {
            for (const auto& [row, a] : lp.columns[k]) out[row] += a * v[static_cast<Eigen::Index>(k)];
        }
        return out;
    };
    const auto multiply_transposed = [&](const Eigen::VectorXd& v) {  // A' v
        Eigen::VectorXd out(N);
        for (std::size_t k = 0; k < n; ++k) {
            double acc = 0;
            for (const auto& [row, a] : lp.columns[k]) acc += a * v[row];
            out[static_cast<Eigen::Index>(k)] = acc;
        }
        return out;
    };
    const auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
        double alpha = 1.0;
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (dv[k] < 0) alpha = std::min(alpha, -v[k] / dv[k]);
        }
        return alpha;
    };

    const double b_norm = 1.0 + b.norm();
    const double c_norm = 1.0 + c.norm();
    Eigen::MatrixXd normal(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    bool converged = false;
    for (int iter = 0; iter < 200; ++iter) {
        const Eigen::VectorXd r_primal = b - multiply(x);
        const Eigen::VectorXd r_dual = c + q.cwiseProduct(x) - multiply_transposed(y) - s;
        const double mu = x.dot(s) / static_cast<double>(n);
        // Loose enough to be reachable in double precision, tight enough for
        // the face identification in polish().
        converged = r_primal.norm() / b_norm < 1e-9 && r_dual.norm() / c_norm < 1e-9 && mu < 1e-12;
        if (r_primal.norm() / b_norm < 1e-11 && r_dual.norm() / c_norm < 1e-11 && mu < 1e-14) break;

        const Eigen::VectorXd d = (q + s.cwiseQuotient(x)).cwiseInverse();
        normal.setZero();
        for (std::size_t k = 0; k < n; ++k) {
            const double dk = d[static_cast<Eigen::Index>(k)];
            for (const auto& [p, ap] : lp.columns[k]) {
                for (const auto& [r, ar] : lp.columns[k]) normal(p, r) += ap * ar * dk;
            }
        }
        double diag = 0;
        for (Eigen::Index i = 0; i < normal.rows(); ++i) diag = std::max(diag, normal(i, i));
        normal.diagonal().array() += 1e-14 * std::max(1.0, diag);
        const Eigen::LLT<Eigen::MatrixXd> factor(normal);

        // A dx = r_primal, A' dy + ds - Q dx = r_dual, S dx + X ds = r_center.
        const auto direction = [&](const Eigen::VectorXd& r_center, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                                   Eigen::VectorXd& ds) {
            const Eigen::VectorXd t = d.cwiseProduct(r_center.cwiseQuotient(x) - r_dual);
            dy = factor.solve(r_primal - multiply(t));
            dx = t + d.cwiseProduct(multiply_transposed(dy));
            ds = (r_center - s.cwiseProduct(dx)).cwiseQuotient(x);
        };

        Eigen::VectorXd dx, dy, ds;
        direction(-x.cwiseProduct(s), dx, dy, ds);
        const double ap_aff = max_step(x, dx);
        const double ad_aff = max_step(s, ds);
        const double mu_aff = (x + ap_aff * dx).dot(s + ad_aff * ds) / static_cast<double>(n);
        const double sigma = std::pow(mu_aff / mu, 3);

        const Eigen::VectorXd r_center =
            Eigen::VectorXd::Constant(N, sigma * mu) - x.cwiseProduct(s) - dx.cwiseProduct(ds);
        direction(r_center, dx, dy, ds);
        double ap = std::min(1.0, 0.995 * max_step(x, dx));
        double ad = std::min(1.0, 0.995 * max_step(s, ds));
        if (q.any()) ap = ad = std::min(ap, ad);  // coupled primal/dual for quadratic terms
        const Eigen::VectorXd next_x = x + ap * dx;
        const Eigen::VectorXd next_s = s + ad * ds;
        if (!next_x.allFinite() || !next_s.allFinite() || !(next_x.array() > 0).all() ||
            !(next_s.array() > 0).all()) {
            break;
        }
        x = next_x;
        s = next_s;
        y += ad * dy;
    }
    return {{x.data(), x.data() + x.size()}, {s.data(), s.data() + s.size()}, converged};
}

// Snaps an interior point onto the face it approaches: variables whose value
// dominates their reduced cost are kept, the rest fixed at zero, and the
// weighted least-norm solution of the remaining equalities is returned.
std::optional<std::vector<double>> polish(const SparseLp& lp, const IpmResult& ipm,
                                          std::span<const double> norm_weight) {
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < ipm.x.size(); ++k) {
        if (ipm.x[k] > ipm.slack[k]) kept.push_back(k);
    }
    if (kept.empty()) return std::nullopt;
    const auto m = static_cast<Eigen::Index>(lp.rows);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const double inv = 1.0 / std::sqrt(norm_weight[kept[j]]);
        for (const auto& [row, v] : lp.columns[kept[j]]) a(row, static_cast<Eigen::Index>(j)) = v * inv;
    }
    const Eigen::Map<const Eigen::VectorXd> b(lp.rhs.data(), m);
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    const Eigen::VectorXd z = cod.solve(b);
    if (!z.allFinite() || (a * z - b).norm() > 1e-11 * (1.0 + b.norm())) return std::nullopt;
    std::vector<double> x(ipm.x.size(), 0.0);
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const double v = z[static_cast<Eigen::Index>(j)] / std::sqrt(norm_weight[kept[j]]);
        if (v < -1e-12) return std::nullopt;
        x[kept[j]] = std::max(0.0, v);
    }
    return x;
}

std::vector<double> exact_barycenter(const std::vector<Member>& members, const CostMatrix& costs,
                                     const BarycenterOptions& options) {
    const std::size_t dim = costs.rows();
    if (dim > options.exact_support_cap) {
        throw CapacityError("transport", "exact barycenter support " + std::to_string(dim) + " exceeds the cap of " +
                                             std::to_string(options.exact_support_cap) +
                                             "; use the regularized barycenter mode");
    }
    double scale = 0;
    for (double v : costs.values()) scale = std::max(scale, v);
    if (scale == 0) scale = 1;

    // Variables: one plan per member (support x dim), then the center (dim).
    // Constraints: plan row sums = member weights (first row of every member
    // after the first is implied and dropped), plan column sums = center.
    SparseLp lp;
    std::vector<std::size_t> row_offset(members.size()), col_offset(members.size());
    for (std::size_t s = 0; s < members.size(); ++s) {
        row_offset[s] = lp.rows;
        lp.rows += members[s].support.size() - (s == 0 ? 0 : 1);
        col_offset[s] = lp.rows;
        lp.rows += dim;
    }
    if (lp.rows > options.exact_constraint_cap) {
        throw CapacityError("transport", "exact barycenter LP has " + std::to_string(lp.rows) +
                                             " constraints (cap " + std::to_string(options.exact_constraint_cap) +
                                             "); use the regularized barycenter mode");
    }
    lp.rhs.assign(lp.rows, 0.0);
    for (std::size_t s = 0; s < members.size(); ++s) {
        const auto& mem = members[s];
        for (std::size_t a = 0; a < mem.support.size(); ++a) {
            const bool dropped = s > 0 && a == 0;
            const int row_con = dropped ? -1 : static_cast<int>(row_offset[s] + a - (s == 0 ? 0 : 1));
            if (!dropped) lp.rhs[static_cast<std::size_t>(row_con)] = mem.weight[a];
            for (std::size_t j = 0; j < dim; ++j) {
                std::vector<std::pair<int, double>> column;
                if (!dropped) column.emplace_back(row_con, 1.0);
                column.emplace_back(static_cast<int>(col_offset[s] + j), 1.0);
                lp.columns.push_back(std::move(column));
                lp.cost.push_back(mem.lambda * costs(static_cast<std::size_t>(mem.support[a]), j) / scale);
            }
        }
    }
    const std::size_t center_start = lp.columns.size();
    for (std::size_t j = 0; j < dim; ++j) {
        std::vector<std::pair<int, double>> column;
        for (std::size_t s = 0; s < members.size(); ++s) column.emplace_back(static_cast<int>(col_offset[s] + j), -1.0);
        lp.columns.push_back(std::move(column));
        lp.cost.push_back(0.0);
    }

    // Stage one: the LP optimum. Stage two: among optimal solutions, the one
    // with the smallest center norm, via the exact quadratic regularization
    // p'x + eps/2 |c|^2 (for small eps its minimizer lies on the optimal face).
    const auto objective = [&](const std::vector<double>& sol) {
        return std::inner_product(lp.cost.begin(), lp.cost.end(), sol.begin(), 0.0);
    };
    const IpmResult first = solve_interior_point(lp, {});
    const double optimum = objective(first.x);
    IpmResult chosen = first;
    std::vector<double> q(lp.columns.size(), 0.0);
    for (double eps = 1e-2; eps >= 1e-8; eps *= 1e-2) {
        std::fill(q.begin() + static_cast<std::ptrdiff_t>(center_start), q.end(), eps);
        auto candidate = solve_interior_point(lp, q);
        if (candidate.converged && objective(candidate.x) <= optimum + 1e-9 * (1.0 + std::abs(optimum))) {
            chosen = std::move(candidate);
            break;
        }
    }

    // Candidates in order of preference: the minimum-norm point snapped onto
    // the optimal face, the snapped plain LP point, the raw iterates, and the
    // inputs themselves. The first one whose true objective matches the best
    // wins, so numerical trouble can only cost the tie-break.
    const auto center_of = [&](const std::vector<double>& sol) {
        std::vector<double> c(sol.begin() + static_cast<std::ptrdiff_t>(center_start), sol.end());
        for (double& v : c) {
            if (v < 1e-10) v = 0;
        }
        const double total = std::accumulate(c.begin(), c.end(), 0.0);
        if (total > 0) {
            for (double& v : c) v /= total;
        }
        return c;
    };
    std::vector<double> norm_weight(lp.columns.size(), 1e-6);
    std::fill(norm_weight.begin() + static_cast<std::ptrdiff_t>(center_start), norm_weight.end(), 1.0);
    std::vector<std::vector<double>> candidates;
    for (const IpmResult* source : {static_cast<const IpmResult*>(&chosen), &first}) {
        if (const auto snapped = polish(lp, *source, norm_weight)) candidates.push_back(center_of(*snapped));
    }
    candidates.push_back(center_of(chosen.x));
    candidates.push_back(center_of(first.x));
    for (const auto& mem : members) {
        std::vector<double> v(dim, 0.0);
        for (std::size_t a = 0; a < mem.support.size(); ++a) v[static_cast<std::size_t>(mem.support[a])] = mem.weight[a];
        candidates.push_back(std::move(v));
    }
    std::vector<double> value;
    for (const auto& c : candidates) {
        const SparseVector sc = SparseVector::from_dense(c);
        double total = 0;
        for (const auto& mem : members) total += mem.lambda * wasserstein_cost({mem.support, mem.weight}, sc, costs);
        value.push_back(total);
    }
    const double best = *std::min_element(value.begin(), value.end());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (value[i] <= best + 1e-12 * (1.0 + std::abs(best))) return candidates[i];
    }
    return candidates.back();
}

// Iterative Bregman projections for the entropic barycenter. Returns false
// when the kernel underflows so the caller can retry in the log domain.
bool sinkhorn_barycenter(const std::vector<Member>& members, const CostMatrix& costs, double epsilon, int max_iter,
                         double tolerance, std::vector<double>& q) {
    const std::size_t dim = costs.rows();
    std::vector<double> kernel(dim * dim);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) kernel[i * dim + j] = std::exp(-costs(i, j) / epsilon);
    }
    double lambda_total = 0;
    for (const auto& mem : members) lambda_total += mem.lambda;

    std::vector<std::vector<double>> v(members.size(), std::vector<double>(dim, 1.0));
    std::vector<std::vector<double>> ktu(members.size(), std::vector<double>(dim));
    std::vector<double> u;
    q.assign(dim, 1.0 / static_cast<double>(dim));
    std::vector<double> log_q(dim);
    for (int iter = 0; iter < max_iter; ++iter) {
        std::fill(log_q.begin(), log_q.end(), 0.0);
        for (std::size_t s = 0; s < members.size(); ++s) {
            const auto& mem = members[s];
            u.assign(mem.support.size(), 0.0);
            for (std::size_t a = 0; a < mem.support.size(); ++a) {
                const double* krow = kernel.data() + static_cast<std::size_t>(mem.support[a]) * dim;
                double kv = 0;
                for (std::size_t j = 0; j < dim; ++j) kv += krow[j] * v[s][j];
                if (!(kv > 0) || !std::isfinite(kv)) return false;
                u[a] = mem.weight[a] / kv;
            }
            auto& out = ktu[s];
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t a = 0; a < mem.support.size(); ++a) {
                const double* krow = kernel.data() + static_cast<std::size_t>(mem.support[a]) * dim;
                for (std::size_t j = 0; j < dim; ++j) out[j] += krow[j] * u[a];
            }
            const double share = mem.lambda / lambda_total;
            for (std::size_t j = 0; j < dim; ++j) {
                if (!(out[j] > 0) || !std::isfinite(out[j])) return false;
                log_q[j] += share * std::log(out[j]);
            }
        }
        double moved = 0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double next = std::exp(log_q[j]);
            moved += std::abs(next - q[j]);
            q[j] = next;
        }
        for (std::size_t s = 0; s < members.size(); ++s) {
            for (std::size_t j = 0; j < dim; ++j) v[s][j] = q[j] / ktu[s][j];
        }
        if (moved < tolerance) break;
    }
    return true;
}

double log_sum_exp(std::span<const double> values) {
    double top = -std::numeric_limits<double>::infinity();
    for (double v : values) top = std::max(top, v);
    if (!std::isfinite(top)) return top;
    double acc = 0;
    for (double v : values) acc += std::exp(v - top);
    return top + std::log(acc);
}

void sinkhorn_barycenter_log(const std::vector<Member>& members, const CostMatrix& costs, double epsilon,
                             int max_iter, double tolerance, std::vector<double>& q) {
    const std::size_t dim = costs.rows();
    double lambda_total = 0;
    for (const auto& mem : members) lambda_total += mem.lambda;
    std::vector<std::vector<double>> g(members.size(), std::vector<double>(dim, 0.0));
    std::vector<std::vector<double>> log_ktu(members.size(), std::vector<double>(dim));
    std::vector<double> f, scratch, log_q(dim);
    q.assign(dim, 1.0 / static_cast<double>(dim));
    for (int iter = 0; iter < max_iter; ++iter) {
        std::fill(log_q.begin(), log_q.end(), 0.0);
        for (std::size_t s = 0; s < members.size(); ++s) {
            const auto& mem = members[s];
            f.assign(mem.support.size(), 0.0);
            scratch.resize(dim);
            for (std::size_t a = 0; a < mem.support.size(); ++a) {
                const auto i = static_cast<std::size_t>(mem.support[a]);
                for (std::size_t j = 0; j < dim; ++j) scratch[j] = -costs(i, j) / epsilon + g[s][j];
                f[a] = std::log(mem.weight[a]) - log_sum_exp(scratch);
            }
            scratch.resize(mem.support.size());
            const double share = mem.lambda / lambda_total;
            for (std::size_t j = 0; j < dim; ++j) {
                for (std::size_t a = 0; a < mem.support.size(); ++a) {
                    scratch[a] = -costs(static_cast<std::size_t>(mem.support[a]), j) / epsilon + f[a];
                }
                log_ktu[s][j] = log_sum_exp(scratch);
                log_q[j] += share * log_ktu[s][j];
            }
        }
        double moved = 0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double next = std::exp(log_q[j]);
            moved += std::abs(next - q[j]);
            q[j] = next;
        }
        for (std::size_t s = 0; s < members.size(); ++s) {
            for (std::size_t j = 0; j < dim; ++j) g[s][j] = log_q[j] - log_ktu[s][j];
        }
        if (moved < tolerance) break;
    }
}

}  // namespace

std::vector<double> barycenter(std::span<const std::vector<double>> vectors, const CostMatrix& costs,
                               const BarycenterOptions& options, std::span<const double> weights) {
    if (vectors.empty()) throw PreconditionError("transport", "barycenter of an empty set");
    if (!costs.square()) throw InputError("transport", "barycenter requires a square cost matrix");
    if (!weights.empty() && weights.size() != vectors.size()) {
        throw InputError("transport", "one weight per vector is required");
    }
    const std::size_t dim = costs.rows();
    const double mass = std::accumulate(vectors[0].begin(), vectors[0].end(), 0.0);
    for (const auto& v : vectors) {
        if (v.size() != dim) throw PreconditionError("transport", "barycenter inputs must share one support");
        const double mv = std::accumulate(v.begin(), v.end(), 0.0);
        if (std::abs(mv - mass) > 1e-9 * std::max(1.0, mass)) {
            throw PreconditionError("transport", "barycenter inputs must share one total mass");
        }
        for (double w : v) {
            if (w < 0 || !std::isfinite(w)) throw InputError("transport", "barycenter input has a negative entry");
        }
    }
    if (mass == 0) return std::vector<double>(dim, 0.0);

    std::vector<Member> members;
    bool all_identical = true;
    for (std::size_t s = 0; s < vectors.size(); ++s) {
        const double lambda = weights.empty() ? 1.0 : weights[s];
        if (lambda < 0) throw InputError("transport", "barycenter weights must be non-negative");
        if (lambda == 0) continue;
        all_identical = all_identical && vectors[s] == vectors[0];
        Member mem;
        mem.lambda = lambda;
        for (std::size_t j = 0; j < dim; ++j) {
            if (vectors[s][j] > 0) {
                mem.support.push_back(static_cast<int>(j));
                mem.weight.push_back(vectors[s][j] / mass);
            }
        }
        members.push_back(std::move(mem));
    }
    if (members.empty()) throw InputError("transport", "all barycenter weights are zero");
    if (all_identical) return vectors[0];

    std::vector<double> center;
    if (options.mode == BarycenterMode::exact) {
        center = exact_barycenter(members, costs, options);
    } else {
        const double epsilon = options.epsilon > 0 ? options.epsilon : 0.05 * costs.mean();
        if (epsilon <= 0) {
            // All costs vanish: every candidate is optimal; take the weighted mean.
            center.assign(dim, 0.0);
            double total = 0;
            for (const auto& mem : members) {
                total += mem.lambda;
                for (std::size_t a = 0; a < mem.support.size(); ++a) {
                    center[static_cast<std::size_t>(mem.support[a])] += mem.lambda * mem.weight[a];
                }
            }
            for (double& v : center) v /= total;
        } else if (!sinkhorn_barycenter(members, costs, epsilon, options.max_iter, options.tolerance / mass, center)) {
            sinkhorn_barycenter_log(members, costs, epsilon, options.max_iter, options.tolerance / mass, center);
        }
    }
    const double total = std::accumulate(center.begin(), center.end(), 0.0);
    for (double& v : center) v *= mass / total;
    return center;
}

}  // namespace rwl
