#include "rwl/sdted.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "rwl/error.hpp"
#include "rwl/format.hpp"
#include "rwl/parallel.hpp"

namespace rwl {

CostMatrix CostFunction::extended() const {
    const std::size_t n = alphabet_size();
    CostMatrix m(n + 1, n + 1);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) m(a, b) = relabel(a, b);
        m(a, n) = m(n, a) = blank[a];
    }
    return m;
}

std::vector<std::string> CostFunction::violations(double tolerance) const {
    if (relabel.rows() != blank.size() || relabel.cols() != blank.size()) {
        return {"relabel matrix does not match the blank vector"};
    }
    return extended().metric_violations(tolerance);
}

std::string CostFunction::describe() const {
    const CostFunction reference = uniform(alphabet_size(), alphabet_size() == 0 ? 1.0 : blank[0]);
    if (relabel == reference.relabel && blank == reference.blank) {
        return "uniform(" + format_number(alphabet_size() == 0 ? 1.0 : blank[0]) + ")";
    }
    return "custom(" + std::to_string(alphabet_size()) + " labels)";
}

CostFunction CostFunction::uniform(std::size_t alphabet_size, double cost) {
    CostFunction f;
    f.relabel = CostMatrix(alphabet_size, alphabet_size, cost);
    for (std::size_t a = 0; a < alphabet_size; ++a) f.relabel(a, a) = 0;
    f.blank.assign(alphabet_size, cost);
    return f;
}

CostFunction CostFunction::from_extended(const CostMatrix& extended) {
    if (!extended.square() || extended.rows() == 0) {
        throw InputError("sdted", "extended cost matrix must be square and include the blank");
    }
    const std::size_t n = extended.rows() - 1;
    CostFunction f;
    f.relabel = CostMatrix(n, n);
    f.blank.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) f.relabel(a, b) = extended(a, b);
        f.blank[a] = extended(a, n);
    }
    return f;
}

CostFunction load_cost_function(const std::filesystem::path& file, std::span<const std::int64_t> sigma0) {
    std::ifstream in(file);
    if (!in) throw FormatError("sdted", "cannot read cost file " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("sdted", file.string() + ": empty cost file");
    std::vector<std::int64_t> tokens;
    {
        std::istringstream header(line);
        std::string tok;
        while (header >> tok) {
            try {
                std::size_t used = 0;
                tokens.push_back(std::stoll(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError("sdted", file.string() + ":1: label token '" + tok + "' is not an integer");
            }
        }
    }
    const std::size_t n = tokens.size() + 1;
    CostMatrix full(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!(in >> full(i, j))) {
                throw FormatError("sdted", file.string() + ": expected a " + std::to_string(n) + "x" +
                                               std::to_string(n) + " matrix after the token line");
            }
        }
    }
    std::string rest;
    if (in >> rest) throw FormatError("sdted", file.string() + ": trailing content '" + rest + "'");

    const CostFunction parsed = CostFunction::from_extended(full);
    if (const auto v = parsed.violations(); !v.empty()) {
        throw InputError("sdted", file.string() + " is not a metric: " + v.front());
    }
    // Restrict to the dataset alphabet, in its order.
    std::vector<std::size_t> row;
    for (std::int64_t token : sigma0) {
        const auto it = std::find(tokens.begin(), tokens.end(), token);
        if (it == tokens.end()) {
            throw InputError("sdted", file.string() + " has no entry for label " + std::to_string(token));
        }
        row.push_back(static_cast<std::size_t>(it - tokens.begin()));
    }
    CostFunction f;
    f.relabel = CostMatrix(sigma0.size(), sigma0.size());
    f.blank.resize(sigma0.size());
    for (std::size_t a = 0; a < sigma0.size(); ++a) {
        for (std::size_t b = 0; b < sigma0.size(); ++b) f.relabel(a, b) = parsed.relabel(row[a], row[b]);
        f.blank[a] = parsed.blank[row[a]];
    }
    return f;
}

namespace {

double pair_distance(const TreeType& a, const TreeType& b, const CostFunction& gamma, const CostMatrix& child,
                     const DistanceOptions& options) {
    const double root = gamma(a.root_label, b.root_label);
    const std::size_t blank = child.rows() - 1;
    std::vector<int> ra, rb;
    if (options.identical_child_shortcut) {
        // Equal child types pair at zero cost in some optimal matching.
        auto ia = a.children.begin();
        auto ib = b.children.begin();
        while (ia != a.children.end() || ib != b.children.end()) {
            if (ib == b.children.end() || (ia != a.children.end() && ia->type < ib->type)) {
                ra.insert(ra.end(), static_cast<std::size_t>(ia->multiplicity), ia->type);
                ++ia;
            } else if (ia == a.children.end() || ib->type < ia->type) {
                rb.insert(rb.end(), static_cast<std::size_t>(ib->multiplicity), ib->type);
                ++ib;
            } else {
                const int common = std::min(ia->multiplicity, ib->multiplicity);
                ra.insert(ra.end(), static_cast<std::size_t>(ia->multiplicity - common), ia->type);
                rb.insert(rb.end(), static_cast<std::size_t>(ib->multiplicity - common), ib->type);
                ++ia;
                ++ib;
            }
        }
        if (ra.empty() || rb.empty()) {
            double rest = root;
            for (int t : ra) rest += child(static_cast<std::size_t>(t), blank);
            for (int t : rb) rest += child(blank, static_cast<std::size_t>(t));
            return rest;
        }
    } else {
        for (const auto& c : a.children) ra.insert(ra.end(), static_cast<std::size_t>(c.multiplicity), c.type);
        for (const auto& c : b.children) rb.insert(rb.end(), static_cast<std::size_t>(c.multiplicity), c.type);
        if (ra.empty() && rb.empty()) return root;
    }
    const std::size_t p = ra.size();
    const std::size_t q = rb.size();
    CostMatrix m(p + q, p + q, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        const auto ci = static_cast<std::size_t>(ra[i]);
        for (std::size_t j = 0; j < q; ++j) m(i, j) = child(ci, static_cast<std::size_t>(rb[j]));
        for (std::size_t j = q; j < p + q; ++j) m(i, j) = child(ci, blank);
    }
    for (std::size_t i = p; i < p + q; ++i) {
        for (std::size_t j = 0; j < q; ++j) m(i, j) = child(blank, static_cast<std::size_t>(rb[j]));
    }
    if (options.matching_calls) options.matching_calls->fetch_add(1, std::memory_order_relaxed);
    return root + matching_cost(m);
}

}  // namespace

CostMatrix type_distances(std::span<const TreeType> types, const CostFunction& gamma,
                          const CostMatrix& child_distances, const DistanceOptions& options) {
    if (!child_distances.square() || child_distances.rows() == 0) {
        throw ContractError("sdted", "child distance matrix must be square and include the blank");
    }
    const std::size_t child_blank = child_distances.rows() - 1;
    const std::size_t n = types.size();
    for (const auto& t : types) {
        if (t.root_label < 0 || static_cast<std::size_t>(t.root_label) >= gamma.alphabet_size()) {
            throw ContractError("sdted", "root label " + std::to_string(t.root_label) +
                                             " is outside the cost function's alphabet");
        }
        for (const auto& c : t.children) {
            if (c.type < 0 || static_cast<std::size_t>(c.type) >= child_blank) {
                throw ContractError("sdted", "child type " + std::to_string(c.type) +
                                                 " is outside the previous level's matrix");
            }
        }
    }
    CostMatrix out(n + 1, n + 1, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        double del = gamma.deletion(types[a].root_label);
        for (const auto& c : types[a].children) {
            del += c.multiplicity * child_distances(static_cast<std::size_t>(c.type), child_blank);
        }
        out(a, n) = out(n, a) = del;
    }
    parallel_for(n, options.threads, [&](std::size_t a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            out(a, b) = out(b, a) = pair_distance(types[a], types[b], gamma, child_distances, options);
        }
    });
    return out;
}

LevelDistanceMatrix level_distances(const LabelHierarchy& hierarchy, const CostFunction& gamma, int level,
                                    const LevelDistanceMatrix* previous, const DistanceOptions& options) {
    if (level < 0 || level > hierarchy.depth()) {
        throw ContractError("sdted", "level " + std::to_string(level) + " is not in the hierarchy");
    }
    if (gamma.alphabet_size() != hierarchy.alphabet_size()) {
        throw ContractError("sdted", "cost function covers " + std::to_string(gamma.alphabet_size()) +
                                         " labels but the hierarchy has " +
                                         std::to_string(hierarchy.alphabet_size()));
    }
    LevelDistanceMatrix out;
    out.level = level;
    if (level == 0) {
        if (previous) throw ContractError("sdted", "level 0 takes no previous matrix");
        // Leaves: relabel costs between root labels, deletion on the blank.
        out.distances = type_distances(hierarchy.types(0), gamma, CostMatrix(1, 1, 0.0), options);
        return out;
    }
    if (!previous || previous->level != level - 1 || previous->type_count() != hierarchy.type_count(level - 1)) {
        throw ContractError("sdted", "level " + std::to_string(level) + " needs the matrix of level " +
                                         std::to_string(level - 1));
    }
    out.distances = type_distances(hierarchy.types(level), gamma, previous->distances, options);
    return out;
}

std::vector<LevelDistanceMatrix> all_level_distances(const LabelHierarchy& hierarchy, const CostFunction& gamma,
                                                     const DistanceOptions& options) {
    std::vector<LevelDistanceMatrix> levels;
    for (int i = 0; i <= hierarchy.depth(); ++i) {
        levels.push_back(level_distances(hierarchy, gamma, i, i == 0 ? nullptr : &levels.back(), options));
    }
    return levels;
}

namespace {

const LevelDistanceMatrix& same_level(std::span<const LevelDistanceMatrix> levels, int level_a, int type_a,
                                      int level_b, int type_b) {
    if (level_a != level_b) {
        throw DomainError("sdted", "distance between trees of depth " + std::to_string(level_a) + " and " +
                                       std::to_string(level_b) + " is undefined");
    }
    if (level_a < 0 || static_cast<std::size_t>(level_a) >= levels.size()) {
        throw DomainError("sdted", "no distance matrix for level " + std::to_string(level_a));
    }
    const auto& m = levels[static_cast<std::size_t>(level_a)];
    const auto n = static_cast<int>(m.type_count());
    if (type_a < 0 || type_a >= n || type_b < 0 || type_b >= n) {
        throw DomainError("sdted", "type id out of range at level " + std::to_string(level_a));
    }
    return m;
}

}  // namespace

double sdted(std::span<const LevelDistanceMatrix> levels, int level_a, int type_a, int level_b, int type_b) {
    return same_level(levels, level_a, type_a, level_b, type_b)(type_a, type_b);
}

double sdted_wasserstein(const LabelHierarchy& hierarchy, const CostFunction& gamma,
                         std::span<const LevelDistanceMatrix> levels, int level_a, int type_a, int level_b,
                         int type_b) {
    (void)same_level(levels, level_a, type_a, level_b, type_b);
    const int level = level_a;
    const int mass = hierarchy.type(level, type_a).degree() + hierarchy.type(level, type_b).degree();
    const auto va = tree_vector(hierarchy, level, type_a, mass);
    const auto vb = tree_vector(hierarchy, level, type_b, mass);
    const CostMatrix m_r = gamma.extended();
    double cost = wasserstein_cost(va.root, vb.root, m_r);
    if (level > 0) cost += wasserstein_cost(va.children, vb.children, levels[static_cast<std::size_t>(level - 1)].distances);
    return cost;
}

void write_distance_csv(std::ostream& out, const LevelDistanceMatrix& matrix) {
    const std::size_t n = matrix.type_count();
    const auto header = [n](std::size_t i) { return i == n ? std::string("blank") : std::to_string(i); };
    out << "type";
    for (std::size_t j = 0; j <= n; ++j) out << ',' << header(j);
    out << '\n';
    for (std::size_t i = 0; i <= n; ++i) {
        out << header(i);
        for (std::size_t j = 0; j <= n; ++j) out << ',' << format_number(matrix.distances(i, j));
        out << '\n';
    }
}

}  // namespace rwl
