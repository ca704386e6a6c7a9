#include "rwl/kernels.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "rwl/error.hpp"
#include "rwl/format.hpp"

namespace rwl {

std::string kernel_name(KernelVariant v) {
    switch (v) {
        case KernelVariant::wl: return "wl";
        case KernelVariant::rwl: return "rwl";
        case KernelVariant::rwl_star: return "rwl-star";
        case KernelVariant::vehist: return "vehist";
    }
    return "unknown";
}

KernelVariant parse_kernel(const std::string& name) {
    for (auto v : {KernelVariant::wl, KernelVariant::rwl, KernelVariant::rwl_star, KernelVariant::vehist}) {
        if (kernel_name(v) == name) return v;
    }
    throw InputError("kernels", "unknown kernel '" + name + "' (expected wl, rwl, rwl-star or vehist)");
}

int KChoice::resolve(int level, std::size_t type_count) const {
    const auto n = static_cast<int>(type_count);
    switch (kind) {
        case Kind::sqrt: return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
        case Kind::fixed: return value;
        case Kind::all: return std::max(1, n);
        case Kind::per_level:
            if (level < 0 || static_cast<std::size_t>(level) >= per_level.size()) {
                throw InputError("kernels", "no k given for level " + std::to_string(level));
            }
            return per_level[static_cast<std::size_t>(level)];
    }
    return 1;
}

std::string KChoice::describe() const {
    switch (kind) {
        case Kind::sqrt: return "sqrt";
        case Kind::all: return "all";
        case Kind::fixed: return std::to_string(value);
        case Kind::per_level: {
            std::string s;
            for (std::size_t i = 0; i < per_level.size(); ++i) s += (i ? "," : "") + std::to_string(per_level[i]);
            return s;
        }
    }
    return "";
}

KChoice KChoice::parse(const std::string& text) {
    KChoice c;
    if (text == "sqrt") return c;
    if (text == "all") {
        c.kind = Kind::all;
        return c;
    }
    if (text.empty() || text.back() == ',') throw InputError("kernels", "invalid k '" + text + "'");
    std::vector<int> values;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != part.size() || v < 1) {
            throw InputError("kernels", "invalid k '" + text + "' (expected sqrt, all, a positive integer or a list)");
        }
        values.push_back(v);
    }
    if (values.empty()) throw InputError("kernels", "invalid k '" + text + "'");
    if (values.size() == 1 && text.find(',') == std::string::npos) {
        c.kind = Kind::fixed;
        c.value = values[0];
    } else {
        c.kind = Kind::per_level;
        c.per_level = std::move(values);
    }
    return c;
}

double KernelConfig::level_weight(int level) const {
    if (alpha.empty()) return 1.0;
    if (level < 0 || static_cast<std::size_t>(level) >= alpha.size()) {
        throw InputError("kernels", "no level weight for level " + std::to_string(level));
    }
    return alpha[static_cast<std::size_t>(level)];
}

namespace {

using Triplet = Eigen::Triplet<double>;

std::vector<double> level_weights_of(const KernelConfig& config) {
    if (!config.alpha.empty() && config.alpha.size() != static_cast<std::size_t>(config.depth) + 1) {
        throw InputError("kernels", "expected " + std::to_string(config.depth + 1) + " level weights, got " +
                                        std::to_string(config.alpha.size()));
    }
    std::vector<double> w;
    for (int i = 0; i <= config.depth; ++i) {
        const double a = config.level_weight(i);
        if (!std::isfinite(a) || a < 0) throw InputError("kernels", "level weights must be finite and non-negative");
        w.push_back(a);
    }
    return w;
}

void check_config(const KernelConfig& config) {
    if (config.depth < 0) throw InputError("kernels", "depth must be non-negative");
    if (config.clusterings < 1) throw InputError("kernels", "at least one clustering per level is required");
    if (config.k.kind == KChoice::Kind::fixed && config.k.value < 1) throw InputError("kernels", "k must be positive");
    if (config.k.kind == KChoice::Kind::per_level &&
        config.k.per_level.size() != static_cast<std::size_t>(config.depth) + 1) {
        throw InputError("kernels", "expected " + std::to_string(config.depth + 1) + " values of k, got " +
                                        std::to_string(config.k.per_level.size()));
    }
}

CostFunction gamma_for(const KernelConfig& config, std::size_t alphabet) {
    if (!config.gamma) return CostFunction::uniform(alphabet);
    if (config.gamma->alphabet_size() != alphabet) {
        throw ContractError("kernels", "cost function covers " + std::to_string(config.gamma->alphabet_size()) +
                                           " labels but the dataset has " + std::to_string(alphabet));
    }
    return *config.gamma;
}

// Column blocks of counts: block b holds one column per id in [0, widths[b]).
class FeatureBuilder {
public:
    explicit FeatureBuilder(std::size_t rows) : rows_(rows) {}

    int add_block(std::size_t width, double weight) {
        offsets_.push_back(static_cast<int>(weights_.size()));
        weights_.insert(weights_.end(), width, weight);
        return static_cast<int>(offsets_.size()) - 1;
    }

    void count(std::size_t row, int block, int id, double amount = 1.0) {
        triplets_.emplace_back(static_cast<int>(row), offsets_[static_cast<std::size_t>(block)] + id, amount);
    }

    FeatureMap finish() {
        FeatureMap map;
        map.features.resize(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(weights_.size()));
        map.features.setFromTriplets(triplets_.begin(), triplets_.end());  // duplicates are summed
        map.weights = std::move(weights_);
        return map;
    }

private:
    std::size_t rows_;
    std::vector<int> offsets_;
    std::vector<double> weights_;
    std::vector<Triplet> triplets_;
};

std::size_t graph_count(const LabelHierarchy& hierarchy) { return hierarchy.level(0).vertex_types.size(); }

LevelGeometry geometry_for(int level, std::span<const TreeType> types, const CostFunction& gamma,
                           const CostMatrix& child_costs) {
    LevelGeometry g;
    g.level = level;
    g.types = types;
    g.root_costs = gamma.extended();
    g.child_costs = child_costs;
    return g;
}

ClusteringOptions clustering_options(const KernelConfig& config, int level, int index, int k) {
    ClusteringOptions o;
    o.k = k;
    o.seed = config.clustering_seed(level, index);
    o.max_iter = config.max_iter;
    o.init = config.init;
    o.barycenter = config.barycenter;
    o.support_cap = config.support_cap;
    o.threads = config.threads;
    return o;
}

void record(LevelReport& report, const Clustering& c) {
    report.k = c.k;
    if (report.seeds.empty()) {
        std::vector<int> ids = c.assignment;
        std::sort(ids.begin(), ids.end());
        report.propagated = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
    }
    report.seeds.push_back(c.seed);
    report.objectives.push_back(c.objective);
    report.iterations.push_back(c.iterations);
    report.converged.push_back(c.converged);
}

void add_warnings(Gram& gram, const Clustering& c) {
    for (const auto& w : c.warnings) {
        gram.warnings.push_back("level " + std::to_string(c.level) + " seed " + std::to_string(c.seed) + ": " + w);
    }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Gram describe(const KernelConfig& config, KernelVariant variant) {
    Gram g;
    g.kernel = kernel_name(variant);
    g.depth = config.depth;
    g.seed = config.seed;
    g.gamma = config.gamma ? config.gamma->describe() : "uniform(1)";
    g.k = config.k.describe();
    return g;
}

}  // namespace

Eigen::MatrixXd gram_from_features(const FeatureMap& map) {
    const auto cols = map.features.cols();
    if (static_cast<Eigen::Index>(map.weights.size()) != cols) {
        throw ContractError("kernels", "feature weights do not match the feature count");
    }
    Eigen::SparseMatrix<double, Eigen::RowMajor> weighted = map.features;
    for (Eigen::Index r = 0; r < weighted.outerSize(); ++r) {
        for (decltype(weighted)::InnerIterator it(weighted, r); it; ++it) {
            it.valueRef() *= map.weights[static_cast<std::size_t>(it.col())];
        }
    }
    Eigen::SparseMatrix<double> product = weighted * Eigen::SparseMatrix<double>(map.features.transpose());
    Eigen::MatrixXd gram = Eigen::MatrixXd(product);
    // Exact symmetry regardless of summation order.
    gram = (gram + gram.transpose()) * 0.5;
    return gram;
}

FeatureMap wl_features(const LabelHierarchy& hierarchy, const std::vector<double>& level_weights) {
    const std::size_t n = graph_count(hierarchy);
    FeatureBuilder builder(n);
    for (int i = 0; i <= hierarchy.depth(); ++i) {
        const double w = i < static_cast<int>(level_weights.size()) ? level_weights[static_cast<std::size_t>(i)] : 1.0;
        const int block = builder.add_block(hierarchy.type_count(i), w);
        const auto& table = hierarchy.level(i).vertex_types;
        for (std::size_t g = 0; g < n; ++g) {
            for (int t : table[g]) builder.count(g, block, t);
        }
    }
    return builder.finish();
}

FeatureMap partition_features(const LabelHierarchy& hierarchy,
                              const std::vector<std::vector<std::vector<int>>>& partitions,
                              const std::vector<double>& level_weights) {
    if (partitions.size() != static_cast<std::size_t>(hierarchy.depth()) + 1) {
        throw ContractError("kernels", "expected partitions for " + std::to_string(hierarchy.depth() + 1) + " levels");
    }
    const std::size_t n = graph_count(hierarchy);
    FeatureBuilder builder(n);
    for (int i = 0; i <= hierarchy.depth(); ++i) {
        const double w = i < static_cast<int>(level_weights.size()) ? level_weights[static_cast<std::size_t>(i)] : 1.0;
        const auto& table = hierarchy.level(i).vertex_types;
        for (const auto& assignment : partitions[static_cast<std::size_t>(i)]) {
            if (assignment.size() != hierarchy.type_count(i)) {
                throw ContractError("kernels", "partition at level " + std::to_string(i) + " covers " +
                                                   std::to_string(assignment.size()) + " of " +
                                                   std::to_string(hierarchy.type_count(i)) + " types");
            }
            int clusters = 0;
            for (int c : assignment) {
                if (c < 0) throw ContractError("kernels", "negative cluster id");
                clusters = std::max(clusters, c + 1);
            }
            const int block = builder.add_block(static_cast<std::size_t>(clusters), w);
            for (std::size_t g = 0; g < n; ++g) {
                for (int t : table[g]) builder.count(g, block, assignment[static_cast<std::size_t>(t)]);
            }
        }
    }
    return builder.finish();
}

FeatureMap vehist_features(const Dataset& dataset) {
    std::map<std::optional<int>, int> edge_bins;
    for (const auto& g : dataset.graphs) {
        for (const auto& e : g.edges) edge_bins.emplace(e.label, 0);
    }
    int next = 0;
    for (auto& [label, id] : edge_bins) id = next++;

    FeatureBuilder builder(dataset.size());
    const int nodes = builder.add_block(dataset.sigma0.size(), 1.0);
    const int edges = builder.add_block(edge_bins.size(), 1.0);
    for (std::size_t g = 0; g < dataset.size(); ++g) {
        for (int label : dataset.graphs[g].node_labels) builder.count(g, nodes, label);
        for (const auto& e : dataset.graphs[g].edges) builder.count(g, edges, edge_bins.at(e.label));
    }
    return builder.finish();
}

Gram wl_subtree_gram(const Dataset& dataset, const KernelConfig& config) {
    check_config(config);
    const auto weights = level_weights_of(config);
    const auto hierarchy = LabelHierarchy::refine(dataset, config.depth);
    Gram gram = describe(config, KernelVariant::wl);
    gram.k.clear();
    gram.gamma.clear();
    gram.matrix = gram_from_features(wl_features(hierarchy, weights));
    for (int i = 0; i <= config.depth; ++i) {
        LevelReport r;
        r.level = i;
        r.types = hierarchy.type_count(i);
        gram.levels.push_back(r);
    }
    return gram;
}

Gram vehist_gram(const Dataset& dataset) {
    Gram gram;
    gram.kernel = kernel_name(KernelVariant::vehist);
    gram.matrix = gram_from_features(vehist_features(dataset));
    return gram;
}

std::vector<std::vector<Clustering>> rwl_clusterings(const LabelHierarchy& hierarchy, const KernelConfig& config,
                                                     Gram* report) {
    check_config(config);
    if (hierarchy.depth() != config.depth) {
        throw ContractError("kernels", "hierarchy depth " + std::to_string(hierarchy.depth()) +
                                           " differs from the configured depth " + std::to_string(config.depth));
    }
    const CostFunction gamma = gamma_for(config, hierarchy.alphabet_size());
    std::atomic<std::int64_t> calls{0};
    DistanceOptions distance_options;
    distance_options.threads = config.threads;
    distance_options.matching_calls = &calls;

    std::vector<std::vector<Clustering>> out;
    std::optional<LevelDistanceMatrix> previous;
    for (int i = 0; i <= config.depth; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const CostMatrix child_costs = i == 0 ? CostMatrix(1, 1, 0.0) : previous->distances;
        const auto geometry = geometry_for(i, hierarchy.types(i), gamma, child_costs);
        const int k = config.k.resolve(i, hierarchy.type_count(i));
        LevelReport level_report;
        level_report.level = i;
        level_report.types = hierarchy.type_count(i);
        std::vector<Clustering> level;
        for (int c = 0; c < config.clusterings; ++c) {
            level.push_back(wasserstein_kmeans(geometry, clustering_options(config, i, c, k)));
            record(level_report, level.back());
            if (report) add_warnings(*report, level.back());
        }
        out.push_back(std::move(level));
        // The next level's child costs; the last level's own matrix is not needed.
        if (i < config.depth) {
            previous = level_distances(hierarchy, gamma, i, previous ? &*previous : nullptr, distance_options);
        }
        level_report.seconds = seconds_since(start);
        if (report) report->levels.push_back(std::move(level_report));
    }
    if (report) report->matching_calls = calls.load();
    return out;
}

Gram rwl_gram_from_partitions(const LabelHierarchy& hierarchy,
                              const std::vector<std::vector<std::vector<int>>>& partitions,
                              const std::vector<double>& level_weights) {
    Gram gram;
    gram.kernel = kernel_name(KernelVariant::rwl);
    gram.depth = hierarchy.depth();
    gram.matrix = gram_from_features(partition_features(hierarchy, partitions, level_weights));
    return gram;
}

Gram rwl_gram(const Dataset& dataset, const KernelConfig& config) {
    check_config(config);
    const auto weights = level_weights_of(config);
    const auto hierarchy = LabelHierarchy::refine(dataset, config.depth);
    Gram gram = describe(config, KernelVariant::rwl);
    const auto clusterings = rwl_clusterings(hierarchy, config, &gram);
    std::vector<std::vector<std::vector<int>>> partitions;
    for (const auto& level : clusterings) {
        auto& p = partitions.emplace_back();
        for (const auto& c : level) p.push_back(c.assignment);
    }
    gram.matrix = gram_from_features(partition_features(hierarchy, partitions, weights));
    return gram;
}

Gram rwl_star_gram(const Dataset& dataset, const KernelConfig& config) {
    check_config(config);
    const auto weights = level_weights_of(config);
    Gram gram = describe(config, KernelVariant::rwl_star);
    const CostFunction gamma = gamma_for(config, dataset.sigma0.size());
    const CostMatrix root_costs = gamma.extended();

    // Level 0 is the plain label level; later levels are built from the
    // cluster ids of the propagation clustering one level down.
    const auto base = LabelHierarchy::refine(dataset, 0);
    LevelTable table = base.level(0);
    CostMatrix child_costs(1, 1, 0.0);
    FeatureBuilder builder(dataset.size());

    for (int i = 0; i <= config.depth; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const auto geometry = geometry_for(i, table.types, gamma, child_costs);
        const int k = config.k.resolve(i, table.types.size());
        LevelReport level_report;
        level_report.level = i;
        level_report.types = table.types.size();
        std::vector<Clustering> level;
        for (int c = 0; c < config.clusterings; ++c) {
            level.push_back(wasserstein_kmeans(geometry, clustering_options(config, i, c, k)));
            record(level_report, level.back());
            add_warnings(gram, level.back());
        }
        for (const auto& c : level) {
            const int block = builder.add_block(static_cast<std::size_t>(c.k), weights[static_cast<std::size_t>(i)]);
            for (std::size_t g = 0; g < dataset.size(); ++g) {
                for (int t : table.vertex_types[g]) builder.count(g, block, c.assignment[static_cast<std::size_t>(t)]);
            }
        }
        if (i < config.depth) {
            const Clustering& propagation = level.front();
            child_costs = center_distances(propagation.centers, root_costs, geometry.child_costs);
            std::vector<std::vector<int>> surrogate(dataset.size());
            for (std::size_t g = 0; g < dataset.size(); ++g) {
                for (int t : table.vertex_types[g]) surrogate[g].push_back(propagation.assignment[static_cast<std::size_t>(t)]);
            }
            const std::vector<std::int64_t> unit_sizes(static_cast<std::size_t>(propagation.k), 1);
            table = build_level(dataset, i + 1, surrogate, unit_sizes);
        }
        level_report.seconds = seconds_since(start);
        gram.levels.push_back(std::move(level_report));
    }
    gram.matrix = gram_from_features(builder.finish());
    return gram;
}

Gram compute_gram(const Dataset& dataset, const KernelConfig& config) {
    Gram gram;
    switch (config.variant) {
        case KernelVariant::wl: gram = wl_subtree_gram(dataset, config); break;
        case KernelVariant::rwl: gram = rwl_gram(dataset, config); break;
        case KernelVariant::rwl_star: gram = rwl_star_gram(dataset, config); break;
        case KernelVariant::vehist: gram = vehist_gram(dataset); break;
    }
    gram.seed = config.seed;
    return config.normalize ? normalize_gram(gram) : gram;
}

Gram normalize_gram(const Gram& gram) {
    const auto& k = gram.matrix;
    if (k.rows() != k.cols()) throw InputError("kernels", "Gram matrix is not square");
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        if (!(k(i, i) > 0)) {
            throw NormalizationError("kernels", "graph " + std::to_string(i) + " has self-similarity " +
                                                    format_number(k(i, i)) + "; cannot normalize");
        }
    }
    Gram out = gram;
    const Eigen::VectorXd scale = k.diagonal().cwiseSqrt().cwiseInverse();
    out.matrix = scale.asDiagonal() * k * scale.asDiagonal();
    for (Eigen::Index i = 0; i < k.rows(); ++i) out.matrix(i, i) = 1.0;
    out.normalized = true;
    return out;
}

PsdResult psd_check(const Eigen::MatrixXd& matrix, double tolerance) {
    if (matrix.rows() != matrix.cols()) throw InputError("kernels", "matrix is not square");
    if (!matrix.allFinite()) throw InputError("kernels", "matrix has non-finite entries");
    PsdResult r;
    if (matrix.rows() == 0) {
        r.pass = true;
        return r;
    }
    const double asymmetry = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
    if (asymmetry > 1e-9 * std::max(1.0, matrix.cwiseAbs().maxCoeff())) {
        throw InputError("kernels", "matrix is not symmetric (max asymmetry " + format_number(asymmetry) + ")");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix, Eigen::EigenvaluesOnly);
    r.min_eigenvalue = solver.eigenvalues().minCoeff();
    r.max_eigenvalue = solver.eigenvalues().maxCoeff();
    r.pass = r.min_eigenvalue >= -tolerance * std::max(1.0, r.max_eigenvalue);
    return r;
}

void write_gram_csv(std::ostream& out, const Gram& gram) {
    const auto& k = gram.matrix;
    out << "# kernel=" << gram.kernel << " h=" << gram.depth << " n=" << k.rows()
        << " normalized=" << (gram.normalized ? "true" : "false") << " seed=" << gram.seed << '\n';
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        for (Eigen::Index j = 0; j < k.cols(); ++j) out << (j ? "," : "") << format_number(k(i, j));
        out << '\n';
    }
}

void write_labels(std::ostream& out, const Dataset& dataset) {
    for (int label : dataset.class_labels) out << label << '\n';
}

Eigen::MatrixXd read_gram_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# kernel=", 0) != 0) {
        throw FormatError("kernels", "Gram CSV must start with a '# kernel=' header");
    }
    long n = -1;
    {
        std::istringstream header(line.substr(2));
        std::string field;
        while (header >> field) {
            if (field.rfind("n=", 0) == 0) n = std::stol(field.substr(2));
        }
    }
    if (n < 0) throw FormatError("kernels", "Gram CSV header lacks n=");
    Eigen::MatrixXd k(n, n);
    for (long i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw FormatError("kernels", "Gram CSV has fewer than " + std::to_string(n) + " rows");
        std::istringstream row(line);
        std::string cell;
        long j = 0;
        while (std::getline(row, cell, ',')) {
            if (j >= n) throw FormatError("kernels", "row " + std::to_string(i) + " has too many entries");
            try {
                std::size_t used = 0;
                k(i, j) = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw FormatError("kernels", "row " + std::to_string(i) + ": bad number '" + cell + "'");
            }
            ++j;
        }
        if (j != n) throw FormatError("kernels", "row " + std::to_string(i) + " has " + std::to_string(j) + " entries");
    }
    while (std::getline(in, line)) {
        if (!line.empty()) throw FormatError("kernels", "trailing content after " + std::to_string(n) + " rows");
    }
    return k;
}

}  // namespace rwl
