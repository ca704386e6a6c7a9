#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rwl/clustering.hpp"
#include "rwl/graph.hpp"
#include "rwl/sdted.hpp"
#include "rwl/wl_labels.hpp"

namespace rwl {

enum class KernelVariant { wl, rwl, rwl_star, vehist };

std::string kernel_name(KernelVariant v);
KernelVariant parse_kernel(const std::string& name);  // InputError on unknown names

// Number of clusters per level.
struct KChoice {
    enum class Kind { sqrt, fixed, per_level, all };
    Kind kind = Kind::sqrt;
    int value = 0;
    std::vector<int> per_level;

    int resolve(int level, std::size_t type_count) const;
    std::string describe() const;
    static KChoice parse(const std::string& text);  // "sqrt", "all", "5", "3,4,5"
};

struct KernelConfig {
    KernelVariant variant = KernelVariant::rwl_star;
    int depth = 4;
    std::vector<double> alpha;  // per level; empty means all 1
    KChoice k;
    int clusterings = 3;
    std::uint64_t seed = 0;
    InitMode init = InitMode::kpp;
    int max_iter = 50;
    BarycenterOptions barycenter;
    std::size_t support_cap = 256;
    std::optional<CostFunction> gamma;  // uniform unit costs when absent
    bool normalize = false;
    unsigned threads = 1;

    double level_weight(int level) const;
    std::uint64_t clustering_seed(int level, int index) const {
        return seed + static_cast<std::uint64_t>(level) * 1000 + static_cast<std::uint64_t>(index);
    }
};

struct LevelReport {
    int level = 0;
    std::size_t types = 0;  // distinct (surrogate) types at this level
    int k = 0;
    std::size_t propagated = 0;  // distinct cluster ids used by the first clustering
    std::vector<std::uint64_t> seeds;
    std::vector<double> objectives;
    std::vector<int> iterations;
    std::vector<bool> converged;
    double seconds = 0;
};

struct Gram {
    Eigen::MatrixXd matrix;
    std::string kernel;
    int depth = 0;
    bool normalized = false;
    std::uint64_t seed = 0;
    std::string gamma;
    std::string k;
    std::vector<LevelReport> levels;
    std::int64_t matching_calls = 0;
    std::vector<std::string> warnings;
};

// Explicit feature vectors: one row per graph, one column per feature, with a
// non-negative weight per column. Kernel = F diag(w) F'.
struct FeatureMap {
    Eigen::SparseMatrix<double, Eigen::RowMajor> features;
    std::vector<double> weights;
};

Eigen::MatrixXd gram_from_features(const FeatureMap& map);

// Cluster membership counts; partitions[level][clustering][type id] = cluster.
FeatureMap partition_features(const LabelHierarchy& hierarchy,
                              const std::vector<std::vector<std::vector<int>>>& partitions,
                              const std::vector<double>& level_weights);

FeatureMap wl_features(const LabelHierarchy& hierarchy, const std::vector<double>& level_weights);
FeatureMap vehist_features(const Dataset& dataset);

Gram wl_subtree_gram(const Dataset& dataset, const KernelConfig& config);
Gram rwl_gram(const Dataset& dataset, const KernelConfig& config);
Gram rwl_star_gram(const Dataset& dataset, const KernelConfig& config);
Gram vehist_gram(const Dataset& dataset);

// Dispatches on config.variant and applies config.normalize.
Gram compute_gram(const Dataset& dataset, const KernelConfig& config);

// R-WL Gram from given partitions of the hierarchy's types.
Gram rwl_gram_from_partitions(const LabelHierarchy& hierarchy,
                              const std::vector<std::vector<std::vector<int>>>& partitions,
                              const std::vector<double>& level_weights);

// Partitions used by rwl_gram, exposed for inspection and tests.
std::vector<std::vector<Clustering>> rwl_clusterings(const LabelHierarchy& hierarchy, const KernelConfig& config,
                                                     Gram* report = nullptr);

Gram normalize_gram(const Gram& gram);

struct PsdResult {
    double min_eigenvalue = 0;
    double max_eigenvalue = 0;
    bool pass = false;
};
PsdResult psd_check(const Eigen::MatrixXd& matrix, double tolerance = 1e-8);

void write_gram_csv(std::ostream& out, const Gram& gram);
void write_labels(std::ostream& out, const Dataset& dataset);
// Reads the CSV back (header comment required). FormatError on malformed input.
Eigen::MatrixXd read_gram_csv(std::istream& in);

}  // namespace rwl
