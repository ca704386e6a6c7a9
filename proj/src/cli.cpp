#include "rwl/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include "rwl/clustering.hpp"
#include "rwl/error.hpp"
#include "rwl/format.hpp"
#include "rwl/graph.hpp"
#include "rwl/kernels.hpp"
#include "rwl/sdted.hpp"
#include "rwl/wl_labels.hpp"

namespace rwl {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Raised for problems that make the command unusable before any computation.
class UsageError : public Error {
public:
    using Error::Error;
};

struct Flags {
    std::string dataset;
    std::string name;
    std::string kernel = "rwl-star";
    int depth = 4;
    int level = -1;
    std::string k = "sqrt";
    int clusterings = 3;
    std::uint64_t seed = 0;
    std::string gamma;
    bool normalize = false;
    std::string init = "kpp";
    std::string barycenter = "regularized";
    double epsilon = 0;
    std::string out;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
};

std::string mean_text(double total, std::size_t count) {
    std::string s = format_number(count == 0 ? 0.0 : total / static_cast<double>(count));
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

Dataset load(const Flags& f) {
    try {
        return load_tu_dataset(f.dataset, f.name);
    } catch (const FormatError& e) {
        throw UsageError(e.module(), e.what());
    } catch (const ConsistencyError& e) {
        throw UsageError(e.module(), e.what());
    }
}

std::optional<CostFunction> load_gamma(const Flags& f, const Dataset& ds) {
    if (f.gamma.empty()) return std::nullopt;
    try {
        return load_cost_function(f.gamma, ds.sigma0);
    } catch (const FormatError& e) {
        throw UsageError(e.module(), e.what());
    } catch (const InputError& e) {
        throw UsageError(e.module(), e.what());
    }
}

CostFunction gamma_or_uniform(const std::optional<CostFunction>& gamma, const Dataset& ds) {
    return gamma ? *gamma : CostFunction::uniform(ds.sigma0.size());
}

void check_level(const Flags& f) {
    if (f.level < 0) throw UsageError("cli", "--level must be non-negative");
    if (f.level > f.depth) {
        throw UsageError("cli", "level " + std::to_string(f.level) + " exceeds the depth " + std::to_string(f.depth));
    }
}

KernelConfig kernel_config(const Flags& f, const CLI::App& command) {
    KernelConfig c;
    try {
        c.variant = parse_kernel(f.kernel);
        c.k = KChoice::parse(f.k);
    } catch (const InputError& e) {
        throw UsageError(e.module(), e.what());
    }
    if (f.depth < 0) throw UsageError("cli", "--depth must be non-negative");
    if (c.k.kind == KChoice::Kind::per_level && c.k.per_level.size() != static_cast<std::size_t>(f.depth) + 1) {
        throw UsageError("cli", "--k lists " + std::to_string(c.k.per_level.size()) + " values but depth " +
                                    std::to_string(f.depth) + " needs " + std::to_string(f.depth + 1));
    }
    const bool clustered = c.variant == KernelVariant::rwl || c.variant == KernelVariant::rwl_star;
    if (!clustered) {
        for (const char* name : {"--k", "--clusterings", "--init", "--barycenter", "--epsilon", "--gamma"}) {
            if (command.count(name) > 0) {
                throw UsageError("cli", std::string(name) + " has no effect with --kernel " + f.kernel);
            }
        }
    }
    if (c.variant == KernelVariant::vehist && command.count("--depth") > 0) {
        throw UsageError("cli", "--depth has no effect with --kernel vehist");
    }
    c.depth = c.variant == KernelVariant::vehist ? 0 : f.depth;
    c.clusterings = f.clusterings;
    c.seed = f.seed;
    c.init = f.init == "uniform" ? InitMode::uniform : InitMode::kpp;
    c.barycenter.mode = f.barycenter == "exact" ? BarycenterMode::exact : BarycenterMode::regularized;
    if (command.count("--epsilon") > 0 && c.barycenter.mode == BarycenterMode::exact) {
        throw UsageError("cli", "--epsilon only applies to --barycenter regularized");
    }
    c.barycenter.epsilon = f.epsilon;
    c.normalize = f.normalize;
    c.threads = f.threads;
    return c;
}

void open_output(std::ofstream& file, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    file.open(path, std::ios::binary);
    if (!file) throw FormatError("cli", "cannot write " + path.string());
}

// Writes through `write` into --out, or to `out` when no file was given.
template <typename Write>
void emit(const Flags& f, std::ostream& out, Write write) {
    if (f.out.empty()) {
        write(out);
        return;
    }
    std::ofstream file;
    open_output(file, f.out);
    write(file);
    if (!file) throw FormatError("cli", "failed writing " + f.out);
}

int cmd_info(const Flags& f, std::ostream& out) {
    const Dataset ds = load(f);
    if (f.depth < 0) throw UsageError("cli", "--depth must be non-negative");
    std::map<int, std::size_t> classes;
    for (int c : ds.class_labels) ++classes[c];
    double vertices = 0, edges = 0;
    for (const auto& g : ds.graphs) {
        vertices += static_cast<double>(g.vertex_count());
        edges += static_cast<double>(g.edge_count());
    }
    out << "graphs=" << ds.size() << " classes=" << classes.size() << " avg_n=" << mean_text(vertices, ds.size())
        << " avg_m=" << mean_text(edges, ds.size()) << '\n';
    for (const auto& [label, count] : classes) out << "class " << label << ": " << count << '\n';
    const auto hierarchy = LabelHierarchy::refine(ds, f.depth);
    for (int i = 0; i <= f.depth; ++i) out << (i ? " " : "") << "sigma_" << i << '=' << hierarchy.type_count(i);
    out << '\n';
    return kExitOk;
}

fs::path sibling(const fs::path& path, const std::string& extension) {
    fs::path p = path;
    p.replace_extension(extension);
    return p;
}

ordered_json level_json(const LevelReport& r) {
    ordered_json j;
    j["level"] = r.level;
    j["types"] = r.types;
    j["k"] = r.k;
    j["seeds"] = r.seeds;
    j["objectives"] = r.objectives;
    j["iterations"] = r.iterations;
    std::vector<bool> converged(r.converged.begin(), r.converged.end());
    j["converged"] = converged;
    j["seconds"] = r.seconds;
    return j;
}

int cmd_gram(const Flags& f, const CLI::App& command, const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
    KernelConfig config = kernel_config(f, command);
    const Dataset ds = load(f);
    config.gamma = load_gamma(f, ds);
    if (f.out.empty()) throw UsageError("cli", "gram needs --out");

    const auto start = std::chrono::steady_clock::now();
    const Gram gram = compute_gram(ds, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const PsdResult psd = psd_check(gram.matrix);

    const fs::path csv = f.out;
    const fs::path labels = sibling(csv, ".labels");
    const fs::path provenance = sibling(csv, ".json");
    {
        std::ofstream file;
        open_output(file, csv);
        write_gram_csv(file, gram);
    }
    {
        std::ofstream file;
        open_output(file, labels);
        write_labels(file, ds);
    }

    ordered_json j;
    j["command"] = args;
    j["dataset"] = {{"directory", f.dataset}, {"name", f.name}, {"graphs", ds.size()}};
    j["kernel"] = gram.kernel;
    j["depth"] = gram.depth;
    j["seed"] = config.seed;
    const bool clustered = config.variant == KernelVariant::rwl || config.variant == KernelVariant::rwl_star;
    if (clustered) {
        j["k"] = config.k.describe();
        j["clusterings"] = config.clusterings;
        j["init"] = f.init;
        j["barycenter"] = {{"mode", f.barycenter}, {"epsilon", config.barycenter.epsilon}};
        j["max_iter"] = config.max_iter;
        j["support_cap"] = config.support_cap;
        j["gamma"] = {{"file", f.gamma}, {"costs", gram.gamma}};
    }
    j["normalized"] = gram.normalized;
    j["threads"] = config.threads;
    ordered_json levels = ordered_json::array();
    for (const auto& r : gram.levels) levels.push_back(level_json(r));
    j["levels"] = levels;
    j["matching_calls"] = gram.matching_calls;
    j["warnings"] = gram.warnings;
    j["psd"] = {{"min_eigenvalue", psd.min_eigenvalue}, {"max_eigenvalue", psd.max_eigenvalue}, {"pass", psd.pass}};
    j["seconds"] = seconds;
    j["outputs"] = {{"gram", csv.string()}, {"labels", labels.string()}};
    {
        std::ofstream file;
        open_output(file, provenance);
        file << j.dump(2) << '\n';
    }

    for (const auto& w : gram.warnings) err << "[clustering] warning: " << w << '\n';
    out << "wrote " << csv.string() << " (" << ds.size() << " graphs, kernel " << gram.kernel << ")\n";
    if (!psd.pass) {
        err << "[kernels] Gram matrix is not positive semidefinite (min eigenvalue "
            << format_number(psd.min_eigenvalue) << ")\n";
        return kExitNotPsd;
    }
    return kExitOk;
}

int cmd_distances(const Flags& f, std::ostream& out) {
    check_level(f);
    const Dataset ds = load(f);
    const CostFunction gamma = gamma_or_uniform(load_gamma(f, ds), ds);
    const auto hierarchy = LabelHierarchy::refine(ds, f.level);
    DistanceOptions options;
    options.threads = f.threads;
    const auto levels = all_level_distances(hierarchy, gamma, options);
    emit(f, out, [&](std::ostream& o) { write_distance_csv(o, levels.back()); });
    return kExitOk;
}

int cmd_cluster(const Flags& f, const CLI::App& command, std::ostream& out, std::ostream& err) {
    check_level(f);
    Flags as_rwl = f;
    as_rwl.kernel = "rwl";
    KernelConfig config = kernel_config(as_rwl, command);
    const Dataset ds = load(f);
    const CostFunction gamma = gamma_or_uniform(load_gamma(f, ds), ds);
    const auto hierarchy = LabelHierarchy::refine(ds, f.level);

    DistanceOptions options;
    options.threads = f.threads;
    CostMatrix child_costs(1, 1, 0.0);
    if (f.level > 0) {
        LevelDistanceMatrix previous = level_distances(hierarchy, gamma, 0, nullptr, options);
        for (int i = 1; i < f.level; ++i) previous = level_distances(hierarchy, gamma, i, &previous, options);
        child_costs = previous.distances;
    }
    LevelGeometry geometry;
    geometry.level = f.level;
    geometry.types = hierarchy.types(f.level);
    geometry.root_costs = gamma.extended();
    geometry.child_costs = child_costs;

    ClusteringOptions o;
    o.k = config.k.resolve(f.level, hierarchy.type_count(f.level));
    o.seed = config.clustering_seed(f.level, 0);
    o.max_iter = config.max_iter;
    o.init = config.init;
    o.barycenter = config.barycenter;
    o.support_cap = config.support_cap;
    o.threads = config.threads;
    const Clustering c = wasserstein_kmeans(geometry, o);
    for (const auto& w : c.warnings) err << "[clustering] warning: " << w << '\n';

    ordered_json assignment = ordered_json::object();
    for (std::size_t t = 0; t < c.assignment.size(); ++t) assignment[std::to_string(t)] = c.assignment[t];
    ordered_json j;
    j["level"] = c.level;
    j["k"] = c.k;
    j["seed"] = c.seed;
    j["assignment"] = assignment;
    j["objective"] = c.objective;
    emit(f, out, [&](std::ostream& s) { s << j.dump(2) << '\n'; });
    return kExitOk;
}

void add_dataset(CLI::App& app, Flags& f) {
    app.add_option("--dataset", f.dataset, "Directory with the dataset files")->required();
    app.add_option("--name", f.name, "Dataset name (file prefix)")->required();
}

void add_threads(CLI::App& app, Flags& f) {
    app.add_option("--threads", f.threads, "Worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
}

void add_clustering(CLI::App& app, Flags& f) {
    app.add_option("--k", f.k, "Clusters per level: sqrt, all, an integer, or a comma list per level")
        ->capture_default_str();
    app.add_option("--seed", f.seed, "Base seed")->capture_default_str();
    app.add_option("--gamma", f.gamma, "Label cost file");
    app.add_option("--init", f.init, "Center initialization")
        ->check(CLI::IsMember({"uniform", "kpp"}))
        ->capture_default_str();
    app.add_option("--barycenter", f.barycenter, "Barycenter method")
        ->check(CLI::IsMember({"exact", "regularized"}))
        ->capture_default_str();
    app.add_option("--epsilon", f.epsilon, "Entropic regularization (0 picks 5% of the mean cost)")
        ->check(CLI::NonNegativeNumber);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Flags f;
    CLI::App app{"Relaxed Weisfeiler-Lehman graph kernels"};
    app.name("rwl");
    app.require_subcommand(1);

    auto* info = app.add_subcommand("info", "Dataset summary and WL alphabet sizes");
    add_dataset(*info, f);
    info->add_option("--depth", f.depth, "Refinement depth")->capture_default_str();

    auto* gram = app.add_subcommand("gram", "Compute a Gram matrix");
    add_dataset(*gram, f);
    gram->add_option("--kernel", f.kernel, "Kernel")
        ->check(CLI::IsMember({"wl", "rwl", "rwl-star", "vehist"}))
        ->capture_default_str();
    gram->add_option("--depth", f.depth, "Refinement depth")->capture_default_str();
    add_clustering(*gram, f);
    gram->add_option("--clusterings", f.clusterings, "Clusterings per level")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gram->add_flag("--normalize", f.normalize, "Cosine-normalize the Gram matrix");
    gram->add_option("--out", f.out, "Gram CSV path; .labels and .json are written alongside")->required();
    add_threads(*gram, f);

    auto* distances = app.add_subcommand("distances", "Export the distance table of one level");
    add_dataset(*distances, f);
    distances->add_option("--level", f.level, "Level")->required();
    distances->add_option("--depth", f.depth, "Largest admissible level")->capture_default_str();
    distances->add_option("--gamma", f.gamma, "Label cost file");
    distances->add_option("--out", f.out, "CSV path (default: standard output)");
    add_threads(*distances, f);

    auto* cluster = app.add_subcommand("cluster", "Cluster the types of one level");
    add_dataset(*cluster, f);
    cluster->add_option("--level", f.level, "Level")->required();
    cluster->add_option("--depth", f.depth, "Largest admissible level")->capture_default_str();
    add_clustering(*cluster, f);
    cluster->add_option("--out", f.out, "JSON path (default: standard output)");
    add_threads(*cluster, f);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (info->parsed()) return cmd_info(f, out);
        if (gram->parsed()) return cmd_gram(f, *gram, args, out, err);
        if (distances->parsed()) return cmd_distances(f, out);
        if (cluster->parsed()) return cmd_cluster(f, *cluster, out, err);
    } catch (const UsageError& e) {
        err << '[' << e.module() << "] " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << '[' << e.module() << "] " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "[cli] " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace rwl
