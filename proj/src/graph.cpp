#include "rwl/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rwl/error.hpp"

namespace rwl {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::int64_t parse_integer(const std::string& token, const fs::path& file, std::size_t line) {
    std::int64_t value = 0;
    const std::string t = trim(token);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw FormatError("graph", file.filename().string() + ":" + std::to_string(line) +
                                       ": expected an integer, got '" + t + "'");
    }
    return value;
}

// One entry per non-empty line, each line split on commas.
std::vector<std::vector<std::int64_t>> read_rows(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("graph", "missing or unreadable file: " + file.string());
    std::vector<std::vector<std::int64_t>> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        std::vector<std::int64_t> row;
        std::stringstream ss(line);
        std::string token;
        while (std::getline(ss, token, ',')) row.push_back(parse_integer(token, file, number));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::int64_t> read_column(const fs::path& file) {
    std::vector<std::int64_t> column;
    std::size_t number = 0;
    for (auto& row : read_rows(file)) {
        ++number;
        if (row.empty()) continue;
        column.push_back(row.front());
    }
    return column;
}

}  // namespace

Graph Graph::from_edges(std::vector<int> node_labels, const std::vector<Edge>& edges) {
    Graph g;
    const int n = static_cast<int>(node_labels.size());
    g.node_labels = std::move(node_labels);
    g.adjacency.assign(n, {});
    std::map<std::pair<int, int>, std::optional<int>> unique;
    for (const auto& e : edges) {
        if (e.u == e.v) continue;
        const auto key = std::minmax(e.u, e.v);
        unique.emplace(std::pair{key.first, key.second}, e.label);
    }
    for (const auto& [key, label] : unique) {
        g.edges.push_back({key.first, key.second, label});
        g.adjacency[key.first].push_back(key.second);
        g.adjacency[key.second].push_back(key.first);
    }
    for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
    return g;
}

std::size_t Dataset::total_vertices() const {
    return std::accumulate(graphs.begin(), graphs.end(), std::size_t{0},
                           [](std::size_t acc, const Graph& g) { return acc + g.vertex_count(); });
}

Dataset load_tu_dataset(const fs::path& directory, const std::string& name) {
    if (!fs::is_directory(directory)) {
        throw FormatError("graph", "dataset directory does not exist: " + directory.string());
    }
    const auto file = [&](const std::string& suffix) { return directory / (name + "_" + suffix + ".txt"); };

    const fs::path edge_file = file("A");
    const fs::path indicator_file = file("graph_indicator");
    const fs::path class_file = file("graph_labels");
    for (const auto& f : {edge_file, indicator_file, class_file}) {
        if (!fs::exists(f)) throw FormatError("graph", "missing mandatory file: " + f.string());
    }

    const auto indicator = read_column(indicator_file);
    const auto classes = read_column(class_file);
    const std::size_t total = indicator.size();

    std::int64_t graph_count = 0;
    for (std::size_t i = 0; i < total; ++i) {
        if (indicator[i] < 1) {
            throw ConsistencyError("graph", indicator_file.filename().string() + ":" +
                                                std::to_string(i + 1) + ": graph ids are 1-based");
        }
        if (i > 0 && indicator[i] < indicator[i - 1]) {
            throw ConsistencyError("graph", indicator_file.filename().string() + ":" +
                                                std::to_string(i + 1) +
                                                ": vertices must be grouped by ascending graph id");
        }
        graph_count = std::max(graph_count, indicator[i]);
    }
    if (static_cast<std::int64_t>(classes.size()) != graph_count) {
        throw ConsistencyError("graph", class_file.filename().string() + " has " +
                                            std::to_string(classes.size()) + " lines but " +
                                            std::to_string(graph_count) + " graphs are indicated");
    }

    // Global (0-based) vertex -> (graph, local index).
    std::vector<int> local(total);
    std::vector<int> sizes(graph_count, 0);
    for (std::size_t i = 0; i < total; ++i) local[i] = sizes[indicator[i] - 1]++;

    std::vector<std::int64_t> raw_labels(total, 0);
    const fs::path node_label_file = file("node_labels");
    if (fs::exists(node_label_file)) {
        raw_labels = read_column(node_label_file);
        if (raw_labels.size() != total) {
            throw ConsistencyError("graph", node_label_file.filename().string() + " has " +
                                                std::to_string(raw_labels.size()) +
                                                " lines, expected " + std::to_string(total));
        }
    }

    Dataset ds;
    ds.name = name;
    ds.sigma0 = raw_labels;
    std::sort(ds.sigma0.begin(), ds.sigma0.end());
    ds.sigma0.erase(std::unique(ds.sigma0.begin(), ds.sigma0.end()), ds.sigma0.end());
    std::vector<int> label_ids(total);
    for (std::size_t i = 0; i < total; ++i) {
        label_ids[i] = static_cast<int>(std::lower_bound(ds.sigma0.begin(), ds.sigma0.end(), raw_labels[i]) -
                                        ds.sigma0.begin());
    }

    const auto edge_rows = read_rows(edge_file);
    std::vector<std::int64_t> edge_labels;
    const fs::path edge_label_file = file("edge_labels");
    const bool has_edge_labels = fs::exists(edge_label_file);
    if (has_edge_labels) {
        edge_labels = read_column(edge_label_file);
        if (edge_labels.size() != edge_rows.size()) {
            throw ConsistencyError("graph", edge_label_file.filename().string() + " has " +
                                                std::to_string(edge_labels.size()) + " lines, expected " +
                                                std::to_string(edge_rows.size()));
        }
    }

    std::vector<std::vector<Edge>> per_graph(graph_count);
    for (std::size_t line = 0; line < edge_rows.size(); ++line) {
        const auto& row = edge_rows[line];
        const std::string where = edge_file.filename().string() + ":" + std::to_string(line + 1);
        if (row.size() != 2) throw FormatError("graph", where + ": expected 'u, v'");
        const std::int64_t u = row[0];
        const std::int64_t v = row[1];
        for (std::int64_t x : {u, v}) {
            if (x < 1 || x > static_cast<std::int64_t>(total)) {
                throw ConsistencyError("graph", where + ": vertex " + std::to_string(x) +
                                                    " outside the indicator range 1.." +
                                                    std::to_string(total));
            }
        }
        if (indicator[u - 1] != indicator[v - 1]) {
            throw ConsistencyError("graph", where + ": edge joins vertices of graphs " +
                                                std::to_string(indicator[u - 1]) + " and " +
                                                std::to_string(indicator[v - 1]));
        }
        Edge e{local[u - 1], local[v - 1], std::nullopt};
        if (has_edge_labels) e.label = static_cast<int>(edge_labels[line]);
        per_graph[indicator[u - 1] - 1].push_back(e);
    }

    std::size_t offset = 0;
    ds.graphs.reserve(graph_count);
    for (std::int64_t g = 0; g < graph_count; ++g) {
        std::vector<int> labels(label_ids.begin() + static_cast<std::ptrdiff_t>(offset),
                                label_ids.begin() + static_cast<std::ptrdiff_t>(offset + sizes[g]));
        ds.graphs.push_back(Graph::from_edges(std::move(labels), per_graph[g]));
        offset += sizes[g];
    }
    ds.class_labels.reserve(classes.size());
    for (auto c : classes) ds.class_labels.push_back(static_cast<int>(c));
    return ds;
}

void save_tu_dataset(const Dataset& dataset, const fs::path& directory) {
    fs::create_directories(directory);
    const auto open = [&](const std::string& suffix) {
        std::ofstream out(directory / (dataset.name + "_" + suffix + ".txt"));
        if (!out) throw FormatError("graph", "cannot write into " + directory.string());
        return out;
    };
    auto a = open("A");
    auto indicator = open("graph_indicator");
    auto classes = open("graph_labels");
    auto nodes = open("node_labels");
    const bool edge_labels = std::any_of(dataset.graphs.begin(), dataset.graphs.end(), [](const Graph& g) {
        return std::any_of(g.edges.begin(), g.edges.end(), [](const Edge& e) { return e.label.has_value(); });
    });
    std::ofstream edge_out;
    if (edge_labels) edge_out = open("edge_labels");

    std::size_t offset = 1;
    for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
        const Graph& graph = dataset.graphs[g];
        for (std::size_t v = 0; v < graph.vertex_count(); ++v) {
            indicator << (g + 1) << '\n';
            nodes << dataset.sigma0.at(graph.node_labels[v]) << '\n';
        }
        for (const auto& e : graph.edges) {
            a << (offset + e.u) << ", " << (offset + e.v) << '\n';
            a << (offset + e.v) << ", " << (offset + e.u) << '\n';
            if (edge_labels) {
                edge_out << e.label.value_or(0) << '\n' << e.label.value_or(0) << '\n';
            }
        }
        classes << dataset.class_labels.at(g) << '\n';
        offset += graph.vertex_count();
    }
}

std::vector<std::string> validate(const Graph& graph, std::optional<std::size_t> alphabet_size) {
    std::vector<std::string> violations;
    const int n = static_cast<int>(graph.vertex_count());
    if (graph.node_labels.size() != graph.adjacency.size()) {
        violations.push_back("node_labels has " + std::to_string(graph.node_labels.size()) +
                             " entries for " + std::to_string(n) + " vertices");
    }
    for (int v = 0; v < n; ++v) {
        const auto& nbrs = graph.adjacency[v];
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
            const int u = nbrs[k];
            if (u < 0 || u >= n) {
                violations.push_back("vertex " + std::to_string(v) + " lists out-of-range neighbor " +
                                     std::to_string(u));
                continue;
            }
            if (u == v) violations.push_back("self-loop on vertex " + std::to_string(v));
            if (k > 0 && nbrs[k - 1] >= u) {
                violations.push_back(nbrs[k - 1] == u
                                         ? "duplicate edge " + std::to_string(v) + "-" + std::to_string(u)
                                         : "unsorted adjacency at vertex " + std::to_string(v));
            }
            if (u != v && !std::binary_search(graph.adjacency[u].begin(), graph.adjacency[u].end(), v)) {
                violations.push_back("asymmetric edge " + std::to_string(v) + "->" + std::to_string(u));
            }
        }
    }
    for (std::size_t v = 0; v < graph.node_labels.size(); ++v) {
        const int label = graph.node_labels[v];
        if (label < 0 || (alphabet_size && static_cast<std::size_t>(label) >= *alphabet_size)) {
            violations.push_back("vertex " + std::to_string(v) + " has label id " + std::to_string(label) +
                                 " outside the alphabet");
        }
    }
    return violations;
}

}  // namespace rwl
