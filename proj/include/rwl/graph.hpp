#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rwl {

struct Edge {
    int u = 0;  // u < v
    int v = 0;
    std::optional<int> label;  // raw token from the edge label file
};

// Vertex-labeled undirected simple graph. Node labels are dense ids into the
// dataset's label alphabet (sigma0).
struct Graph {
    std::vector<std::vector<int>> adjacency;  // sorted neighbor lists
    std::vector<int> node_labels;
    std::vector<Edge> edges;  // each undirected edge once, sorted by (u, v)

    std::size_t vertex_count() const { return adjacency.size(); }
    std::size_t edge_count() const { return edges.size(); }

    // Builds adjacency and the edge list from an unordered edge list. Self-loops
    // are dropped and duplicate edges collapsed (first label wins).
    static Graph from_edges(std::vector<int> node_labels, const std::vector<Edge>& edges);
};

struct Dataset {
    std::string name;
    std::vector<Graph> graphs;
    std::vector<int> class_labels;
    std::vector<std::int64_t> sigma0;  // label id -> original token, ascending

    std::size_t size() const { return graphs.size(); }
    std::size_t total_vertices() const;
};

// Reads the TU Dortmund exchange format ({name}_A.txt, _graph_indicator.txt,
// _graph_labels.txt, optional _node_labels.txt and _edge_labels.txt).
Dataset load_tu_dataset(const std::filesystem::path& directory, const std::string& name);

// Writes `dataset` in the same format. Vertex numbering is the concatenation of
// per-graph vertices; labels are written as their original tokens.
void save_tu_dataset(const Dataset& dataset, const std::filesystem::path& directory);

// Empty iff the graph satisfies every structural invariant. When
// `alphabet_size` is given, node label ids are checked against it.
std::vector<std::string> validate(const Graph& graph,
                                  std::optional<std::size_t> alphabet_size = std::nullopt);

}  // namespace rwl
