#pragma once

// Undirected simple graphs plus the exact combinatorial oracles (components,
// centrality, minimum vertex separators, block decomposition) that the
// generators use for construction and the tests use as ground truth.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace covq {

class Graph {
public:
    Graph() = default;
    explicit Graph(int n) : adj_(static_cast<std::size_t>(n)) {}

    int size() const { return static_cast<int>(adj_.size()); }

    // Rejects self-loops and duplicate edges.
    void add_edge(int u, int v);
    bool has_edge(int u, int v) const;
    const std::vector<int>& neighbors(int v) const { return adj_[static_cast<std::size_t>(v)]; }
    int degree(int v) const { return static_cast<int>(adj_[static_cast<std::size_t>(v)].size()); }
    int max_degree() const;
    long long edge_count() const;
    std::vector<std::pair<int, int>> edges() const;

    bool is_connected() const;

    bool operator==(const Graph& other) const { return adj_ == other.adj_; }

private:
    // sorted neighbor lists
    std::vector<std::vector<int>> adj_;
};

struct ComponentSplit {
    std::vector<int> separator;
    std::vector<std::vector<int>> components;  // each sorted; ordered by least vertex
};

struct CentralityValue {
    double c = 0.0;
    double s = 0.0;
};

// Connected components of g \ removed.
ComponentSplit connected_components(const Graph& g, const std::vector<int>& removed);

// c(v) and s(v): largest-component fraction and sum-of-squares fraction of
// |V|-1 after deleting v. Requires g connected, n >= 2.
CentralityValue exact_centrality(const Graph& g, int v);

// c(S) generalization; requires S a proper subset of V.
double exact_set_centrality(const Graph& g, const std::vector<int>& s);

// Minimum-cardinality vertex set meeting every a-b path. A∩B is contained in
// every separator and is pre-seeded. Exhaustive subset search for n <= 16,
// unit-capacity vertex-split max-flow above; the two agree on the overlap
// and are cross-checked in tests. Test/generator oracle, not a hot path.
std::vector<int> min_vertex_separator(const Graph& g, const std::vector<int>& a,
                                      const std::vector<int>& b);
std::vector<int> min_vertex_separator_bruteforce(const Graph& g, const std::vector<int>& a,
                                                 const std::vector<int>& b);
std::vector<int> min_vertex_separator_flow(const Graph& g, const std::vector<int>& a,
                                           const std::vector<int>& b);

bool is_tree(const Graph& g);

struct BlockCutStats {
    int max_block_size = 0;      // b: size of the largest 2-connected component
    int max_bc_degree = 0;       // d: maximum degree over the block-cut tree
    std::vector<std::vector<int>> blocks;
    std::vector<int> cut_vertices;
};

// Standard lowpoint biconnected-components traversal; a bridge counts as a
// block of size 2. Requires g connected.
BlockCutStats block_cut_stats(const Graph& g);

// Text format: first line "n m", then m lines "u v" (0-based). The parser
// rejects self-loops, duplicates, and out-of-range ids.
Graph read_graph_text(std::istream& in);
void write_graph_text(const Graph& g, std::ostream& out);
Graph load_graph_file(const std::string& path);
void save_graph_file(const Graph& g, const std::string& path);

}  // namespace covq
