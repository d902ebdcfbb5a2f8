#include "covq/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace covq {

void Graph::add_edge(int u, int v) {
    if (u == v) throw std::invalid_argument("self-loop rejected");
    if (u < 0 || v < 0 || u >= size() || v >= size())
        throw std::out_of_range("vertex id out of range");
    if (has_edge(u, v)) throw std::invalid_argument("duplicate edge rejected");
    auto& au = adj_[static_cast<std::size_t>(u)];
    auto& av = adj_[static_cast<std::size_t>(v)];
    au.insert(std::lower_bound(au.begin(), au.end(), v), v);
    av.insert(std::lower_bound(av.begin(), av.end(), u), u);
}

bool Graph::has_edge(int u, int v) const {
    const auto& au = adj_[static_cast<std::size_t>(u)];
    return std::binary_search(au.begin(), au.end(), v);
}

int Graph::max_degree() const {
    int d = 0;
    for (const auto& a : adj_) d = std::max(d, static_cast<int>(a.size()));
    return d;
}

long long Graph::edge_count() const {
    long long twice = 0;
    for (const auto& a : adj_) twice += static_cast<long long>(a.size());
    return twice / 2;
}

std::vector<std::pair<int, int>> Graph::edges() const {
    std::vector<std::pair<int, int>> e;
    for (int u = 0; u < size(); ++u)
        for (int v : neighbors(u))
            if (u < v) e.emplace_back(u, v);
    return e;
}

bool Graph::is_connected() const {
    if (size() == 0) return true;
    return static_cast<int>(connected_components(*this, {}).components.size()) == 1 ||
           size() == 1;
}

ComponentSplit connected_components(const Graph& g, const std::vector<int>& removed) {
    const int n = g.size();
    std::vector<char> blocked(static_cast<std::size_t>(n), 0);
    for (int v : removed) blocked[static_cast<std::size_t>(v)] = 1;

    ComponentSplit out;
    out.separator = removed;
    std::sort(out.separator.begin(), out.separator.end());
    out.separator.erase(std::unique(out.separator.begin(), out.separator.end()),
                        out.separator.end());

    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack;
    for (int s = 0; s < n; ++s) {
        if (blocked[static_cast<std::size_t>(s)] || seen[static_cast<std::size_t>(s)]) continue;
        std::vector<int> comp;
        stack.push_back(s);
        seen[static_cast<std::size_t>(s)] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (int w : g.neighbors(u)) {
                if (!blocked[static_cast<std::size_t>(w)] && !seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    stack.push_back(w);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.components.push_back(std::move(comp));
    }
    return out;
}

CentralityValue exact_centrality(const Graph& g, int v) {
    const double denom = static_cast<double>(g.size() - 1);
    CentralityValue cv;
    for (const auto& comp : connected_components(g, {v}).components) {
        double frac = static_cast<double>(comp.size()) / denom;
        cv.c = std::max(cv.c, frac);
        cv.s += frac * frac;
    }
    return cv;
}

double exact_set_centrality(const Graph& g, const std::vector<int>& s) {
    auto split = connected_components(g, s);
    std::size_t rest = 0, biggest = 0;
    for (const auto& comp : split.components) {
        rest += comp.size();
        biggest = std::max(biggest, comp.size());
    }
    if (rest == 0) return 0.0;
    return static_cast<double>(biggest) / static_cast<double>(rest);
}

namespace {

bool separates(const Graph& g, const std::vector<char>& in_s,
               const std::vector<int>& a, const std::vector<int>& b) {
    const int n = g.size();
    std::vector<char> target(static_cast<std::size_t>(n), 0);
    for (int v : b)
        if (!in_s[static_cast<std::size_t>(v)]) target[static_cast<std::size_t>(v)] = 1;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack;
    for (int v : a) {
        if (in_s[static_cast<std::size_t>(v)] || seen[static_cast<std::size_t>(v)]) continue;
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
    }
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        if (target[static_cast<std::size_t>(u)]) return false;
        for (int w : g.neighbors(u)) {
            if (!in_s[static_cast<std::size_t>(w)] && !seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                stack.push_back(w);
            }
        }
    }
    return true;
}

std::vector<int> intersect_sorted(std::vector<int> a, std::vector<int> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<int> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

std::vector<int> min_vertex_separator_bruteforce(const Graph& g, const std::vector<int>& a,
                                                 const std::vector<int>& b) {
    const int n = g.size();
    if (n > 20) throw std::invalid_argument("brute-force separator limited to small graphs");
    std::vector<int> seed = intersect_sorted(a, b);
    std::vector<char> in_seed(static_cast<std::size_t>(n), 0);
    for (int v : seed) in_seed[static_cast<std::size_t>(v)] = 1;

    std::vector<int> rest;
    for (int v = 0; v < n; ++v)
        if (!in_seed[static_cast<std::size_t>(v)]) rest.push_back(v);

    std::vector<char> in_s(static_cast<std::size_t>(n), 0);
    for (int v : seed) in_s[static_cast<std::size_t>(v)] = 1;
    if (separates(g, in_s, a, b)) return seed;

    const int m = static_cast<int>(rest.size());
    for (int size = 1; size <= m; ++size) {
        // iterate subsets of `rest` of the given cardinality
        std::vector<int> idx(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
        for (;;) {
            std::fill(in_s.begin(), in_s.end(), 0);
            for (int v : seed) in_s[static_cast<std::size_t>(v)] = 1;
            for (int i : idx) in_s[static_cast<std::size_t>(rest[static_cast<std::size_t>(i)])] = 1;
            if (separates(g, in_s, a, b)) {
                std::vector<int> out = seed;
                for (int i : idx) out.push_back(rest[static_cast<std::size_t>(i)]);
                std::sort(out.begin(), out.end());
                return out;
            }
            int i = size - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - size + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < size; ++j)
                idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) all[static_cast<std::size_t>(v)] = v;
    return all;  // unreachable for sane inputs
}

// Unit-capacity vertex-split max-flow (BFS augmenting paths). Node 2v is the
// in-copy, 2v+1 the out-copy.
std::vector<int> min_vertex_separator_flow(const Graph& g, const std::vector<int>& a,
                                           const std::vector<int>& b) {
    const int n = g.size();
    std::vector<int> seed = intersect_sorted(a, b);
    std::vector<char> drop(static_cast<std::size_t>(n), 0);
    for (int v : seed) drop[static_cast<std::size_t>(v)] = 1;

    struct Arc {
        int to;
        int cap;
        int rev;
    };
    const int kInf = 1 << 28;
    const int num_nodes = 2 * n + 2;
    const int src = 2 * n, dst = 2 * n + 1;
    std::vector<std::vector<Arc>> arcs(static_cast<std::size_t>(num_nodes));
    auto add_arc = [&](int u, int v, int cap) {
        arcs[static_cast<std::size_t>(u)].push_back({v, cap, static_cast<int>(arcs[static_cast<std::size_t>(v)].size())});
        arcs[static_cast<std::size_t>(v)].push_back({u, 0, static_cast<int>(arcs[static_cast<std::size_t>(u)].size()) - 1});
    };

    for (int v = 0; v < n; ++v)
        if (!drop[static_cast<std::size_t>(v)]) add_arc(2 * v, 2 * v + 1, 1);
    for (int u = 0; u < n; ++u) {
        if (drop[static_cast<std::size_t>(u)]) continue;
        for (int v : g.neighbors(u)) {
            if (drop[static_cast<std::size_t>(v)]) continue;
            add_arc(2 * u + 1, 2 * v, kInf);
        }
    }
    for (int v : a)
        if (!drop[static_cast<std::size_t>(v)]) add_arc(src, 2 * v, kInf);
    for (int v : b)
        if (!drop[static_cast<std::size_t>(v)]) add_arc(2 * v + 1, dst, kInf);

    // Edmonds-Karp; the flow value is at most n so this stays cheap.
    auto bfs_path = [&](std::vector<std::pair<int, int>>& parent) {
        std::fill(parent.begin(), parent.end(), std::make_pair(-1, -1));
        std::queue<int> q;
        q.push(src);
        parent[static_cast<std::size_t>(src)] = {src, -1};
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int i = 0; i < static_cast<int>(arcs[static_cast<std::size_t>(u)].size()); ++i) {
                const Arc& e = arcs[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
                if (e.cap > 0 && parent[static_cast<std::size_t>(e.to)].first < 0) {
                    parent[static_cast<std::size_t>(e.to)] = {u, i};
                    if (e.to == dst) return true;
                    q.push(e.to);
                }
            }
        }
        return false;
    };

    std::vector<std::pair<int, int>> parent(static_cast<std::size_t>(num_nodes));
    while (bfs_path(parent)) {
        for (int v = dst; v != src;) {
            auto [u, i] = parent[static_cast<std::size_t>(v)];
            Arc& e = arcs[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
            e.cap -= 1;
            arcs[static_cast<std::size_t>(e.to)][static_cast<std::size_t>(e.rev)].cap += 1;
            v = u;
        }
    }

    // min cut = split arcs crossing the reachable set
    std::vector<char> reach(static_cast<std::size_t>(num_nodes), 0);
    std::queue<int> q;
    q.push(src);
    reach[static_cast<std::size_t>(src)] = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (const Arc& e : arcs[static_cast<std::size_t>(u)]) {
            if (e.cap > 0 && !reach[static_cast<std::size_t>(e.to)]) {
                reach[static_cast<std::size_t>(e.to)] = 1;
                q.push(e.to);
            }
        }
    }
    std::vector<int> out = seed;
    for (int v = 0; v < n; ++v) {
        if (drop[static_cast<std::size_t>(v)]) continue;
        if (reach[static_cast<std::size_t>(2 * v)] && !reach[static_cast<std::size_t>(2 * v + 1)])
            out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> min_vertex_separator(const Graph& g, const std::vector<int>& a,
                                      const std::vector<int>& b) {
    if (g.size() <= 16) return min_vertex_separator_bruteforce(g, a, b);
    return min_vertex_separator_flow(g, a, b);
}

bool is_tree(const Graph& g) {
    return g.is_connected() && g.edge_count() == g.size() - 1;
}

BlockCutStats block_cut_stats(const Graph& g) {
    const int n = g.size();
    BlockCutStats stats;
    if (n <= 1) {
        stats.max_block_size = n;
        return stats;
    }

    std::vector<int> disc(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<std::pair<int, int>> edge_stack;
    std::vector<char> is_cut(static_cast<std::size_t>(n), 0);
    int timer = 0;

    // iterative lowpoint DFS with per-vertex neighbor cursor
    std::vector<std::size_t> cursor(static_cast<std::size_t>(n), 0);
    std::vector<int> stack;

    auto pop_block = [&](int u, int v) {
        std::vector<int> verts;
        auto mark = [&](int x) {
            if (std::find(verts.begin(), verts.end(), x) == verts.end()) verts.push_back(x);
        };
        for (;;) {
            auto [a_, b_] = edge_stack.back();
            edge_stack.pop_back();
            mark(a_);
            mark(b_);
            if (a_ == u && b_ == v) break;
        }
        std::sort(verts.begin(), verts.end());
        stats.blocks.push_back(std::move(verts));
    };

    for (int root = 0; root < n; ++root) {
        if (disc[static_cast<std::size_t>(root)] != -1) continue;
        int root_children = 0;
        stack.push_back(root);
        disc[static_cast<std::size_t>(root)] = low[static_cast<std::size_t>(root)] = timer++;
        while (!stack.empty()) {
            int u = stack.back();
            if (cursor[static_cast<std::size_t>(u)] < g.neighbors(u).size()) {
                int v = g.neighbors(u)[cursor[static_cast<std::size_t>(u)]++];
                if (v == parent[static_cast<std::size_t>(u)]) continue;
                if (disc[static_cast<std::size_t>(v)] == -1) {
                    parent[static_cast<std::size_t>(v)] = u;
                    if (u == root) ++root_children;
                    edge_stack.emplace_back(u, v);
                    disc[static_cast<std::size_t>(v)] = low[static_cast<std::size_t>(v)] = timer++;
                    stack.push_back(v);
                } else if (disc[static_cast<std::size_t>(v)] < disc[static_cast<std::size_t>(u)]) {
                    edge_stack.emplace_back(u, v);
                    low[static_cast<std::size_t>(u)] =
                        std::min(low[static_cast<std::size_t>(u)], disc[static_cast<std::size_t>(v)]);
                }
            } else {
                stack.pop_back();
                int p = parent[static_cast<std::size_t>(u)];
                if (p >= 0) {
                    low[static_cast<std::size_t>(p)] =
                        std::min(low[static_cast<std::size_t>(p)], low[static_cast<std::size_t>(u)]);
                    if (low[static_cast<std::size_t>(u)] >= disc[static_cast<std::size_t>(p)]) {
                        if (p != root || root_children > 1) is_cut[static_cast<std::size_t>(p)] = 1;
                        pop_block(p, u);
                    }
                }
            }
        }
    }

    for (int v = 0; v < n; ++v)
        if (is_cut[static_cast<std::size_t>(v)]) stats.cut_vertices.push_back(v);

    // block-cut tree degrees: a cut vertex touches the blocks containing it,
    // a block touches the cut vertices it contains
    std::vector<int> blocks_at(static_cast<std::size_t>(n), 0);
    for (const auto& blk : stats.blocks) {
        stats.max_block_size = std::max(stats.max_block_size, static_cast<int>(blk.size()));
        int cuts_in_block = 0;
        for (int v : blk) {
            ++blocks_at[static_cast<std::size_t>(v)];
            if (is_cut[static_cast<std::size_t>(v)]) ++cuts_in_block;
        }
        stats.max_bc_degree = std::max(stats.max_bc_degree, cuts_in_block);
    }
    for (int v : stats.cut_vertices)
        stats.max_bc_degree = std::max(stats.max_bc_degree, blocks_at[static_cast<std::size_t>(v)]);
    return stats;
}

Graph read_graph_text(std::istream& in) {
    int n = 0;
    long long m = 0;
    if (!(in >> n >> m)) throw std::runtime_error("graph header: expected 'n m'");
    if (n < 0 || m < 0) throw std::runtime_error("graph header: negative counts");
    Graph g(n);
    for (long long i = 0; i < m; ++i) {
        int u = 0, v = 0;
        if (!(in >> u >> v)) throw std::runtime_error("graph body: truncated edge list");
        g.add_edge(u, v);
    }
    return g;
}

void write_graph_text(const Graph& g, std::ostream& out) {
    out << g.size() << ' ' << g.edge_count() << '\n';
    for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
}

Graph load_graph_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    return read_graph_text(in);
}

void save_graph_file(const Graph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write graph file: " + path);
    write_graph_text(g, out);
}

}  // namespace covq
