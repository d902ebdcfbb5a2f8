#include "covq/models.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "covq/dense.hpp"
#include "covq/rng.hpp"

namespace covq {

using nlohmann::json;

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Tree: return "tree";
        case ModelKind::SmallBlock: return "small-block";
        case ModelKind::PartialKTree: return "partial-k-tree";
        case ModelKind::AdversarialStar: return "adversarial-star";
        case ModelKind::AdversarialDary: return "adversarial-dary";
    }
    return "unknown";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "tree") return ModelKind::Tree;
    if (name == "small-block") return ModelKind::SmallBlock;
    if (name == "partial-k-tree" || name == "ktree") return ModelKind::PartialKTree;
    if (name == "adversarial-star") return ModelKind::AdversarialStar;
    if (name == "adversarial-dary") return ModelKind::AdversarialDary;
    throw std::invalid_argument("unknown model kind: " + name);
}

bool ModelInstance::tree_backed() const {
    return kind == ModelKind::Tree || kind == ModelKind::AdversarialStar ||
           kind == ModelKind::AdversarialDary;
}

std::shared_ptr<CovarianceOracle> ModelInstance::make_exact_oracle() const {
    if (tree_backed()) return std::make_shared<TreeOracle>(graph, edge_rho);
    if (sigma_dense.empty())
        throw std::runtime_error("instance has no materialized covariance");
    return std::make_shared<DenseOracle>(n(), sigma_dense);
}

std::vector<double> ModelInstance::materialize_sigma() const {
    if (!tree_backed()) {
        if (sigma_dense.empty()) throw std::runtime_error("covariance not materialized");
        return sigma_dense;
    }
    const int nn = n();
    if (nn > kDefaultMaterializeCap) throw std::runtime_error("tree too large to materialize");
    TreeOracle oracle(graph, edge_rho);
    std::vector<double> sigma(static_cast<std::size_t>(nn) * nn);
    for (int i = 0; i < nn; ++i)
        for (int j = i; j < nn; ++j) {
            double v = oracle.query(i, j);
            sigma[static_cast<std::size_t>(i) * nn + j] = v;
            sigma[static_cast<std::size_t>(j) * nn + i] = v;
        }
    return sigma;
}

namespace {

// Closed-form precision of a unit-variance tree model: each edge uv with
// correlation r contributes -r/(1-r^2) off-diagonal and r^2/(1-r^2) to both
// endpoint diagonals (on top of 1).
std::vector<std::tuple<int, int, double>> tree_precision_triplets(
    const Graph& g, const std::vector<double>& edge_rho) {
    const int n = g.size();
    std::vector<double> diag(static_cast<std::size_t>(n), 1.0);
    std::vector<std::tuple<int, int, double>> out;
    auto edge_list = g.edges();
    for (std::size_t e = 0; e < edge_list.size(); ++e) {
        auto [u, v] = edge_list[e];
        double r = edge_rho[e];
        double denom = 1.0 - r * r;
        out.emplace_back(u, v, -r / denom);
        diag[static_cast<std::size_t>(u)] += r * r / denom;
        diag[static_cast<std::size_t>(v)] += r * r / denom;
    }
    for (int i = 0; i < n; ++i) out.emplace_back(i, i, diag[static_cast<std::size_t>(i)]);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> random_edge_rho(std::size_t count, double lo, double hi, Rng& rng) {
    std::vector<double> rho(count);
    for (auto& r : rho) {
        r = rng.uniform(lo, hi);
        if (rng.next_bool()) r = -r;
    }
    return rho;
}

// Edge-wise generic precision: |K_uv| uniform in [0.2, 1], random sign,
// K_vv = 1 + sum of incident |K_uv| (strict diagonal dominance => PD).
void build_edgewise_precision(ModelInstance& inst, Rng& rng, int materialize_cap) {
    const int n = inst.n();
    auto edge_list = inst.graph.edges();
    std::vector<double> diag(static_cast<std::size_t>(n), 1.0);
    std::vector<std::tuple<int, int, double>> trip;
    DenseMatrix k(n, n);
    for (auto [u, v] : edge_list) {
        double w = rng.uniform(0.2, 1.0);
        if (rng.next_bool()) w = -w;
        trip.emplace_back(u, v, w);
        k.at(u, v) = k.at(v, u) = w;
        diag[static_cast<std::size_t>(u)] += std::fabs(w);
        diag[static_cast<std::size_t>(v)] += std::fabs(w);
    }
    for (int i = 0; i < n; ++i) {
        trip.emplace_back(i, i, diag[static_cast<std::size_t>(i)]);
        k.at(i, i) = diag[static_cast<std::size_t>(i)];
    }
    std::sort(trip.begin(), trip.end());
    inst.true_precision = std::move(trip);

    if (n <= materialize_cap) {
        DenseMatrix sigma = invert(k);
        inst.sigma_dense.assign(sigma.data(), sigma.data() + static_cast<std::size_t>(n) * n);
    }
}

}  // namespace

ModelInstance gen_tree_model(int n, int max_degree, double corr_lo, double corr_hi,
                             std::uint64_t seed, int diameter_cap) {
    if (n < 2) throw std::invalid_argument("tree model: n >= 2 required");
    if (max_degree < 2) throw std::invalid_argument("tree model: degree bound >= 2 required");
    if (!(corr_lo > 0.0 && corr_lo < corr_hi && corr_hi < 1.0))
        throw std::invalid_argument("tree model: need 0 < lo < hi < 1");

    Rng rng(hash_label(seed, "tree-model"));
    Graph g(n);
    std::vector<int> depth(static_cast<std::size_t>(n), 0);
    const int max_depth = diameter_cap > 0 ? diameter_cap / 2 : -1;

    std::vector<int> open{0};
    std::vector<int> deg(static_cast<std::size_t>(n), 0);
    for (int v = 1; v < n; ++v) {
        if (open.empty())
            throw std::runtime_error("tree model: degree/diameter constraints infeasible");
        std::size_t pick = rng.next_below(open.size());
        int p = open[pick];
        g.add_edge(p, v);
        depth[static_cast<std::size_t>(v)] = depth[static_cast<std::size_t>(p)] + 1;
        ++deg[static_cast<std::size_t>(p)];
        ++deg[static_cast<std::size_t>(v)];
        if (deg[static_cast<std::size_t>(p)] >= max_degree) {
            open[pick] = open.back();
            open.pop_back();
        }
        if (deg[static_cast<std::size_t>(v)] < max_degree &&
            (max_depth < 0 || depth[static_cast<std::size_t>(v)] < max_depth))
            open.push_back(v);
    }

    ModelInstance inst;
    inst.kind = ModelKind::Tree;
    inst.graph = std::move(g);
    inst.seed = seed;
    inst.params.d = max_degree;
    inst.params.corr_lo = corr_lo;
    inst.params.corr_hi = corr_hi;
    inst.params.diameter_cap = diameter_cap;
    inst.edge_rho = random_edge_rho(inst.graph.edges().size(), corr_lo, corr_hi, rng);
    inst.true_precision = tree_precision_triplets(inst.graph, inst.edge_rho);
    return inst;
}

ModelInstance gen_small_block_model(int n, int max_block, int max_bc_degree,
                                    std::uint64_t seed, int materialize_cap) {
    if (n < 2) throw std::invalid_argument("small-block model: n >= 2 required");
    if (max_block < 2 || max_bc_degree < 2)
        throw std::invalid_argument("small-block model: b >= 2 and d >= 2 required");

    Rng rng(hash_label(seed, "small-block-model"));
    Graph g(n);

    std::vector<int> block_count(static_cast<std::size_t>(n), 0);  // blocks containing v
    std::vector<int> home_block(static_cast<std::size_t>(n), -1);  // for non-cut vertices
    std::vector<int> block_cuts;                                   // cut vertices per block
    std::vector<char> is_cut(static_cast<std::size_t>(n), 0);

    int total = 1;  // vertex 0 exists, in no block yet
    while (total < n) {
        std::vector<int> eligible;
        for (int v = 0; v < total; ++v) {
            if (block_count[static_cast<std::size_t>(v)] >= max_bc_degree) continue;
            if (block_count[static_cast<std::size_t>(v)] == 1 && !is_cut[static_cast<std::size_t>(v)]) {
                // attaching turns v into a cut vertex of its home block
                if (block_cuts[static_cast<std::size_t>(home_block[static_cast<std::size_t>(v)])] >=
                    max_bc_degree)
                    continue;
            }
            eligible.push_back(v);
        }
        if (eligible.empty())
            throw std::runtime_error("small-block model: bc-degree constraints infeasible");
        const int v = eligible[rng.next_below(eligible.size())];

        const int remaining = n - total;
        const int smax = std::min(max_block, remaining + 1);
        const int s = 2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(smax - 1)));

        std::vector<int> verts{v};
        for (int t = 0; t < s - 1; ++t) verts.push_back(total + t);
        total += s - 1;

        if (s == 2) {
            g.add_edge(verts[0], verts[1]);
        } else {
            rng.shuffle(verts);
            for (int t = 0; t < s; ++t)
                g.add_edge(verts[static_cast<std::size_t>(t)],
                           verts[static_cast<std::size_t>((t + 1) % s)]);
            for (int a = 0; a < s; ++a)
                for (int bidx = a + 1; bidx < s; ++bidx) {
                    int x = verts[static_cast<std::size_t>(a)], y = verts[static_cast<std::size_t>(bidx)];
                    if (!g.has_edge(x, y) && rng.next_double() < 0.25) g.add_edge(x, y);
                }
        }

        const int blk = static_cast<int>(block_cuts.size());
        block_cuts.push_back(0);
        if (block_count[static_cast<std::size_t>(v)] >= 1 && !is_cut[static_cast<std::size_t>(v)]) {
            is_cut[static_cast<std::size_t>(v)] = 1;
            ++block_cuts[static_cast<std::size_t>(home_block[static_cast<std::size_t>(v)])];
        }
        if (block_count[static_cast<std::size_t>(v)] >= 1) ++block_cuts[static_cast<std::size_t>(blk)];
        ++block_count[static_cast<std::size_t>(v)];
        if (home_block[static_cast<std::size_t>(v)] < 0) home_block[static_cast<std::size_t>(v)] = blk;
        for (int w : verts) {
            if (w == v) continue;
            block_count[static_cast<std::size_t>(w)] = 1;
            home_block[static_cast<std::size_t>(w)] = blk;
        }
    }

    ModelInstance inst;
    inst.kind = ModelKind::SmallBlock;
    inst.graph = std::move(g);
    inst.seed = seed;
    inst.params.b = max_block;
    inst.params.d = max_bc_degree;
    build_edgewise_precision(inst, rng, materialize_cap);

    auto stats = block_cut_stats(inst.graph);
    if (stats.max_block_size > max_block || stats.max_bc_degree > max_bc_degree)
        throw std::runtime_error("small-block model: generated instance violates (b, d)");
    return inst;
}

ModelInstance gen_partial_ktree_model(int n, int treewidth, int max_degree,
                                      double edge_keep_prob, std::uint64_t seed,
                                      int materialize_cap) {
    const int k = treewidth;
    if (k < 1) throw std::invalid_argument("partial k-tree model: k >= 1 required");
    if (n < k + 1) throw std::invalid_argument("partial k-tree model: n >= k+1 required");
    if (max_degree < k)
        throw std::runtime_error("partial k-tree model: degree bound below k is infeasible");

    for (int attempt = 0; attempt < 20; ++attempt) {
        Rng rng(hash_combine(hash_label(seed, "ktree-model"), static_cast<std::uint64_t>(attempt)));
        Graph g(n);
        std::vector<int> deg(static_cast<std::size_t>(n), 0);
        std::vector<std::vector<int>> cliques;   // k-cliques, each sorted
        std::vector<int> clique_home;            // bag index that owns the clique
        std::vector<std::vector<int>> bags;
        std::vector<int> bag_parent;

        std::vector<int> base;
        for (int v = 0; v <= k; ++v) base.push_back(v);
        for (int a = 0; a <= k; ++a)
            for (int b2 = a + 1; b2 <= k; ++b2) {
                g.add_edge(a, b2);
                ++deg[static_cast<std::size_t>(a)];
                ++deg[static_cast<std::size_t>(b2)];
            }
        bags.push_back(base);
        bag_parent.push_back(-1);
        for (int drop = 0; drop <= k; ++drop) {
            std::vector<int> q;
            for (int v = 0; v <= k; ++v)
                if (v != drop) q.push_back(v);
            cliques.push_back(std::move(q));
            clique_home.push_back(0);
        }

        bool stuck = false;
        for (int v = k + 1; v < n; ++v) {
            std::vector<int> eligible;
            for (int ci = 0; ci < static_cast<int>(cliques.size()); ++ci) {
                bool ok = true;
                for (int u : cliques[static_cast<std::size_t>(ci)])
                    if (deg[static_cast<std::size_t>(u)] >= max_degree) {
                        ok = false;
                        break;
                    }
                if (ok) eligible.push_back(ci);
            }
            if (eligible.empty()) {
                stuck = true;
                break;
            }
            const int ci = eligible[rng.next_below(eligible.size())];
            const auto q = cliques[static_cast<std::size_t>(ci)];
            for (int u : q) {
                g.add_edge(u, v);
                ++deg[static_cast<std::size_t>(u)];
                ++deg[static_cast<std::size_t>(v)];
            }
            std::vector<int> bag = q;
            bag.push_back(v);
            std::sort(bag.begin(), bag.end());
            const int bag_idx = static_cast<int>(bags.size());
            bags.push_back(bag);
            bag_parent.push_back(clique_home[static_cast<std::size_t>(ci)]);
            for (std::size_t drop = 0; drop < q.size(); ++drop) {
                std::vector<int> nq;
                for (std::size_t t = 0; t < q.size(); ++t)
                    if (t != drop) nq.push_back(q[t]);
                nq.push_back(v);
                std::sort(nq.begin(), nq.end());
                cliques.push_back(std::move(nq));
                clique_home.push_back(bag_idx);
            }
        }
        if (stuck) continue;

        // random deletions that keep the graph connected
        if (edge_keep_prob < 1.0) {
            auto edge_list = g.edges();
            rng.shuffle(edge_list);
            std::vector<std::set<int>> adj(static_cast<std::size_t>(n));
            for (auto [u, w] : edge_list) {
                adj[static_cast<std::size_t>(u)].insert(w);
                adj[static_cast<std::size_t>(w)].insert(u);
            }
            auto connected_without = [&](int cu, int cv) {
                std::vector<char> seen(static_cast<std::size_t>(n), 0);
                std::vector<int> stack{cu};
                seen[static_cast<std::size_t>(cu)] = 1;
                while (!stack.empty()) {
                    int x = stack.back();
                    stack.pop_back();
                    if (x == cv) return true;
                    for (int y : adj[static_cast<std::size_t>(x)]) {
                        if ((x == cu && y == cv) || (x == cv && y == cu)) continue;
                        if (!seen[static_cast<std::size_t>(y)]) {
                            seen[static_cast<std::size_t>(y)] = 1;
                            stack.push_back(y);
                        }
                    }
                }
                return false;
            };
            for (auto [u, w] : edge_list) {
                if (rng.next_double() < edge_keep_prob) continue;
                if (!connected_without(u, w)) continue;
                adj[static_cast<std::size_t>(u)].erase(w);
                adj[static_cast<std::size_t>(w)].erase(u);
            }
            Graph pruned(n);
            for (int u = 0; u < n; ++u)
                for (int w : adj[static_cast<std::size_t>(u)])
                    if (u < w) pruned.add_edge(u, w);
            g = std::move(pruned);
        }

        ModelInstance inst;
        inst.kind = ModelKind::PartialKTree;
        inst.graph = std::move(g);
        inst.seed = seed;
        inst.params.k = k;
        inst.params.d = max_degree;
        inst.params.edge_keep_prob = edge_keep_prob;
        inst.tw_bags = std::move(bags);
        inst.tw_bag_parent = std::move(bag_parent);
        build_edgewise_precision(inst, rng, materialize_cap);
        return inst;
    }
    throw std::runtime_error("partial k-tree model: degree budget infeasible after retries");
}

std::pair<ModelInstance, ModelInstance> gen_adversarial_star(int n, std::uint64_t seed) {
    if (n < 4) throw std::invalid_argument("adversarial star: n >= 4 required");
    Rng rng(hash_label(seed, "adversarial-star"));

    std::vector<double> u(static_cast<std::size_t>(n), 0.0);
    for (int i = 1; i < n; ++i) {
        double x;
        do {
            x = rng.next_double();
        } while (x < 1e-3 || x > 1.0 - 1e-3);
        u[static_cast<std::size_t>(i)] = x;
    }
    int idx_i = 0, idx_j = 0;
    do {
        idx_i = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - 1)));
        idx_j = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - 1)));
    } while (idx_i == idx_j ||
             std::fabs(u[static_cast<std::size_t>(idx_i)] - u[static_cast<std::size_t>(idx_j)]) < 1e-3);

    auto make = [&](int bernoulli) {
        ModelInstance inst;
        inst.kind = ModelKind::AdversarialStar;
        inst.seed = seed;
        Graph g(n);
        std::vector<std::pair<std::pair<int, int>, double>> weighted;
        const int mid = u[static_cast<std::size_t>(idx_i)] < u[static_cast<std::size_t>(idx_j)]
                            ? idx_j
                            : idx_i;
        const int leaf = mid == idx_j ? idx_i : idx_j;
        for (int i = 1; i < n; ++i) {
            if (bernoulli == 1 && i == leaf) continue;
            g.add_edge(0, i);
            weighted.push_back({{0, i}, u[static_cast<std::size_t>(i)]});
        }
        if (bernoulli == 1) {
            g.add_edge(mid, leaf);
            double lo = std::min(u[static_cast<std::size_t>(idx_i)], u[static_cast<std::size_t>(idx_j)]);
            double hi = std::max(u[static_cast<std::size_t>(idx_i)], u[static_cast<std::size_t>(idx_j)]);
            weighted.push_back({{std::min(mid, leaf), std::max(mid, leaf)}, lo / hi});
        }
        std::sort(weighted.begin(), weighted.end());
        inst.graph = std::move(g);
        for (auto& [e, r] : weighted) inst.edge_rho.push_back(r);
        inst.true_precision = tree_precision_triplets(inst.graph, inst.edge_rho);
        AdversarialStarSpec spec;
        spec.bernoulli_b = bernoulli;
        spec.i_idx = idx_i;
        spec.j_idx = idx_j;
        spec.u = u;
        inst.star = spec;
        return inst;
    };
    return {make(0), make(1)};
}

ModelInstance gen_adversarial_dary(int d, int h, const std::vector<DaryMove>& moves,
                                   std::uint64_t seed) {
    if (d < 2 || h < 1) throw std::invalid_argument("adversarial d-ary: d >= 2, h >= 1 required");
    long long n_ll = 0, power = 1;
    for (int l = 0; l <= h; ++l) {
        n_ll += power;
        power *= d;
    }
    if (n_ll > 2'000'000) throw std::invalid_argument("adversarial d-ary: size budget exceeded");
    const int n = static_cast<int>(n_ll);

    // heap-style ids: children of x are x*d + 1 .. x*d + d
    Graph g(n);
    for (int x = 0; x < n; ++x)
        for (int c = 1; c <= d; ++c) {
            long long child = static_cast<long long>(x) * d + c;
            if (child < n) g.add_edge(x, static_cast<int>(child));
        }

    // bottom-level branches are rooted at the level h-1 vertices
    int first_branch = 0;
    for (int l = 0; l < h - 1; ++l) first_branch = first_branch * d + 1;
    const int branch_count = static_cast<int>(std::llround(std::pow(d, h - 1)));

    std::set<int> branches_moved;
    Graph moved = g;
    for (const auto& mv : moves) {
        if (mv.branch < 0 || mv.branch >= branch_count)
            throw std::invalid_argument("adversarial d-ary: branch index out of range");
        if (mv.leaf_from == mv.leaf_to || mv.leaf_from < 0 || mv.leaf_to < 0 ||
            mv.leaf_from >= d || mv.leaf_to >= d)
            throw std::invalid_argument("adversarial d-ary: bad leaf slots");
        if (!branches_moved.insert(mv.branch).second)
            throw std::invalid_argument("adversarial d-ary: at most one move per branch");
    }
    if (!moves.empty()) {
        // rebuild with the moved edges
        Graph g2(n);
        std::set<std::pair<int, int>> removed, added;
        for (const auto& mv : moves) {
            int p = first_branch + mv.branch;
            int from = p * d + 1 + mv.leaf_from;
            int to = p * d + 1 + mv.leaf_to;
            removed.insert({std::min(p, from), std::max(p, from)});
            added.insert({std::min(to, from), std::max(to, from)});
        }
        for (auto [u, v] : g.edges())
            if (!removed.count({u, v})) g2.add_edge(u, v);
        for (auto [u, v] : added) g2.add_edge(u, v);
        moved = std::move(g2);
    }

    ModelInstance inst;
    inst.kind = ModelKind::AdversarialDary;
    inst.graph = std::move(moved);
    inst.seed = seed;
    inst.params.d = d;
    inst.params.h = h;
    Rng rng(hash_label(seed, "adversarial-dary"));
    inst.edge_rho = random_edge_rho(inst.graph.edges().size(), 0.3, 0.8, rng);
    inst.true_precision = tree_precision_triplets(inst.graph, inst.edge_rho);
    return inst;
}

// ---------------------------------------------------------------------------
// bundle I/O

void save_precision_triplets(const std::vector<std::tuple<int, int, double>>& triplets,
                             int n, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    out << n << ' ' << triplets.size() << '\n';
    for (auto [i, j, v] : triplets) out << i << ' ' << j << ' ' << v << '\n';
}

std::pair<int, std::vector<std::tuple<int, int, double>>> load_precision_triplets(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    int n = 0;
    std::size_t nnz = 0;
    if (!(in >> n >> nnz)) throw std::runtime_error("bad precision header in " + path);
    std::vector<std::tuple<int, int, double>> trip(nnz);
    for (auto& [i, j, v] : trip)
        if (!(in >> i >> j >> v)) throw std::runtime_error("truncated triplets in " + path);
    return {n, trip};
}

void save_bundle(const ModelInstance& inst, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_graph_file(inst.graph, dir + "/graph.txt");
    save_precision_triplets(inst.true_precision, inst.n(), dir + "/precision.txt");

    json j;
    j["schema"] = "covquery-model-v1";
    j["kind"] = model_kind_name(inst.kind);
    j["n"] = inst.n();
    j["seed"] = inst.seed;
    j["params"] = {{"d", inst.params.d},
                   {"b", inst.params.b},
                   {"k", inst.params.k},
                   {"h", inst.params.h},
                   {"corr_lo", inst.params.corr_lo},
                   {"corr_hi", inst.params.corr_hi},
                   {"edge_keep_prob", inst.params.edge_keep_prob},
                   {"diameter_cap", inst.params.diameter_cap}};
    if (inst.tree_backed()) {
        j["type"] = "tree";
        json edges = json::array();
        auto edge_list = inst.graph.edges();
        for (std::size_t e = 0; e < edge_list.size(); ++e)
            edges.push_back({edge_list[e].first, edge_list[e].second, inst.edge_rho[e]});
        j["edges"] = edges;
    }
    if (inst.star) {
        j["star"] = {{"b", inst.star->bernoulli_b},
                     {"i", inst.star->i_idx},
                     {"j", inst.star->j_idx},
                     {"u", inst.star->u}};
    }
    if (!inst.tw_bags.empty()) {
        j["tw_bags"] = inst.tw_bags;
        j["tw_bag_parent"] = inst.tw_bag_parent;
    }
    std::ofstream out(dir + "/model.json");
    if (!out) throw std::runtime_error("cannot write model.json in " + dir);
    out << j.dump(2) << '\n';

    if (!inst.sigma_dense.empty()) save_covq(dir + "/sigma.covq", inst.n(), inst.sigma_dense);
}

ModelInstance load_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(dir + "/model.json");
    if (!in) throw std::runtime_error("cannot open model.json in " + dir);
    json j;
    in >> j;

    ModelInstance inst;
    inst.kind = model_kind_from_name(j.at("kind").get<std::string>());
    inst.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    inst.params.d = p.at("d").get<int>();
    inst.params.b = p.at("b").get<int>();
    inst.params.k = p.at("k").get<int>();
    inst.params.h = p.at("h").get<int>();
    inst.params.corr_lo = p.at("corr_lo").get<double>();
    inst.params.corr_hi = p.at("corr_hi").get<double>();
    inst.params.edge_keep_prob = p.at("edge_keep_prob").get<double>();
    inst.params.diameter_cap = p.at("diameter_cap").get<int>();

    inst.graph = load_graph_file(dir + "/graph.txt");
    auto [pn, trip] = load_precision_triplets(dir + "/precision.txt");
    if (pn != inst.graph.size()) throw std::runtime_error("bundle size mismatch in " + dir);
    inst.true_precision = std::move(trip);

    if (j.contains("edges")) {
        auto edge_list = inst.graph.edges();
        std::map<std::pair<int, int>, double> rho;
        for (const auto& e : j.at("edges"))
            rho[{e.at(0).get<int>(), e.at(1).get<int>()}] = e.at(2).get<double>();
        for (auto [u, v] : edge_list) inst.edge_rho.push_back(rho.at({u, v}));
    }
    if (j.contains("star")) {
        AdversarialStarSpec spec;
        spec.bernoulli_b = j["star"].at("b").get<int>();
        spec.i_idx = j["star"].at("i").get<int>();
        spec.j_idx = j["star"].at("j").get<int>();
        spec.u = j["star"].at("u").get<std::vector<double>>();
        inst.star = spec;
    }
    if (j.contains("tw_bags")) {
        inst.tw_bags = j.at("tw_bags").get<std::vector<std::vector<int>>>();
        inst.tw_bag_parent = j.at("tw_bag_parent").get<std::vector<int>>();
    }
    if (fs::exists(dir + "/sigma.covq")) {
        auto oracle = load_covq(dir + "/sigma.covq");
        inst.sigma_dense = oracle->data();
    }
    return inst;
}

}  // namespace covq
