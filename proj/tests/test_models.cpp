#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "covq/dense.hpp"
#include "covq/models.hpp"
#include "covq/rng.hpp"
#include "support/test_util.hpp"

using namespace covq;
using namespace covq::testutil;

namespace {

// independent support check: invert the materialized covariance and compare
// against the instance's graph, with the genericity-gap margins
void check_support_gap(const ModelInstance& inst) {
    const int n = inst.n();
    auto sigma_flat = inst.materialize_sigma();
    DenseMatrix sigma(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            sigma.at(i, j) = sigma_flat[static_cast<std::size_t>(i) * n + j];
    DenseMatrix k = invert(sigma);
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(k.at(i, i)));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double rel = std::fabs(k.at(i, j)) / max_diag;
            if (inst.graph.has_edge(i, j)) {
                CHECK(rel > 1e-4);
            } else {
                CHECK(rel < 1e-9);
            }
        }
}

}  // namespace

TEST_CASE("tree model: shape, correlations, precision formula") {
    auto inst = gen_tree_model(2, 3, 0.2, 0.9, 5);
    CHECK(inst.graph.edge_count() == 1);
    const double rho = inst.edge_rho[0];
    // K = 1/(1-rho^2) [[1, -rho], [-rho, 1]]
    for (auto [i, j, v] : inst.true_precision) {
        if (i == j) CHECK(v == doctest::Approx(1.0 / (1 - rho * rho)));
        else CHECK(v == doctest::Approx(-rho / (1 - rho * rho)));
    }

    Rng rng(21);
    for (int trial = 0; trial < 8; ++trial) {
        int n = 5 + static_cast<int>(rng.next_below(120));
        int d = 2 + static_cast<int>(rng.next_below(5));
        auto t = gen_tree_model(n, d, 0.2, 0.9, rng.next_u64());
        CHECK(is_tree(t.graph));
        CHECK(t.graph.max_degree() <= d);
        for (double r : t.edge_rho) {
            CHECK(std::fabs(r) >= 0.2);
            CHECK(std::fabs(r) <= 0.9);
        }
        if (n <= 60) check_support_gap(t);
    }

    // d = 2 forces a path
    auto path = gen_tree_model(9, 2, 0.3, 0.8, 3);
    CHECK(path.graph.max_degree() == 2);

    // diameter cap
    auto capped = gen_tree_model(60, 16, 0.5, 0.9, 11, 8);
    int far = 0;
    {
        std::vector<int> dist(60, -1), q{0};
        dist[0] = 0;
        for (std::size_t h = 0; h < q.size(); ++h)
            for (int v : capped.graph.neighbors(q[h]))
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(q[h])] + 1;
                    q.push_back(v);
                }
        std::vector<int> d2(60, -1);
        int a = 0;
        for (int v = 0; v < 60; ++v)
            if (dist[static_cast<std::size_t>(v)] > dist[static_cast<std::size_t>(a)]) a = v;
        std::vector<int> q2{a};
        d2[static_cast<std::size_t>(a)] = 0;
        for (std::size_t h = 0; h < q2.size(); ++h)
            for (int v : capped.graph.neighbors(q2[h]))
                if (d2[static_cast<std::size_t>(v)] < 0) {
                    d2[static_cast<std::size_t>(v)] = d2[static_cast<std::size_t>(q2[h])] + 1;
                    q2.push_back(v);
                }
        for (int v = 0; v < 60; ++v) far = std::max(far, d2[static_cast<std::size_t>(v)]);
    }
    CHECK(far <= 8);

    CHECK_THROWS(gen_tree_model(1, 3, 0.2, 0.9, 0));
    CHECK_THROWS(gen_tree_model(10, 3, 0.0, 0.9, 0));
}

TEST_CASE("tree model satisfies the product formula everywhere") {
    Rng rng(77);
    auto inst = gen_tree_model(80, 4, 0.2, 0.9, rng.next_u64());
    TreeOracle oracle(inst.graph, inst.edge_rho);
    auto sigma = inst.materialize_sigma();
    // full check n <= 100 per contract
    for (int i = 0; i < 80; ++i)
        for (int j = 0; j < 80; ++j)
            CHECK(sigma[static_cast<std::size_t>(i) * 80 + j] ==
                  doctest::Approx(oracle.query(i, j)).epsilon(1e-12));
}

TEST_CASE("small-block model respects (b, d) and has exact support") {
    Rng rng(31);
    for (int trial = 0; trial < 6; ++trial) {
        int n = 30 + static_cast<int>(rng.next_below(270));
        auto inst = gen_small_block_model(n, 6, 4, rng.next_u64());
        auto stats = block_cut_stats(inst.graph);
        CHECK(stats.max_block_size <= 6);
        CHECK(stats.max_bc_degree <= 4);
        CHECK(inst.graph.is_connected());
        if (n <= 80) check_support_gap(inst);
    }
    // b = 2 reduces to a tree
    auto treeish = gen_small_block_model(40, 2, 3, 9);
    CHECK(is_tree(treeish.graph));
}

TEST_CASE("partial k-tree model: certificate, degree cap, support") {
    Rng rng(47);
    for (int k : {1, 2, 3}) {
        auto inst = gen_partial_ktree_model(60, k, 8, 0.85, rng.next_u64());
        CHECK(inst.graph.is_connected());
        CHECK(inst.graph.max_degree() <= 8);
        // certificate: bags of size k+1 covering every edge, tree-structured
        int width = 0;
        for (const auto& bag : inst.tw_bags) width = std::max(width, (int)bag.size() - 1);
        CHECK(width == k);
        for (auto [u, v] : inst.graph.edges()) {
            bool covered = false;
            for (const auto& bag : inst.tw_bags)
                if (std::binary_search(bag.begin(), bag.end(), u) &&
                    std::binary_search(bag.begin(), bag.end(), v)) {
                    covered = true;
                    break;
                }
            CHECK(covered);
        }
        check_support_gap(inst);
    }
    // k = 1, keep everything: a tree
    auto t = gen_partial_ktree_model(30, 1, 6, 1.0, 5);
    CHECK(is_tree(t.graph));
    // k = 2 on 4 vertices keeping all edges: the full 2-tree
    auto small = gen_partial_ktree_model(4, 2, 5, 1.0, 5);
    CHECK(small.graph.edge_count() == 5);  // 2-tree on 4 vertices
    CHECK_THROWS(gen_partial_ktree_model(10, 3, 2, 1.0, 5));  // d < k infeasible
}

TEST_CASE("adversarial star twins") {
    Rng rng(63);
    for (int trial = 0; trial < 5; ++trial) {
        int n = 6 + static_cast<int>(rng.next_below(60));
        auto [b0, b1] = gen_adversarial_star(n, rng.next_u64());
        REQUIRE(b0.star.has_value());
        const int I = b0.star->i_idx, J = b0.star->j_idx;

        // b0 is the star centered at 0
        CHECK(b0.graph == make_star(n));
        // b1: 0-I replaced by the mid-leaf edge
        const auto& u = b0.star->u;
        const int mid = u[static_cast<std::size_t>(I)] < u[static_cast<std::size_t>(J)] ? J : I;
        const int leaf = mid == J ? I : J;
        CHECK_FALSE(b1.graph.has_edge(0, leaf));
        CHECK(b1.graph.has_edge(mid, leaf));
        CHECK(b1.graph.edge_count() == n - 1);

        // oracles agree everywhere except (I,J)
        TreeOracle o0(b0.graph, b0.edge_rho);
        TreeOracle o1(b1.graph, b1.edge_rho);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double v0 = o0.query(i, j), v1 = o1.query(i, j);
                if ((i == std::min(I, J) && j == std::max(I, J))) {
                    CHECK(std::fabs(v0 - v1) > 1e-9);
                    CHECK(v1 == doctest::Approx(std::min(u[static_cast<std::size_t>(I)],
                                                         u[static_cast<std::size_t>(J)]) /
                                                std::max(u[static_cast<std::size_t>(I)],
                                                         u[static_cast<std::size_t>(J)])));
                } else {
                    CHECK(v0 == doctest::Approx(v1).epsilon(1e-12));
                }
            }
        // star covariances: sigma_{0i} = U_i, sigma_{ij} = U_i U_j
        for (int i = 1; i < n; ++i)
            CHECK(o0.query(0, i) == doctest::Approx(u[static_cast<std::size_t>(i)]));
    }
}

TEST_CASE("adversarial d-ary family") {
    // no moves: the complete ternary tree of height 2
    auto complete = gen_adversarial_dary(3, 2, {}, 1);
    CHECK(complete.graph == make_complete_dary(3, 2));
    CHECK(complete.graph.max_degree() == 4);  // internal vertex: parent + 3 children

    // one move: a single leaf re-attached one level down
    auto one = gen_adversarial_dary(3, 2, {{0, 0, 1}}, 1);
    CHECK(one.graph.edge_count() == 12);
    std::vector<int> depth_count(5, 0);
    {
        std::vector<int> dist(13, -1), q{0};
        dist[0] = 0;
        for (std::size_t h = 0; h < q.size(); ++h)
            for (int v : one.graph.neighbors(q[h]))
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(q[h])] + 1;
                    q.push_back(v);
                }
        for (int v = 0; v < 13; ++v) ++depth_count[static_cast<std::size_t>(dist[static_cast<std::size_t>(v)])];
    }
    CHECK(depth_count[3] == 1);  // exactly one leaf pushed to depth 3
    CHECK(one.graph.max_degree() <= 4);

    // moves in two branches
    auto two = gen_adversarial_dary(3, 2, {{0, 0, 1}, {2, 2, 0}}, 1);
    CHECK(two.graph.max_degree() <= 4);
    CHECK(is_tree(two.graph));

    CHECK_THROWS(gen_adversarial_dary(3, 2, {{0, 0, 0}}, 1));
    CHECK_THROWS(gen_adversarial_dary(3, 2, {{0, 0, 1}, {0, 1, 2}}, 1));
    CHECK_THROWS(gen_adversarial_dary(3, 2, {{9, 0, 1}}, 1));
}

TEST_CASE("bundle round trip") {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/covq_bundle_test";
    fs::remove_all(dir);

    auto inst = gen_partial_ktree_model(30, 2, 8, 0.9, 77);
    save_bundle(inst, dir);
    CHECK(fs::exists(dir + "/graph.txt"));
    CHECK(fs::exists(dir + "/model.json"));
    CHECK(fs::exists(dir + "/precision.txt"));
    CHECK(fs::exists(dir + "/sigma.covq"));

    auto loaded = load_bundle(dir);
    CHECK(loaded.graph == inst.graph);
    CHECK(loaded.kind == inst.kind);
    CHECK(loaded.seed == inst.seed);
    CHECK(loaded.true_precision == inst.true_precision);
    CHECK(loaded.sigma_dense == inst.sigma_dense);
    CHECK(loaded.tw_bags == inst.tw_bags);

    auto tree = gen_tree_model(40, 5, 0.2, 0.9, 12);
    save_bundle(tree, dir + "-tree");
    auto tl = load_bundle(dir + "-tree");
    CHECK(tl.edge_rho == tree.edge_rho);
    CHECK(tl.tree_backed());

    fs::remove_all(dir);
    fs::remove_all(dir + "-tree");
}
