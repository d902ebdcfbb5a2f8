#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "covq/block_recovery.hpp"
#include "covq/models.hpp"
#include "support/test_util.hpp"

using namespace covq;
using namespace covq::testutil;

TEST_CASE("componentsSB keeps the splitter in every part") {
    // tree input: same partition as componentsTree but with w re-included
    Graph p5 = make_path(5);
    TreeOracle o(p5, {0.8, 0.7, 0.6, 0.5});
    ExactPredicates pred(o);
    auto parts = components_sb({0, 1, 2, 3, 4}, 2, pred);
    REQUIRE(parts.size() == 2);
    std::set<std::set<int>> got;
    for (auto& p : parts) got.insert(std::set<int>(p.begin(), p.end()));
    CHECK(got == std::set<std::set<int>>{{0, 1, 2}, {2, 3, 4}});

    // a non-cut vertex leaves everything in one part
    auto single = components_sb({0, 1, 2, 3, 4}, 0, pred);
    CHECK(single.size() == 1);
    CHECK(single[0].size() == 5);
}

TEST_CASE("componentsSB splits two cycles sharing a cut vertex") {
    // 7 vertices: cycle {0..3} and cycle {3..6} glued at 3
    Graph g(7);
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    g.add_edge(2, 3);
    g.add_edge(3, 0);
    g.add_edge(3, 4);
    g.add_edge(4, 5);
    g.add_edge(5, 6);
    g.add_edge(6, 3);
    // edge-wise diagonally dominant K
    ModelInstance inst;
    inst.kind = ModelKind::SmallBlock;
    inst.graph = g;
    {
        DenseMatrix k(7, 7);
        std::vector<double> diag(7, 1.0);
        Rng rng(8);
        for (auto [u, v] : g.edges()) {
            double w = rng.uniform(0.3, 0.9);
            k.at(u, v) = k.at(v, u) = w;
            diag[static_cast<std::size_t>(u)] += w;
            diag[static_cast<std::size_t>(v)] += w;
        }
        for (int i = 0; i < 7; ++i) k.at(i, i) = diag[static_cast<std::size_t>(i)];
        DenseMatrix sigma = invert(k);
        inst.sigma_dense.assign(sigma.data(), sigma.data() + 49);
    }
    auto oracle = inst.make_exact_oracle();
    ExactPredicates pred(*oracle);
    auto parts = components_sb({0, 1, 2, 3, 4, 5, 6}, 3, pred);
    REQUIRE(parts.size() == 2);
    std::set<std::set<int>> got;
    for (auto& p : parts) got.insert(std::set<int>(p.begin(), p.end()));
    CHECK(got == std::set<std::set<int>>{{0, 1, 2, 3}, {3, 4, 5, 6}});
}

TEST_CASE("reconstructSB: single block resolved by inversion") {
    FourCycle fc;
    auto oracle = fc.oracle();
    BlockRecoveryConfig cfg;
    cfg.d = 2;
    cfg.b = 4;  // n = 4 <= d*b: leaf inversion immediately
    cfg.kappa_s = 64;
    auto res = reconstruct_sb(*oracle, cfg);
    REQUIRE(res.success);
    CHECK(res.edges == fc.graph.edges());
}

TEST_CASE("reconstructSB on a pure tree equals the tree edges") {
    auto inst = gen_tree_model(80, 4, 0.2, 0.9, 51);
    CountingOracle counting(inst.make_exact_oracle());
    BlockRecoveryConfig cfg;
    cfg.d = 4;
    cfg.b = 2;
    cfg.seed = 3;
    auto res = reconstruct_sb(counting, cfg);
    REQUIRE(res.success);
    CHECK(res.edges == inst.graph.edges());
}

TEST_CASE("reconstructSB recovers small-block instances with clean leaves") {
    Rng rng(404);
    for (int trial = 0; trial < 5; ++trial) {
        int n = 60 + static_cast<int>(rng.next_below(240));
        auto inst = gen_small_block_model(n, 6, 4, rng.next_u64());
        CountingOracle counting(inst.make_exact_oracle());

        int leaf_checks = 0;
        BlockRecoveryHooks hooks;
        hooks.on_leaf = [&](const std::vector<int>& view,
                            const std::vector<std::pair<int, int>>& leaf_edges) {
            // Proposition-13 property (i): the leaf support equals the
            // induced subgraph's edges
            std::vector<std::pair<int, int>> expected;
            for (std::size_t i = 0; i < view.size(); ++i)
                for (std::size_t j = i + 1; j < view.size(); ++j)
                    if (inst.graph.has_edge(view[i], view[j]))
                        expected.emplace_back(view[i], view[j]);
            auto sorted = leaf_edges;
            std::sort(sorted.begin(), sorted.end());
            std::sort(expected.begin(), expected.end());
            CHECK(sorted == expected);
            ++leaf_checks;
        };
        BlockRecoveryConfig cfg;
        cfg.d = 4;
        cfg.b = 6;
        cfg.seed = rng.next_u64();
        cfg.hooks = &hooks;
        auto res = reconstruct_sb(counting, cfg);
        REQUIRE(res.success);
        CHECK(res.edges == inst.graph.edges());
        CHECK(leaf_checks > 0);
    }
}

TEST_CASE("theorem kappa for blocks") {
    CHECK(theorem_kappa_block(400, 4, 0.1) ==
          static_cast<int>(std::ceil(32.0 * 16 * std::log(2 * 4 * 400.0 / 0.1))));
}
