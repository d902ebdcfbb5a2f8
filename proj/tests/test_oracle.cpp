#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "covq/models.hpp"
#include "covq/oracle.hpp"
#include "covq/rng.hpp"
#include "support/test_util.hpp"

using namespace covq;
using namespace covq::testutil;

TEST_CASE("dense oracle answers entries and validates input") {
    FourCycle fc;
    auto oracle = fc.oracle();
    // paper labels (1,2) -> 0-based (0,1)
    CHECK(oracle->query(0, 1) == -2.0);
    CHECK(oracle->query(1, 0) == -2.0);
    CHECK(oracle->query(2, 2) == 7.0);
    CHECK_THROWS(oracle->query(0, 4));
    CHECK_THROWS(DenseOracle(2, {1.0, 0.5, 0.4, 1.0}));  // asymmetric
}

TEST_CASE("tree oracle: path products, diagonal, batch") {
    Graph p3 = make_path(3);
    TreeOracle t(p3, {0.5, 0.4});
    CHECK(t.query(0, 1) == doctest::Approx(0.5));
    CHECK(t.query(0, 2) == doctest::Approx(0.2));
    CHECK(t.query(1, 1) == 1.0);

    const int is[4] = {0, 0, 1, 2};
    const int js[4] = {1, 2, 1, 0};
    double out[4];
    t.query_batch(is, js, out, 4);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.2));
    CHECK(out[2] == 1.0);
    CHECK(out[3] == doctest::Approx(0.2));

    CHECK_THROWS(TreeOracle(p3, {0.5}));             // wrong count
    CHECK_THROWS(TreeOracle(p3, {0.5, 1.0}));        // |rho| not in (0,1)
    CHECK_THROWS(TreeOracle(make_cycle(3), {0.5, 0.4, 0.3}));
}

TEST_CASE("tree oracle agrees with the materialized product-formula matrix") {
    Rng rng(404);
    for (int trial = 0; trial < 6; ++trial) {
        int n = 2 + static_cast<int>(rng.next_below(199));
        auto inst = gen_tree_model(n, 2 + static_cast<int>(rng.next_below(6)), 0.2, 0.9,
                                   rng.next_u64());
        TreeOracle t(inst.graph, inst.edge_rho);
        auto sigma = inst.materialize_sigma();
        DenseOracle dense(n, sigma);
        int errors = 0;
        for (int i = 0; i < n && errors < 5; ++i)
            for (int j = i; j < n; ++j)
                if (std::fabs(t.query(i, j) - dense.query(i, j)) > 1e-12) ++errors;
        CHECK(errors == 0);
        // reverse direction: support(Sigma^{-1}) equals the tree's edges
        if (n <= 60) {
            DenseMatrix sig(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    sig.at(i, j) = sigma[static_cast<std::size_t>(i) * n + j];
            DenseMatrix k = invert(sig);
            double max_diag = 0.0;
            for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, k.at(i, i));
            std::vector<std::pair<int, int>> support;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (std::fabs(k.at(i, j)) > 1e-8 * max_diag) support.emplace_back(i, j);
            CHECK(support == inst.graph.edges());
        }
    }
}

TEST_CASE("deep paths stay finite in log space") {
    const int n = 2000;
    Graph p = make_path(n);
    std::vector<double> rho(static_cast<std::size_t>(n - 1), 0.5);
    TreeOracle t(p, rho);
    CHECK(t.query(0, 40) == doctest::Approx(std::pow(0.5, 40)).epsilon(1e-12));
    auto [lm, sgn] = t.query_log(0, n - 1);
    CHECK(lm == doctest::Approx((n - 1) * std::log(0.5)).epsilon(1e-12));
    CHECK(sgn == 1);
}

TEST_CASE("noisy wrapper: bounded, consistent, diagonal exact") {
    Graph p = make_path(50);
    Rng rng(7);
    std::vector<double> rho;
    for (int i = 0; i < 49; ++i) rho.push_back(rng.uniform(0.3, 0.9));
    auto base = std::make_shared<TreeOracle>(p, rho);
    NoiseModel nm;
    nm.epsilon = 0.01;
    nm.delta_edge = 0.3;
    nm.gamma_edge = 0.9;
    nm.diameter = 49;
    NoisyOracle noisy(base, nm, 99);
    for (int trial = 0; trial < 500; ++trial) {
        int i = static_cast<int>(rng.next_below(50));
        int j = static_cast<int>(rng.next_below(50));
        double v = noisy.query(i, j);
        if (i == j) {
            CHECK(v == 1.0);
            continue;
        }
        CHECK(std::fabs(v - base->query(i, j)) < nm.epsilon);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        CHECK(noisy.query(i, j) == v);  // frozen noise
        CHECK(noisy.query(j, i) == v);
    }
    NoiseModel zero = nm;
    zero.epsilon = 0.0;
    NoisyOracle clean(base, zero, 99);
    CHECK(clean.query(3, 17) == base->query(3, 17));
}

TEST_CASE("noise model validity bound") {
    NoiseModel nm;
    nm.delta_edge = 0.7;
    nm.gamma_edge = 0.8;
    nm.diameter = 8;
    const double bound = 0.125 * std::pow(0.7, 8) * (1 - 0.64);
    CHECK(nm.epsilon_validity_bound() == doctest::Approx(bound));
    nm.epsilon = bound * 0.99;
    CHECK(nm.valid());
    nm.epsilon = bound * 1.01;
    CHECK_FALSE(nm.valid());
}

TEST_CASE("sampled oracle: conventions, caching, determinism") {
    Graph p = make_path(6);
    std::vector<double> rho(5, 0.6);
    SampledOracleConfig cfg;
    cfg.samples_per_pair = 4096;
    cfg.blocks = 16;
    SampledOracle s(p, rho, cfg, 12345);
    CHECK(s.query(2, 2) == 1.0);
    double v = s.query(0, 1);
    CHECK(std::fabs(v - 0.6) < 0.1);
    CHECK(s.query(0, 1) == v);
    CHECK(s.query(1, 0) == v);

    SampledOracle s2(p, rho, cfg, 12345);
    CHECK(s2.query(0, 1) == v);  // same seed, same estimate
}

TEST_CASE("sampled oracle: law of large numbers at N = 1e6") {
    Graph p = make_path(3);
    std::vector<double> rho{0.5, 0.4};
    SampledOracleConfig cfg;
    cfg.samples_per_pair = 1000000;
    cfg.blocks = 20;
    SampledOracle s(p, rho, cfg, 777);
    CHECK(std::fabs(s.query(0, 2) - 0.2) < 1e-2);
}

TEST_CASE("literal and chi-square block means sample the same law") {
    // both paths must match the exact block-mean moments: mean rho and
    // variance (1+rho^2)/m, well inside Monte-Carlo error
    const double rho = 0.35;
    const std::uint64_t m = 64;
    const int reps = 20000;
    Graph p = make_path(2);
    SampledOracleConfig cfg;
    cfg.samples_per_pair = 128;
    cfg.blocks = 2;
    SampledOracle s(p, {0.5}, cfg, 1);

    Rng rng_a(101), rng_b(202);
    double mean_a = 0, mean_b = 0, var_a = 0, var_b = 0;
    for (int t = 0; t < reps; ++t) {
        double a = s.block_mean_literal(rho, m, rng_a);
        double b = s.block_mean_fast(rho, m, rng_b);
        mean_a += a;
        mean_b += b;
        var_a += (a - rho) * (a - rho);
        var_b += (b - rho) * (b - rho);
    }
    mean_a /= reps;
    mean_b /= reps;
    var_a /= reps;
    var_b /= reps;
    const double exact_var = (1.0 + rho * rho) / static_cast<double>(m);
    const double se = std::sqrt(exact_var / reps);
    CHECK(std::fabs(mean_a - rho) < 5 * se);
    CHECK(std::fabs(mean_b - rho) < 5 * se);
    CHECK(std::fabs(var_a - exact_var) < 0.1 * exact_var);
    CHECK(std::fabs(var_b - exact_var) < 0.1 * exact_var);
}

TEST_CASE("sampled oracle guarantee configuration") {
    auto cfg = SampledOracleConfig::with_guarantee(200, 2.59e-3, 0.05);
    const double lg = std::log(200.0 / 0.05);
    CHECK(cfg.samples_per_pair >=
          static_cast<std::uint64_t>(32.0 * std::pow(3.0 / 2.59e-3, 2) * lg));
    CHECK(cfg.blocks == static_cast<int>(std::ceil(8.0 * lg)));
}

TEST_CASE("counting wrapper") {
    FourCycle fc;
    CountingOracle counting(fc.oracle());
    auto s0 = counting.stats();
    CHECK(s0.raw_queries == 0);
    CHECK(s0.distinct_queries == 0);

    counting.query(0, 1);
    counting.query(1, 0);  // same unordered pair
    auto s1 = counting.stats();
    CHECK(s1.raw_queries == 2);
    CHECK(s1.distinct_queries == 1);
    CHECK(counting.query(0, 1) == -2.0);  // values pass through

    const int is[3] = {0, 1, 2};
    const int js[3] = {1, 2, 3};
    double out[3];
    counting.query_batch(is, js, out, 3);
    auto s2 = counting.stats();
    CHECK(s2.raw_queries == 6);
    CHECK(s2.distinct_queries == 3);
    CHECK(s2.distinct_queries <= s2.raw_queries);

    counting.reset_stats();
    CHECK(counting.stats().raw_queries == 0);
}

TEST_CASE("COVQ1 round trip") {
    FourCycle fc;
    std::string path = "/tmp/covq_test_sigma.covq";
    std::vector<double> data(fc.sigma.data(), fc.sigma.data() + 16);
    save_covq(path, 4, data);
    auto loaded = load_covq(path);
    CHECK(loaded->dim() == 4);
    CHECK(loaded->query(0, 1) == -2.0);
    std::filesystem::remove(path);

    std::ofstream bad("/tmp/covq_bad.covq", std::ios::binary);
    bad << "NOPE!";
    bad.close();
    CHECK_THROWS(load_covq("/tmp/covq_bad.covq"));
    std::filesystem::remove("/tmp/covq_bad.covq");
}
