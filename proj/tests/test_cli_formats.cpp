#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "covq/models.hpp"
#include "covq/report.hpp"
#include "support/test_util.hpp"

using namespace covq;
using namespace covq::testutil;

TEST_CASE("support comparison") {
    auto diff = compare_support({{0, 1}, {1, 2}}, {{1, 0}, {2, 1}});
    CHECK(diff.exact());
    CHECK(diff.true_positive == 2);

    auto diff2 = compare_support({{0, 1}, {2, 3}}, {{0, 1}, {1, 2}});
    CHECK_FALSE(diff2.exact());
    CHECK(diff2.false_positive == 1);
    CHECK(diff2.false_negative == 1);
    CHECK(diff2.fp_edges == std::vector<std::pair<int, int>>{{2, 3}});
    CHECK(diff2.fn_edges == std::vector<std::pair<int, int>>{{1, 2}});
}

TEST_CASE("support of precision triplets") {
    std::vector<std::tuple<int, int, double>> trip{
        {0, 0, 2.0}, {1, 1, 2.0}, {2, 2, 2.0}, {0, 1, -0.7}, {0, 2, 1e-13}};
    CHECK(support_of_triplets(trip) == std::vector<std::pair<int, int>>{{0, 1}});
}

TEST_CASE("report serialization carries the schema fingerprint") {
    RecoveryReport r;
    r.instance_id = "bundle-x";
    r.algorithm = "tree";
    r.params_echo = "{\"kappa\":100}";
    r.queries.raw_queries = 10;
    r.queries.distinct_queries = 6;
    r.success = true;
    r.truth_available = true;
    r.diff.true_positive = 5;
    auto text = r.to_json();
    CHECK(text.find("covquery-report-v1") != std::string::npos);
    CHECK(text.find("\"kappa\": 100") != std::string::npos);
    CHECK(text.find("\"distinct_queries\": 6") != std::string::npos);
}

TEST_CASE("log-log regression and median") {
    // exact power law q = 3 n^2
    std::vector<std::pair<double, double>> pts;
    for (double n : {100.0, 200.0, 400.0, 800.0}) pts.emplace_back(n, 3 * n * n);
    CHECK(fit_loglog_exponent(pts) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("CLI end-to-end: generate, recover, verify, bench") {
    namespace fs = std::filesystem;
    const std::string cli = std::string(COVQ_CLI_PATH);
    const std::string dir = "/tmp/covq_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto run = [&](const std::string& cmd) {
        return std::system((cmd + " >/dev/null 2>&1").c_str());
    };

    // generate + recover + verify on a tree bundle
    REQUIRE(run(cli + " generate --model tree --n 60 --d 4 --seed 7 --out " + dir +
                "/tree") == 0);
    CHECK(fs::exists(dir + "/tree/graph.txt"));
    CHECK(fs::exists(dir + "/tree/model.json"));
    REQUIRE(run(cli + " recover --algorithm tree --bundle " + dir + "/tree --seed 1 --out " +
                dir + "/report.json --recovered-out " + dir + "/edges.txt") == 0);
    CHECK(fs::exists(dir + "/report.json"));
    {
        std::ifstream in(dir + "/report.json");
        std::stringstream ss;
        ss << in.rdbuf();
        CHECK(ss.str().find("\"success\": true") != std::string::npos);
    }
    CHECK(run(cli + " verify --bundle " + dir + "/tree --recovered " + dir + "/edges.txt") ==
          0);

    // verify exit codes: flipped edge -> 1, missing truth -> 2
    {
        Graph g = load_graph_file(dir + "/edges.txt");
        Graph mutated(g.size());
        auto edges = g.edges();
        // drop one edge, add a non-edge
        for (std::size_t i = 1; i < edges.size(); ++i)
            mutated.add_edge(edges[i].first, edges[i].second);
        for (int u = 0; u < g.size() && mutated.edge_count() < g.edge_count(); ++u)
            for (int v = u + 1; v < g.size(); ++v)
                if (!g.has_edge(u, v)) {
                    mutated.add_edge(u, v);
                    u = g.size();
                    break;
                }
        save_graph_file(mutated, dir + "/edges_bad.txt");
        int rc = std::system((cli + " verify --bundle " + dir + "/tree --recovered " + dir +
                              "/edges_bad.txt >/dev/null 2>&1")
                                 .c_str());
        CHECK(WEXITSTATUS(rc) == 1);
        rc = std::system((cli + " verify --bundle " + dir + "/nonexistent --recovered " + dir +
                          "/edges.txt >/dev/null 2>&1")
                             .c_str());
        CHECK(WEXITSTATUS(rc) == 2);
    }

    // treewidth recover writes precision triplets usable by verify
    REQUIRE(run(cli + " generate --model ktree --n 40 --k 2 --d 8 --keep 0.9 --seed 3 --out " +
                dir + "/kt") == 0);
    REQUIRE(run(cli + " recover --algorithm treewidth --bundle " + dir +
                "/kt --seed 2 --out " + dir + "/ktreport.json --recovered-out " + dir +
                "/khat.txt") == 0);
    CHECK(run(cli + " verify --bundle " + dir + "/kt --recovered-precision " + dir +
              "/khat.txt") == 0);

    // adversarial star twins
    REQUIRE(run(cli + " generate --model adversarial-star --n 20 --seed 5 --out " + dir +
                "/star") == 0);
    CHECK(fs::exists(dir + "/star/b0/model.json"));
    CHECK(fs::exists(dir + "/star/b1/model.json"));

    // bench: CSV with fingerprint, rows, summaries
    REQUIRE(run(cli + " bench --algorithm tree --n-list 64,128 --seeds 2 --d 4 --seed 1 "
                      "--threads 2 --out " +
                dir + "/bench.csv") == 0);
    {
        std::ifstream in(dir + "/bench.csv");
        std::string line;
        std::getline(in, line);
        CHECK(line == "# covquery-bench-v1");
        std::getline(in, line);
        CHECK(line.find("kind,n,seed") == 0);
        int runs = 0, summaries = 0;
        bool fit = false;
        while (std::getline(in, line)) {
            if (line.rfind("run,", 0) == 0) ++runs;
            if (line.rfind("summary,", 0) == 0) ++summaries;
            if (line.rfind("# fitted_exponent=", 0) == 0) fit = true;
        }
        CHECK(runs == 4);
        CHECK(summaries == 2);
        CHECK(fit);
    }

    // empty grid: header only
    REQUIRE(run(cli + " bench --algorithm tree --n-list '' --seeds 0 --out " + dir +
                "/empty.csv") == 0);
    {
        std::ifstream in(dir + "/empty.csv");
        std::string all, line;
        int lines = 0;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 2);  // fingerprint + header
    }

    fs::remove_all(dir);
}
