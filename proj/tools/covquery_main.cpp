// covquery: generate instances, recover concentration graphs through a
// counting covariance oracle, verify against ground truth, and run query
// scaling sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "covq/block_recovery.hpp"
#include "covq/models.hpp"
#include "covq/report.hpp"
#include "covq/tree_recovery.hpp"
#include "covq/treewidth_recovery.hpp"

using namespace covq;
using nlohmann::json;

namespace {

int log_level() {
    const char* env = std::getenv("COVQUERY_LOG");
    if (env == nullptr) return 0;
    std::string v(env);
    if (v == "debug") return 2;
    if (v == "info") return 1;
    return 0;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[covquery] %s\n", msg.c_str());
}

int tree_diameter(const Graph& g) {
    auto bfs_far = [&](int s) {
        std::vector<int> dist(static_cast<std::size_t>(g.size()), -1);
        std::vector<int> q{s};
        dist[static_cast<std::size_t>(s)] = 0;
        int far = s;
        for (std::size_t h = 0; h < q.size(); ++h) {
            int u = q[h];
            for (int v : g.neighbors(u))
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    if (dist[static_cast<std::size_t>(v)] > dist[static_cast<std::size_t>(far)]) far = v;
                    q.push_back(v);
                }
        }
        return std::make_pair(far, dist[static_cast<std::size_t>(far)]);
    };
    auto [a, _] = bfs_far(0);
    return bfs_far(a).second;
}

struct RecoverOptions {
    std::string algorithm = "tree";
    std::string bundle;
    std::string oracle = "exact";
    int kappa = 0;
    int m = 0;
    int k = 0, d = 0, b = 0;
    double eps_fail = 0.1;
    double noise_epsilon = 0.0;
    double tau = 0.0;
    double sample_eta = 0.05;
    std::uint64_t sample_n = 0;  // 0 = guarantee bound
    int retries = -1;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    std::string recovered_out;
    std::string format = "json";
};

RecoveryReport run_recovery(const ModelInstance& inst, const RecoverOptions& opt,
                            std::vector<std::pair<int, int>>* recovered_edges,
                            PrecisionEstimate* recovered_precision) {
    RecoveryReport report;
    report.instance_id = opt.bundle.empty() ? model_kind_name(inst.kind) : opt.bundle;
    report.algorithm = opt.algorithm;
    report.oracle_kind = opt.oracle;

    std::shared_ptr<CovarianceOracle> base;
    NoiseModel nm;
    if (opt.oracle == "exact") {
        base = inst.make_exact_oracle();
    } else if (opt.oracle == "noisy") {
        if (!inst.tree_backed())
            throw std::runtime_error("noisy oracle requires a tree-backed bundle");
        nm.epsilon = opt.noise_epsilon;
        nm.diameter = tree_diameter(inst.graph);
        nm.delta_edge = 1.0;
        nm.gamma_edge = 0.0;
        for (double r : inst.edge_rho) {
            nm.delta_edge = std::min(nm.delta_edge, std::fabs(r));
            nm.gamma_edge = std::max(nm.gamma_edge, std::fabs(r));
        }
        if (!nm.valid())
            std::fprintf(stderr,
                         "[covquery] warning: noise epsilon %.3g exceeds the validity bound "
                         "%.3g for this instance (delta=%.3g gamma=%.3g D=%d); recovery is "
                         "not guaranteed\n",
                         nm.epsilon, nm.epsilon_validity_bound(), nm.delta_edge, nm.gamma_edge,
                         nm.diameter);
        base = std::make_shared<NoisyOracle>(inst.make_exact_oracle(), nm,
                                             hash_label(opt.seed, "noise"));
    } else if (opt.oracle == "sampled") {
        if (!inst.tree_backed())
            throw std::runtime_error("sampled oracle requires a tree-backed bundle");
        SampledOracleConfig scfg;
        if (opt.sample_n > 0) {
            scfg.samples_per_pair = opt.sample_n;
            scfg.epsilon = opt.noise_epsilon;
            scfg.eta = opt.sample_eta;
            scfg.blocks = static_cast<int>(std::ceil(
                8.0 * std::log(static_cast<double>(inst.n()) / opt.sample_eta)));
        } else {
            scfg = SampledOracleConfig::with_guarantee(inst.n(), opt.noise_epsilon,
                                                       opt.sample_eta);
        }
        base = std::make_shared<SampledOracle>(inst.graph, inst.edge_rho, scfg,
                                               hash_label(opt.seed, "samples"));
    } else {
        throw std::runtime_error("unknown oracle kind: " + opt.oracle);
    }

    auto counting = std::make_shared<CountingOracle>(base, opt.oracle == "sampled");

    json params;
    params["seed"] = opt.seed;
    params["oracle"] = opt.oracle;

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::pair<int, int>> edges;
    bool used_noisy_predicates = opt.oracle != "exact";

    if (opt.algorithm == "tree") {
        TreeRecoveryConfig cfg;
        cfg.kappa_s = opt.kappa;
        cfg.eps_fail = opt.eps_fail;
        cfg.seed = opt.seed;
        if (used_noisy_predicates) {
            NoisyPredicateConfig ncfg;
            ncfg.epsilon = opt.noise_epsilon;
            ncfg.tau = opt.tau > 0.0 ? opt.tau : 4.0 * opt.noise_epsilon;
            cfg.noisy = ncfg;
            params["tau"] = ncfg.tau;
            params["noise_epsilon"] = ncfg.epsilon;
        }
        auto res = reconstruct_tree(*counting, cfg);
        params["kappa"] = res.kappa_used;
        report.success = res.success;
        report.diagnostic = res.diagnostic;
        report.recursion_depth = res.max_depth;
        edges = std::move(res.edges);
    } else if (opt.algorithm == "small-block") {
        BlockRecoveryConfig cfg;
        cfg.d = opt.d > 0 ? opt.d : std::max(2, inst.params.d);
        cfg.b = opt.b > 0 ? opt.b : std::max(2, inst.params.b);
        cfg.kappa_s = opt.kappa;
        cfg.eps_fail = opt.eps_fail;
        cfg.seed = opt.seed;
        if (opt.retries >= 0) cfg.max_retries = opt.retries;
        auto res = reconstruct_sb(*counting, cfg);
        params["kappa"] = res.kappa_used;
        params["d"] = cfg.d;
        params["b"] = cfg.b;
        report.success = res.success;
        report.diagnostic = res.diagnostic;
        report.recursion_depth = res.max_depth;
        report.retries = res.retries;
        edges = std::move(res.edges);
    } else if (opt.algorithm == "treewidth") {
        SeparatorConfig cfg;
        cfg.k = opt.k > 0 ? opt.k : std::max(1, inst.params.k);
        cfg.m = opt.m;
        cfg.seed = opt.seed;
        if (opt.retries >= 0) cfg.max_retries = opt.retries;
        auto res = main_reconstruct(*counting, cfg);
        params["k"] = cfg.k;
        params["m"] = res.m_used;
        report.success = res.success;
        report.diagnostic = res.diagnostic;
        report.recursion_depth = res.stats.max_depth;
        report.retries = res.stats.retries;
        edges = res.khat.support(cfg.rank.rel_tol);
        if (recovered_precision != nullptr) *recovered_precision = std::move(res.khat);
    } else {
        throw std::runtime_error("unknown algorithm: " + opt.algorithm);
    }

    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    report.queries = counting->stats();
    report.params_echo = params.dump();

    if (!inst.true_precision.empty()) {
        report.truth_available = true;
        report.diff = compare_support(edges, support_of_triplets(inst.true_precision));
        if (recovered_precision != nullptr && recovered_precision->dim() > 0) {
            double err = 0.0;
            for (auto [i, j, v] : inst.true_precision)
                err = std::max(err, std::fabs(recovered_precision->get(i, j) - v));
            for (const auto& [key, v] : recovered_precision->entries()) {
                int i = static_cast<int>(key >> 32), j = static_cast<int>(key & 0xffffffffULL);
                bool in_truth = false;
                for (auto [ti, tj, tv] : inst.true_precision)
                    if (ti == std::min(i, j) && tj == std::max(i, j)) {
                        in_truth = true;
                        break;
                    }
                if (!in_truth) err = std::max(err, std::fabs(v));
            }
            report.max_precision_error = err;
        }
        report.success = report.success && report.diff.exact();
    }
    if (recovered_edges != nullptr) *recovered_edges = std::move(edges);
    return report;
}

int cmd_generate(const std::string& model, int n, int d, int b, int k, int h, double keep,
                 double corr_lo, double corr_hi, int diameter_cap, int moves,
                 std::uint64_t seed, const std::string& out) {
    auto summarize = [](const ModelInstance& inst, const std::string& dir) {
        std::ostringstream os;
        os << "wrote " << dir << ": kind=" << model_kind_name(inst.kind) << " n=" << inst.n()
           << " |E|=" << inst.graph.edge_count();
        if (inst.kind == ModelKind::SmallBlock) {
            auto stats = block_cut_stats(inst.graph);
            os << " b=" << stats.max_block_size << " d=" << stats.max_bc_degree;
        }
        if (inst.kind == ModelKind::PartialKTree) {
            int width = 0;
            for (const auto& bag : inst.tw_bags)
                width = std::max(width, static_cast<int>(bag.size()) - 1);
            os << " tw-certificate=" << width << " max-degree=" << inst.graph.max_degree();
        }
        std::cout << os.str() << '\n';
    };

    ModelKind kind = model_kind_from_name(model);
    switch (kind) {
        case ModelKind::Tree: {
            auto inst = gen_tree_model(n, d, corr_lo, corr_hi, seed, diameter_cap);
            save_bundle(inst, out);
            summarize(inst, out);
            break;
        }
        case ModelKind::SmallBlock: {
            auto inst = gen_small_block_model(n, b, d, seed);
            save_bundle(inst, out);
            summarize(inst, out);
            break;
        }
        case ModelKind::PartialKTree: {
            auto inst = gen_partial_ktree_model(n, k, d, keep, seed);
            save_bundle(inst, out);
            summarize(inst, out);
            break;
        }
        case ModelKind::AdversarialStar: {
            auto [b0, b1] = gen_adversarial_star(n, seed);
            save_bundle(b0, out + "/b0");
            save_bundle(b1, out + "/b1");
            summarize(b0, out + "/b0");
            summarize(b1, out + "/b1");
            break;
        }
        case ModelKind::AdversarialDary: {
            std::vector<DaryMove> mv;
            Rng rng(hash_label(seed, "dary-moves"));
            int branches = static_cast<int>(std::llround(std::pow(d, h - 1)));
            for (int i = 0; i < std::min(moves, branches); ++i) {
                int from = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(d)));
                int to = (from + 1 + static_cast<int>(rng.next_below(
                                         static_cast<std::uint64_t>(d - 1)))) % d;
                mv.push_back({i, from, to});
            }
            auto inst = gen_adversarial_dary(d, h, mv, seed);
            save_bundle(inst, out);
            summarize(inst, out);
            break;
        }
    }
    return 0;
}

int cmd_verify(const std::string& bundle, const std::string& recovered_edges_path,
               const std::string& recovered_precision_path) {
    ModelInstance inst;
    try {
        inst = load_bundle(bundle);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "verify: cannot load bundle: %s\n", e.what());
        return 2;
    }
    if (inst.true_precision.empty()) {
        std::fprintf(stderr, "verify: bundle has no ground truth\n");
        return 2;
    }

    std::vector<std::pair<int, int>> edges;
    double max_err = -1.0;
    try {
        if (!recovered_precision_path.empty()) {
            PrecisionEstimate khat = PrecisionEstimate::load(recovered_precision_path);
            edges = khat.support();
            max_err = 0.0;
            for (auto [i, j, v] : inst.true_precision)
                max_err = std::max(max_err, std::fabs(khat.get(i, j) - v));
        } else {
            Graph g = load_graph_file(recovered_edges_path);
            edges = g.edges();
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "verify: cannot load recovery output: %s\n", e.what());
        return 2;
    }

    SupportDiff diff = compare_support(edges, support_of_triplets(inst.true_precision));
    std::cout << "true_positive=" << diff.true_positive
              << " false_positive=" << diff.false_positive
              << " false_negative=" << diff.false_negative;
    if (max_err >= 0.0) std::cout << " max_precision_error=" << max_err;
    std::cout << '\n';
    if (!diff.exact()) {
        for (auto [u, v] : diff.fp_edges) std::cout << "extra " << u << ' ' << v << '\n';
        for (auto [u, v] : diff.fn_edges) std::cout << "missing " << u << ' ' << v << '\n';
        return 1;
    }
    return 0;
}

struct BenchRow {
    int n = 0;
    std::uint64_t seed = 0;
    std::string algorithm;
    std::uint64_t distinct = 0, raw = 0;
    double wall_ms = 0.0;
    bool success = false;
};

int cmd_bench(const std::string& algorithm, const std::vector<int>& n_list, int seeds,
              int d, int b, int k, double keep, double corr_lo, double corr_hi, int kappa,
              int m, double eps_fail, std::uint64_t seed0, int threads,
              const std::string& out_path) {
    std::vector<std::pair<int, std::uint64_t>> grid;
    for (int n : n_list)
        for (int s = 0; s < seeds; ++s)
            grid.emplace_back(n, hash_combine(seed0, hash_combine(static_cast<std::uint64_t>(n),
                                                                  static_cast<std::uint64_t>(s))));

    std::vector<BenchRow> rows(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t idx = next.fetch_add(1);
            if (idx >= grid.size()) return;
            auto [n, run_seed] = grid[idx];
            BenchRow row;
            row.n = n;
            row.seed = run_seed;
            row.algorithm = algorithm;
            try {
                ModelInstance inst;
                if (algorithm == "tree")
                    inst = gen_tree_model(n, d, corr_lo, corr_hi, run_seed);
                else if (algorithm == "small-block")
                    inst = gen_small_block_model(n, b, d, run_seed);
                else if (algorithm == "treewidth")
                    inst = gen_partial_ktree_model(n, k, d, keep, run_seed);
                else
                    throw std::runtime_error("unknown algorithm: " + algorithm);

                RecoverOptions opt;
                opt.algorithm = algorithm;
                opt.kappa = kappa;
                opt.m = m;
                opt.eps_fail = eps_fail;
                opt.d = d;
                opt.b = b;
                opt.k = k;
                opt.seed = run_seed;
                auto report = run_recovery(inst, opt, nullptr, nullptr);
                row.distinct = report.queries.distinct_queries;
                row.raw = report.queries.raw_queries;
                row.wall_ms = report.wall_ms;
                row.success = report.success;
            } catch (const std::exception& e) {
                log_info(std::string("bench run failed: ") + e.what());
                row.success = false;
            }
            rows[idx] = std::move(row);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(1, threads); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error("cannot write " + out_path);
        os = &file;
    }
    *os << "# covquery-bench-v1\n";
    *os << "kind,n,seed,algorithm,distinct_queries,raw_queries,wall_ms,success\n";
    for (const auto& r : rows)
        *os << "run," << r.n << ',' << r.seed << ',' << r.algorithm << ',' << r.distinct << ','
            << r.raw << ',' << r.wall_ms << ',' << (r.success ? 1 : 0) << '\n';

    std::vector<std::pair<double, double>> fit_points;
    for (int n : n_list) {
        std::vector<double> q;
        for (const auto& r : rows)
            if (r.n == n && r.success) q.push_back(static_cast<double>(r.distinct));
        if (q.empty()) continue;
        double med = median(q);
        fit_points.emplace_back(static_cast<double>(n), med);
        *os << "summary," << n << ",,," << static_cast<std::uint64_t>(med) << ",,,\n";
    }
    if (fit_points.size() >= 2)
        *os << "# fitted_exponent=" << fit_loglog_exponent(fit_points) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"concentration-graph recovery from covariance queries"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a model instance bundle");
    std::string g_model = "tree", g_out;
    int g_n = 100, g_d = 5, g_b = 4, g_k = 2, g_h = 2, g_diam = 0, g_moves = 1;
    double g_keep = 0.85, g_lo = 0.2, g_hi = 0.9;
    std::uint64_t g_seed = 1;
    gen->add_option("--model", g_model, "tree|small-block|ktree|adversarial-star|adversarial-dary");
    gen->add_option("--n", g_n, "vertex count");
    gen->add_option("--d", g_d, "degree-type bound");
    gen->add_option("--b", g_b, "block size bound");
    gen->add_option("--k", g_k, "treewidth bound");
    gen->add_option("--height", g_h, "d-ary tree height");
    gen->add_option("--moves", g_moves, "d-ary leaf moves");
    gen->add_option("--keep", g_keep, "edge keep probability (ktree)");
    gen->add_option("--corr-lo", g_lo, "min |rho|");
    gen->add_option("--corr-hi", g_hi, "max |rho|");
    gen->add_option("--diameter-cap", g_diam, "tree diameter cap (0 = none)");
    gen->add_option("--seed", g_seed, "generator seed");
    gen->add_option("--out", g_out, "output bundle directory")->required();

    // recover
    auto* rec = app.add_subcommand("recover", "run a recovery algorithm on a bundle");
    RecoverOptions opt;
    rec->add_option("--algorithm", opt.algorithm, "tree|small-block|treewidth")->required();
    rec->add_option("--bundle", opt.bundle, "instance bundle directory")->required();
    rec->add_option("--oracle", opt.oracle, "exact|noisy|sampled");
    rec->add_option("--kappa", opt.kappa, "sCentral repetitions (0 = theorem value)");
    rec->add_option("--m", opt.m, "treewidth window size (0 = practical formula)");
    rec->add_option("--k", opt.k, "treewidth bound override");
    rec->add_option("--d", opt.d, "block-cut degree bound override");
    rec->add_option("--b", opt.b, "block size bound override");
    rec->add_option("--epsilon-fail", opt.eps_fail, "failure probability for kappa");
    rec->add_option("--noise-epsilon", opt.noise_epsilon, "entrywise noise bound");
    rec->add_option("--tau", opt.tau, "noisy separation threshold (0 = 4*epsilon)");
    rec->add_option("--sample-eta", opt.sample_eta, "sampled-oracle failure probability");
    rec->add_option("--sample-n", opt.sample_n, "samples per pair (0 = guarantee bound)");
    rec->add_option("--retries", opt.retries, "retry budget");
    rec->add_option("--seed", opt.seed, "run seed");
    rec->add_option("--threads", opt.threads, "worker threads");
    rec->add_option("--out", opt.out, "report path (default stdout)");
    rec->add_option("--recovered-out", opt.recovered_out,
                    "write recovered edges (tree/small-block) or precision triplets (treewidth)");
    rec->add_option("--format", opt.format, "json");

    // verify
    auto* ver = app.add_subcommand("verify", "compare a recovery output against ground truth");
    std::string v_bundle, v_edges, v_precision;
    ver->add_option("--bundle", v_bundle, "instance bundle directory")->required();
    ver->add_option("--recovered", v_edges, "recovered edge list (graph text format)");
    ver->add_option("--recovered-precision", v_precision, "recovered precision triplets");

    // bench
    auto* ben = app.add_subcommand("bench", "query/time scaling sweep (CSV)");
    std::string b_algorithm = "tree", b_nlist = "1024,2048,4096", b_out;
    int b_seeds = 5, b_d = 5, b_b = 4, b_k = 2, b_kappa = 0, b_m = 0, b_threads = 1;
    double b_keep = 0.85, b_lo = 0.2, b_hi = 0.9, b_eps = 0.1;
    std::uint64_t b_seed = 1;
    ben->add_option("--algorithm", b_algorithm, "tree|small-block|treewidth");
    ben->add_option("--n-list", b_nlist, "comma-separated sizes");
    ben->add_option("--seeds", b_seeds, "seeds per size");
    ben->add_option("--d", b_d, "degree bound");
    ben->add_option("--b", b_b, "block bound");
    ben->add_option("--k", b_k, "treewidth bound");
    ben->add_option("--keep", b_keep, "edge keep probability");
    ben->add_option("--corr-lo", b_lo, "min |rho|");
    ben->add_option("--corr-hi", b_hi, "max |rho|");
    ben->add_option("--kappa", b_kappa, "sCentral repetitions (0 = theorem)");
    ben->add_option("--m", b_m, "window size (0 = practical)");
    ben->add_option("--epsilon-fail", b_eps, "failure probability");
    ben->add_option("--seed", b_seed, "base seed");
    ben->add_option("--threads", b_threads, "parallel runs");
    ben->add_option("--out", b_out, "CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_generate(g_model, g_n, g_d, g_b, g_k, g_h, g_keep, g_lo, g_hi, g_diam,
                                g_moves, g_seed, g_out);
        if (rec->parsed()) {
            ModelInstance inst = load_bundle(opt.bundle);
            std::vector<std::pair<int, int>> edges;
            PrecisionEstimate khat;
            RecoveryReport report = run_recovery(inst, opt, &edges, &khat);
            if (!opt.recovered_out.empty()) {
                if (opt.algorithm == "treewidth") {
                    khat.save(opt.recovered_out);
                } else {
                    Graph g(inst.n());
                    for (auto [u, v] : edges) g.add_edge(u, v);
                    save_graph_file(g, opt.recovered_out);
                }
            }
            const std::string text = report.to_json();
            if (opt.out.empty()) {
                std::cout << text << '\n';
            } else {
                std::ofstream f(opt.out);
                f << text << '\n';
            }
            return 0;
        }
        if (ver->parsed()) return cmd_verify(v_bundle, v_edges, v_precision);
        if (ben->parsed()) {
            std::vector<int> n_list;
            std::stringstream ss(b_nlist);
            std::string tok;
            while (std::getline(ss, tok, ','))
                if (!tok.empty()) n_list.push_back(std::stoi(tok));
            return cmd_bench(b_algorithm, n_list, b_seeds, b_d, b_b, b_k, b_keep, b_lo, b_hi,
                             b_kappa, b_m, b_eps, b_seed, b_threads, b_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
