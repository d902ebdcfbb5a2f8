#include "covq/block_recovery.hpp"

#include <algorithm>
#include <cmath>

namespace covq {

int theorem_kappa_block(int n, int d, double eps_fail) {
    return static_cast<int>(std::ceil(
        32.0 * d * d * std::log(2.0 * d * static_cast<double>(n) / eps_fail)));
}

std::vector<std::vector<int>> components_sb(const std::vector<int>& view, int w,
                                            SeparationPredicates& pred) {
    std::vector<int> reps;
    std::vector<std::vector<int>> parts;
    for (int u : view) {
        if (u == w) continue;
        bool placed = false;
        for (std::size_t vi = 0; vi < reps.size(); ++vi) {
            if (!pred.separates(u, w, reps[vi])) {
                parts[vi].push_back(u);
                placed = true;
                break;
            }
        }
        if (!placed) {
            reps.push_back(u);
            parts.push_back({u});
        }
    }
    for (auto& part : parts) {
        part.push_back(w);
        std::sort(part.begin(), part.end());
    }
    return parts;
}

namespace {

// restricted sCentral: candidates may exclude previously tried splitters but
// pairs are still drawn from the whole view
int s_central_excluding(const std::vector<int>& view, const std::set<int>& excluded,
                        SeparationPredicates& pred, int kappa, Rng& rng) {
    const std::size_t m = view.size();
    std::vector<int> us(static_cast<std::size_t>(kappa)), ws(static_cast<std::size_t>(kappa));
    std::vector<std::uint8_t> dec(static_cast<std::size_t>(kappa));
    int best_v = -1;
    long long best_separated = -1;
    for (std::size_t pos = 0; pos < m; ++pos) {
        const int v = view[pos];
        if (excluded.count(v) != 0) continue;
        for (int t = 0; t < kappa; ++t) {
            std::size_t a = rng.next_below(m - 1);
            std::size_t b = rng.next_below(m - 1);
            us[static_cast<std::size_t>(t)] = view[a >= pos ? a + 1 : a];
            ws[static_cast<std::size_t>(t)] = view[b >= pos ? b + 1 : b];
        }
        pred.separates_batch(v, us.data(), ws.data(), dec.data(), static_cast<std::size_t>(kappa));
        long long separated = 0;
        for (int t = 0; t < kappa; ++t) separated += dec[static_cast<std::size_t>(t)];
        if (separated > best_separated) {
            best_separated = separated;
            best_v = v;
        }
    }
    return best_v;
}

}  // namespace

BlockRecoveryResult reconstruct_sb(CovarianceOracle& oracle, const BlockRecoveryConfig& cfg) {
    const int n = oracle.dim();
    BlockRecoveryResult result;
    result.kappa_used =
        cfg.kappa_s > 0 ? cfg.kappa_s : theorem_kappa_block(n, cfg.d, cfg.eps_fail);

    ExactPredicates pred(oracle, cfg.rank);
    const long long leaf_size = static_cast<long long>(cfg.d) * cfg.b;
    const int depth_limit = 4 * static_cast<int>(std::ceil(std::log2(std::max(2, n)))) + 64;

    std::set<std::pair<int, int>> edge_set;

    struct Frame {
        std::vector<int> view;
        int depth;
    };
    std::vector<Frame> stack;
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    stack.push_back({std::move(all), 0});

    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        if (frame.view.size() <= 1) continue;
        if (frame.depth > depth_limit) {
            result.success = false;
            result.diagnostic = "recursion depth guard tripped";
            return result;
        }
        result.max_depth = std::max(result.max_depth, frame.depth);

        if (static_cast<long long>(frame.view.size()) <= leaf_size) {
            // leaf: support of the inverted marginal covariance
            DenseMatrix sigma = submatrix(oracle, frame.view, frame.view);
            DenseMatrix k = invert(sigma);
            double max_diag = 0.0;
            for (int i = 0; i < k.rows(); ++i) max_diag = std::max(max_diag, std::fabs(k.at(i, i)));
            const double tol = cfg.rank.rel_tol * max_diag;
            std::vector<std::pair<int, int>> leaf_edges;
            for (int i = 0; i < k.rows(); ++i)
                for (int j = i + 1; j < k.cols(); ++j)
                    if (std::fabs(k.at(i, j)) > tol)
                        leaf_edges.emplace_back(frame.view[static_cast<std::size_t>(i)],
                                                frame.view[static_cast<std::size_t>(j)]);
            if (cfg.hooks != nullptr && cfg.hooks->on_leaf)
                cfg.hooks->on_leaf(frame.view, leaf_edges);
            edge_set.insert(leaf_edges.begin(), leaf_edges.end());
            continue;
        }

        Rng rng(hash_combine(hash_combine(cfg.seed, static_cast<std::uint64_t>(frame.view[0])),
                             static_cast<std::uint64_t>(frame.depth)));
        std::set<int> tried;
        bool split_done = false;
        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            if (tried.size() >= frame.view.size()) break;
            int w = s_central_excluding(frame.view, tried, pred, result.kappa_used, rng);
            if (w < 0) break;
            if (cfg.hooks != nullptr && cfg.hooks->on_central) cfg.hooks->on_central(frame.view, w);
            auto parts = components_sb(frame.view, w, pred);
            if (parts.size() <= 1) {
                // w did not split anything; try a different vertex
                tried.insert(w);
                ++result.retries;
                continue;
            }
            for (auto& part : parts) stack.push_back({std::move(part), frame.depth + 1});
            split_done = true;
            break;
        }
        if (!split_done) {
            result.success = false;
            result.diagnostic = "no splitting vertex found after retries (is (b,d) correct?)";
            return result;
        }
    }

    result.edges.assign(edge_set.begin(), edge_set.end());
    result.success = true;
    return result;
}

}  // namespace covq
