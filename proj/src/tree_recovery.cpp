#include "covq/tree_recovery.hpp"

#include <algorithm>
#include <cmath>

#include "covq/kernels.hpp"

namespace covq {

int theorem_kappa_tree(int n, double eps_fail) {
    double nn = static_cast<double>(n);
    return static_cast<int>(std::ceil(32.0 * std::log(2.0 * nn * nn / eps_fail)));
}

bool NoisyPredicateConfig::valid_for(const NoiseModel& nm) const {
    const double bound = std::pow(nm.delta_edge, nm.diameter) *
                         (1.0 - nm.gamma_edge * nm.gamma_edge);
    return tau > 3.0 * epsilon && tau <= bound - 3.0 * epsilon;
}

// ---------------------------------------------------------------------------
// ExactPredicates

ExactPredicates::ExactPredicates(CovarianceOracle& oracle, RankConfig cfg)
    : oracle_(oracle), cfg_(cfg) {}

bool ExactPredicates::separates(int u, int v, int w) {
    return det2_separation_test(oracle_, u, v, w, cfg_);
}

void ExactPredicates::separates_batch(int v, const int* us, const int* ws, std::uint8_t* out,
                                      std::size_t count) {
    static thread_local std::vector<int> is, js;
    static thread_local std::vector<double> vals, diag;
    is.resize(3 * count);
    js.resize(3 * count);
    vals.resize(3 * count);
    for (std::size_t k = 0; k < count; ++k) {
        is[k] = us[k];          // sigma_uv
        js[k] = v;
        is[count + k] = v;      // sigma_vw
        js[count + k] = ws[k];
        is[2 * count + k] = us[k];  // sigma_uw
        js[2 * count + k] = ws[k];
    }
    oracle_.query_batch(is.data(), js.data(), vals.data(), 3 * count);
    double svv = oracle_.query(v, v);
    diag.assign(count, svv);
    kernels::ops().det2_zero_batch(vals.data(), vals.data() + count, vals.data() + 2 * count,
                                   diag.data(), cfg_.rel_tol, out, count);
}

void ExactPredicates::correlation_magnitudes(int w, const int* us, double* out,
                                             std::size_t count) {
    static thread_local std::vector<int> js;
    static thread_local std::vector<double> diags;
    js.assign(count, w);
    diags.resize(count);
    oracle_.query_batch(us, js.data(), out, count);
    double sww = oracle_.query(w, w);
    oracle_.query_batch(us, us, diags.data(), count);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = std::fabs(out[k]) / std::sqrt(diags[k] * sww);
}

// ---------------------------------------------------------------------------
// NoisyPredicates

NoisyPredicates::NoisyPredicates(CovarianceOracle& oracle, NoisyPredicateConfig cfg)
    : oracle_(oracle), cfg_(cfg) {}

bool NoisyPredicates::separates(int u, int v, int w) {
    const int is[3] = {u, v, u};
    const int js[3] = {v, w, w};
    double q[3];
    oracle_.query_batch(is, js, q, 3);
    return std::fabs(q[0] * q[1] - q[2]) < cfg_.tau;
}

void NoisyPredicates::separates_batch(int v, const int* us, const int* ws, std::uint8_t* out,
                                      std::size_t count) {
    static thread_local std::vector<int> is, js;
    static thread_local std::vector<double> vals;
    is.resize(3 * count);
    js.resize(3 * count);
    vals.resize(3 * count);
    for (std::size_t k = 0; k < count; ++k) {
        is[k] = us[k];
        js[k] = v;
        is[count + k] = v;
        js[count + k] = ws[k];
        is[2 * count + k] = us[k];
        js[2 * count + k] = ws[k];
    }
    oracle_.query_batch(is.data(), js.data(), vals.data(), 3 * count);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = std::fabs(vals[k] * vals[count + k] - vals[2 * count + k]) < cfg_.tau ? 1 : 0;
}

void NoisyPredicates::correlation_magnitudes(int w, const int* us, double* out,
                                             std::size_t count) {
    static thread_local std::vector<int> js;
    js.assign(count, w);
    oracle_.query_batch(us, js.data(), out, count);
    for (std::size_t k = 0; k < count; ++k) out[k] = std::fabs(out[k]);
}

// ---------------------------------------------------------------------------
// sCentral

int s_central(const std::vector<int>& view, SeparationPredicates& pred, int kappa, Rng& rng) {
    const std::size_t m = view.size();
    static thread_local std::vector<int> us, ws;
    static thread_local std::vector<std::uint8_t> dec;
    us.resize(static_cast<std::size_t>(kappa));
    ws.resize(static_cast<std::size_t>(kappa));
    dec.resize(static_cast<std::size_t>(kappa));

    int best_v = view[0];
    long long best_separated = -1;
    for (std::size_t pos = 0; pos < m; ++pos) {
        const int v = view[pos];
        for (int t = 0; t < kappa; ++t) {
            std::size_t a = rng.next_below(m - 1);
            std::size_t b = rng.next_below(m - 1);
            us[static_cast<std::size_t>(t)] = view[a >= pos ? a + 1 : a];
            ws[static_cast<std::size_t>(t)] = view[b >= pos ? b + 1 : b];
        }
        pred.separates_batch(v, us.data(), ws.data(), dec.data(), static_cast<std::size_t>(kappa));
        long long separated = 0;
        for (int t = 0; t < kappa; ++t) separated += dec[static_cast<std::size_t>(t)];
        // shat(v) = (kappa - separated)/kappa; maximizing `separated` minimizes
        // shat; lexicographic tie-break comes from the ascending view order
        if (separated > best_separated) {
            best_separated = separated;
            best_v = v;
        }
    }
    return best_v;
}

// ---------------------------------------------------------------------------
// ComponentsTree

std::vector<std::vector<int>> components_tree(const std::vector<int>& view,
                                              SeparationPredicates& pred, int kappa, Rng& rng,
                                              std::vector<std::pair<int, int>>& edge_sink,
                                              const TreeRecoveryHooks* hooks) {
    // views of size <= 3 skip the statistics; any vertex splits correctly
    const int w = view.size() <= 3 ? view[0] : s_central(view, pred, kappa, rng);
    if (hooks != nullptr && hooks->on_central) hooks->on_central(view, w);

    std::vector<int> others;
    others.reserve(view.size() - 1);
    for (int u : view)
        if (u != w) others.push_back(u);

    std::vector<double> keys(others.size());
    pred.correlation_magnitudes(w, others.data(), keys.data(), others.size());
    std::vector<std::size_t> order(others.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (keys[a] != keys[b]) return keys[a] > keys[b];
        return others[a] < others[b];
    });

    std::vector<int> neighbors;
    std::vector<std::vector<int>> parts;
    for (std::size_t oi : order) {
        const int u = others[oi];
        bool placed = false;
        for (std::size_t vi = 0; vi < neighbors.size(); ++vi) {
            // det(Sigma_{uw,vw}) != 0 means w does not separate u from this
            // neighbor, i.e. u belongs to the neighbor's component; at most
            // one neighbor can match, so stop at the first
            if (!pred.separates(u, w, neighbors[vi])) {
                parts[vi].push_back(u);
                placed = true;
                break;
            }
        }
        if (!placed) {
            neighbors.push_back(u);
            parts.push_back({u});
            edge_sink.emplace_back(std::min(u, w), std::max(u, w));
        }
    }
    if (hooks != nullptr && hooks->on_split) hooks->on_split(view, w, parts);
    return parts;
}

// ---------------------------------------------------------------------------
// ReconstructTree

TreeRecoveryResult reconstruct_tree(CovarianceOracle& oracle, const TreeRecoveryConfig& cfg) {
    const int n = oracle.dim();
    TreeRecoveryResult result;
    result.kappa_used = cfg.kappa_s > 0 ? cfg.kappa_s : theorem_kappa_tree(n, cfg.eps_fail);

    ExactPredicates exact(oracle, cfg.rank);
    std::optional<NoisyPredicates> noisy;
    if (cfg.noisy) noisy.emplace(oracle, *cfg.noisy);
    SeparationPredicates& pred = cfg.noisy ? static_cast<SeparationPredicates&>(*noisy)
                                           : static_cast<SeparationPredicates&>(exact);

    const int depth_limit =
        4 * static_cast<int>(std::ceil(std::log2(std::max(2, n)))) + 64;

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
            result.diagnostic =
                "recursion depth guard tripped: non-tree input or repeated centrality failures";
            return result;
        }
        result.max_depth = std::max(result.max_depth, frame.depth);
        // deterministic per-call randomness from (seed, component root)
        Rng rng(hash_combine(hash_combine(cfg.seed, static_cast<std::uint64_t>(frame.view[0])),
                             static_cast<std::uint64_t>(frame.depth)));
        auto parts = components_tree(frame.view, pred, result.kappa_used, rng, result.edges,
                                     cfg.hooks);
        for (auto& part : parts)
            if (part.size() > 1) stack.push_back({std::move(part), frame.depth + 1});
    }
    result.success = true;
    return result;
}

}  // namespace covq
