#pragma once

// Randomized tree recovery: the s-centrality search, the component split
// around a central vertex, and the recursive driver. The separation predicate
// is injected so the same driver runs with the exact determinant test or the
// noisy thresholded variant.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "covq/dense.hpp"
#include "covq/oracle.hpp"
#include "covq/rng.hpp"

namespace covq {

// kappa = ceil(32 log(2 n^2 / eps_fail))
int theorem_kappa_tree(int n, double eps_fail);

struct NoisyPredicateConfig {
    double tau = 0.0;      // separation threshold, 3*eps < tau
    double epsilon = 0.0;  // oracle noise bound
    bool valid_for(const NoiseModel& nm) const;
};

// Batched separation tests plus the correlation sort keys used by the
// component split. "separates(u, v, w)" asks whether v separates u and w.
class SeparationPredicates {
public:
    virtual ~SeparationPredicates() = default;
    virtual bool separates(int u, int v, int w) = 0;
    // out[k] = separates(us[k], v, ws[k])
    virtual void separates_batch(int v, const int* us, const int* ws, std::uint8_t* out,
                                 std::size_t count) = 0;
    // out[k] = sort key for |rho(us[k], w)|, descending order puts neighbors
    // of w ahead of the rest of their component
    virtual void correlation_magnitudes(int w, const int* us, double* out,
                                        std::size_t count) = 0;
};

class ExactPredicates final : public SeparationPredicates {
public:
    ExactPredicates(CovarianceOracle& oracle, RankConfig cfg = {});
    bool separates(int u, int v, int w) override;
    void separates_batch(int v, const int* us, const int* ws, std::uint8_t* out,
                         std::size_t count) override;
    void correlation_magnitudes(int w, const int* us, double* out, std::size_t count) override;

private:
    CovarianceOracle& oracle_;
    RankConfig cfg_;
};

// Accepts "separated" iff |shat_uv shat_vw - shat_uw| < tau with unit diagonal;
// sort keys are the raw noisy magnitudes (the 2-eps margin argument makes the
// neighbor-first property hold, ties may resolve either way).
class NoisyPredicates final : public SeparationPredicates {
public:
    NoisyPredicates(CovarianceOracle& oracle, NoisyPredicateConfig cfg);
    bool separates(int u, int v, int w) override;
    void separates_batch(int v, const int* us, const int* ws, std::uint8_t* out,
                         std::size_t count) override;
    void correlation_magnitudes(int w, const int* us, double* out, std::size_t count) override;

private:
    CovarianceOracle& oracle_;
    NoisyPredicateConfig cfg_;
};

// Algorithm: for each v, draw kappa pairs (u,w) with replacement from
// view\{v} (u == w allowed) and estimate s(v) as the fraction of pairs v does
// not separate; return the argmin with lexicographic tie-break.
int s_central(const std::vector<int>& view, SeparationPredicates& pred, int kappa, Rng& rng);

struct TreeRecoveryHooks {
    std::function<void(const std::vector<int>& view, int vhat)> on_central;
    std::function<void(const std::vector<int>& view, int w,
                       const std::vector<std::vector<int>>& parts)>
        on_split;
};

// One split: picks the central vertex (views of size <= 3 take the first
// vertex), sorts the rest by |rho_uw| descending, groups vertices with their
// first non-separated known neighbor, emits {u,w} edges for new neighbors.
std::vector<std::vector<int>> components_tree(const std::vector<int>& view,
                                              SeparationPredicates& pred, int kappa, Rng& rng,
                                              std::vector<std::pair<int, int>>& edge_sink,
                                              const TreeRecoveryHooks* hooks = nullptr);

struct TreeRecoveryConfig {
    int kappa_s = 0;  // 0 = theorem value for eps_fail
    double eps_fail = 0.1;
    std::uint64_t seed = 0;
    RankConfig rank;
    std::optional<NoisyPredicateConfig> noisy;
    const TreeRecoveryHooks* hooks = nullptr;
};

struct TreeRecoveryResult {
    std::vector<std::pair<int, int>> edges;
    bool success = false;
    std::string diagnostic;
    int max_depth = 0;
    int kappa_used = 0;
};

TreeRecoveryResult reconstruct_tree(CovarianceOracle& oracle, const TreeRecoveryConfig& cfg);

}  // namespace covq
