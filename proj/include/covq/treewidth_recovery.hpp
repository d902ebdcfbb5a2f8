#pragma once

// Bounded-treewidth recovery: sampled-window balanced separators, rank-based
// component identification under accumulated conditioning sets, and the
// recursive assembly of the full precision matrix from conditional
// covariances. Recovers both the concentration graph and K itself.

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "covq/dense.hpp"
#include "covq/oracle.hpp"
#include "covq/rng.hpp"

namespace covq {

struct RecoveryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sparse symmetric estimate of the precision matrix; its thresholded support
// is the recovered concentration graph.
class PrecisionEstimate {
public:
    PrecisionEstimate() = default;
    explicit PrecisionEstimate(int n) : n_(n) {}

    int dim() const { return n_; }
    void set(int i, int j, double v);
    void add(int i, int j, double v);
    double get(int i, int j) const;
    std::size_t nnz() const { return entries_.size(); }
    double max_abs_diag() const;

    // off-diagonal pairs with |value| > rel_tol * max diagonal
    std::vector<std::pair<int, int>> support(double rel_tol = 1e-8) const;
    const std::unordered_map<std::uint64_t, double>& entries() const { return entries_; }

    DenseMatrix to_dense() const;
    void save(const std::string& path) const;
    static PrecisionEstimate load(const std::string& path);

private:
    int n_ = 0;
    std::unordered_map<std::uint64_t, double> entries_;  // key packs (min,max)
};

struct TreewidthHooks {
    // every split attempt; `accepted` marks it passing the |S'| <= k+1 and
    // 0.93-balance certificates
    std::function<void(const std::vector<int>& view, const std::vector<int>& cond,
                       const std::vector<int>& sep,
                       const std::vector<std::vector<int>>& comps, bool accepted)>
        on_split;
    std::function<void(const std::vector<int>& view, const std::vector<int>& cond)> on_leaf;
    // max-abs residual of the block identity K_C * Sigma_{C,S'|S} +
    // K_{C,S'} * Sigma_{S'|S} = 0 at each assembly
    std::function<void(double residual)> on_assembly_identity;
};

struct SeparatorConfig {
    int k = 1;              // treewidth bound
    int m = 0;              // window size; 0 = mode formula
    enum class MMode { Practical, Theoretical } mode = MMode::Practical;
    double c_m = 4.0;       // practical m = max(6(k+1), ceil(c_m * k * log n))
    double delta_vc = 1.0 / 24.0;
    double tau_vc = 1.0 / 3.0;
    int partition_budget = 50000;
    int max_retries = 8;
    // threshold on conditional correlations for component assignment
    double cond_corr_tol = 1e-9;
    std::uint64_t seed = 0;
    RankConfig rank;
    const TreewidthHooks* hooks = nullptr;

    int effective_m(int n) const;
};

int practical_m(int n, int k, double c_m = 4.0);
// Sample bound for the delta-sample guarantee with r = 11k (documentation
// mode; astronomically large, so the practical mode is the default).
std::uint64_t theoretical_m(int k, double delta = 1.0 / 24.0, double tau = 1.0 / 3.0);

struct SplitResult {
    std::vector<int> separator;
    std::vector<std::vector<int>> components;
    int attempts = 0;
};

// Minimal separator of a and b in the graph conditioned on `cond`: collects
// the vertices lying on minimal separators via rank tests, then grows one
// separator greedily. Size of the result is rank - |cond|.
std::vector<int> ab_separator(const std::vector<int>& view, const std::vector<int>& a,
                              const std::vector<int>& b, const std::vector<int>& cond,
                              CovarianceOracle& oracle, const SeparatorConfig& cfg);

// Samples a window W, searches balanced bipartitions of W for one whose
// conditional minimal separator has rank <= k+1 (random tries, single-linkage
// merges, affinity sweeps; exhaustive when the window is tiny), then runs
// ab_separator on the winner.
std::vector<int> find_balanced_separator(const std::vector<int>& view,
                                         const std::vector<int>& cond,
                                         CovarianceOracle& oracle, const SeparatorConfig& cfg,
                                         Rng& rng);

// Split with certificates: retries with a fresh window until |S'| <= k+1 and
// max component <= 0.93 |view \ S'|; throws RecoveryError when retries run out.
SplitResult split_components(const std::vector<int>& view, const std::vector<int>& cond,
                             CovarianceOracle& oracle, const SeparatorConfig& cfg, Rng& rng);

struct TreewidthStats {
    int max_depth = 0;
    int retries = 0;
    int splits = 0;
    std::uint64_t sparse_multiply_ops = 0;
    std::uint64_t sparse_multiply_budget = 0;
};

// Recursive reconstruction of K over `view` given that `cond` separates it
// from the rest: leaves invert the conditional covariance, inner nodes split
// and assemble the cross and separator blocks.
void reconstruct(const std::vector<int>& view, const std::vector<int>& cond,
                 CovarianceOracle& oracle, const SeparatorConfig& cfg,
                 PrecisionEstimate& out, TreewidthStats& stats, Rng& rng, int depth = 0);

struct TreewidthResult {
    PrecisionEstimate khat;
    bool success = false;
    std::string diagnostic;
    TreewidthStats stats;
    int m_used = 0;
};

TreewidthResult main_reconstruct(CovarianceOracle& oracle, const SeparatorConfig& cfg);

}  // namespace covq
