#pragma once

// Recovery for graphs with small 2-connected components: split at central cut
// vertices like the tree case (keeping the splitter inside every part), and
// resolve views of size <= d*b by direct inversion of the marginal covariance.

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "covq/tree_recovery.hpp"

namespace covq {

// kappa = ceil(32 d^2 log(2 d n / eps_fail))
int theorem_kappa_block(int n, int d, double eps_fail);

struct BlockRecoveryHooks {
    std::function<void(const std::vector<int>& view, int w)> on_central;
    std::function<void(const std::vector<int>& view,
                       const std::vector<std::pair<int, int>>& leaf_edges)>
        on_leaf;
};

struct BlockRecoveryConfig {
    int d = 2;       // block-cut-tree degree bound
    int b = 2;       // block size bound
    int kappa_s = 0;  // 0 = theorem value
    double eps_fail = 0.1;
    std::uint64_t seed = 0;
    int max_retries = 5;  // attempts at finding a splitting vertex
    RankConfig rank;
    const BlockRecoveryHooks* hooks = nullptr;
};

struct BlockRecoveryResult {
    std::vector<std::pair<int, int>> edges;
    bool success = false;
    std::string diagnostic;
    int max_depth = 0;
    int retries = 0;
    int kappa_used = 0;
};

// One split around w: every u in view\{w} joins the part of its first
// non-separated known representative, else founds a new part; every part gets
// w re-included. No edges are recovered at this stage.
std::vector<std::vector<int>> components_sb(const std::vector<int>& view, int w,
                                            SeparationPredicates& pred);

BlockRecoveryResult reconstruct_sb(CovarianceOracle& oracle, const BlockRecoveryConfig& cfg);

}  // namespace covq
