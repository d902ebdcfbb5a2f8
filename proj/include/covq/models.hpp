#pragma once

// Ground-truth instance generators: generic tree models, small-block graphs,
// partial k-trees with a width certificate, and the adversarial star / d-ary
// families. Every instance carries its graph, an oracle parameterization
// (tree edge correlations or an explicit precision matrix) and, when
// materialized, the true precision K with support(K) = E(G) exactly.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "covq/graph.hpp"
#include "covq/oracle.hpp"

namespace covq {

enum class ModelKind { Tree, SmallBlock, PartialKTree, AdversarialStar, AdversarialDary };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelParams {
    int d = 0;                    // degree-type bound (meaning depends on kind)
    int b = 0;                    // block size bound
    int k = 0;                    // treewidth bound
    int h = 0;                    // d-ary height
    double corr_lo = 0.2;
    double corr_hi = 0.9;
    double edge_keep_prob = 1.0;
    int diameter_cap = 0;         // 0 = unconstrained (tree generator only)
};

struct AdversarialStarSpec {
    int bernoulli_b = 0;
    int i_idx = 0, j_idx = 0;
    std::vector<double> u;  // U_1..U_{n-1} indexed by vertex (u[0] unused)
};

struct DaryMove {
    int branch;       // index of the depth-1 subtree
    int leaf_from;    // leaf slot within the branch (0..d-1)
    int leaf_to;      // sibling leaf slot it re-attaches to
};

struct ModelInstance {
    ModelKind kind = ModelKind::Tree;
    Graph graph;
    std::uint64_t seed = 0;
    ModelParams params;

    // Tree-like kinds: one correlation per graph.edges() entry.
    std::vector<double> edge_rho;

    // True precision as sparse triplets (i <= j, diagonal included).
    std::vector<std::tuple<int, int, double>> true_precision;

    // Dense covariance, materialized for non-tree kinds (row-major, n*n).
    std::vector<double> sigma_dense;

    // Width-k tree decomposition certificate (partial k-tree kind).
    std::vector<std::vector<int>> tw_bags;
    std::vector<int> tw_bag_parent;

    std::optional<AdversarialStarSpec> star;

    int n() const { return graph.size(); }
    bool tree_backed() const;
    std::shared_ptr<CovarianceOracle> make_exact_oracle() const;
    // Dense covariance whatever the kind (tree kinds evaluate the product
    // formula); intended for tests and small n.
    std::vector<double> materialize_sigma() const;
};

inline constexpr int kDefaultMaterializeCap = 5000;

// Uniform random recursive attachment under a degree cap; each edge weight
// |rho| uniform in [corr_lo, corr_hi] with a random sign. diameter_cap > 0
// additionally restricts depth so the tree diameter stays at most the cap.
ModelInstance gen_tree_model(int n, int max_degree, double corr_lo, double corr_hi,
                             std::uint64_t seed, int diameter_cap = 0);

// Random block tree with 2-connected blocks of size <= b glued at cut
// vertices; block-cut-tree degree <= d. K built edge-wise (diagonally
// dominant), Sigma = K^{-1} materialized.
ModelInstance gen_small_block_model(int n, int max_block, int max_bc_degree,
                                    std::uint64_t seed,
                                    int materialize_cap = kDefaultMaterializeCap);

// Random k-tree grown by simplicial addition under a degree budget, then
// random edge deletions that keep the graph connected. Records the width-k
// decomposition certificate.
ModelInstance gen_partial_ktree_model(int n, int treewidth, int max_degree,
                                      double edge_keep_prob, std::uint64_t seed,
                                      int materialize_cap = kDefaultMaterializeCap);

// The lower-bound star family: twins differing only at entry (I,J).
std::pair<ModelInstance, ModelInstance> gen_adversarial_star(int n, std::uint64_t seed);

// Complete d-ary tree of height h with at most one leaf per bottom branch
// re-attached to a sibling leaf. Empty moves = the complete tree.
ModelInstance gen_adversarial_dary(int d, int h, const std::vector<DaryMove>& moves,
                                   std::uint64_t seed);

// Instance bundle on disk: graph.txt, model.json, optional sigma.covq,
// precision.txt with header "n nnz" then "i j value" triplets.
void save_bundle(const ModelInstance& inst, const std::string& dir);
ModelInstance load_bundle(const std::string& dir);

void save_precision_triplets(const std::vector<std::tuple<int, int, double>>& triplets,
                             int n, const std::string& path);
std::pair<int, std::vector<std::tuple<int, int, double>>> load_precision_triplets(
    const std::string& path);

}  // namespace covq
