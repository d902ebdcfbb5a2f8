#pragma once

// The covariance oracle: the sole data-access channel of every recovery
// algorithm. Backends answer single entries sigma_ij; the counting wrapper
// adds raw/distinct accounting so query complexity can be reported and
// benchmarked. Query complexity is the number of entries requested; distinct
// counts deduplicate repeats of the same unordered pair.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "covq/graph.hpp"

namespace covq {

class CovarianceOracle {
public:
    virtual ~CovarianceOracle() = default;
    virtual int dim() const = 0;
    virtual double query(int i, int j) = 0;

    // Batched lookup; backends may vectorize. Semantics identical to a loop.
    virtual void query_batch(const int* is, const int* js, double* out, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) out[k] = query(is[k], js[k]);
    }
};

struct QueryStats {
    std::uint64_t raw_queries = 0;
    std::uint64_t distinct_queries = 0;
    double wall_seconds = 0.0;
};

// Exact dense backend over a materialized symmetric positive definite matrix.
class DenseOracle final : public CovarianceOracle {
public:
    DenseOracle(int n, std::vector<double> row_major);
    int dim() const override { return n_; }
    double query(int i, int j) override;
    const std::vector<double>& data() const { return data_; }

private:
    int n_;
    std::vector<double> data_;
};

// Lazy tree backend: sigma_ij is the product of edge correlations along the
// unique i-j path (unit diagonal). Log-magnitudes and sign parities are kept
// as root-prefix sums so deep paths do not underflow intermediate products;
// pairwise values come out of one O(1) LCA lookup plus an exp.
class TreeOracle final : public CovarianceOracle {
public:
    // edge_rho[k] corresponds to edges[k] of the tree; each |rho| in (0,1).
    TreeOracle(const Graph& tree, const std::vector<double>& edge_rho);
    int dim() const override { return n_; }
    double query(int i, int j) override;
    void query_batch(const int* is, const int* js, double* out, std::size_t count) override;

    // log |sigma_ij| and sign, exact in log space (test/verification hook).
    std::pair<double, int> query_log(int i, int j) const;
    double edge_correlation(int u, int v) const;

private:
    int lca(int u, int v) const;
    int n_;
    std::vector<int> parent_, depth_, euler_pos_;
    std::vector<double> logmag_prefix_;   // sum of log|rho| on root path
    std::vector<std::uint8_t> sign_prefix_;  // parity of negative rhos on root path
    std::vector<int> euler_depth_, euler_vertex_;
    std::vector<std::vector<int>> sparse_;  // RMQ over euler_depth_
    std::unordered_map<std::uint64_t, double> rho_by_edge_;
};

struct NoiseModel {
    double epsilon = 0.0;          // entrywise bound, Eq. (13)
    double delta_edge = 0.0;       // lower |sigma| bound on edges
    double gamma_edge = 0.0;       // upper |sigma| bound on edges
    int diameter = 0;              // D
    enum class Mode { AdversarialUniform, Sampled } mode = Mode::AdversarialUniform;

    // epsilon <= (1/8) delta^D (1 - gamma^2)
    double epsilon_validity_bound() const;
    bool valid() const;
};

// Entrywise-noisy wrapper: sigma_ij + u with u drawn once per unordered pair
// uniformly from (-eps, eps) and frozen thereafter (the oracle is a fixed
// function of (i,j)); result clamped to [-1,1]; the diagonal returns exactly 1.
// The per-pair draw is a pure function of (seed,i,j), so repeated queries are
// consistent regardless of order or thread interleaving.
class NoisyOracle final : public CovarianceOracle {
public:
    NoisyOracle(std::shared_ptr<CovarianceOracle> base, NoiseModel nm, std::uint64_t seed);
    int dim() const override { return base_->dim(); }
    double query(int i, int j) override;

private:
    std::shared_ptr<CovarianceOracle> base_;
    NoiseModel nm_;
    std::uint64_t seed_;
};

struct SampledOracleConfig {
    std::uint64_t samples_per_pair = 0;  // N
    int blocks = 0;                      // median-of-means block count
    double kappa4 = 3.0;                 // fourth-moment bound (3 for Gaussians)
    double eta = 0.05;                   // failure probability
    double epsilon = 0.0;                // target accuracy
    // Block sums switch from literal pair simulation to the exact-law
    // chi-square form above this block size; both paths sample the same
    // distribution (see oracle.cpp).
    std::uint64_t literal_block_limit = 1u << 16;

    // N >= 32 (kappa4/eps)^2 log(n/eta), blocks = ceil(8 log(n/eta)).
    static SampledOracleConfig with_guarantee(int n, double epsilon, double eta,
                                              double kappa4 = 3.0);
};

// Sample-based estimator backend for tree models: on first query of a pair
// the oracle draws N i.i.d. Gaussian pairs from the tree's structural
// equations and returns the median of block means of X_i * X_j, cached and
// clamped to [-1,1]. Diagonal returns 1 by convention.
class SampledOracle final : public CovarianceOracle {
public:
    SampledOracle(const Graph& tree, const std::vector<double>& edge_rho,
                  SampledOracleConfig cfg, std::uint64_t seed);
    int dim() const override { return truth_.dim(); }
    double query(int i, int j) override;

    // exposed for the distribution-equivalence tests
    double block_mean_literal(double rho, std::uint64_t m, class Rng& rng) const;
    double block_mean_fast(double rho, std::uint64_t m, class Rng& rng) const;
    double estimate_for(double rho, std::uint64_t pair_seed) const;

private:
    TreeOracle truth_;
    Graph tree_;
    std::vector<int> parent_order_;
    SampledOracleConfig cfg_;
    std::uint64_t seed_;
    std::unordered_map<std::uint64_t, double> cache_;
    std::mutex mu_;
};

// Adds QueryStats and the distinct-query memo. Values pass through untouched.
// Raw counts every request; distinct counts each unordered pair once. An
// optional value cache serves repeats without touching the base oracle (used
// for expensive backends; cheap deterministic backends skip it).
class CountingOracle final : public CovarianceOracle {
public:
    explicit CountingOracle(std::shared_ptr<CovarianceOracle> base, bool cache_values = false);
    int dim() const override { return base_->dim(); }
    double query(int i, int j) override;
    void query_batch(const int* is, const int* js, double* out, std::size_t count) override;
    QueryStats stats() const;
    void reset_stats();

private:
    std::uint64_t pair_index(int i, int j) const;
    bool mark_distinct(std::uint64_t idx);

    std::shared_ptr<CovarianceOracle> base_;
    int n_;
    bool cache_values_;
    std::atomic<std::uint64_t> raw_{0};
    std::atomic<std::uint64_t> distinct_{0};
    std::vector<std::atomic<std::uint64_t>> seen_bits_;  // triangular bitmap
    std::unordered_map<std::uint64_t, double> values_;
    std::mutex values_mu_;
    std::chrono::steady_clock::time_point start_;
};

// Dense covariance file: magic "COVQ1", dimension as 8-byte little-endian
// unsigned, then n*n row-major doubles (little-endian IEEE-754).
void save_covq(const std::string& path, int n, const std::vector<double>& row_major);
std::shared_ptr<DenseOracle> load_covq(const std::string& path);

}  // namespace covq
