#include "covq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "covq/kernels.hpp"
#include "covq/rng.hpp"

namespace covq {

namespace {

std::uint64_t pair_key(int i, int j) {
    if (i > j) std::swap(i, j);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
           static_cast<std::uint32_t>(j);
}

}  // namespace

// ---------------------------------------------------------------------------
// DenseOracle

DenseOracle::DenseOracle(int n, std::vector<double> row_major)
    : n_(n), data_(std::move(row_major)) {
    if (data_.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw std::invalid_argument("dense oracle: data size mismatch");
    for (int i = 0; i < n_; ++i)
        for (int j = i + 1; j < n_; ++j)
            if (data_[static_cast<std::size_t>(i) * n_ + j] !=
                data_[static_cast<std::size_t>(j) * n_ + i])
                throw std::invalid_argument("dense oracle: matrix not symmetric");
}

double DenseOracle::query(int i, int j) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_)
        throw std::out_of_range("oracle query index out of range");
    return data_[static_cast<std::size_t>(i) * n_ + j];
}

// ---------------------------------------------------------------------------
// TreeOracle

TreeOracle::TreeOracle(const Graph& tree, const std::vector<double>& edge_rho)
    : n_(tree.size()) {
    auto edge_list = tree.edges();
    if (edge_list.size() != edge_rho.size())
        throw std::invalid_argument("tree oracle: one correlation per edge required");
    if (!is_tree(tree)) throw std::invalid_argument("tree oracle: graph is not a tree");
    for (std::size_t k = 0; k < edge_list.size(); ++k) {
        double r = edge_rho[k];
        if (!(std::fabs(r) > 0.0 && std::fabs(r) < 1.0))
            throw std::invalid_argument("tree oracle: |rho| must lie in (0,1)");
        rho_by_edge_[pair_key(edge_list[k].first, edge_list[k].second)] = r;
    }

    parent_.assign(static_cast<std::size_t>(n_), -1);
    depth_.assign(static_cast<std::size_t>(n_), 0);
    logmag_prefix_.assign(static_cast<std::size_t>(n_), 0.0);
    sign_prefix_.assign(static_cast<std::size_t>(n_), 0);
    euler_pos_.assign(static_cast<std::size_t>(n_), -1);

    // DFS from 0 building prefix sums and the Euler tour for O(1) LCA.
    euler_vertex_.reserve(2 * static_cast<std::size_t>(n_));
    euler_depth_.reserve(2 * static_cast<std::size_t>(n_));
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto& [u, cursor] = stack.back();
        if (cursor == 0) {
            euler_pos_[static_cast<std::size_t>(u)] = static_cast<int>(euler_vertex_.size());
            euler_vertex_.push_back(u);
            euler_depth_.push_back(depth_[static_cast<std::size_t>(u)]);
        }
        const auto& nb = tree.neighbors(u);
        if (cursor < nb.size()) {
            int v = nb[cursor++];
            if (v == parent_[static_cast<std::size_t>(u)]) continue;
            double r = rho_by_edge_.at(pair_key(u, v));
            parent_[static_cast<std::size_t>(v)] = u;
            depth_[static_cast<std::size_t>(v)] = depth_[static_cast<std::size_t>(u)] + 1;
            logmag_prefix_[static_cast<std::size_t>(v)] =
                logmag_prefix_[static_cast<std::size_t>(u)] + std::log(std::fabs(r));
            sign_prefix_[static_cast<std::size_t>(v)] =
                static_cast<std::uint8_t>(sign_prefix_[static_cast<std::size_t>(u)] ^ (r < 0.0 ? 1 : 0));
            stack.emplace_back(v, 0);
        } else {
            stack.pop_back();
            if (!stack.empty()) {
                euler_vertex_.push_back(stack.back().first);
                euler_depth_.push_back(depth_[static_cast<std::size_t>(stack.back().first)]);
            }
        }
    }

    // sparse table over the Euler depths
    const std::size_t m = euler_depth_.size();
    int levels = 1;
    while ((std::size_t{1} << levels) <= m) ++levels;
    sparse_.assign(static_cast<std::size_t>(levels), std::vector<int>(m));
    for (std::size_t i = 0; i < m; ++i) sparse_[0][i] = static_cast<int>(i);
    for (int l = 1; l < levels; ++l) {
        const std::size_t half = std::size_t{1} << (l - 1);
        for (std::size_t i = 0; i + (std::size_t{1} << l) <= m; ++i) {
            int a = sparse_[static_cast<std::size_t>(l - 1)][i];
            int b = sparse_[static_cast<std::size_t>(l - 1)][i + half];
            sparse_[static_cast<std::size_t>(l)][i] =
                euler_depth_[static_cast<std::size_t>(a)] <= euler_depth_[static_cast<std::size_t>(b)] ? a : b;
        }
    }
}

int TreeOracle::lca(int u, int v) const {
    int a = euler_pos_[static_cast<std::size_t>(u)];
    int b = euler_pos_[static_cast<std::size_t>(v)];
    if (a > b) std::swap(a, b);
    const int len = b - a + 1;
    const int l = 31 - __builtin_clz(static_cast<unsigned>(len));
    int x = sparse_[static_cast<std::size_t>(l)][static_cast<std::size_t>(a)];
    int y = sparse_[static_cast<std::size_t>(l)][static_cast<std::size_t>(b - (1 << l) + 1)];
    int pos = euler_depth_[static_cast<std::size_t>(x)] <= euler_depth_[static_cast<std::size_t>(y)] ? x : y;
    return euler_vertex_[static_cast<std::size_t>(pos)];
}

std::pair<double, int> TreeOracle::query_log(int i, int j) const {
    if (i == j) return {0.0, +1};
    int l = lca(i, j);
    double lm = logmag_prefix_[static_cast<std::size_t>(i)] +
                logmag_prefix_[static_cast<std::size_t>(j)] -
                2.0 * logmag_prefix_[static_cast<std::size_t>(l)];
    int sgn = (sign_prefix_[static_cast<std::size_t>(i)] ^ sign_prefix_[static_cast<std::size_t>(j)]) ? -1 : +1;
    return {lm, sgn};
}

double TreeOracle::query(int i, int j) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_)
        throw std::out_of_range("oracle query index out of range");
    if (i == j) return 1.0;
    auto [lm, sgn] = query_log(i, j);
    return sgn * std::exp(lm);
}

void TreeOracle::query_batch(const int* is, const int* js, double* out, std::size_t count) {
    // gather log-magnitudes, one vectorized exp pass, then signs
    static thread_local std::vector<double> logs;
    static thread_local std::vector<std::uint8_t> signs;
    logs.resize(count);
    signs.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        int i = is[k], j = js[k];
        if (i == j) {
            logs[k] = 0.0;
            signs[k] = 0;
            continue;
        }
        int l = lca(i, j);
        logs[k] = logmag_prefix_[static_cast<std::size_t>(i)] +
                  logmag_prefix_[static_cast<std::size_t>(j)] -
                  2.0 * logmag_prefix_[static_cast<std::size_t>(l)];
        signs[k] = static_cast<std::uint8_t>(sign_prefix_[static_cast<std::size_t>(i)] ^
                                             sign_prefix_[static_cast<std::size_t>(j)]);
    }
    kernels::ops().exp_batch(logs.data(), out, count);
    for (std::size_t k = 0; k < count; ++k)
        if (signs[k]) out[k] = -out[k];
}

double TreeOracle::edge_correlation(int u, int v) const {
    return rho_by_edge_.at(pair_key(u, v));
}

// ---------------------------------------------------------------------------
// NoiseModel / NoisyOracle

double NoiseModel::epsilon_validity_bound() const {
    return 0.125 * std::pow(delta_edge, diameter) * (1.0 - gamma_edge * gamma_edge);
}

bool NoiseModel::valid() const {
    return delta_edge > 0.0 && delta_edge < gamma_edge && gamma_edge < 1.0 &&
           epsilon <= epsilon_validity_bound();
}

NoisyOracle::NoisyOracle(std::shared_ptr<CovarianceOracle> base, NoiseModel nm, std::uint64_t seed)
    : base_(std::move(base)), nm_(nm), seed_(seed) {}

double NoisyOracle::query(int i, int j) {
    if (i == j) return 1.0;  // sigma_ii assumed known exactly
    double sigma = base_->query(i, j);
    Rng rng(hash_combine(hash_combine(seed_, pair_key(i, j)), 0x6f72616b6c65ULL));
    double u = rng.uniform(-nm_.epsilon, nm_.epsilon);
    return std::clamp(sigma + u, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// SampledOracle

SampledOracleConfig SampledOracleConfig::with_guarantee(int n, double epsilon, double eta,
                                                        double kappa4) {
    SampledOracleConfig cfg;
    cfg.epsilon = epsilon;
    cfg.eta = eta;
    cfg.kappa4 = kappa4;
    double ratio = kappa4 / epsilon;
    double lg = std::log(static_cast<double>(n) / eta);
    cfg.samples_per_pair = static_cast<std::uint64_t>(std::ceil(32.0 * ratio * ratio * lg));
    cfg.blocks = static_cast<int>(std::ceil(8.0 * lg));
    return cfg;
}

SampledOracle::SampledOracle(const Graph& tree, const std::vector<double>& edge_rho,
                             SampledOracleConfig cfg, std::uint64_t seed)
    : truth_(tree, edge_rho), tree_(tree), cfg_(cfg), seed_(seed) {
    if (cfg_.samples_per_pair == 0 || cfg_.blocks <= 0)
        throw std::invalid_argument("sampled oracle: N and blocks must be positive");
}

double SampledOracle::block_mean_literal(double rho, std::uint64_t m, Rng& rng) const {
    // i.i.d. bivariate pairs through the structural equation reduced to the
    // queried pair: X ~ N(0,1), Y = rho X + sqrt(1-rho^2) Z.
    const double c = std::sqrt(1.0 - rho * rho);
    double sum = 0.0;
    for (std::uint64_t t = 0; t < m; ++t) {
        double x = rng.next_normal();
        double y = rho * x + c * rng.next_normal();
        sum += x * y;
    }
    return sum / static_cast<double>(m);
}

double SampledOracle::block_mean_fast(double rho, std::uint64_t m, Rng& rng) const {
    // Polarization: X*Y = ((X+Y)^2 - (X-Y)^2)/4 with X+Y, X-Y independent
    // N(0, 2(1+rho)) and N(0, 2(1-rho)). The block sum is therefore
    // ((1+rho) Q1 - (1-rho) Q2)/2 with Q1, Q2 independent chi-square(m) --
    // the exact law of the literal sum, drawn in O(1).
    double q1 = rng.next_chisquare(static_cast<double>(m));
    double q2 = rng.next_chisquare(static_cast<double>(m));
    return 0.5 * ((1.0 + rho) * q1 - (1.0 - rho) * q2) / static_cast<double>(m);
}

double SampledOracle::estimate_for(double rho, std::uint64_t pair_seed) const {
    Rng rng(pair_seed);
    const int blocks = cfg_.blocks;
    const std::uint64_t base_size = cfg_.samples_per_pair / blocks;
    std::uint64_t remainder = cfg_.samples_per_pair % blocks;
    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(blocks));
    for (int b = 0; b < blocks; ++b) {
        std::uint64_t m = base_size + (static_cast<std::uint64_t>(b) < remainder ? 1 : 0);
        if (m == 0) continue;
        means.push_back(m <= cfg_.literal_block_limit ? block_mean_literal(rho, m, rng)
                                                      : block_mean_fast(rho, m, rng));
    }
    std::sort(means.begin(), means.end());
    double med = means.size() % 2 == 1
                     ? means[means.size() / 2]
                     : 0.5 * (means[means.size() / 2 - 1] + means[means.size() / 2]);
    return std::clamp(med, -1.0, 1.0);
}

double SampledOracle::query(int i, int j) {
    if (i == j) return 1.0;
    const std::uint64_t key = pair_key(i, j);
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    double rho = truth_.query(i, j);
    double est = estimate_for(rho, hash_combine(hash_combine(seed_, key), 0x73616d706cULL));
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(key, est).first->second;
}

// ---------------------------------------------------------------------------
// CountingOracle

CountingOracle::CountingOracle(std::shared_ptr<CovarianceOracle> base, bool cache_values)
    : base_(std::move(base)),
      n_(base_->dim()),
      cache_values_(cache_values),
      start_(std::chrono::steady_clock::now()) {
    const std::uint64_t pairs =
        static_cast<std::uint64_t>(n_) * (static_cast<std::uint64_t>(n_) + 1) / 2;
    seen_bits_ = std::vector<std::atomic<std::uint64_t>>((pairs + 63) / 64);
    for (auto& w : seen_bits_) w.store(0, std::memory_order_relaxed);
}

std::uint64_t CountingOracle::pair_index(int i, int j) const {
    if (i > j) std::swap(i, j);
    const std::uint64_t ui = static_cast<std::uint64_t>(i);
    const std::uint64_t un = static_cast<std::uint64_t>(n_);
    // row-major upper triangle including the diagonal
    return ui * un - ui * (ui - 1) / 2 + (static_cast<std::uint64_t>(j) - ui);
}

bool CountingOracle::mark_distinct(std::uint64_t idx) {
    auto& word = seen_bits_[idx >> 6];
    const std::uint64_t bit = std::uint64_t{1} << (idx & 63);
    if (word.load(std::memory_order_relaxed) & bit) return false;
    return (word.fetch_or(bit, std::memory_order_relaxed) & bit) == 0;
}

double CountingOracle::query(int i, int j) {
    raw_.fetch_add(1, std::memory_order_relaxed);
    const std::uint64_t idx = pair_index(i, j);
    const bool fresh = mark_distinct(idx);
    if (fresh) distinct_.fetch_add(1, std::memory_order_relaxed);
    if (cache_values_) {
        const std::uint64_t key = pair_key(i, j);
        std::lock_guard<std::mutex> lock(values_mu_);
        auto it = values_.find(key);
        if (it != values_.end()) return it->second;
        double v = base_->query(i, j);
        values_.emplace(key, v);
        return v;
    }
    return base_->query(i, j);
}

void CountingOracle::query_batch(const int* is, const int* js, double* out, std::size_t count) {
    raw_.fetch_add(count, std::memory_order_relaxed);
    // prefetch the bitmap words so random-access membership tests pipeline
    static thread_local std::vector<std::uint64_t> idx;
    idx.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        idx[k] = pair_index(is[k], js[k]);
        __builtin_prefetch(&seen_bits_[idx[k] >> 6], 1, 1);
    }
    std::uint64_t fresh = 0;
    for (std::size_t k = 0; k < count; ++k)
        if (mark_distinct(idx[k])) ++fresh;
    distinct_.fetch_add(fresh, std::memory_order_relaxed);
    if (cache_values_) {
        for (std::size_t k = 0; k < count; ++k) {
            const std::uint64_t key = pair_key(is[k], js[k]);
            std::lock_guard<std::mutex> lock(values_mu_);
            auto it = values_.find(key);
            if (it == values_.end())
                it = values_.emplace(key, base_->query(is[k], js[k])).first;
            out[k] = it->second;
        }
        return;
    }
    base_->query_batch(is, js, out, count);
}

QueryStats CountingOracle::stats() const {
    QueryStats s;
    s.raw_queries = raw_.load(std::memory_order_relaxed);
    s.distinct_queries = distinct_.load(std::memory_order_relaxed);
    s.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return s;
}

void CountingOracle::reset_stats() {
    raw_.store(0, std::memory_order_relaxed);
    distinct_.store(0, std::memory_order_relaxed);
    for (auto& w : seen_bits_) w.store(0, std::memory_order_relaxed);
    std::lock_guard<std::mutex> lock(values_mu_);
    values_.clear();
    start_ = std::chrono::steady_clock::now();
}

// ---------------------------------------------------------------------------
// COVQ1 file format

void save_covq(const std::string& path, int n, const std::vector<double>& row_major) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write covariance file: " + path);
    out.write("COVQ1", 5);
    std::uint64_t dim = static_cast<std::uint64_t>(n);
    out.write(reinterpret_cast<const char*>(&dim), 8);
    out.write(reinterpret_cast<const char*>(row_major.data()),
              static_cast<std::streamsize>(row_major.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write: " + path);
}

std::shared_ptr<DenseOracle> load_covq(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open covariance file: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "COVQ1", 5) != 0)
        throw std::runtime_error("bad magic in covariance file: " + path);
    std::uint64_t dim = 0;
    in.read(reinterpret_cast<char*>(&dim), 8);
    std::vector<double> data(dim * dim);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated covariance file: " + path);
    return std::make_shared<DenseOracle>(static_cast<int>(dim), std::move(data));
}

}  // namespace covq
