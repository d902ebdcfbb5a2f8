#include "covq/treewidth_recovery.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <map>
#include <cmath>
#include <fstream>
#include <numeric>

#include "covq/kernels.hpp"
#include "covq/models.hpp"

namespace covq {

namespace {

std::uint64_t pack_pair(int i, int j) {
    if (i > j) std::swap(i, j);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
           static_cast<std::uint32_t>(j);
}

}  // namespace

// ---------------------------------------------------------------------------
// PrecisionEstimate

void PrecisionEstimate::set(int i, int j, double v) { entries_[pack_pair(i, j)] = v; }

void PrecisionEstimate::add(int i, int j, double v) { entries_[pack_pair(i, j)] += v; }

double PrecisionEstimate::get(int i, int j) const {
    auto it = entries_.find(pack_pair(i, j));
    return it == entries_.end() ? 0.0 : it->second;
}

double PrecisionEstimate::max_abs_diag() const {
    double m = 0.0;
    for (const auto& [key, v] : entries_)
        if ((key >> 32) == (key & 0xffffffffULL)) m = std::max(m, std::fabs(v));
    return m;
}

std::vector<std::pair<int, int>> PrecisionEstimate::support(double rel_tol) const {
    const double tol = rel_tol * max_abs_diag();
    std::vector<std::pair<int, int>> edges;
    for (const auto& [key, v] : entries_) {
        int i = static_cast<int>(key >> 32);
        int j = static_cast<int>(key & 0xffffffffULL);
        if (i != j && std::fabs(v) > tol) edges.emplace_back(i, j);
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

DenseMatrix PrecisionEstimate::to_dense() const {
    DenseMatrix m(n_, n_);
    for (const auto& [key, v] : entries_) {
        int i = static_cast<int>(key >> 32);
        int j = static_cast<int>(key & 0xffffffffULL);
        m.at(i, j) = v;
        m.at(j, i) = v;
    }
    return m;
}

void PrecisionEstimate::save(const std::string& path) const {
    std::vector<std::tuple<int, int, double>> trip;
    trip.reserve(entries_.size());
    for (const auto& [key, v] : entries_)
        trip.emplace_back(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffULL), v);
    std::sort(trip.begin(), trip.end());
    save_precision_triplets(trip, n_, path);
}

PrecisionEstimate PrecisionEstimate::load(const std::string& path) {
    auto [n, trip] = load_precision_triplets(path);
    PrecisionEstimate est(n);
    for (auto [i, j, v] : trip) est.set(i, j, v);
    return est;
}

// ---------------------------------------------------------------------------
// window sizes

int practical_m(int n, int k, double c_m) {
    int by_log = static_cast<int>(std::ceil(c_m * k * std::log(std::max(2, n))));
    return std::max(6 * (k + 1), by_log);
}

std::uint64_t theoretical_m(int k, double delta, double tau) {
    const double r = 11.0 * k;
    const double a = 10.0 * r / (delta * delta) * std::log(8.0 * r / (delta * delta));
    const double b = 2.0 / (delta * delta) * std::log(2.0 / tau);
    return static_cast<std::uint64_t>(std::ceil(std::max(a, b)));
}

int SeparatorConfig::effective_m(int n) const {
    if (m > 0) return m;
    if (mode == MMode::Theoretical) {
        std::uint64_t tm = theoretical_m(k, delta_vc, tau_vc);
        return tm > static_cast<std::uint64_t>(n) ? n : static_cast<int>(tm);
    }
    return practical_m(n, k, c_m);
}

// ---------------------------------------------------------------------------
// rank helpers

namespace {

// rank of Sigma_{rows, cols} with early termination above `cap`
int rank_of(CovarianceOracle& oracle, const std::vector<int>& rows,
            const std::vector<int>& cols, int cap, const RankConfig& rank_cfg) {
    DenseMatrix m = submatrix(oracle, rows, cols);
    return rank_capped(m, cap, rank_cfg.rel_tol);
}

std::vector<int> concat_sorted_unique(std::vector<int> base, const std::vector<int>& extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
    return base;
}

}  // namespace

namespace {

// true iff cond ∪ s separates a and b (both augmented sides contain cond ∪ s,
// so the rank equals |cond|+|s| exactly when that set itself is a separator)
bool set_separates(CovarianceOracle& oracle, const std::vector<int>& a,
                   const std::vector<int>& b, const std::vector<int>& cond,
                   const std::vector<int>& s, const RankConfig& rank_cfg) {
    std::vector<int> cs = concat_sorted_unique(cond, s);
    std::vector<int> rows = concat_sorted_unique(a, cs);
    std::vector<int> cols = concat_sorted_unique(b, cs);
    const int want = static_cast<int>(cs.size());
    return rank_of(oracle, rows, cols, want, rank_cfg) == want;
}

}  // namespace

std::vector<int> ab_separator(const std::vector<int>& view, const std::vector<int>& a,
                              const std::vector<int>& b, const std::vector<int>& cond,
                              CovarianceOracle& oracle, const SeparatorConfig& cfg) {
    std::vector<int> rows0 = concat_sorted_unique(a, cond);
    std::vector<int> cols0 = concat_sorted_unique(b, cond);

    DenseMatrix base = submatrix(oracle, rows0, cols0);
    const int r = numerical_rank(base, {cfg.rank.rel_tol, RankMethod::Elimination});
    const int target = r - static_cast<int>(cond.size());
    if (target <= 0) return {};

    std::vector<char> is_endpoint(static_cast<std::size_t>(oracle.dim()), 0);
    for (int v : a) is_endpoint[static_cast<std::size_t>(v)] = 1;
    for (int v : b) is_endpoint[static_cast<std::size_t>(v)] = 1;

    // first pass: vertices lying on some minimum-size separator of (a, b);
    // interior vertices (outside A u B) first -- separators that avoid the
    // terminals are the useful splits
    std::vector<int> u_interior, u_endpoint;
    {
        std::vector<int> rows = rows0, cols = cols0;
        rows.push_back(-1);
        cols.push_back(-1);
        for (int v : view) {
            rows.back() = v;
            cols.back() = v;
            if (rank_of(oracle, rows, cols, r, cfg.rank) == r)
                (is_endpoint[static_cast<std::size_t>(v)] ? u_endpoint : u_interior).push_back(v);
        }
    }

    // greedy growth over a candidate pool; returns the separator or empty
    auto grow = [&](const std::vector<int>& pool) {
        std::vector<int> c;
        std::vector<int> rows, cols;
        for (int u : pool) {
            if (static_cast<int>(c.size()) >= target) break;
            if (!c.empty()) {
                rows.assign(rows0.begin(), rows0.end());
                cols.assign(cols0.begin(), cols0.end());
                rows.insert(rows.end(), c.begin(), c.end());
                cols.insert(cols.end(), c.begin(), c.end());
                rows.push_back(u);
                cols.push_back(u);
                if (rank_of(oracle, rows, cols, r, cfg.rank) != r) continue;
            }
            c.push_back(u);
        }
        return c;
    };

    std::vector<int> c = grow(u_interior);
    if (static_cast<int>(c.size()) == target) {
        std::sort(c.begin(), c.end());
        return c;
    }

    // No minimum-size separator avoids the terminals. Look for the smallest
    // interior separator above the rank bound (exhaustive, with a cost cap --
    // this only triggers on tiny or degenerate inputs such as singleton
    // terminal pairs; the recursive pipeline's partitions never get here).
    std::vector<int> interior;
    for (int v : view)
        if (!is_endpoint[static_cast<std::size_t>(v)]) interior.push_back(v);
    const int pool = static_cast<int>(interior.size());
    if (pool <= 20) {
        const int cap = std::min(pool, std::max(target + 3, cfg.k + 2));
        for (int size = target; size <= cap; ++size) {
            std::vector<int> idx(static_cast<std::size_t>(size));
            for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
            for (;;) {
                std::vector<int> s;
                for (int i : idx) s.push_back(interior[static_cast<std::size_t>(i)]);
                if (set_separates(oracle, a, b, cond, s, cfg.rank)) return s;
                int i = size - 1;
                while (i >= 0 && idx[static_cast<std::size_t>(i)] == pool - size + i) --i;
                if (i < 0) break;
                ++idx[static_cast<std::size_t>(i)];
                for (int j = i + 1; j < size; ++j)
                    idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
            }
        }
    }

    // fall back to the rank-minimal separator, endpoints admitted
    std::vector<int> all = u_interior;
    all.insert(all.end(), u_endpoint.begin(), u_endpoint.end());
    if (all.empty())
        throw RecoveryError(
            "ab_separator: no separator vertices found (rank/tolerance inconsistency)");
    c = grow(all);
    std::sort(c.begin(), c.end());
    return c;
}

// ---------------------------------------------------------------------------
// balanced-partition search over the sampled window

namespace {

struct WindowMatrix {
    std::vector<int> verts;    // deduplicated window W
    std::vector<int> cond;
    DenseMatrix full;          // Sigma over W then cond, one query pass
    DenseMatrix cond_cov;      // conditional covariance of W given cond
    // scale-free affinity: conditional correlation magnitude
    double affinity(int wi, int wj) const {
        return std::fabs(cond_cov.at(wi, wj)) /
               std::sqrt(cond_cov.at(wi, wi) * cond_cov.at(wj, wj));
    }
};

WindowMatrix build_window(const std::vector<int>& view, const std::vector<int>& cond,
                          CovarianceOracle& oracle, int m, Rng& rng) {
    WindowMatrix w;
    w.cond = cond;
    // sample with replacement, keep the distinct vertices
    std::vector<int> draw(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t)
        draw[static_cast<std::size_t>(t)] = view[rng.next_below(view.size())];
    std::sort(draw.begin(), draw.end());
    draw.erase(std::unique(draw.begin(), draw.end()), draw.end());
    w.verts = std::move(draw);

    std::vector<int> all = w.verts;
    all.insert(all.end(), cond.begin(), cond.end());
    w.full = submatrix(oracle, all, all);
    w.cond_cov = conditional_covariance(oracle, w.verts, cond);
    return w;
}

// rank (capped) of Sigma_{A u cond, B u cond} assembled from the cached window
int window_rank(const WindowMatrix& w, const std::vector<int>& a_idx,
                const std::vector<int>& b_idx, int cap, double rel_tol) {
    const int s = static_cast<int>(w.cond.size());
    const int nw = static_cast<int>(w.verts.size());
    DenseMatrix m(static_cast<int>(a_idx.size()) + s, static_cast<int>(b_idx.size()) + s);
    for (std::size_t i = 0; i < a_idx.size(); ++i) {
        for (std::size_t j = 0; j < b_idx.size(); ++j)
            m.at(static_cast<int>(i), static_cast<int>(j)) = w.full.at(a_idx[i], b_idx[j]);
        for (int j = 0; j < s; ++j)
            m.at(static_cast<int>(i), static_cast<int>(b_idx.size()) + j) =
                w.full.at(a_idx[i], nw + j);
    }
    for (int i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < b_idx.size(); ++j)
            m.at(static_cast<int>(a_idx.size()) + i, static_cast<int>(j)) =
                w.full.at(nw + i, b_idx[j]);
        for (int j = 0; j < s; ++j)
            m.at(static_cast<int>(a_idx.size()) + i, static_cast<int>(b_idx.size()) + j) =
                w.full.at(nw + i, nw + j);
    }
    return rank_capped(m, cap, rel_tol);
}

struct PartitionSearch {
    const WindowMatrix& w;
    const SeparatorConfig& cfg;
    int cap;             // |cond| + k + 1
    int budget;
    int best_rank = 1 << 30;
    std::vector<int> best_a, best_b;  // window indices
    bool found = false;

    // returns true when the candidate already meets the rank bound
    bool consider(const std::vector<int>& a_idx, const std::vector<int>& b_idx) {
        if (budget <= 0 || found) return found;
        const std::size_t nw = w.verts.size();
        const std::size_t limit = (2 * nw) / 3;
        if (a_idx.empty() || b_idx.empty() || a_idx.size() > limit || b_idx.size() > limit)
            return false;
        --budget;
        int r = window_rank(w, a_idx, b_idx, cap, cfg.rank.rel_tol);
        if (r < best_rank) {
            best_rank = r;
            best_a = a_idx;
            best_b = b_idx;
        }
        if (r <= cap) found = true;
        return found;
    }
};

// single-linkage merge ladder on |conditional covariance|: the components of
// the true balanced separator cluster together early, so grouping the current
// clusters into two balanced sides tends to realize a low-rank partition
void search_single_linkage(PartitionSearch& ps) {
    const int nw = static_cast<int>(ps.w.verts.size());
    std::vector<std::tuple<double, int, int>> merges;
    for (int i = 0; i < nw; ++i)
        for (int j = i + 1; j < nw; ++j) merges.emplace_back(ps.w.affinity(i, j), i, j);
    std::sort(merges.begin(), merges.end(), std::greater<>());

    std::vector<int> uf(static_cast<std::size_t>(nw));
    std::iota(uf.begin(), uf.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (uf[static_cast<std::size_t>(x)] != x) {
            uf[static_cast<std::size_t>(x)] = uf[static_cast<std::size_t>(uf[static_cast<std::size_t>(x)])];
            x = uf[static_cast<std::size_t>(x)];
        }
        return x;
    };

    auto emit_grouping = [&]() {
        // cluster sizes, largest-first greedy grouping into two light sides
        std::map<int, std::vector<int>> clusters;
        for (int i = 0; i < nw; ++i) clusters[find(i)].push_back(i);
        std::vector<const std::vector<int>*> ordered;
        for (auto& [root, members] : clusters) ordered.push_back(&members);
        std::sort(ordered.begin(), ordered.end(), [](auto* x, auto* y) {
            if (x->size() != y->size()) return x->size() > y->size();
            return x->front() < y->front();
        });
        std::vector<int> a, b;
        for (auto* cl : ordered) {
            auto& side = a.size() <= b.size() ? a : b;
            side.insert(side.end(), cl->begin(), cl->end());
        }
        ps.consider(a, b);
    };

    for (auto& [aff, i, j] : merges) {
        if (ps.found || ps.budget <= 0) return;
        int ri = find(i), rj = find(j);
        if (ri == rj) continue;
        uf[static_cast<std::size_t>(ri)] = rj;
        emit_grouping();
    }
}

void search_random(PartitionSearch& ps, Rng& rng, int tries) {
    const int nw = static_cast<int>(ps.w.verts.size());
    for (int t = 0; t < tries && !ps.found && ps.budget > 0; ++t) {
        std::vector<int> a, b;
        for (int i = 0; i < nw; ++i) (rng.next_bool() ? a : b).push_back(i);
        ps.consider(a, b);
    }
}

void search_affinity_sweep(PartitionSearch& ps, Rng& rng) {
    const int nw = static_cast<int>(ps.w.verts.size());
    std::vector<int> seeds(static_cast<std::size_t>(nw));
    std::iota(seeds.begin(), seeds.end(), 0);
    rng.shuffle(seeds);
    for (int seed_idx : seeds) {
        if (ps.found || ps.budget <= 0) return;
        std::vector<int> order(static_cast<std::size_t>(nw));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            double ax = ps.w.affinity(seed_idx, x), ay = ps.w.affinity(seed_idx, y);
            if (ax != ay) return ax > ay;
            return x < y;
        });
        const int lo = std::max(1, nw / 3);
        const int hi = (2 * nw) / 3;
        const int step = std::max(1, (hi - lo) / 6);
        for (int t = lo; t <= hi; t += step) {
            std::vector<int> a(order.begin(), order.begin() + t);
            std::vector<int> b(order.begin() + t, order.end());
            if (ps.consider(a, b)) return;
        }
    }
}

void search_exhaustive(PartitionSearch& ps) {
    const int nw = static_cast<int>(ps.w.verts.size());
    if (nw > 15) return;
    const std::uint32_t total = 1u << nw;
    for (std::uint32_t mask = 1; mask + 1 < total && !ps.found && ps.budget > 0; ++mask) {
        std::vector<int> a, b;
        for (int i = 0; i < nw; ++i) ((mask >> i) & 1u ? a : b).push_back(i);
        ps.consider(a, b);
    }
}

}  // namespace

std::vector<int> find_balanced_separator(const std::vector<int>& view,
                                         const std::vector<int>& cond,
                                         CovarianceOracle& oracle, const SeparatorConfig& cfg,
                                         Rng& rng) {
    const int m = std::min<int>(cfg.effective_m(oracle.dim()), static_cast<int>(view.size()));
    WindowMatrix w = build_window(view, cond, oracle, m, rng);
    if (w.verts.size() < 2) return {};

    PartitionSearch ps{w, cfg, static_cast<int>(cond.size()) + cfg.k + 1,
                       cfg.partition_budget};
    if (static_cast<int>(w.verts.size()) <= 15) {
        search_exhaustive(ps);
    } else {
        search_random(ps, rng, std::min(200, cfg.partition_budget / 4));
        if (!ps.found) search_single_linkage(ps);
        if (!ps.found) search_affinity_sweep(ps, rng);
    }
    if (ps.best_a.empty() || ps.best_b.empty()) return {};

    std::vector<int> a, b;
    for (int i : ps.best_a) a.push_back(w.verts[static_cast<std::size_t>(i)]);
    for (int i : ps.best_b) b.push_back(w.verts[static_cast<std::size_t>(i)]);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return ab_separator(view, a, b, cond, oracle, cfg);
}

// Guttman-reduced pair test, computed stably: rank(Sigma_{uSS',vSS'}) = r+1
// is equivalent to Sigma_{u,v|SS'} != 0, which is decided on the conditional
// correlation so that the threshold is scale-free. Conditional covariances
// decay exponentially with graph distance, so a rank tolerance relative to
// the largest matrix entry misclassifies far same-component pairs; the
// conditional variances are bounded below (>= 1/K_uu), which makes the
// correlation form reliable. One Cholesky of the conditioning block is
// shared across the whole split.
class ConditionalTester {
public:
    ConditionalTester(CovarianceOracle& oracle, std::vector<int> ss, double tol)
        : oracle_(oracle), ss_(std::move(ss)), tol_(tol) {
        const int s = static_cast<int>(ss_.size());
        if (s > 0) l_ = cholesky(submatrix(oracle_, ss_, ss_));
    }

    // conditional correlation of u and v given the conditioning set
    double cond_corr(int u, int v) {
        const auto& xu = prepare(u);
        const auto& xv = prepare(v);
        double suv = oracle_.query(u, v);
        double cc = suv - kernels::ops().dot(xu.x.data(), xv.x.data(), xu.x.size());
        return cc / std::sqrt(xu.cvar * xv.cvar);
    }

    bool same_component(int u, int v) { return std::fabs(cond_corr(u, v)) > tol_; }

private:
    struct Col {
        std::vector<double> x;  // L^{-1} Sigma_{ss,u}
        double cvar = 1.0;
    };

    const Col& prepare(int u) {
        auto it = cache_.find(u);
        if (it != cache_.end()) return it->second;
        Col col;
        const int s = static_cast<int>(ss_.size());
        col.x.resize(static_cast<std::size_t>(s));
        if (s > 0) {
            static thread_local std::vector<int> us;
            us.assign(static_cast<std::size_t>(s), u);
            oracle_.query_batch(ss_.data(), us.data(), col.x.data(),
                                static_cast<std::size_t>(s));
            for (int i = 0; i < s; ++i) {
                for (int k2 = 0; k2 < i; ++k2)
                    col.x[static_cast<std::size_t>(i)] -=
                        l_.at(i, k2) * col.x[static_cast<std::size_t>(k2)];
                col.x[static_cast<std::size_t>(i)] /= l_.at(i, i);
            }
        }
        double suu = oracle_.query(u, u);
        col.cvar = suu - kernels::ops().dot(col.x.data(), col.x.data(), col.x.size());
        if (!(col.cvar > 0.0))
            throw NumericalError("conditional variance not positive (non-PD input?)");
        return cache_.emplace(u, std::move(col)).first->second;
    }

    CovarianceOracle& oracle_;
    std::vector<int> ss_;
    double tol_;
    DenseMatrix l_;
    std::unordered_map<int, Col> cache_;
};

SplitResult split_components(const std::vector<int>& view, const std::vector<int>& cond,
                             CovarianceOracle& oracle, const SeparatorConfig& cfg, Rng& rng) {
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        std::vector<int> sep = find_balanced_separator(view, cond, oracle, cfg, rng);

        SplitResult split;
        split.attempts = attempt + 1;
        split.separator = sep;
        if (!sep.empty() || attempt == cfg.max_retries) {
            std::vector<int> ss = concat_sorted_unique(cond, sep);
            ConditionalTester tester(oracle, ss, cfg.cond_corr_tol);

            // Each vertex joins the first component with a non-separated
            // anchor. Anchors accumulate where matches get weak so that far
            // vertices are always tested against something nearby.
            constexpr double kWeakMatch = 1e-5;
            constexpr std::size_t kMaxAnchors = 16;
            std::vector<std::vector<int>> anchors;
            for (int v : view) {
                if (std::binary_search(sep.begin(), sep.end(), v)) continue;
                int joined = -1;
                double strength = 0.0;
                for (std::size_t ci = 0; ci < split.components.size() && joined < 0; ++ci) {
                    for (int a : anchors[ci]) {
                        double c = std::fabs(tester.cond_corr(a, v));
                        if (c > cfg.cond_corr_tol) {
                            joined = static_cast<int>(ci);
                            strength = c;
                            break;
                        }
                    }
                }
                if (joined < 0) {
                    split.components.push_back({v});
                    anchors.push_back({v});
                } else {
                    split.components[static_cast<std::size_t>(joined)].push_back(v);
                    if (strength < kWeakMatch &&
                        anchors[static_cast<std::size_t>(joined)].size() < kMaxAnchors)
                        anchors[static_cast<std::size_t>(joined)].push_back(v);
                }
            }

            // merge pass: anchors of distinct components may still connect
            if (split.components.size() >= 2) {
                const std::size_t nc = split.components.size();
                std::vector<std::size_t> uf(nc);
                std::iota(uf.begin(), uf.end(), 0);
                std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
                    while (uf[x] != x) x = uf[x] = uf[uf[x]];
                    return x;
                };
                for (std::size_t ci = 0; ci < nc; ++ci)
                    for (std::size_t cj = ci + 1; cj < nc; ++cj) {
                        if (find(ci) == find(cj)) continue;
                        bool linked = false;
                        for (std::size_t ai = 0; ai < std::min<std::size_t>(4, anchors[ci].size()) && !linked; ++ai)
                            for (std::size_t aj = 0; aj < std::min<std::size_t>(4, anchors[cj].size()) && !linked; ++aj)
                                linked = tester.same_component(anchors[ci][ai], anchors[cj][aj]);
                        if (linked) uf[find(ci)] = find(cj);
                    }
                std::vector<std::vector<int>> merged;
                std::vector<std::size_t> slot(nc, SIZE_MAX);
                for (std::size_t ci = 0; ci < nc; ++ci) {
                    std::size_t root = find(ci);
                    if (slot[root] == SIZE_MAX) {
                        slot[root] = merged.size();
                        merged.emplace_back();
                    }
                    auto& dst = merged[slot[root]];
                    dst.insert(dst.end(), split.components[ci].begin(), split.components[ci].end());
                }
                for (auto& comp : merged) std::sort(comp.begin(), comp.end());
                split.components = std::move(merged);
            }

            const std::size_t rest = view.size() - sep.size();
            std::size_t biggest = 0;
            for (const auto& cmp : split.components) biggest = std::max(biggest, cmp.size());
            const bool balanced =
                static_cast<double>(biggest) <= 0.93 * static_cast<double>(rest) &&
                static_cast<int>(sep.size()) <= cfg.k + 1 && split.components.size() >= 2;
            if (cfg.hooks != nullptr && cfg.hooks->on_split)
                cfg.hooks->on_split(view, cond, sep, split.components, balanced);
            if (balanced) return split;
        }
    }
    throw RecoveryError("split_components: no balanced separator after retries "
                        "(treewidth bound likely wrong)");
}

// ---------------------------------------------------------------------------
// reconstruction

namespace {

// Sigma_{rows, cols | cond} for disjoint rows/cols, sharing one Cholesky of
// the conditioning block per call site would be nicer; the sizes involved
// (|S'| <= k+1, |cond| = O(k log n)) keep this cheap enough.
DenseMatrix conditional_cross(CovarianceOracle& oracle, const std::vector<int>& rows,
                              const std::vector<int>& cols, const std::vector<int>& cond) {
    DenseMatrix cross = submatrix(oracle, rows, cols);
    if (cond.empty()) return cross;
    DenseMatrix sss = submatrix(oracle, cond, cond);
    DenseMatrix s_rows = submatrix(oracle, cond, rows);
    DenseMatrix s_cols = submatrix(oracle, cond, cols);
    DenseMatrix l = cholesky(sss);
    const int s = static_cast<int>(cond.size());
    auto forward = [&](DenseMatrix& x) {
        const int c = x.cols();
        for (int i = 0; i < s; ++i) {
            for (int k2 = 0; k2 < i; ++k2)
                kernels::ops().axpy(-l.at(i, k2), x.row(k2), x.row(i),
                                    static_cast<std::size_t>(c));
            const double inv = 1.0 / l.at(i, i);
            for (int j = 0; j < c; ++j) x.at(i, j) *= inv;
        }
    };
    forward(s_rows);
    forward(s_cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) {
            double acc = 0.0;
            for (int t = 0; t < s; ++t)
                acc += s_rows.at(t, static_cast<int>(i)) * s_cols.at(t, static_cast<int>(j));
            cross.at(static_cast<int>(i), static_cast<int>(j)) -= acc;
        }
    return cross;
}

constexpr double kStoreTol = 1e-12;

}  // namespace

void reconstruct(const std::vector<int>& view, const std::vector<int>& cond,
                 CovarianceOracle& oracle, const SeparatorConfig& cfg,
                 PrecisionEstimate& out, TreewidthStats& stats, Rng& /*parent_rng*/,
                 int depth) {
    stats.max_depth = std::max(stats.max_depth, depth);
    const int m_eff = cfg.effective_m(oracle.dim());

    if (static_cast<int>(view.size()) <= m_eff) {
        // leaf: K_view = (Sigma_{view|cond})^{-1}
        DenseMatrix k = invert(conditional_covariance(oracle, view, cond));
        double scale = k.max_abs();
        for (std::size_t i = 0; i < view.size(); ++i)
            for (std::size_t j = i; j < view.size(); ++j) {
                double v = k.at(static_cast<int>(i), static_cast<int>(j));
                if (i == j || std::fabs(v) > kStoreTol * scale)
                    out.set(view[i], view[j], v);
            }
        if (cfg.hooks != nullptr && cfg.hooks->on_leaf) cfg.hooks->on_leaf(view, cond);
        return;
    }

    // deterministic per-call randomness from (seed, view fingerprint)
    std::uint64_t fp = hash_combine(cfg.seed, static_cast<std::uint64_t>(view.size()));
    fp = hash_combine(fp, static_cast<std::uint64_t>(view.front()));
    fp = hash_combine(fp, static_cast<std::uint64_t>(view.back()));
    fp = hash_combine(fp, static_cast<std::uint64_t>(depth));
    Rng rng(fp);

    SplitResult split = split_components(view, cond, oracle, cfg, rng);
    ++stats.splits;
    stats.retries += split.attempts - 1;
    const auto& sep = split.separator;
    std::vector<int> cond2 = concat_sorted_unique(cond, sep);

    for (const auto& comp : split.components)
        reconstruct(comp, cond2, oracle, cfg, out, stats, rng, depth + 1);

    // assembly: K_{C_i,S'} = -K_{C_i} Sigma_{C_i,S'|S} Sigma_{S'|S}^{-1},
    // then the S' diagonal block
    const int s2 = static_cast<int>(sep.size());
    if (s2 == 0) return;
    DenseMatrix sigma_sp = conditional_covariance(oracle, sep, cond);
    DenseMatrix sigma_sp_inv = invert(sigma_sp);

    DenseMatrix acc(s2, s2);  // sum_i K_{S',C_i} Sigma_{C_i,S'|S}
    for (const auto& comp : split.components) {
        DenseMatrix cross = conditional_cross(oracle, comp, sep, cond);

        // T = K_{C_i} * cross using the sparsity of K_{C_i}
        const int nc = static_cast<int>(comp.size());
        std::unordered_map<int, int> local;
        for (int i = 0; i < nc; ++i) local[comp[static_cast<std::size_t>(i)]] = i;
        DenseMatrix t(nc, s2);
        std::uint64_t ops = 0;
        for (int i = 0; i < nc; ++i) {
            const int gi = comp[static_cast<std::size_t>(i)];
            // row gi of K restricted to comp: iterate stored entries via comp
            for (int j = 0; j < nc; ++j) {
                const double kij = out.get(gi, comp[static_cast<std::size_t>(j)]);
                if (kij == 0.0) continue;
                kernels::ops().axpy(kij, cross.row(j), t.row(i), static_cast<std::size_t>(s2));
                ops += static_cast<std::uint64_t>(s2);
            }
        }
        stats.sparse_multiply_ops += ops;
        stats.sparse_multiply_budget +=
            static_cast<std::uint64_t>(8 * (cfg.k + 1) * (cfg.k + 1)) *
            static_cast<std::uint64_t>(nc);

        DenseMatrix block = t.multiply(sigma_sp_inv);  // K_{C_i,S'} = -block
        if (cfg.hooks != nullptr && cfg.hooks->on_assembly_identity) {
            // residual of K_C Sigma_{C,S'|S} + K_{C,S'} Sigma_{S'|S} = 0
            DenseMatrix resid = t;
            DenseMatrix correction = block.multiply(sigma_sp);
            double max_resid = 0.0;
            for (int i = 0; i < nc; ++i)
                for (int j = 0; j < s2; ++j)
                    max_resid = std::max(max_resid,
                                         std::fabs(resid.at(i, j) - correction.at(i, j)));
            cfg.hooks->on_assembly_identity(max_resid);
        }
        double scale = std::max(block.max_abs(), 1.0);
        for (int i = 0; i < nc; ++i)
            for (int j = 0; j < s2; ++j) {
                const double v = -block.at(i, j);
                if (std::fabs(v) > kStoreTol * scale)
                    out.set(comp[static_cast<std::size_t>(i)], sep[static_cast<std::size_t>(j)], v);
            }

        // acc += K_{S',C_i} * Sigma_{C_i,S'|S} = block^T * cross (negated)
        for (int i = 0; i < s2; ++i)
            for (int j = 0; j < s2; ++j) {
                double sum = 0.0;
                for (int c2 = 0; c2 < nc; ++c2) sum += -block.at(c2, i) * cross.at(c2, j);
                acc.at(i, j) += sum;
            }
    }

    // K_{S'} = (I - acc) Sigma_{S'|S}^{-1}
    DenseMatrix lhs(s2, s2);
    for (int i = 0; i < s2; ++i)
        for (int j = 0; j < s2; ++j) lhs.at(i, j) = (i == j ? 1.0 : 0.0) - acc.at(i, j);
    DenseMatrix ks = lhs.multiply(sigma_sp_inv);
    for (int i = 0; i < s2; ++i)
        for (int j = i; j < s2; ++j)
            out.set(sep[static_cast<std::size_t>(i)], sep[static_cast<std::size_t>(j)],
                    0.5 * (ks.at(i, j) + ks.at(j, i)));
}

TreewidthResult main_reconstruct(CovarianceOracle& oracle, const SeparatorConfig& cfg) {
    const int n = oracle.dim();
    TreewidthResult result;
    result.m_used = cfg.effective_m(n);
    result.khat = PrecisionEstimate(n);

    std::vector<int> view(static_cast<std::size_t>(n));
    std::iota(view.begin(), view.end(), 0);
    Rng rng(hash_label(cfg.seed, "treewidth-main"));
    try {
        reconstruct(view, {}, oracle, cfg, result.khat, result.stats, rng, 0);
        result.success = true;
    } catch (const RecoveryError& e) {
        result.success = false;
        result.diagnostic = e.what();
    } catch (const NumericalError& e) {
        result.success = false;
        result.diagnostic = std::string("numerical failure: ") + e.what();
    }
    return result;
}

}  // namespace covq
