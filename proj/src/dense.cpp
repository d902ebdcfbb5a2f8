#include "covq/dense.hpp"

#include <algorithm>
#include <cmath>

#include "covq/kernels.hpp"

namespace covq {

DenseMatrix DenseMatrix::identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) t.at(j, i) = at(i, j);
    return t;
}

DenseMatrix DenseMatrix::multiply(const DenseMatrix& rhs) const {
    DenseMatrix out(rows_, rhs.cols_);
    kernels::ops().gemm_acc(data(), rhs.data(), out.data(),
                            static_cast<std::size_t>(rows_), static_cast<std::size_t>(cols_),
                            static_cast<std::size_t>(rhs.cols_));
    return out;
}

double DenseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : a_) m = std::max(m, std::fabs(v));
    return m;
}

double DenseMatrix::max_abs_diff(const DenseMatrix& other) const {
    double m = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k)
        m = std::max(m, std::fabs(a_[k] - other.a_[k]));
    return m;
}

DenseMatrix submatrix(CovarianceOracle& oracle, const std::vector<int>& rows,
                      const std::vector<int>& cols) {
    DenseMatrix m(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
    static thread_local std::vector<int> is, js;
    const std::size_t total = rows.size() * cols.size();
    is.resize(total);
    js.resize(total);
    std::size_t k = 0;
    for (int r : rows)
        for (int c : cols) {
            is[k] = r;
            js[k] = c;
            ++k;
        }
    oracle.query_batch(is.data(), js.data(), m.data(), total);
    return m;
}

namespace {

// Full-pivot Gaussian elimination; stops once `cap+1` pivots survive (cap < 0
// disables the early exit). Tolerance is relative to the largest initial
// entry, matching the SVD path's sigma_max convention on these instances.
int eliminate_rank(DenseMatrix a, double rel_tol, int cap) {
    const int r = a.rows(), c = a.cols();
    if (r == 0 || c == 0) return 0;

    double scale = a.max_abs();
    if (scale == 0.0) return 0;
    const double tol = rel_tol * scale;

    const int steps = std::min(r, c);
    int rank = 0;
    for (int k = 0; k < steps; ++k) {
        int pi = k, pj = k;
        double best = 0.0;
        for (int i = k; i < r; ++i) {
            const double* row = a.row(i);
            for (int j = k; j < c; ++j) {
                double v = std::fabs(row[j]);
                if (v > best) {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if (best <= tol) break;
        ++rank;
        if (cap >= 0 && rank > cap) return rank;
        if (pi != k)
            for (int j = 0; j < c; ++j) std::swap(a.at(k, j), a.at(pi, j));
        if (pj != k)
            for (int i = 0; i < r; ++i) std::swap(a.at(i, k), a.at(i, pj));
        const double piv = a.at(k, k);
        for (int i = k + 1; i < r; ++i) {
            const double f = a.at(i, k) / piv;
            if (f == 0.0) continue;
            kernels::ops().axpy(-f, a.row(k) + k, a.row(i) + k,
                                static_cast<std::size_t>(c - k));
        }
    }
    return rank;
}

}  // namespace

std::vector<double> singular_values(const DenseMatrix& m) {
    // one-sided Jacobi on the tall orientation
    DenseMatrix a = m.rows() >= m.cols() ? m : m.transposed();
    const int rows = a.rows(), n = a.cols();
    if (n == 0 || rows == 0) return {};

    // column-major working copy for contiguous column access
    std::vector<std::vector<double>> col(static_cast<std::size_t>(n),
                                         std::vector<double>(static_cast<std::size_t>(rows)));
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) col[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = a.at(i, j);

    const double eps = 1e-15;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                auto& cp = col[static_cast<std::size_t>(p)];
                auto& cq = col[static_cast<std::size_t>(q)];
                const double alpha = kernels::ops().dot(cp.data(), cp.data(), cp.size());
                const double beta = kernels::ops().dot(cq.data(), cq.data(), cq.size());
                const double gamma = kernels::ops().dot(cp.data(), cq.data(), cp.size());
                if (std::fabs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (int i = 0; i < rows; ++i) {
                    const double vp = cp[static_cast<std::size_t>(i)];
                    const double vq = cq[static_cast<std::size_t>(i)];
                    cp[static_cast<std::size_t>(i)] = cs * vp - sn * vq;
                    cq[static_cast<std::size_t>(i)] = sn * vp + cs * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sv(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        sv[static_cast<std::size_t>(j)] = std::sqrt(kernels::ops().dot(
            col[static_cast<std::size_t>(j)].data(), col[static_cast<std::size_t>(j)].data(),
            static_cast<std::size_t>(rows)));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

int numerical_rank(const DenseMatrix& m, const RankConfig& cfg) {
    RankMethod method = cfg.method;
    if (method == RankMethod::Auto)
        method = std::max(m.rows(), m.cols()) <= 32 ? RankMethod::Elimination
                                                    : RankMethod::SingularValue;
    if (method == RankMethod::Elimination) return eliminate_rank(m, cfg.rel_tol, -1);
    auto sv = singular_values(m);
    if (sv.empty() || sv[0] == 0.0) return 0;
    const double tol = cfg.rel_tol * sv[0];
    int rank = 0;
    for (double s : sv)
        if (s > tol) ++rank;
    return rank;
}

int rank_capped(const DenseMatrix& m, int cap, double rel_tol) {
    return eliminate_rank(m, rel_tol, cap);
}

bool det2_separation_test(CovarianceOracle& oracle, int u, int v, int w,
                          const RankConfig& cfg) {
    const int is[4] = {u, v, u, v};
    const int js[4] = {v, w, w, v};
    double q[4];
    oracle.query_batch(is, js, q, 4);
    const double prod = q[0] * q[1];  // sigma_uv * sigma_vw
    const double diag = q[2] * q[3];  // sigma_uw * sigma_vv
    const double scale = std::max(std::fabs(prod), std::fabs(diag));
    return std::fabs(prod - diag) <= cfg.rel_tol * scale;
}

DenseMatrix conditional_covariance(CovarianceOracle& oracle, const std::vector<int>& c,
                                   const std::vector<int>& cond) {
    DenseMatrix scc = submatrix(oracle, c, c);
    if (cond.empty()) return scc;

    DenseMatrix sss = submatrix(oracle, cond, cond);
    DenseMatrix ssc = submatrix(oracle, cond, c);
    DenseMatrix l;
    try {
        l = cholesky(sss);
    } catch (const NumericalError&) {
        throw NumericalError("conditional covariance: conditioning block not positive definite");
    }

    // X = L^{-1} Sigma_{S,C}, then Sigma_{C|S} = Sigma_{C,C} - X^T X
    const int s = static_cast<int>(cond.size());
    const int nc = static_cast<int>(c.size());
    DenseMatrix x = ssc;
    for (int i = 0; i < s; ++i) {
        for (int k = 0; k < i; ++k)
            kernels::ops().axpy(-l.at(i, k), x.row(k), x.row(i), static_cast<std::size_t>(nc));
        const double inv = 1.0 / l.at(i, i);
        for (int j = 0; j < nc; ++j) x.at(i, j) *= inv;
    }
    for (int i = 0; i < nc; ++i)
        for (int j = 0; j < nc; ++j) {
            double acc = 0.0;
            for (int k = 0; k < s; ++k) acc += x.at(k, i) * x.at(k, j);
            scc.at(i, j) -= acc;
        }
    return scc;
}

int conditional_rank(CovarianceOracle& oracle, const std::vector<int>& a,
                     const std::vector<int>& b, const std::vector<int>& cond,
                     const RankConfig& cfg) {
    std::vector<int> rows = a, cols = b;
    rows.insert(rows.end(), cond.begin(), cond.end());
    cols.insert(cols.end(), cond.begin(), cond.end());
    return numerical_rank(submatrix(oracle, rows, cols), cfg) - static_cast<int>(cond.size());
}

DenseMatrix cholesky(const DenseMatrix& m) {
    if (m.rows() != m.cols()) throw NumericalError("cholesky: matrix not square");
    const int n = m.rows();
    DenseMatrix l(n, n);
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(m.at(i, i)));
    for (int j = 0; j < n; ++j) {
        double d = m.at(j, j) - kernels::ops().dot(l.row(j), l.row(j), static_cast<std::size_t>(j));
        if (d <= 1e-14 * max_diag || !std::isfinite(d))
            throw NumericalError("cholesky: matrix not positive definite");
        const double root = std::sqrt(d);
        l.at(j, j) = root;
        const double inv = 1.0 / root;
        for (int i = j + 1; i < n; ++i) {
            double v = m.at(i, j) - kernels::ops().dot(l.row(i), l.row(j), static_cast<std::size_t>(j));
            l.at(i, j) = v * inv;
        }
    }
    return l;
}

DenseMatrix invert(const DenseMatrix& m) {
    const int n = m.rows();
    DenseMatrix l = cholesky(m);

    // M = L^{-1} (lower triangular), then A^{-1} = M^T M
    DenseMatrix inv_l(n, n);
    for (int j = 0; j < n; ++j) {
        inv_l.at(j, j) = 1.0 / l.at(j, j);
        for (int i = j + 1; i < n; ++i) {
            double acc = 0.0;
            for (int k = j; k < i; ++k) acc += l.at(i, k) * inv_l.at(k, j);
            inv_l.at(i, j) = -acc / l.at(i, i);
        }
    }
    DenseMatrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double acc = 0.0;
            for (int k = j; k < n; ++k) acc += inv_l.at(k, i) * inv_l.at(k, j);
            out.at(i, j) = acc;
            out.at(j, i) = acc;
        }
    return out;
}

}  // namespace covq
