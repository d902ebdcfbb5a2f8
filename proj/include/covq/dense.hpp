#pragma once

// Small dense symmetric kernel: submatrix assembly from oracle queries,
// numerical rank with tolerance, the 2x2 determinant separation test,
// conditional covariance (Schur complement) and SPD inversion. Every numeric
// predicate consumed by the recovery algorithms lives here.
//
// Rank semantics: instances are generated so that structurally nonzero
// singular values of queried minors stay above ~1e-6 ("generic gap"), which
// makes the default rel_tol of 1e-8 an unambiguous rank threshold.

#include <stdexcept>
#include <vector>

#include "covq/oracle.hpp"

namespace covq {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols),
          a_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

    static DenseMatrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& at(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
    double* row(int i) { return a_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return a_.data() + static_cast<std::size_t>(i) * cols_; }
    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }

    DenseMatrix transposed() const;
    DenseMatrix multiply(const DenseMatrix& rhs) const;
    double max_abs() const;
    double max_abs_diff(const DenseMatrix& other) const;

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> a_;
};

enum class RankMethod { Auto, Elimination, SingularValue };

struct RankConfig {
    double rel_tol = 1e-8;
    RankMethod method = RankMethod::Auto;
};

// Entry (i,j) = oracle.query(rows[i], cols[j]); issues |rows|*|cols| queries.
DenseMatrix submatrix(CovarianceOracle& oracle, const std::vector<int>& rows,
                      const std::vector<int>& cols);

// Count of singular values (or surviving full pivots) above
// rel_tol * largest; 0 for an empty or all-zero matrix. Auto uses elimination
// up to 32x32 and SVD above.
int numerical_rank(const DenseMatrix& m, const RankConfig& cfg = {});

// Early-terminated full-pivot elimination: returns the rank if it is <= cap,
// otherwise cap+1. This is the hot-path form of the rank predicates -- all
// recovery tests only ever ask "is the rank exactly r" for a known small r.
int rank_capped(const DenseMatrix& m, int cap, double rel_tol = 1e-8);

// Singular values, descending (one-sided Jacobi).
std::vector<double> singular_values(const DenseMatrix& m);

// True iff det(Sigma_{uv,vw}) = 0 up to tolerance, i.e. "v separates u and w"
// on trees. u == w is allowed and reports not-separated, which makes the
// s-centrality estimator match the with-replacement definition exactly.
bool det2_separation_test(CovarianceOracle& oracle, int u, int v, int w,
                          const RankConfig& cfg = {});

// Sigma_{C|S} = Sigma_{C,C} - Sigma_{C,S} Sigma_{S,S}^{-1} Sigma_{S,C}.
// Empty cond returns Sigma_{C,C}. Throws NumericalError when the
// conditioning block is not positive definite.
DenseMatrix conditional_covariance(CovarianceOracle& oracle, const std::vector<int>& c,
                                   const std::vector<int>& cond);

// rank(Sigma_{A cond, B cond}) - |cond|  (Guttman rank additivity).
int conditional_rank(CovarianceOracle& oracle, const std::vector<int>& a,
                     const std::vector<int>& b, const std::vector<int>& cond,
                     const RankConfig& cfg = {});

// SPD inverse via Cholesky; throws NumericalError if not positive definite.
DenseMatrix invert(const DenseMatrix& m);

// Lower-triangular Cholesky factor; throws NumericalError if not PD.
DenseMatrix cholesky(const DenseMatrix& m);

}  // namespace covq
