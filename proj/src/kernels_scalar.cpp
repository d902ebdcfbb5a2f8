#include "covq/kernels.hpp"

#include <cmath>

// Reference kernels. These define the semantics; the SIMD variants must agree
// with them to a few ulp (exp) or exactly (decision masks on non-borderline
// inputs).

namespace covq::kernels {
namespace {

void exp_batch_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_acc_scalar(const double* a, const double* b, double* c,
                     std::size_t r, std::size_t k, std::size_t cc) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * cc;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b + p * cc;
            for (std::size_t j = 0; j < cc; ++j) ci[j] += aip * bp[j];
        }
    }
}

void det2_zero_batch_scalar(const double* p1, const double* p2,
                            const double* q1, const double* q2,
                            double tol, std::uint8_t* decision, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double prod = p1[i] * p2[i];
        double quot = q1[i] * q2[i];
        double scale = std::fmax(std::fabs(prod), std::fabs(quot));
        decision[i] = std::fabs(prod - quot) <= tol * scale ? 1 : 0;
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops{exp_batch_scalar, dot_scalar, axpy_scalar,
                         gemm_acc_scalar, det2_zero_batch_scalar, "scalar"};
    return ops;
}

}  // namespace covq::kernels
