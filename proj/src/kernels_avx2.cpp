#include "covq/kernels.hpp"

#include <cmath>
#include <immintrin.h>

// AVX2+FMA variants. This TU is compiled with -mavx2 -mfma and must only be
// reached through the runtime dispatcher.

namespace covq::kernels {
namespace {

// Cephes-style exp: exp(x) = 2^k * R(r), r = x - k*ln2, |r| <= ln2/2.
// Max observed error ~1 ulp over the domain used here (log-magnitudes of
// correlation products, i.e. x <= 0).
const __m256d kLog2E   = _mm256_set1_pd(1.4426950408889634073599);
const __m256d kC1      = _mm256_set1_pd(6.93145751953125e-1);
const __m256d kC2      = _mm256_set1_pd(1.42860682030941723212e-6);
const __m256d kP0      = _mm256_set1_pd(1.26177193074810590878e-4);
const __m256d kP1      = _mm256_set1_pd(3.02994407707441961300e-2);
const __m256d kP2      = _mm256_set1_pd(9.99999999999999999910e-1);
const __m256d kQ0      = _mm256_set1_pd(3.00198505138664455042e-6);
const __m256d kQ1      = _mm256_set1_pd(2.52448340349684104192e-3);
const __m256d kQ2      = _mm256_set1_pd(2.27265548208155028766e-1);
const __m256d kQ3      = _mm256_set1_pd(2.00000000000000000005e0);
const __m256d kOne     = _mm256_set1_pd(1.0);
const __m256d kTwo     = _mm256_set1_pd(2.0);
const __m256d kMaxX    = _mm256_set1_pd(709.436);
const __m256d kMinX    = _mm256_set1_pd(-708.396);

inline __m256d exp4(__m256d x) {
    __m256d too_small = _mm256_cmp_pd(x, kMinX, _CMP_LT_OQ);
    __m256d too_big   = _mm256_cmp_pd(x, kMaxX, _CMP_GT_OQ);
    x = _mm256_min_pd(_mm256_max_pd(x, kMinX), kMaxX);

    __m256d k = _mm256_round_pd(_mm256_mul_pd(x, kLog2E),
                                _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(k, kC1, x);
    r = _mm256_fnmadd_pd(k, kC2, r);

    __m256d rr = _mm256_mul_pd(r, r);
    __m256d p = _mm256_fmadd_pd(kP0, rr, kP1);
    p = _mm256_fmadd_pd(p, rr, kP2);
    p = _mm256_mul_pd(p, r);
    __m256d q = _mm256_fmadd_pd(kQ0, rr, kQ1);
    q = _mm256_fmadd_pd(q, rr, kQ2);
    q = _mm256_fmadd_pd(q, rr, kQ3);
    __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
    e = _mm256_fmadd_pd(kTwo, e, kOne);

    // scale by 2^k through the exponent field
    __m128i ki = _mm256_cvtpd_epi32(k);
    __m256i k64 = _mm256_cvtepi32_epi64(ki);
    __m256i scale = _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
    e = _mm256_mul_pd(e, _mm256_castsi256_pd(scale));

    e = _mm256_blendv_pd(e, _mm256_setzero_pd(), too_small);
    e = _mm256_blendv_pd(e, _mm256_set1_pd(HUGE_VAL), too_big);
    return e;
}

void exp_batch_avx2(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc0 = _mm256_add_pd(acc0, acc1);
    __m128d lo = _mm256_castpd256_pd128(acc0);
    __m128d hi = _mm256_extractf128_pd(acc0, 1);
    lo = _mm_add_pd(lo, hi);
    double s = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_acc_avx2(const double* a, const double* b, double* c,
                   std::size_t r, std::size_t k, std::size_t cc) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * cc;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            axpy_avx2(aip, b + p * cc, ci, cc);
        }
    }
}

void det2_zero_batch_avx2(const double* p1, const double* p2,
                          const double* q1, const double* q2,
                          double tol, std::uint8_t* decision, std::size_t n) {
    const __m256d vtol = _mm256_set1_pd(tol);
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(p1 + i), _mm256_loadu_pd(p2 + i));
        __m256d quot = _mm256_mul_pd(_mm256_loadu_pd(q1 + i), _mm256_loadu_pd(q2 + i));
        __m256d scale = _mm256_max_pd(_mm256_and_pd(prod, absmask), _mm256_and_pd(quot, absmask));
        __m256d det = _mm256_and_pd(_mm256_sub_pd(prod, quot), absmask);
        __m256d cmp = _mm256_cmp_pd(det, _mm256_mul_pd(vtol, scale), _CMP_LE_OQ);
        int mask = _mm256_movemask_pd(cmp);
        decision[i + 0] = (mask >> 0) & 1;
        decision[i + 1] = (mask >> 1) & 1;
        decision[i + 2] = (mask >> 2) & 1;
        decision[i + 3] = (mask >> 3) & 1;
    }
    for (; i < n; ++i) {
        double prod = p1[i] * p2[i];
        double quot = q1[i] * q2[i];
        double scale = std::fmax(std::fabs(prod), std::fabs(quot));
        decision[i] = std::fabs(prod - quot) <= tol * scale ? 1 : 0;
    }
}

}  // namespace

bool avx2_supported() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const Ops& avx2_ops() {
    static const Ops ops = [] {
        if (!avx2_supported()) return scalar_ops();
        return Ops{exp_batch_avx2, dot_avx2, axpy_avx2, gemm_acc_avx2,
                   det2_zero_batch_avx2, "avx2"};
    }();
    return ops;
}

}  // namespace covq::kernels
