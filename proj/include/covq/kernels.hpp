#pragma once

// Data-parallel inner loops used by the dense kernels and the batched oracle
// paths. Each kernel has a scalar reference implementation and an AVX2+FMA
// variant compiled in its own translation unit; the active set is picked once
// at startup from CPUID and can be overridden with COVQ_SIMD=scalar|avx2.
// The two implementations are equivalence-tested against each other.

#include <cstddef>
#include <cstdint>

namespace covq::kernels {

struct Ops {
    // out[i] = exp(x[i]); max relative error a few ulp.
    void (*exp_batch)(const double* x, double* out, std::size_t n);
    // plain dot product
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // C(r x c) += A(r x k) * B(k x c), all row-major, contiguous
    void (*gemm_acc)(const double* a, const double* b, double* c,
                     std::size_t r, std::size_t k, std::size_t cc);
    // decision[i] = |p1[i]*p2[i] - q1[i]*q2[i]| <= tol * max(|p1*p2|, |q1*q2|)
    void (*det2_zero_batch)(const double* p1, const double* p2,
                            const double* q1, const double* q2,
                            double tol, std::uint8_t* decision, std::size_t n);
    const char* name;
};

// Active implementation (dispatch resolved on first use).
const Ops& ops();

// Named implementations, for the equivalence tests.
const Ops& scalar_ops();
const Ops& avx2_ops();    // falls back to scalar entries if unsupported
bool avx2_supported();

}  // namespace covq::kernels
