#include "covq/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace covq::kernels {

const Ops& ops() {
    static const Ops& active = []() -> const Ops& {
        const char* env = std::getenv("COVQ_SIMD");
        if (env != nullptr && std::strcmp(env, "scalar") == 0) return scalar_ops();
        if (env != nullptr && std::strcmp(env, "avx2") == 0) return avx2_ops();
        return avx2_supported() ? avx2_ops() : scalar_ops();
    }();
    return active;
}

}  // namespace covq::kernels
