// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>

#include "aqua/kernels/kernels.hpp"

namespace aqua::kernels {

namespace detail {
const KernelTable* avx2_table_impl() noexcept;
}

const KernelTable* avx2_table() noexcept {
#if defined(__x86_64__) || defined(__i386__)
    static const KernelTable* table = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") ? detail::avx2_table_impl() : nullptr;
    }();
    return table;
#else
    return nullptr;
#endif
}

const KernelTable& active() noexcept {
    static const KernelTable* table = [] {
        const char* force = std::getenv("AQUA_FORCE_SCALAR");
        if (force && *force) return &scalar_table();
        const KernelTable* simd = avx2_table();
        return simd ? simd : &scalar_table();
    }();
    return *table;
}

}  // namespace aqua::kernels
