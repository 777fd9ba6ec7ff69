// SPDX-License-Identifier: Apache-2.0
// AVX2 variants of the convolution kernels. Compiled with -mavx2 (no -mfma);
// only reached after a runtime CPU check.
#include "aqua/kernels/kernels.hpp"

#include <cstddef>

#if defined(__AVX2__)
#include <immintrin.h>

namespace aqua::kernels::detail {

namespace {

inline float hsum_canonical(__m256 v) {
    const __m128 lo = _mm256_castps256_ps128(v);
    const __m128 hi = _mm256_extractf128_ps(v, 1);
    const __m128 s = _mm_add_ps(lo, hi);                   // l0+l4, l1+l5, l2+l6, l3+l7
    const __m128 t = _mm_add_ps(s, _mm_movehl_ps(s, s));   // s0+s2, s1+s3
    const __m128 r = _mm_add_ss(t, _mm_shuffle_ps(t, t, 1));
    return _mm_cvtss_f32(r);
}

// Scalar tail for one output pixel, same accumulation order as the vector path.
inline float conv_pixel(const float* in_pad, const float* wco, float b, int cin, int k,
                        std::size_t in_plane, int wp, int y, int x) {
    float acc = b;
    for (int ci = 0; ci < cin; ++ci) {
        const float* src = in_pad + ci * in_plane;
        const float* wk = wco + ci * k * k;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) acc = acc + wk[ky * k + kx] * src[(y + ky) * wp + x + kx];
    }
    return acc;
}

template <int Block>
void conv_forward_block(const float* in_pad, const float* weight, const float* bias,
                        const ConvShape& s, float* out, int co0) {
    const int wp = s.padded_width(), k = s.ksize;
    const std::size_t in_plane = static_cast<std::size_t>(s.padded_height()) * wp;
    const std::size_t wstride = static_cast<std::size_t>(s.cin) * k * k;
    const std::size_t out_plane = static_cast<std::size_t>(s.height) * s.width;
    const int w8 = s.width / 8 * 8;
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < w8; x += 8) {
            __m256 acc[Block];
            for (int j = 0; j < Block; ++j) acc[j] = _mm256_set1_ps(bias ? bias[co0 + j] : 0.0f);
            for (int ci = 0; ci < s.cin; ++ci) {
                const float* src = in_pad + ci * in_plane + y * wp + x;
                const float* wk = weight + co0 * wstride + ci * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const __m256 v = _mm256_loadu_ps(src + ky * wp + kx);
                        const int widx = ky * k + kx;
                        for (int j = 0; j < Block; ++j)
                            acc[j] = _mm256_add_ps(acc[j], _mm256_mul_ps(_mm256_set1_ps(wk[j * wstride + widx]), v));
                    }
                }
            }
            for (int j = 0; j < Block; ++j) _mm256_storeu_ps(out + (co0 + j) * out_plane + y * s.width + x, acc[j]);
        }
        for (int x = w8; x < s.width; ++x)
            for (int j = 0; j < Block; ++j)
                out[(co0 + j) * out_plane + y * s.width + x] =
                    conv_pixel(in_pad, weight + (co0 + j) * wstride, bias ? bias[co0 + j] : 0.0f, s.cin, k,
                               in_plane, wp, y, x);
    }
}

void conv_forward_avx2(const float* in_pad, const float* weight, const float* bias, const ConvShape& s,
                       float* out) {
    int co = 0;
    for (; co + 8 <= s.cout; co += 8) conv_forward_block<8>(in_pad, weight, bias, s, out, co);
    for (; co + 4 <= s.cout; co += 4) conv_forward_block<4>(in_pad, weight, bias, s, out, co);
    for (; co < s.cout; ++co) conv_forward_block<1>(in_pad, weight, bias, s, out, co);
}

// Bias gradient for one output channel: canonical lanes plus sequential tail.
inline float bias_grad(const float* g, const ConvShape& s, int w8) {
    __m256 lanes = _mm256_setzero_ps();
    float tail = 0.0f;
    for (int y = 0; y < s.height; ++y) {
        const float* gr = g + y * s.width;
        for (int x = 0; x < w8; x += 8) lanes = _mm256_add_ps(lanes, _mm256_loadu_ps(gr + x));
        for (int x = w8; x < s.width; ++x) tail = tail + gr[x];
    }
    return hsum_canonical(lanes) + tail;
}

// CB output channels x K taps of one kernel row share each input load. The
// per-element order (lanes over y, then x) matches the scalar reference.
template <int CB, int K>
void wgrad_block(const float* in_pad, const float* gout, const ConvShape& s, float* gw, int co0) {
    const int wp = s.padded_width();
    const std::size_t in_plane = static_cast<std::size_t>(s.padded_height()) * wp;
    const std::size_t out_plane = static_cast<std::size_t>(s.height) * s.width;
    const int w8 = s.width / 8 * 8;
    for (int ci = 0; ci < s.cin; ++ci) {
        const float* src = in_pad + ci * in_plane;
        for (int ky = 0; ky < K; ++ky) {
            __m256 acc[CB][K];
            float tail[CB][K];
            for (int j = 0; j < CB; ++j)
                for (int kx = 0; kx < K; ++kx) {
                    acc[j][kx] = _mm256_setzero_ps();
                    tail[j][kx] = 0.0f;
                }
            for (int y = 0; y < s.height; ++y) {
                const float* sr = src + (y + ky) * wp;
                for (int x = 0; x < w8; x += 8) {
                    __m256 sv[K];
                    for (int kx = 0; kx < K; ++kx) sv[kx] = _mm256_loadu_ps(sr + x + kx);
                    for (int j = 0; j < CB; ++j) {
                        const __m256 gv = _mm256_loadu_ps(gout + (co0 + j) * out_plane + y * s.width + x);
                        for (int kx = 0; kx < K; ++kx)
                            acc[j][kx] = _mm256_add_ps(acc[j][kx], _mm256_mul_ps(gv, sv[kx]));
                    }
                }
                for (int j = 0; j < CB; ++j) {
                    const float* gr = gout + (co0 + j) * out_plane + y * s.width;
                    for (int kx = 0; kx < K; ++kx)
                        for (int x = w8; x < s.width; ++x) tail[j][kx] = tail[j][kx] + gr[x] * sr[x + kx];
                }
            }
            for (int j = 0; j < CB; ++j) {
                float* gwk = gw + (static_cast<std::size_t>(co0 + j) * s.cin + ci) * K * K;
                for (int kx = 0; kx < K; ++kx) gwk[ky * K + kx] += hsum_canonical(acc[j][kx]) + tail[j][kx];
            }
        }
    }
}

// Any odd kernel size up to 7, one output channel at a time.
void wgrad_generic(const float* in_pad, const float* gout, const ConvShape& s, float* gw, int co) {
    const int wp = s.padded_width(), k = s.ksize;
    const std::size_t in_plane = static_cast<std::size_t>(s.padded_height()) * wp;
    const std::size_t out_plane = static_cast<std::size_t>(s.height) * s.width;
    const int w8 = s.width / 8 * 8;
    constexpr int kMaxK = 7;
    const float* g = gout + co * out_plane;
    for (int ci = 0; ci < s.cin; ++ci) {
        const float* src = in_pad + ci * in_plane;
        float* gwk = gw + (static_cast<std::size_t>(co) * s.cin + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
            __m256 acc[kMaxK];
            float tail[kMaxK];
            for (int kx = 0; kx < k; ++kx) {
                acc[kx] = _mm256_setzero_ps();
                tail[kx] = 0.0f;
            }
            for (int y = 0; y < s.height; ++y) {
                const float* gr = g + y * s.width;
                const float* sr = src + (y + ky) * wp;
                for (int x = 0; x < w8; x += 8) {
                    const __m256 gv = _mm256_loadu_ps(gr + x);
                    for (int kx = 0; kx < k; ++kx)
                        acc[kx] = _mm256_add_ps(acc[kx], _mm256_mul_ps(gv, _mm256_loadu_ps(sr + x + kx)));
                }
                for (int kx = 0; kx < k; ++kx)
                    for (int x = w8; x < s.width; ++x) tail[kx] = tail[kx] + gr[x] * sr[x + kx];
            }
            for (int kx = 0; kx < k; ++kx) gwk[ky * k + kx] += hsum_canonical(acc[kx]) + tail[kx];
        }
    }
}

void conv_weight_grad_avx2(const float* in_pad, const float* gout, const ConvShape& s, float* gw, float* gb) {
    const std::size_t out_plane = static_cast<std::size_t>(s.height) * s.width;
    const int w8 = s.width / 8 * 8;
    if (gb)
        for (int co = 0; co < s.cout; ++co) gb[co] += bias_grad(gout + co * out_plane, s, w8);
    int co = 0;
    if (s.ksize == 3) {
        for (; co + 4 <= s.cout; co += 4) wgrad_block<4, 3>(in_pad, gout, s, gw, co);
        for (; co < s.cout; ++co) wgrad_block<1, 3>(in_pad, gout, s, gw, co);
    } else if (s.ksize == 1) {
        for (; co + 8 <= s.cout; co += 8) wgrad_block<8, 1>(in_pad, gout, s, gw, co);
        for (; co < s.cout; ++co) wgrad_block<1, 1>(in_pad, gout, s, gw, co);
    }
    for (; co < s.cout; ++co) wgrad_generic(in_pad, gout, s, gw, co);
}

}  // namespace

const KernelTable* avx2_table_impl() noexcept {
    static const KernelTable table{"avx2", &conv_forward_avx2, &conv_weight_grad_avx2};
    return &table;
}

}  // namespace aqua::kernels::detail

#else

namespace aqua::kernels::detail {
const KernelTable* avx2_table_impl() noexcept { return nullptr; }
}  // namespace aqua::kernels::detail

#endif
