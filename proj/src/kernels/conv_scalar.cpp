// SPDX-License-Identifier: Apache-2.0
#include "aqua/kernels/kernels.hpp"

#include <cstddef>

namespace aqua::kernels {

float combine_lanes(const float l[8]) noexcept {
    const float s0 = l[0] + l[4];
    const float s1 = l[1] + l[5];
    const float s2 = l[2] + l[6];
    const float s3 = l[3] + l[7];
    return (s0 + s2) + (s1 + s3);
}

namespace {

void conv_forward_scalar(const float* in_pad, const float* weight, const float* bias,
                         const ConvShape& s, float* out) {
    const int hp = s.padded_height(), wp = s.padded_width(), k = s.ksize;
    const std::size_t in_plane = static_cast<std::size_t>(hp) * wp;
    for (int co = 0; co < s.cout; ++co) {
        const float b = bias ? bias[co] : 0.0f;
        const float* wco = weight + static_cast<std::size_t>(co) * s.cin * k * k;
        float* o = out + static_cast<std::size_t>(co) * s.height * s.width;
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                float acc = b;
                for (int ci = 0; ci < s.cin; ++ci) {
                    const float* src = in_pad + ci * in_plane;
                    const float* wk = wco + ci * k * k;
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            acc = acc + wk[ky * k + kx] * src[(y + ky) * wp + x + kx];
                }
                o[y * s.width + x] = acc;
            }
        }
    }
}

void conv_weight_grad_scalar(const float* in_pad, const float* gout, const ConvShape& s,
                             float* gw, float* gb) {
    const int hp = s.padded_height(), wp = s.padded_width(), k = s.ksize;
    const std::size_t in_plane = static_cast<std::size_t>(hp) * wp;
    const std::size_t out_plane = static_cast<std::size_t>(s.height) * s.width;
    const int w8 = s.width / 8 * 8;
    for (int co = 0; co < s.cout; ++co) {
        const float* g = gout + co * out_plane;
        if (gb) {
            float lanes[8] = {};
            float tail = 0.0f;
            for (int y = 0; y < s.height; ++y) {
                const float* gr = g + y * s.width;
                for (int x = 0; x < w8; x += 8)
                    for (int l = 0; l < 8; ++l) lanes[l] = lanes[l] + gr[x + l];
                for (int x = w8; x < s.width; ++x) tail = tail + gr[x];
            }
            gb[co] += combine_lanes(lanes) + tail;
        }
        for (int ci = 0; ci < s.cin; ++ci) {
            const float* src = in_pad + ci * in_plane;
            float* gwk = gw + (static_cast<std::size_t>(co) * s.cin + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    float lanes[8] = {};
                    float tail = 0.0f;
                    for (int y = 0; y < s.height; ++y) {
                        const float* gr = g + y * s.width;
                        const float* sr = src + (y + ky) * wp + kx;
                        for (int x = 0; x < w8; x += 8)
                            for (int l = 0; l < 8; ++l) lanes[l] = lanes[l] + gr[x + l] * sr[x + l];
                        for (int x = w8; x < s.width; ++x) tail = tail + gr[x] * sr[x];
                    }
                    gwk[ky * k + kx] += combine_lanes(lanes) + tail;
                }
            }
        }
    }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{"scalar", &conv_forward_scalar, &conv_weight_grad_scalar};
    return table;
}

}  // namespace aqua::kernels
