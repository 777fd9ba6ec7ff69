// SPDX-License-Identifier: Apache-2.0
//
// Convolution inner loops. Every kernel exists as a portable scalar reference
// and, where the build and the CPU allow it, an AVX2 variant picked at
// runtime. Variants are required to be bit-identical to the reference:
//
//  * forward convolution vectorises across output pixels, so each output is
//    accumulated in the same (bias, ci, ky, kx) order in every variant;
//  * reductions over pixels (weight and bias gradients) use a fixed 8-lane
//    layout: lane l sums columns x = 8m + l for x < 8*floor(W/8) over all rows,
//    columns past that go to a sequential tail, and lanes combine as
//    ((l0+l4)+(l2+l6)) + ((l1+l5)+(l3+l7)), then + tail.
//
// No variant uses fused multiply-add; the project builds with
// -ffp-contract=off so the compiler does not introduce one either.
#pragma once

#include <span>
#include <string_view>

namespace aqua::kernels {

struct ConvShape {
    int cin = 0;
    int cout = 0;
    int height = 0;  // output height == input height ("same" padding, stride 1)
    int width = 0;
    int ksize = 3;   // odd

    int pad() const noexcept { return ksize / 2; }
    int padded_height() const noexcept { return height + 2 * pad(); }
    int padded_width() const noexcept { return width + 2 * pad(); }
};

struct KernelTable {
    std::string_view name;
    // out[co] = bias[co] + sum_{ci,ky,kx} w[co][ci][ky][kx] * in_pad[ci][y+ky][x+kx]
    // in_pad is (cin, H + k - 1, W + k - 1) with a zero border. bias may be null.
    void (*conv_forward)(const float* in_pad, const float* weight, const float* bias,
                         const ConvShape& s, float* out);
    // gw[co][ci][ky][kx] += sum_{y,x} gout[co][y][x] * in_pad[ci][y+ky][x+kx]
    // gb[co] += sum_{y,x} gout[co][y][x]   (gb may be null)
    void (*conv_weight_grad)(const float* in_pad, const float* gout, const ConvShape& s,
                             float* gw, float* gb);
};

const KernelTable& scalar_table() noexcept;
// Null when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table() noexcept;
// The table used by the network code. AVX2 when available unless the
// AQUA_FORCE_SCALAR environment variable is set to a non-empty value.
const KernelTable& active() noexcept;

// Lane combine shared by all variants; exposed for tests.
float combine_lanes(const float lanes[8]) noexcept;

}  // namespace aqua::kernels
