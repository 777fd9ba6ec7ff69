// Scalar and AVX2 convolution kernels must agree bit for bit.
#include <doctest.h>

#include <cstring>
#include <vector>

#include "aqua/core/rng.hpp"
#include "aqua/kernels/kernels.hpp"

using namespace aqua;
using kernels::ConvShape;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

std::vector<float> padded_input(const ConvShape& s, Rng& rng) {
    std::vector<float> v(static_cast<std::size_t>(s.cin) * s.padded_height() * s.padded_width(), 0.0f);
    const int p = s.pad();
    for (int c = 0; c < s.cin; ++c)
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                v[(static_cast<std::size_t>(c) * s.padded_height() + y + p) * s.padded_width() + x + p] =
                    static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

const ConvShape kShapes[] = {
    {1, 16, 32, 32, 3}, {3, 8, 16, 16, 3}, {16, 3, 8, 8, 3},  {5, 7, 13, 11, 3},
    {2, 4, 9, 23, 5},   {4, 4, 1, 7, 3},   {32, 16, 4, 4, 1}, {6, 9, 17, 31, 3},
};

}  // namespace

TEST_CASE("scalar reference matches a naive convolution") {
    Rng rng(11);
    const ConvShape s{2, 3, 6, 5, 3};
    const auto in = padded_input(s, rng);
    const auto w = random_vec(static_cast<std::size_t>(s.cout) * s.cin * 9, rng);
    const auto b = random_vec(static_cast<std::size_t>(s.cout), rng);
    std::vector<float> out(static_cast<std::size_t>(s.cout) * s.height * s.width);
    kernels::scalar_table().conv_forward(in.data(), w.data(), b.data(), s, out.data());
    for (int co = 0; co < s.cout; ++co)
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x) {
                double acc = b[co];
                for (int ci = 0; ci < s.cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx)
                            acc += static_cast<double>(w[((co * s.cin + ci) * 3 + ky) * 3 + kx]) *
                                   in[(static_cast<std::size_t>(ci) * s.padded_height() + y + ky) * s.padded_width() + x + kx];
                CHECK(out[(static_cast<std::size_t>(co) * s.height + y) * s.width + x] ==
                      doctest::Approx(acc).epsilon(1e-5));
            }
}

TEST_CASE("AVX2 forward is bit-identical to scalar") {
    const auto* avx = kernels::avx2_table();
    if (!avx) {
        MESSAGE("AVX2 unavailable; only the scalar path is exercised");
        return;
    }
    Rng rng(3);
    for (const auto& s : kShapes) {
        const auto in = padded_input(s, rng);
        const auto w = random_vec(static_cast<std::size_t>(s.cout) * s.cin * s.ksize * s.ksize, rng);
        const auto b = random_vec(static_cast<std::size_t>(s.cout), rng);
        std::vector<float> o1(static_cast<std::size_t>(s.cout) * s.height * s.width), o2(o1.size());
        kernels::scalar_table().conv_forward(in.data(), w.data(), b.data(), s, o1.data());
        avx->conv_forward(in.data(), w.data(), b.data(), s, o2.data());
        CHECK(bit_equal(o1, o2));
        kernels::scalar_table().conv_forward(in.data(), w.data(), nullptr, s, o1.data());
        avx->conv_forward(in.data(), w.data(), nullptr, s, o2.data());
        CHECK(bit_equal(o1, o2));
    }
}

TEST_CASE("AVX2 weight gradient is bit-identical to scalar") {
    const auto* avx = kernels::avx2_table();
    if (!avx) return;
    Rng rng(5);
    for (int rep = 0; rep < 3; ++rep)
        for (const auto& s : kShapes) {
            const auto in = padded_input(s, rng);
            const auto g = random_vec(static_cast<std::size_t>(s.cout) * s.height * s.width, rng);
            // Non-zero starting values: the kernels accumulate.
            auto gw1 = random_vec(static_cast<std::size_t>(s.cout) * s.cin * s.ksize * s.ksize, rng);
            auto gb1 = random_vec(static_cast<std::size_t>(s.cout), rng);
            auto gw2 = gw1, gb2 = gb1;
            kernels::scalar_table().conv_weight_grad(in.data(), g.data(), s, gw1.data(), gb1.data());
            avx->conv_weight_grad(in.data(), g.data(), s, gw2.data(), gb2.data());
            CHECK(bit_equal(gw1, gw2));
            CHECK(bit_equal(gb1, gb2));
        }
}

TEST_CASE("lane combine order") {
    const float lanes[8] = {1e8f, 1.0f, -1e8f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f};
    const float expect = ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6])) + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
    CHECK(kernels::combine_lanes(lanes) == expect);
}

TEST_CASE("active table honours AQUA_FORCE_SCALAR only at first use") {
    const auto& t = kernels::active();
    CHECK((t.name == kernels::scalar_table().name || (kernels::avx2_table() && t.name == kernels::avx2_table()->name)));
}
