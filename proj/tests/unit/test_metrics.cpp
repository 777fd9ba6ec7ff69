#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "aqua/core/rng.hpp"
#include "aqua/metrics.hpp"
#include "aqua/synthgen.hpp"

using namespace aqua;
using synth::Domain;
using synth::Patch;

namespace {

Patch random_patch(std::uint64_t seed, int size = 16) {
    Rng rng(seed);
    Patch p{Tensor(3, size, size), Domain::HE, "r" + std::to_string(seed), seed};
    for (auto& v : p.pixels.storage()) v = static_cast<float>(rng.uniform());
    return p;
}

Patch constant_patch(float v, int size = 8) { return Patch{Tensor(3, size, size, v), Domain::HE, "c", 0}; }

std::vector<double> gaussian(std::uint64_t seed, int n, double mu, double sigma) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = mu + sigma * rng.normal();
    return v;
}

// Direct histogram-and-sum: explicit bin edges, smoothing, renormalise.
double kl_oracle(const std::vector<double>& pos, const std::vector<double>& neg, int bins, double eps) {
    std::vector<double> all = pos;
    all.insert(all.end(), neg.begin(), neg.end());
    const double lo = *std::min_element(all.begin(), all.end());
    const double hi = *std::max_element(all.begin(), all.end());
    const double width = (hi - lo) / bins;
    auto hist = [&](const std::vector<double>& v) {
        std::vector<long double> h(static_cast<std::size_t>(bins), 0.0L);
        for (double x : v) {
            int b = bins - 1;
            for (int k = 1; k < bins; ++k)
                if (x < lo + width * k) {
                    b = k - 1;
                    break;
                }
            h[static_cast<std::size_t>(b)] += 1.0L;
        }
        long double z = 0;
        for (auto& c : h) {
            c = c / v.size() + eps;
            z += c;
        }
        for (auto& c : h) c /= z;
        return h;
    };
    const auto p = hist(pos), q = hist(neg);
    long double kl = 0;
    for (int i = 0; i < bins; ++i) kl += p[i] * std::log(p[i] / q[i]);
    return static_cast<double>(kl);
}

}  // namespace

TEST_CASE("mse identities") {
    const auto x = random_patch(1);
    CHECK(metrics::mse(x, x) == 0.0);
    CHECK(metrics::mse(constant_patch(0.0f), constant_patch(1.0f)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("mse matches an extended-precision summation oracle") {
    const auto a = random_patch(2, 32), b = random_patch(3, 32);
    long double s = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const long double d = static_cast<long double>(a.pixels.storage()[i]) - b.pixels.storage()[i];
        s += d * d;
    }
    const double oracle = static_cast<double>(s / a.pixels.size());
    CHECK(std::abs(metrics::mse(a, b) - oracle) < 1e-12);
}

TEST_CASE("pcc identities") {
    const auto x = random_patch(4);
    CHECK(std::abs(metrics::pcc(x, x) - 1.0) < 1e-9);
    Patch rev = x, aff = x;
    for (auto& v : rev.pixels.storage()) v = 1.0f - v;
    for (auto& v : aff.pixels.storage()) v = 0.5f + 0.25f * v;
    CHECK(std::abs(metrics::pcc(x, rev) + 1.0) < 1e-9);
    CHECK(std::abs(metrics::pcc(x, aff) - 1.0) < 1e-9);
    CHECK_THROWS_AS(metrics::pcc(constant_patch(0.3f), constant_patch(0.3f)), std::domain_error);
}

TEST_CASE("psnr identities") {
    const auto x = random_patch(5);
    CHECK(metrics::psnr(x, x) == metrics::kPsnrCap);
    // One pixel in a hundred off by exactly 1 gives mse = 0.01.
    Tensor a(1, 10, 10, 0.0f), b(1, 10, 10, 0.0f);
    b.at(0, 3, 7) = 1.0f;
    CHECK(metrics::mse(a, b) == 0.01);
    CHECK(std::abs(metrics::psnr(a, b) - 20.0) < 1e-9);
    CHECK(std::abs(metrics::psnr(constant_patch(0.0f), constant_patch(1.0f))) < 1e-9);
}

TEST_CASE("welch t") {
    const std::vector<double> g{0.1, 0.4, 0.2, 0.9};
    CHECK(metrics::welch_t(g, g) == 0.0);
    // Mean gap 2, sample variance 0.5 in each group of two:
    // 2 / sqrt(0.5/2 + 0.5/2) = 2 sqrt(2).
    const double oracle = 2.0 / std::sqrt(0.5 / 2 + 0.5 / 2);
    CHECK(std::abs(oracle - 2.0 * std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(metrics::welch_t({0, 1}, {2, 3}) - oracle) < 1e-12);
    const auto p = gaussian(8, 30, 1.0, 0.5), n = gaussian(9, 40, 0.2, 0.3);
    for (double c : {0.001, 3.0, 1e4}) {
        std::vector<double> ps = p, ns = n;
        for (auto& v : ps) v *= c;
        for (auto& v : ns) v *= c;
        CHECK(metrics::welch_t(ps, ns) == doctest::Approx(metrics::welch_t(p, n)).epsilon(1e-9));
    }
}

TEST_CASE("kl divergence") {
    const auto a = gaussian(10, 200, 0.0, 1.0);
    CHECK(std::abs(metrics::kl_divergence(a, a)) < 1e-9);

    // Disjoint supports: finite, bounded by the smoothing floor.
    const std::vector<double> lo{0.0, 0.1, 0.2}, hi{5.0, 5.1, 5.2};
    const double kl = metrics::kl_divergence(hi, lo);
    CHECK(std::isfinite(kl));
    CHECK(kl > 10.0);
    CHECK(kl <= std::log(1.0 / metrics::kKlEpsilon) + 1e-9);

    const auto p = gaussian(11, 500, 0.7, 0.2), q = gaussian(12, 400, 0.3, 0.25);
    CHECK(std::abs(metrics::kl_divergence(p, q) - kl_oracle(p, q, 20, metrics::kKlEpsilon)) < 1e-12);
    CHECK(std::abs(metrics::kl_divergence(q, p, 7) - kl_oracle(q, p, 7, metrics::kKlEpsilon)) < 1e-12);
    CHECK(metrics::kl_divergence(p, q) >= 0.0);
}

TEST_CASE("auc") {
    CHECK(metrics::auc({3, 4}, {1, 2}) == 1.0);
    CHECK(metrics::auc({1, 2}, {3, 4}) == 0.0);
    CHECK(metrics::auc({1}, {1}) == 0.5);
    const auto p = gaussian(13, 50, 0.5, 1.0), n = gaussian(14, 60, 0.0, 1.0);
    double wins = 0;
    for (double x : p)
        for (double y : n) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    CHECK(std::abs(metrics::auc(p, n) - wins / (p.size() * n.size())) < 1e-12);
}

TEST_CASE("confusion at a threshold") {
    const std::vector<metrics::LabeledScore> r{{0.9, true}, {0.7, true}, {0.2, false}, {0.1, false}};
    const auto c = metrics::confusion(r, 0.5);
    CHECK(c.accuracy() == 1.0);
    const auto all = metrics::confusion(r, 0.0);
    CHECK(all.sensitivity() == 1.0);
    CHECK(all.specificity() == 0.0);
    CHECK(all.total() == 4);
    // Tie goes to rejection.
    CHECK(metrics::confusion({{0.5, true}}, 0.5).tp == 1);
}

TEST_CASE("separation report invariants") {
    const auto p = gaussian(15, 80, 1.0, 0.4), n = gaussian(16, 90, 0.0, 0.6);
    const auto s = metrics::separation("x", p, n);
    CHECK(s.abs_t >= 0.0);
    CHECK(s.kl_divergence >= 0.0);
    REQUIRE(s.auc);
    CHECK(*s.auc > 0.8);
}

TEST_CASE("nuclei counting") {
    synth::TissueSpec empty;
    empty.nuclei_count = 0;
    empty.rng_seed = 3;
    const auto e = synth::generate_pair(empty, 64);
    const auto st = metrics::count_nuclei(e.he);
    CHECK(st.count == 0);
    CHECK(st.count_per_unit_area == 0.0);
    CHECK(st.mean_area_px == 0.0);

    synth::TissueSpec spec;
    spec.nuclei_count = 20;
    spec.rng_seed = 7;
    const auto pr = synth::generate_pair(spec, 128);
    const int placed = static_cast<int>(pr.geometry.nuclei.size());
    const int counted = metrics::count_nuclei(pr.he).count;
    CHECK(std::abs(counted - placed) <= std::max(1, static_cast<int>(std::ceil(0.05 * placed))));

    const auto washed = synth::corrupt_hs(pr.he, synth::Corruption::stain_washout, 1.0);
    CHECK(metrics::count_nuclei(washed).count < counted);
}
