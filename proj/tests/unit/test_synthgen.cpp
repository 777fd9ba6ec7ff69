#include <doctest.h>

#include <filesystem>
#include <set>

#include "aqua/core/rng.hpp"
#include "aqua/metrics.hpp"
#include "aqua/synthgen.hpp"
#include "test_util.hpp"

using namespace aqua;
using namespace aqua::synth;

TEST_CASE("generate_pair basics") {
    TissueSpec s;
    s.nuclei_count = 8;
    s.rng_seed = 42;
    const auto a = generate_pair(s, 32, "t");
    const auto b = generate_pair(s, 32, "t");
    CHECK(a.af.pixels == b.af.pixels);
    CHECK(a.he.pixels == b.he.pixels);
    CHECK(a.af.pixels.channels() == 1);
    CHECK(a.he.pixels.channels() == 3);
    a.af.validate();
    a.he.validate();

    TissueSpec bad = s;
    bad.radius_min = 5;
    bad.radius_max = 2;
    CHECK_THROWS(generate_pair(bad, 32));
    bad = s;
    bad.cytoplasm_density = 1.5;
    CHECK_THROWS(generate_pair(bad, 32));
    bad = s;
    bad.background_texture_scale = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(generate_pair(bad, 32));
    CHECK_THROWS(generate_pair(s, 30));
}

TEST_CASE("empty geometry has no nuclei pixels") {
    TissueSpec s;
    s.nuclei_count = 0;
    s.rng_seed = 9;
    const auto p = generate_pair(s, 64);
    CHECK(metrics::count_nuclei(p.he).count == 0);
}

TEST_CASE("pairedness: both renders come from one geometry") {
    TissueSpec s;
    s.nuclei_count = 6;
    s.rng_seed = 5;
    const auto p = generate_pair(s, 32);
    CHECK(render_af(p.geometry) == p.af.pixels);
    CHECK(render_he(p.geometry) == p.he.pixels);
    CHECK(generate_geometry(s, 32).nuclei.size() == p.geometry.nuclei.size());
}

TEST_CASE("corruptions") {
    TissueSpec s;
    s.nuclei_count = 10;
    s.rng_seed = 3;
    const auto he = generate_pair(s, 32).he;
    for (auto m : {Corruption::blur, Corruption::contrast_fade, Corruption::stain_washout}) {
        const auto c = corrupt_hs(he, m, 1e-9);
        for (std::size_t i = 0; i < he.pixels.size(); ++i)
            CHECK(std::abs(c.pixels.storage()[i] - he.pixels.storage()[i]) <= 1e-6f);
        corrupt_hs(he, m, 1.0).validate();
        CHECK_THROWS(corrupt_hs(he, m, 0.0));
        CHECK_THROWS(corrupt_hs(he, m, 1.2));
    }
    CHECK_THROWS(parse_corruption("smudge"));

    // Single bright pixel: blur spreads energy.
    Patch dot{Tensor(3, 16, 16, 0.0f), Domain::HE, "dot", 0};
    for (int c = 0; c < 3; ++c) dot.pixels.at(c, 8, 8) = 1.0f;
    const auto blurred = corrupt_hs(dot, Corruption::blur, 1.0);
    float mx = 0;
    int lit = 0;
    for (float v : blurred.pixels.storage()) {
        mx = std::max(mx, v);
        lit += v > 0;
    }
    CHECK(mx < 1.0f);
    CHECK(lit > 3);

    // Washout: brute-force per-pixel channel spread.
    const auto w = corrupt_hs(he, Corruption::stain_washout, 1.0);
    int shrunk = 0, total = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            auto spread = [&](const Tensor& t) {
                const float a = t.at(0, y, x), b = t.at(1, y, x), c = t.at(2, y, x);
                return std::max({a, b, c}) - std::min({a, b, c});
            };
            const float before = spread(he.pixels), after = spread(w.pixels);
            CHECK(after <= before);
            shrunk += after < before;
            ++total;
        }
    CHECK(shrunk == total);

    // Contrast fade: variance non-increasing in severity.
    auto variance = [](const Tensor& t) {
        double m = 0, v = 0;
        for (float x : t.storage()) m += x;
        m /= t.size();
        for (float x : t.storage()) v += (x - m) * (x - m);
        return v / t.size();
    };
    double prev = variance(he.pixels);
    for (double sev : {0.1, 0.3, 0.45, 0.6, 0.9, 1.0}) {
        const double v = variance(corrupt_hs(he, Corruption::contrast_fade, sev).pixels);
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
}

TEST_CASE("manifests") {
    DatasetConfig cfg;
    cfg.train = 200;
    cfg.val = 50;
    cfg.test = 50;
    cfg.tile_size = 16;
    const auto m = make_manifest(cfg);
    std::set<std::string> ids;
    std::size_t n = 0;
    for (const auto& [split, v] : m.tile_ids) {
        ids.insert(v.begin(), v.end());
        n += v.size();
    }
    CHECK(n == 300);
    CHECK(ids.size() == 300);
    CHECK(make_manifest(cfg) == m);
    CHECK(DatasetManifest::from_json(m.to_json()) == m);
}

TEST_CASE("build_dataset persists, reloads and refuses to overwrite") {
    test::TempDir dir("synth");
    DatasetConfig cfg;
    cfg.train = 4;
    cfg.val = 2;
    cfg.test = 3;
    cfg.tile_size = 16;
    cfg.master_seed = 5;
    const auto m = build_dataset(cfg, dir.path);
    CHECK_THROWS(build_dataset(cfg, dir.path));
    CHECK(build_dataset(cfg, dir.path, true) == m);
    const auto test = load_split(dir.path, Split::test);
    REQUIRE(test.size() == 3);
    const auto fresh = make_split(cfg, m, Split::test);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(test[i].id == fresh[i].id);
        CHECK(test[i].pair.af.pixels == fresh[i].pair.af.pixels);
        CHECK(test[i].pair.he.pixels == fresh[i].pair.he.pixels);
    }
}

TEST_CASE("different master seeds give different pixels") {
    DatasetConfig a;
    a.train = 5;
    a.val = 0;
    a.test = 0;
    a.tile_size = 16;
    DatasetConfig b = a;
    b.master_seed = a.master_seed + 1;
    auto hashes = [](const DatasetConfig& c) {
        std::set<std::uint64_t> h;
        for (const auto& t : make_split(c, make_manifest(c), Split::train))
            h.insert(fnv1a64(t.pair.he.pixels.data(), t.pair.he.pixels.size() * sizeof(float)));
        return h;
    };
    const auto ha = hashes(a), hb = hashes(b);
    for (auto h : ha) CHECK(hb.count(h) == 0);
}
