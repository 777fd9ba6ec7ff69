#include <doctest.h>

#include "aqua/hschecks.hpp"
#include "test_util.hpp"

using namespace aqua;
using synth::Corruption;

namespace {

std::vector<synth::Tile> clean_tiles(int n, std::uint64_t seed = 3) {
    synth::DatasetConfig cfg;
    cfg.train = 0;
    cfg.val = 0;
    cfg.test = n;
    cfg.tile_size = 16;
    cfg.nuclei_min = 2;
    cfg.nuclei_max = 4;
    cfg.master_seed = seed;
    return synth::make_split(cfg, synth::make_manifest(cfg), synth::Split::test);
}

const std::vector<Corruption> kModes{Corruption::blur, Corruption::contrast_fade, Corruption::stain_washout};

}  // namespace

TEST_CASE("benchmark is the full cross product") {
    const auto clean = clean_tiles(50);
    const auto b = hs::build_hs_benchmark(clean, kModes, {0.3, 0.6, 0.9});
    CHECK(b.positives() == 450);
    CHECK(b.items.size() == 500);
    for (const auto& it : b.items) {
        if (!it.positive()) continue;
        CHECK(it.id == hs::corrupted_id(it.source_tile_id, *it.mode, it.severity));
        CHECK(it.id != it.source_tile_id);
    }
    CHECK_THROWS(hs::build_hs_benchmark(clean, kModes, {}));
    CHECK_THROWS(hs::build_hs_benchmark({}, kModes, {0.3}));
}

TEST_CASE("benchmark regeneration is identical") {
    const auto a = hs::build_hs_benchmark(clean_tiles(4), kModes, {0.3, 0.9});
    const auto b = hs::build_hs_benchmark(clean_tiles(4), kModes, {0.3, 0.9});
    CHECK(a.to_json() == b.to_json());
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) CHECK(a.items[i].he.pixels == b.items[i].he.pixels);
}

TEST_CASE("training set takes one corrupted copy per tile") {
    const auto t = hs::build_hs_training_set(clean_tiles(12), kModes, {0.3, 0.6, 0.9});
    CHECK(t.positives() == 12);
    CHECK(t.items.size() == 24);
}

TEST_CASE("assessment smoke with identity stubs") {
    const auto pair = test::identity_pair();
    const auto train = hs::build_hs_training_set(clean_tiles(16, 5), kModes, {0.6, 0.9});
    const auto val = hs::build_hs_benchmark(clean_tiles(4, 6), kModes, {0.6});
    net::BackboneConfig bc;
    bc.epochs = 1;
    net::HeadConfig hc;
    hc.epochs = 20;
    const auto clf = hs::train_hs_classifier(train, val, pair, 2, 2, bc, hc);
    CHECK(clf.T == 2);
    const auto bench = hs::build_hs_benchmark(clean_tiles(4, 7), kModes, {0.3, 0.9});
    CHECK_THROWS(hs::run_hs_assessment(bench, pair, nullptr, 2, clf.alpha));
    const auto r = hs::run_hs_assessment(bench, pair, &clf.classifier, 2, clf.alpha);
    CHECK(r.records.size() == bench.items.size());
    CHECK(r.nuclei.size() == bench.items.size());
    CHECK(r.rates.size() == kModes.size() * 2);
    REQUIRE(r.aqua.confusion);
    CHECK(r.aqua.confusion->total() == static_cast<int>(bench.items.size()));
    CHECK(*r.nuclei_count.report.auc >= 0.5);
    CHECK(*r.nuclei_area.report.auc >= 0.5);
    const auto csv = hs::hs_items_csv(bench, r, clf.alpha);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(bench.items.size()) + 1);
}
