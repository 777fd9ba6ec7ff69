#include <doctest.h>

#include "aqua/cycler.hpp"
#include "aqua/synthgen.hpp"
#include "aqua/translators.hpp"
#include "test_util.hpp"

using namespace aqua;
using namespace aqua::cycle;

namespace {

synth::Patch he_tile(std::uint64_t seed) {
    synth::TissueSpec s;
    s.nuclei_count = 4;
    s.rng_seed = seed;
    return synth::generate_pair(s, 16, "tile" + std::to_string(seed)).he;
}

translate::Checkpoint untrained(translate::Direction d, std::uint64_t seed, const std::string& id) {
    auto t = std::make_shared<translate::Translator>(d, translate::Widths{4, 8, 8});
    t->init(seed);
    translate::Checkpoint c;
    c.id = id;
    c.params = t;
    return c;
}

}  // namespace

TEST_CASE("T=1 is the input alone") {
    const auto he = he_tile(1);
    const auto s = run_cycles(he, test::identity_pair(), 1);
    REQUIRE(s.frames.size() == 1);
    CHECK(s.frames[0].pixels == he.pixels);
    CHECK(s.T == 1);
    CHECK_THROWS(run_cycles(he, test::identity_pair(), 0));
    CHECK_THROWS(drift_profile(s));
}

TEST_CASE("identity stubs give a fixed point") {
    const auto he = he_tile(2);
    const auto s = run_cycles(he, test::identity_pair(), 5);
    REQUIRE(s.frames.size() == 5);
    for (const auto& f : s.frames) CHECK(f.pixels == he.pixels);
    for (double d : drift_profile(s)) CHECK(d == 0.0);
}

TEST_CASE("constant VS output is absorbing") {
    auto pair = test::identity_pair();
    pair.vs = [](const synth::Patch& af) {
        return synth::Patch{Tensor(3, af.pixels.height(), af.pixels.width(), 0.25f), synth::Domain::HE, af.tile_id, 0};
    };
    const auto d = drift_profile(run_cycles(he_tile(3), pair, 6));
    REQUIRE(d.size() == 5);
    for (double v : d) CHECK(v == d[0]);
    CHECK(d[0] > 0.0);
}

TEST_CASE("real checkpoints: determinism, prefix property, range, direction checks") {
    const auto vs = untrained(translate::Direction::VS, 1, "vs");
    const auto vaf = untrained(translate::Direction::VAF, 2, "vaf");
    const auto he = he_tile(4);
    const auto a = run_cycles(he, vs, vaf, 5, true);
    const auto b = run_cycles(he, vs, vaf, 5);
    CHECK(a.af_frames.size() == 4);
    CHECK(b.af_frames.empty());
    for (int k = 0; k < 5; ++k) CHECK(a.frames[k].pixels == b.frames[k].pixels);
    const auto c = run_cycles(he, vs, vaf, 3);
    for (int k = 0; k < 3; ++k) CHECK(c.frames[k].pixels == a.frames[k].pixels);
    for (const auto& f : a.frames) f.validate();
    CHECK(a.vs_checkpoint_id == "vs");
    CHECK(a.source_tile_id == he.tile_id);
    CHECK_THROWS(run_cycles(he, vaf, vs, 3));
    synth::Patch af{Tensor(1, 16, 16), synth::Domain::AF, "x", 0};
    CHECK_THROWS(run_cycles(af, vs, vaf, 3));
}

TEST_CASE("cycle sequences persist losslessly") {
    test::TempDir dir("cycle");
    const auto s = run_cycles(he_tile(5), untrained(translate::Direction::VS, 1, "vs"),
                              untrained(translate::Direction::VAF, 2, "vaf"), 4);
    save_cycle_seq(s, dir.path / "seq.arr");
    const auto back = load_cycle_seq(dir.path / "seq.arr");
    CHECK(back.T == 4);
    CHECK(back.vaf_checkpoint_id == "vaf");
    CHECK(back.source_tile_id == s.source_tile_id);
    for (int k = 0; k < 4; ++k) CHECK(back.frames[k].pixels == s.frames[k].pixels);
}
