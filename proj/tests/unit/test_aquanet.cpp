#include <doctest.h>

#include <algorithm>
#include <set>

#include "aqua/aquanet.hpp"
#include "aqua/core/rng.hpp"
#include "aqua/cycler.hpp"
#include "aqua/synthgen.hpp"
#include "test_util.hpp"

using namespace aqua;
using namespace aqua::net;

namespace {

// Separable synthetic features: positives drift upward along the T axis.
std::vector<LabeledFeatures> toy_features(int n, int T, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledFeatures> v;
    for (int i = 0; i < n; ++i) {
        LabeledFeatures lf;
        lf.positive = i % 2 == 1;
        lf.features.T = T;
        for (int t = 0; t < T; ++t)
            for (int d = 0; d < kFeatureDim; ++d)
                lf.features.x.push_back(0.3 * rng.normal() + (lf.positive ? 0.4 * t / std::max(1, T - 1) + 0.5 : 0.0));
        v.push_back(std::move(lf));
    }
    return v;
}

HeadConfig quick_heads(std::uint64_t seed) {
    HeadConfig h;
    h.epochs = 30;
    h.seed = seed;
    return h;
}

ScoreRecord with_scores(std::vector<double> s) {
    ScoreRecord r;
    r.per_head_scores = s;
    double m = 0;
    for (double x : s) m += x;
    r.mean_score = m / s.size();
    return r;
}

synth::Patch he_tile(std::uint64_t seed) {
    synth::TissueSpec s;
    s.nuclei_count = 4;
    s.rng_seed = seed;
    return synth::generate_pair(s, 16, "t" + std::to_string(seed)).he;
}

}  // namespace

TEST_CASE("classify threshold rule") {
    CHECK(classify(with_scores({0.9}), 0.5253) == Verdict::reject);
    CHECK(classify(with_scores({0.1}), 0.6263) == Verdict::accept);
    CHECK(classify(with_scores({0.5}), 0.5) == Verdict::reject);
    // Majority mode counts head votes; ties go to rejection.
    CHECK(classify(with_scores({0.9, 0.1}), 0.5, EnsembleMode::majority) == Verdict::reject);
    CHECK(classify(with_scores({0.9, 0.1, 0.2}), 0.5, EnsembleMode::majority) == Verdict::accept);
    CHECK(parse_ensemble_mode("majority") == EnsembleMode::majority);
    CHECK_THROWS(parse_ensemble_mode("median"));
}

TEST_CASE("heads: shape errors, determinism, diversity") {
    const auto data = toy_features(40, 5, 1);
    CHECK_THROWS(train_heads(data, 0, quick_heads(1)));
    auto one_class = data;
    for (auto& d : one_class) d.positive = false;
    CHECK_THROWS(train_heads(one_class, 2, quick_heads(1)));

    const auto a = train_heads(data, 4, quick_heads(2));
    const auto b = train_heads(data, 4, quick_heads(2));
    REQUIRE(a.size() == 4);
    std::set<std::uint64_t> hashes;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].hash() == b[i].hash());
        hashes.insert(a[i].hash());
        CHECK(a[i].bootstrap_indices.size() == data.size());
    }
    CHECK(hashes.size() == 4);
}

TEST_CASE("scores are bounded, reproducible and symmetric in the heads") {
    const auto data = toy_features(60, 5, 3);
    auto heads = train_heads(data, 4, quick_heads(4));
    for (const auto& d : toy_features(20, 5, 99)) {
        const auto r1 = score(d.features, heads);
        const auto r2 = score(d.features, heads);
        CHECK(r1.per_head_scores == r2.per_head_scores);
        CHECK(r1.mean_score == r2.mean_score);
        double m = 0;
        for (double s : r1.per_head_scores) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
            m += s;
        }
        CHECK(std::abs(r1.mean_score - m / 4) < 1e-9);
        auto perm = heads;
        std::reverse(perm.begin(), perm.end());
        std::rotate(perm.begin(), perm.begin() + 1, perm.end());
        CHECK(score(d.features, perm).mean_score == r1.mean_score);
    }
    // A single head is its own ensemble.
    const auto single = train_heads(data, 1, quick_heads(5));
    const auto r = score(data[0].features, single);
    CHECK(r.mean_score == r.per_head_scores[0]);
    // Wrong T is refused.
    CHECK_THROWS(score(toy_features(1, 3, 1)[0].features, heads));
}

TEST_CASE("heads learn a separable toy problem") {
    const auto heads = train_heads(toy_features(80, 5, 6), 4, quick_heads(7));
    int strong = 0, n = 0;
    for (const auto& d : toy_features(40, 5, 8)) {
        if (!d.positive) continue;
        const auto r = score(d.features, heads);
        bool all = true;
        for (double s : r.per_head_scores) all = all && s > 0.5;
        strong += all;
        ++n;
    }
    CHECK(strong >= n * 9 / 10);
}

TEST_CASE("backbone pretraining and frozen classifier") {
    std::vector<synth::Patch> frames;
    for (int i = 0; i < 12; ++i) frames.push_back(he_tile(100 + i));
    BackboneConfig bc;
    bc.epochs = 3;
    bc.batch = 4;
    bc.seed = 11;
    const auto a = pretrain_backbone(frames, bc);
    const auto b = pretrain_backbone(frames, bc);
    CHECK(a.hash == b.hash);
    CHECK(a.backbone.hash() == a.hash);
    CHECK_THROWS(pretrain_backbone(std::vector<synth::Patch>{}, bc));

    // Held-out reconstruction beats an untrained autoencoder.
    std::vector<synth::Patch> held;
    for (int i = 0; i < 6; ++i) held.push_back(he_tile(500 + i));
    FrameAutoencoder untrained;
    untrained.init(11);
    // pretrain_backbone keeps only the encoder, so train a whole autoencoder
    // the same way to compare reconstructions.
    FrameAutoencoder ae;
    ae.init(11);
    nn::Adam opt(ae.params(), 2e-3);
    for (int e = 0; e < 3; ++e)
        for (std::size_t i = 0; i + 4 <= frames.size(); i += 4) {
            std::vector<const Tensor*> batch;
            for (std::size_t k = i; k < i + 4; ++k) batch.push_back(&frames[k].pixels);
            ae.train_step(batch, opt);
        }
    CHECK(ae.reconstruction_l1(held) < untrained.reconstruction_l1(held));

    // Identical frames map to identical features.
    const auto seq = cycle::run_cycles(he_tile(7), test::identity_pair(), 3);
    const auto f = extract(a.backbone, seq);
    CHECK(f.T == 3);
    CHECK(f.x.size() == static_cast<std::size_t>(3 * kFeatureDim));
    for (int d = 0; d < kFeatureDim; ++d) {
        CHECK(f.x[d] == f.x[kFeatureDim + d]);
        CHECK(f.x[d] == f.x[2 * kFeatureDim + d]);
    }
}

TEST_CASE("train_classifier keeps the backbone frozen and round-trips") {
    std::vector<cycle::CycleSeq> seqs;
    std::vector<bool> labels;
    auto pair = test::identity_pair();
    auto noisy = test::identity_pair();
    // Positive stub: every cycle darkens the image.
    noisy.vs = [inner = noisy.vs](const synth::Patch& af) {
        auto p = inner(af);
        for (auto& v : p.pixels.storage()) v *= 0.8f;
        return p;
    };
    for (int i = 0; i < 24; ++i) {
        const bool pos = i % 2;
        seqs.push_back(cycle::run_cycles(he_tile(200 + i), pos ? noisy : pair, 3));
        labels.push_back(pos);
    }
    BackboneConfig bc;
    bc.epochs = 1;
    bc.seed = 2;
    HeadConfig hc = quick_heads(3);
    const auto t = train_classifier(seqs, labels, 2, bc, hc);
    CHECK(t.classifier.backbone.hash() == t.classifier.backbone_hash);
    CHECK(t.features.size() == seqs.size());
    CHECK_THROWS(train_classifier(seqs, std::vector<bool>(3, true), 2, bc, hc));

    test::TempDir dir("clf");
    auto c = t.classifier;
    c.meta_json = R"({"note":"x"})";
    save_classifier(c, dir.path / "c.arr");
    const auto back = load_classifier(dir.path / "c.arr");
    CHECK(back.backbone_hash == c.backbone_hash);
    CHECK(back.meta_json == c.meta_json);
    REQUIRE(back.heads.size() == 2);
    const auto s1 = score(seqs[1], c.backbone, c.heads), s2 = score(seqs[1], back.backbone, back.heads);
    CHECK(s1.per_head_scores == s2.per_head_scores);
    CHECK(s1.tile_id == seqs[1].source_tile_id);
}
