#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "aqua/calibration.hpp"
#include "aqua/core/rng.hpp"

using namespace aqua;
using calib::LdaParams;

namespace {

net::ScoreRecord rec(double s, bool pos) {
    net::ScoreRecord r;
    r.mean_score = s;
    r.per_head_scores = {s};
    r.positive = pos;
    return r;
}

// Independent density: written out rather than calling gaussian_pdf.
double density(double x, double mu, double sigma) {
    return std::exp(-(x - mu) * (x - mu) / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * std::numbers::pi));
}

// Dense scan between the means for the sign change, then bisection.
double crossing_by_scan(double mg, double sg, double mp, double sp) {
    const double lo = std::min(mg, mp), hi = std::max(mg, mp);
    const int n = 200000;
    auto f = [&](double x) { return density(x, mg, sg) - density(x, mp, sp); };
    double a = lo, fa = f(lo);
    for (int i = 1; i <= n; ++i) {
        double b = lo + (hi - lo) * i / n;
        const double fb = f(b);
        if ((fa < 0) != (fb < 0)) {
            for (int k = 0; k < 200; ++k) {
                const double m = 0.5 * (a + b);
                if ((f(m) < 0) == (fa < 0)) a = m, fa = f(m);
                else b = m;
            }
            return 0.5 * (a + b);
        }
        a = b, fa = fb;
    }
    return NAN;
}

calib::StudyModel synthetic_model(const std::string& id, bool poor, int n, std::uint64_t seed) {
    Rng rng(seed);
    calib::StudyModel m{id, poor, {}, {}};
    for (int i = 0; i < n; ++i) {
        m.tile_ids.push_back("t" + std::to_string(i));
        const double centre = poor ? 0.75 : 0.25;
        m.scores.push_back(std::clamp(centre + 0.15 * rng.normal(), 0.001, 0.999));
    }
    return m;
}

}  // namespace

TEST_CASE("alpha is the minimum positive validation score") {
    CHECK(calib::calibrate_alpha({rec(0.6, true), rec(0.8, true), rec(0.1, false), rec(0.2, false)}) == 0.6);
    const std::vector<net::ScoreRecord> v{rec(0.5, true), rec(0.7, false)};
    const double a = calib::calibrate_alpha(v);
    CHECK(a == 0.5);
    // The negative at 0.7 is rejected too: specificity suffers, sensitivity holds.
    CHECK(0.7 >= a);
    CHECK_THROWS(calib::calibrate_alpha({rec(0.1, false)}));
    net::ScoreRecord unlabeled;
    CHECK_THROWS(calib::calibrate_alpha({unlabeled}));
}

TEST_CASE("alpha midpoint variant") {
    CHECK(calib::calibrate_alpha({rec(0.6, true), rec(0.4, false), rec(0.9, false)}, true) == doctest::Approx(0.5));
    CHECK(calib::calibrate_alpha({rec(0.6, true), rec(0.9, false)}, true) == 0.6);
}

TEST_CASE("alpha gives full validation sensitivity on random draws") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<net::ScoreRecord> v;
        for (int i = 0; i < 30; ++i) v.push_back(rec(rng.uniform(), rng.uniform() < 0.4));
        v.push_back(rec(rng.uniform(), true));
        for (bool mid : {false, true}) {
            const double a = calib::calibrate_alpha(v, mid);
            for (const auto& r : v)
                if (*r.positive) CHECK(r.mean_score >= a);
        }
    }
}

TEST_CASE("beta symmetric case is the exact midpoint") {
    const auto f = calib::beta_from_params({0.2, 0.8, 0.1, 0.1});
    CHECK(f.beta == 0.5);
    CHECK(calib::beta_from_params({-3.0, 7.0, 2.5, 2.5}).beta == 2.0);
}

TEST_CASE("beta against a density-scan oracle") {
    const auto f = calib::beta_from_params({0.0, 4.0, 1.0, 2.0});
    const double oracle = crossing_by_scan(0.0, 1.0, 4.0, 2.0);
    CHECK(f.between_means);
    CHECK(std::abs(f.beta - oracle) < 1e-9);
    CHECK(std::abs(density(f.beta, 0, 1) - density(f.beta, 4, 2)) < 1e-12);
}

TEST_CASE("beta equal-density property on random parameters") {
    Rng rng(8);
    int between = 0;
    for (int i = 0; i < 100; ++i) {
        LdaParams p;
        p.mu_good = rng.uniform(0.0, 0.6);
        p.mu_poor = rng.uniform(0.4, 1.0);
        p.sigma_good = rng.uniform(0.01, 0.3);
        p.sigma_poor = rng.uniform(0.01, 0.3);
        if (p.mu_good == p.mu_poor) continue;
        const auto f = calib::beta_from_params(p);
        CHECK(std::abs(density(f.beta, p.mu_good, p.sigma_good) - density(f.beta, p.mu_poor, p.sigma_poor)) < 1e-9);
        if (f.between_means) {
            ++between;
            CHECK(f.beta > std::min(p.mu_good, p.mu_poor));
            CHECK(f.beta < std::max(p.mu_good, p.mu_poor));
        }
    }
    CHECK(between > 50);
}

TEST_CASE("calibrate_beta fits sample moments") {
    const std::vector<double> g{0.1, 0.2, 0.3}, p{0.7, 0.8, 0.9};
    const auto f = calib::calibrate_beta(g, p);
    CHECK(f.lda.mu_good == doctest::Approx(0.2));
    CHECK(f.lda.sigma_good == doctest::Approx(0.1));
    CHECK(f.beta == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS(calib::calibrate_beta({0.1}, p));
    CHECK_THROWS(calib::calibrate_beta({0.5, 0.5}, p));
    CHECK_THROWS(calib::calibrate_beta({0.1, 0.3}, {0.3, 0.1}));
}

TEST_CASE("calibration json round trip") {
    calib::CalibrationResult c;
    c.alpha = 0.123456789012345;
    c.val_positive_min_score = 0.2;
    c.val_positives = 7;
    c.val_negatives = 9;
    c.beta = calib::beta_from_params({0.1, 0.9, 0.05, 0.2});
    c.beta_N = 5;
    c.beta_R = 100;
    c.beta_good_models = {"a", "b"};
    c.beta_poor_models = {"c"};
    c.master_seed = 99;
    c.vs_checkpoint_id = "vs";
    c.vaf_checkpoint_id = "vaf";
    c.backbone_hash = 0xFFFFFFFFFFFFFFF1ULL;
    const auto back = calib::calibration_from_json(calib::to_json(c));
    CHECK(back.alpha == c.alpha);
    CHECK(back.beta->beta == c.beta->beta);
    CHECK(back.beta->lda.sigma_poor == c.beta->lda.sigma_poor);
    CHECK(back.beta_poor_models == c.beta_poor_models);
    CHECK(back.backbone_hash == c.backbone_hash);
    CHECK(calib::to_json(back) == calib::to_json(c));
}

TEST_CASE("assess_model") {
    const std::vector<std::string> pool{"a", "b", "c", "d", "e"};
    const std::vector<double> s{0.1, 0.2, 0.9, 0.4, 0.5};
    auto scorer = [&](std::size_t i) { return rec(s[i], false); };
    const auto v1 = calib::assess_model("m", pool, 1, 0.5, 3, scorer);
    REQUIRE(v1.scores.size() == 1);
    CHECK(v1.sbar == v1.scores[0]);
    const auto v5 = calib::assess_model("m", pool, 5, 0.5, 3, scorer);
    CHECK(std::abs(v5.sbar - 0.42) < 1e-9);
    CHECK(v5.verdict == calib::ModelDecision::accept_model);
    CHECK(std::set<std::string>(v5.sample_tile_ids.begin(), v5.sample_tile_ids.end()).size() == 5);
    // s-bar exactly at beta rejects.
    CHECK(calib::assess_model("m", pool, 5, v5.sbar, 3, scorer).verdict == calib::ModelDecision::reject_model);
    CHECK_THROWS(calib::assess_model("m", pool, 6, 0.5, 3, scorer));
    const auto again = calib::assess_model("m", pool, 3, 0.5, 3, scorer);
    CHECK(again.sample_tile_ids == calib::assess_model("m", pool, 3, 0.5, 3, scorer).sample_tile_ids);
}

TEST_CASE("maqua study shape and concentration") {
    std::vector<calib::StudyModel> models;
    for (int i = 0; i < 10; ++i) models.push_back(synthetic_model("m" + std::to_string(i), i >= 5, 40, 100 + i));
    const std::vector<int> grid{2, 5, 10, 20};
    const auto r = calib::maqua_study(models, grid, 100, 0.5, 7);
    CHECK(r.rows.size() == 40);
    CHECK(r.resamples.size() == 4000);
    REQUIRE(r.per_N.size() == 4);
    CHECK(r.per_N.back().accuracy == 1.0);
    for (std::size_t i = 1; i < r.per_N.size(); ++i) CHECK(r.per_N[i].accuracy >= r.per_N[i - 1].accuracy);
    for (const auto& m : models) {
        double s2 = 0, s20 = 0;
        for (const auto& row : r.rows) {
            if (row.model_id != m.model_id) continue;
            REQUIRE(row.std_sbar);
            if (row.N == 2) s2 = *row.std_sbar;
            if (row.N == 20) s20 = *row.std_sbar;
        }
        CHECK(s20 < s2);
        CHECK(s20 <= 0.5 * s2);
    }
    // Order-independent seeding: a reversed model list gives the same resamples.
    auto rev = models;
    std::reverse(rev.begin(), rev.end());
    const auto r2 = calib::maqua_study(rev, grid, 100, 0.5, 7);
    for (const auto& a : r.resamples)
        for (const auto& b : r2.resamples)
            if (a.N == b.N && a.model_id == b.model_id && a.rep == b.rep) CHECK(a.sbar == b.sbar);
    CHECK(calib::study_rows_csv(r) == calib::study_rows_csv(calib::maqua_study(models, grid, 100, 0.5, 7)));
}

TEST_CASE("maqua study with a single repetition has no std") {
    std::vector<calib::StudyModel> models{synthetic_model("g", false, 10, 1), synthetic_model("p", true, 10, 2)};
    const auto r = calib::maqua_study(models, {2}, 1, 0.5, 7);
    for (const auto& row : r.rows) CHECK_FALSE(row.std_sbar.has_value());
    CHECK(calib::study_rows_csv(r).find("nan") == std::string::npos);
}
