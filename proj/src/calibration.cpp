// SPDX-License-Identifier: Apache-2.0
#include "aqua/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "aqua/core/rng.hpp"
#include "aqua/io/text.hpp"
#include "aqua/metrics.hpp"

namespace aqua::calib {

double calibrate_alpha(const std::vector<net::ScoreRecord>& val, bool midpoint) {
    double min_pos = std::numeric_limits<double>::infinity();
    for (const auto& r : val) {
        if (!r.positive) throw std::invalid_argument("calibrate_alpha: unlabeled validation record " + r.tile_id);
        if (*r.positive) min_pos = std::min(min_pos, r.mean_score);
    }
    if (!std::isfinite(min_pos)) throw std::invalid_argument("calibrate_alpha: no positive validation records");
    if (!midpoint) return min_pos;
    double below = -std::numeric_limits<double>::infinity();
    for (const auto& r : val)
        if (!*r.positive && r.mean_score < min_pos) below = std::max(below, r.mean_score);
    return std::isfinite(below) ? 0.5 * (below + min_pos) : min_pos;
}

double gaussian_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

BetaFit beta_from_params(const LdaParams& p) {
    if (!(p.sigma_good > 0) || !(p.sigma_poor > 0)) throw std::invalid_argument("beta: sigmas must be positive");
    if (p.mu_good == p.mu_poor) throw std::invalid_argument("beta: class means are identical");
    BetaFit fit;
    fit.lda = p;
    const double mg = p.mu_good, mp = p.mu_poor, sg = p.sigma_good, sp = p.sigma_poor;
    if (std::abs(sg - sp) <= 1e-12) {
        fit.beta = (mg + mp) / 2;
        return fit;
    }
    // log N(s; mg, sg) - log N(s; mp, sp) = -(a s^2 + b s + c)
    const double ig = 1.0 / (sg * sg), ip = 1.0 / (sp * sp);
    const double a = 0.5 * (ig - ip);
    const double b = mp * ip - mg * ig;
    const double c = 0.5 * (mg * mg * ig - mp * mp * ip) + std::log(sg / sp);
    const double disc = b * b - 4 * a * c;
    // Unequal sigmas always cross twice: the narrow density peaks higher and
    // has lighter tails.
    const double sq = std::sqrt(std::max(disc, 0.0));
    const double q = -0.5 * (b + std::copysign(sq, b));
    double roots[2] = {q / a, q != 0 ? c / q : q / a};
    auto g = [&](double s) { return -(a * s * s + b * s + c); };
    auto dg = [&](double s) { return -(2 * a * s + b); };
    for (double& r : roots)
        for (int it = 0; it < 3; ++it) {
            const double d = dg(r);
            if (d == 0) break;
            r -= g(r) / d;
        }
    const double lo = std::min(mg, mp), hi = std::max(mg, mp), mid = (mg + mp) / 2;
    const bool in0 = roots[0] > lo && roots[0] < hi, in1 = roots[1] > lo && roots[1] < hi;
    if (in0 != in1) {
        fit.beta = in0 ? roots[0] : roots[1];
    } else {
        fit.beta = std::abs(roots[0] - mid) <= std::abs(roots[1] - mid) ? roots[0] : roots[1];
        fit.between_means = in0;
    }
    return fit;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    double s = 0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

BetaFit calibrate_beta(const std::vector<double>& good_sbars, const std::vector<double>& poor_sbars) {
    if (good_sbars.size() < 2 || poor_sbars.size() < 2)
        throw std::invalid_argument("calibrate_beta: need at least 2 values per class");
    LdaParams p;
    mean_std(good_sbars, p.mu_good, p.sigma_good);
    mean_std(poor_sbars, p.mu_poor, p.sigma_poor);
    if (p.sigma_good == 0 || p.sigma_poor == 0) throw std::invalid_argument("calibrate_beta: zero variance class");
    return beta_from_params(p);
}

std::string to_json(const CalibrationResult& c) {
    nlohmann::ordered_json j;
    j["alpha"] = c.alpha;
    j["alpha_rule"] = c.alpha_midpoint ? "midpoint" : "min_positive";
    j["val_positive_min_score"] = c.val_positive_min_score;
    j["val_positives"] = c.val_positives;
    j["val_negatives"] = c.val_negatives;
    j["val_sensitivity"] = c.val_sensitivity;
    j["val_specificity"] = c.val_specificity;
    if (c.beta) {
        const auto& f = *c.beta;
        j["beta"] = f.beta;
        j["beta_between_means"] = f.between_means;
        j["lda_params"] = {{"mu_good", f.lda.mu_good},       {"mu_poor", f.lda.mu_poor},
                           {"sigma_good", f.lda.sigma_good}, {"sigma_poor", f.lda.sigma_poor},
                           {"prior_good", f.lda.prior_good}, {"prior_poor", f.lda.prior_poor}};
        j["beta_N"] = c.beta_N;
        j["beta_R"] = c.beta_R;
        j["beta_good_models"] = c.beta_good_models;
        j["beta_poor_models"] = c.beta_poor_models;
    }
    j["provenance"] = {{"master_seed", c.master_seed},
                       {"vs_checkpoint_id", c.vs_checkpoint_id},
                       {"vaf_checkpoint_id", c.vaf_checkpoint_id},
                       {"backbone_hash", c.backbone_hash}};
    return j.dump(2) + "\n";
}

CalibrationResult calibration_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    CalibrationResult c;
    c.alpha = j.at("alpha").get<double>();
    c.alpha_midpoint = j.at("alpha_rule").get<std::string>() == "midpoint";
    c.val_positive_min_score = j.at("val_positive_min_score").get<double>();
    c.val_positives = j.at("val_positives").get<int>();
    c.val_negatives = j.at("val_negatives").get<int>();
    c.val_sensitivity = j.at("val_sensitivity").get<double>();
    c.val_specificity = j.at("val_specificity").get<double>();
    if (j.contains("beta")) {
        BetaFit f;
        f.beta = j.at("beta").get<double>();
        f.between_means = j.at("beta_between_means").get<bool>();
        const auto& l = j.at("lda_params");
        f.lda = {l.at("mu_good").get<double>(),    l.at("mu_poor").get<double>(),
                 l.at("sigma_good").get<double>(), l.at("sigma_poor").get<double>(),
                 l.at("prior_good").get<double>(), l.at("prior_poor").get<double>()};
        c.beta = f;
        c.beta_N = j.at("beta_N").get<int>();
        c.beta_R = j.at("beta_R").get<int>();
        c.beta_good_models = j.at("beta_good_models").get<std::vector<std::string>>();
        c.beta_poor_models = j.at("beta_poor_models").get<std::vector<std::string>>();
    }
    const auto& p = j.at("provenance");
    c.master_seed = p.at("master_seed").get<std::uint64_t>();
    c.vs_checkpoint_id = p.at("vs_checkpoint_id").get<std::string>();
    c.vaf_checkpoint_id = p.at("vaf_checkpoint_id").get<std::string>();
    c.backbone_hash = p.at("backbone_hash").get<std::uint64_t>();
    return c;
}

std::string_view to_string(ModelDecision d) noexcept {
    return d == ModelDecision::reject_model ? "reject_model" : "accept_model";
}

std::uint64_t sample_seed(std::uint64_t master_seed, const std::string& model_id, std::uint64_t rep) {
    return derive_seed(derive_seed(master_seed, "maqua"), model_id, rep);
}

ModelVerdict assess_model(const std::string& model_id, const std::vector<std::string>& pool_tile_ids, int N,
                          double beta, std::uint64_t seed, const TileScorer& scorer) {
    if (N < 1) throw std::invalid_argument("assess_model: N must be >= 1");
    if (pool_tile_ids.size() < static_cast<std::size_t>(N))
        throw std::invalid_argument("assess_model: pool has " + std::to_string(pool_tile_ids.size()) +
                                    " tiles, fewer than N=" + std::to_string(N));
    Rng rng(seed);
    const auto idx = rng.sample_without_replacement(pool_tile_ids.size(), static_cast<std::size_t>(N));
    ModelVerdict v;
    v.model_id = model_id;
    v.N = N;
    double s = 0;
    for (std::size_t i : idx) {
        const double m = scorer(i).mean_score;
        v.sample_tile_ids.push_back(pool_tile_ids[i]);
        v.scores.push_back(m);
        s += m;
    }
    v.sbar = s / N;
    v.verdict = v.sbar >= beta ? ModelDecision::reject_model : ModelDecision::accept_model;
    return v;
}

namespace {

std::vector<double> draw_sbars(const StudyModel& m, int N, int R, std::uint64_t master_seed) {
    if (m.scores.size() != m.tile_ids.size()) throw std::invalid_argument("study: scores/tile_ids misaligned");
    if (m.scores.size() < static_cast<std::size_t>(N))
        throw std::invalid_argument("study: model " + m.model_id + " pool smaller than N=" + std::to_string(N));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
        // The per-(model, rep) stream is shared across N, so a larger N extends
        // the same draw order.
        Rng rng(sample_seed(master_seed, m.model_id, static_cast<std::uint64_t>(r)));
        const auto idx = rng.sample_without_replacement(m.scores.size(), static_cast<std::size_t>(N));
        double s = 0;
        for (std::size_t i : idx) s += m.scores[i];
        out.push_back(s / N);
    }
    return out;
}

}  // namespace

void resampled_sbars(const std::vector<StudyModel>& models, int N, int R, std::uint64_t master_seed,
                     std::vector<double>& good, std::vector<double>& poor) {
    for (const auto& m : models) {
        const auto v = draw_sbars(m, N, R, master_seed);
        (m.poor ? poor : good).insert((m.poor ? poor : good).end(), v.begin(), v.end());
    }
}

StudyReport maqua_study(const std::vector<StudyModel>& models, const std::vector<int>& N_grid, int R, double beta,
                        std::uint64_t master_seed) {
    if (R < 1) throw std::invalid_argument("maqua_study: R must be >= 1");
    StudyReport rep;
    rep.beta = beta;
    rep.R = R;
    for (int N : N_grid) {
        if (N < 1) throw std::invalid_argument("maqua_study: N must be >= 1");
        std::vector<double> good, poor;
        int correct = 0, total = 0;
        for (const auto& m : models) {
            const auto sb = draw_sbars(m, N, R, master_seed);
            StudyRow row;
            row.N = N;
            row.model_id = m.model_id;
            row.poor = m.poor;
            double s = 0;
            int ok = 0;
            for (int r = 0; r < R; ++r) {
                const auto d = sb[r] >= beta ? ModelDecision::reject_model : ModelDecision::accept_model;
                rep.resamples.push_back({N, m.model_id, r, sb[r], d});
                s += sb[r];
                ok += (d == ModelDecision::reject_model) == m.poor;
            }
            row.mean_sbar = s / R;
            if (R > 1) {
                double ss = 0;
                for (double x : sb) ss += (x - row.mean_sbar) * (x - row.mean_sbar);
                row.std_sbar = std::sqrt(ss / (R - 1));
            }
            row.verdict = row.mean_sbar >= beta ? ModelDecision::reject_model : ModelDecision::accept_model;
            row.correct_fraction = static_cast<double>(ok) / R;
            correct += ok;
            total += R;
            (m.poor ? poor : good).insert((m.poor ? poor : good).end(), sb.begin(), sb.end());
            rep.rows.push_back(std::move(row));
        }
        StudyNSummary sum;
        sum.N = N;
        sum.accuracy = total ? static_cast<double>(correct) / total : 0.0;
        sum.kl = !good.empty() && !poor.empty() ? metrics::kl_divergence(poor, good) : 0.0;
        rep.per_N.push_back(sum);
    }
    return rep;
}

std::string study_rows_csv(const StudyReport& r) {
    io::CsvWriter w({"N", "model_id", "label", "mean_sbar", "std_sbar", "verdict", "correct_fraction"});
    for (const auto& row : r.rows)
        w.row({std::to_string(row.N), row.model_id, row.poor ? "poor" : "good", io::fmt_num(row.mean_sbar),
               row.std_sbar ? io::fmt_num(*row.std_sbar) : "", std::string(to_string(row.verdict)),
               io::fmt_num(row.correct_fraction)});
    return w.str();
}

std::string study_resamples_csv(const StudyReport& r) {
    io::CsvWriter w({"N", "model_id", "rep", "sbar", "verdict"});
    for (const auto& s : r.resamples)
        w.row({std::to_string(s.N), s.model_id, std::to_string(s.rep), io::fmt_num(s.sbar),
               std::string(to_string(s.verdict))});
    return w.str();
}

std::string study_summary_json(const StudyReport& r) {
    nlohmann::ordered_json j;
    j["beta"] = r.beta;
    j["R"] = r.R;
    j["kl_direction"] = "poor||good";
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : r.per_N) arr.push_back({{"N", s.N}, {"accuracy", s.accuracy}, {"kl", s.kl}});
    j["per_N"] = arr;
    return j.dump(2) + "\n";
}

}  // namespace aqua::calib
