// SPDX-License-Identifier: Apache-2.0
//
// Threshold selection and model-level acceptance.
//   alpha: image threshold, the largest value that still rejects every
//          validation positive.
//   beta:  model threshold, where the two fitted Gaussians of per-model mean
//          scores have equal density.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aqua/aquanet.hpp"

namespace aqua::calib {

// alpha = min positive mean_score. With midpoint=true, alpha is moved halfway
// down to the largest negative strictly below that minimum (if any).
// Throws std::invalid_argument when there is no labeled positive.
double calibrate_alpha(const std::vector<net::ScoreRecord>& val, bool midpoint = false);

struct LdaParams {
    double mu_good = 0, mu_poor = 0;
    double sigma_good = 0, sigma_poor = 0;  // sample standard deviations
    double prior_good = 0.5, prior_poor = 0.5;
};

struct BetaFit {
    double beta = 0;
    LdaParams lda;
    bool between_means = true;  // false only in the fallback described below
};

double gaussian_pdf(double x, double mu, double sigma);

// Equal-density point of two Gaussians. Picks the crossing between the means;
// when the narrower density dominates over the whole interval (no crossing
// there) the crossing closest to the midpoint is returned and between_means
// is false. sigmas equal within 1e-12 give the exact midpoint.
BetaFit beta_from_params(const LdaParams& p);

// Fits one Gaussian per class (sample mean and std, equal priors).
// Throws on fewer than 2 values per class, identical means or zero variance.
BetaFit calibrate_beta(const std::vector<double>& good_sbars, const std::vector<double>& poor_sbars);

struct CalibrationResult {
    double alpha = 0;
    bool alpha_midpoint = false;
    double val_positive_min_score = 0;
    int val_positives = 0, val_negatives = 0;
    double val_sensitivity = 0, val_specificity = 0;
    std::optional<BetaFit> beta;
    int beta_N = 0, beta_R = 0;
    std::vector<std::string> beta_good_models, beta_poor_models;
    std::uint64_t master_seed = 0;
    std::string vs_checkpoint_id, vaf_checkpoint_id;
    std::uint64_t backbone_hash = 0;
};

std::string to_json(const CalibrationResult& c);
CalibrationResult calibration_from_json(const std::string& text);

enum class ModelDecision { accept_model, reject_model };
std::string_view to_string(ModelDecision d) noexcept;

struct ModelVerdict {
    std::string model_id;
    int N = 0;
    double sbar = 0;
    ModelDecision verdict = ModelDecision::accept_model;
    std::vector<std::string> sample_tile_ids;
    std::vector<double> scores;
};

// Seed for one (model, repetition) draw; independent of evaluation order.
std::uint64_t sample_seed(std::uint64_t master_seed, const std::string& model_id, std::uint64_t rep);

// Scores the tile at a pool index for the model under test.
using TileScorer = std::function<net::ScoreRecord(std::size_t pool_index)>;

// Draws N of the pool's tiles without replacement, scores them, averages to
// sbar; rejects iff sbar >= beta. Throws std::invalid_argument if N < 1 or the
// pool is smaller than N.
ModelVerdict assess_model(const std::string& model_id, const std::vector<std::string>& pool_tile_ids, int N,
                          double beta, std::uint64_t seed, const TileScorer& scorer);

// Per-model precomputed image scores over a shared test pool; resampling then
// needs no further inference.
struct StudyModel {
    std::string model_id;
    bool poor = false;
    std::vector<std::string> tile_ids;
    std::vector<double> scores;  // mean_score per tile, aligned with tile_ids
};

struct StudyRow {
    int N = 0;
    std::string model_id;
    bool poor = false;
    double mean_sbar = 0;
    std::optional<double> std_sbar;  // absent when R == 1
    ModelDecision verdict = ModelDecision::accept_model;  // of mean_sbar
    double correct_fraction = 0;     // over the R resamples
};

struct StudyResample {
    int N = 0;
    std::string model_id;
    int rep = 0;
    double sbar = 0;
    ModelDecision verdict = ModelDecision::accept_model;
};

struct StudyNSummary {
    int N = 0;
    double accuracy = 0;  // correct (model, rep) decisions / (M * R)
    double kl = 0;        // KL(poor sbars || good sbars)
};

struct StudyReport {
    double beta = 0;
    int R = 0;
    std::vector<StudyRow> rows;
    std::vector<StudyResample> resamples;
    std::vector<StudyNSummary> per_N;
};

StudyReport maqua_study(const std::vector<StudyModel>& models, const std::vector<int>& N_grid, int R, double beta,
                        std::uint64_t master_seed);

// Rows: N, model_id, label, mean_sbar, std_sbar, verdict, correct_fraction.
std::string study_rows_csv(const StudyReport& r);
// Rows: N, model_id, rep, sbar, verdict.
std::string study_resamples_csv(const StudyReport& r);
std::string study_summary_json(const StudyReport& r);

// sbar values per class for beta fitting: R resamples of N tiles per model.
void resampled_sbars(const std::vector<StudyModel>& models, int N, int R, std::uint64_t master_seed,
                     std::vector<double>& good, std::vector<double>& poor);

}  // namespace aqua::calib
