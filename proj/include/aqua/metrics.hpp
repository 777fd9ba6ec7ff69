// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth image metrics, two-sample separation statistics and the
// hand-crafted nuclei metrics used as baselines.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aqua/core/tensor.hpp"
#include "aqua/synthgen.hpp"

namespace aqua::metrics {

inline constexpr double kPsnrCap = 100.0;

double mse(const Tensor& a, const Tensor& b);
double mse(const synth::Patch& a, const synth::Patch& b);
// Pearson r over flattened pixels. Throws std::domain_error on zero variance.
double pcc(const synth::Patch& a, const synth::Patch& b);
double pcc(const Tensor& a, const Tensor& b);
// 10 log10(max^2 / mse), capped at kPsnrCap dB.
double psnr(const synth::Patch& a, const synth::Patch& b, double max_val = 1.0);
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

// |mean_p - mean_n| / sqrt(s_p^2/n_p + s_n^2/n_n), Welch form with sample variances.
double welch_t(const std::vector<double>& pos, const std::vector<double>& neg);

inline constexpr double kKlEpsilon = 1e-10;
inline constexpr int kKlBins = 20;
// KL(P_pos || P_neg) over equal-width histograms on the pooled min-max range,
// with kKlEpsilon added to every bin before normalising.
double kl_divergence(const std::vector<double>& pos, const std::vector<double>& neg, int bins = kKlBins);

// Area under the ROC curve for "higher score = positive", ties counted half.
double auc(const std::vector<double>& pos, const std::vector<double>& neg);

struct Confusion {
    int tp = 0, fn = 0, tn = 0, fp = 0;
    int total() const noexcept { return tp + fn + tn + fp; }
    double accuracy() const noexcept;
    double sensitivity() const noexcept;  // rejected positives / positives
    double specificity() const noexcept;
};

struct LabeledScore {
    double score = 0;
    bool positive = false;
};

// Positive iff score >= threshold (the rejection rule used throughout).
Confusion confusion(const std::vector<LabeledScore>& records, double threshold);

struct SeparationReport {
    std::string metric_name;
    double abs_t = 0;
    double kl_divergence = 0;  // direction: positive || negative
    std::optional<double> threshold;
    std::optional<Confusion> confusion;
    std::optional<double> auc;
};

// |t|, KL and AUC for a metric where the positive group is expected to score higher.
SeparationReport separation(std::string name, const std::vector<double>& pos, const std::vector<double>& neg);

struct NucleiStats {
    double count_per_unit_area = 0;  // components / pixel count
    double mean_area_px = 0;         // 0 when no components
    int count = 0;
};

inline constexpr double kBluenessThreshold = 0.08;
inline constexpr int kMinComponentPx = 5;

// Nuclei mask: B - (R+G)/2 > kBluenessThreshold; 8-connected components with
// at least kMinComponentPx pixels.
NucleiStats count_nuclei(const synth::Patch& p);

}  // namespace aqua::metrics
