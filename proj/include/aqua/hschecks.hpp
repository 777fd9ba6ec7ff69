// SPDX-License-Identifier: Apache-2.0
//
// Quality checks for histochemically stained tiles: clean HE tiles against
// artifact-laden copies, scored by a classifier trained on HE-domain cycles
// and compared with the nuclei count / area baselines.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aqua/aquanet.hpp"
#include "aqua/cycler.hpp"
#include "aqua/metrics.hpp"
#include "aqua/synthgen.hpp"

namespace aqua::hs {

struct HsItem {
    std::string id;              // "<tile>" or "<tile>~<mode>@<severity>"
    std::string source_tile_id;  // clean tile the item derives from
    std::optional<synth::Corruption> mode;
    double severity = 0;
    synth::Patch he;

    bool positive() const noexcept { return mode.has_value(); }
};

struct HsBenchmark {
    std::vector<std::string> clean_ids;
    std::vector<synth::Corruption> modes;
    std::vector<double> severities;
    std::vector<HsItem> items;  // clean tiles first, then corrupted in (tile, mode, severity) order

    std::size_t positives() const noexcept;
    // Item ids, sources and corruption settings (no pixels).
    std::string to_json() const;
};

std::string corrupted_id(const std::string& tile_id, synth::Corruption mode, double severity);

// Clean tiles are the negatives; every tile x mode x severity is a positive.
// Throws std::invalid_argument on an empty tile, mode or severity list.
HsBenchmark build_hs_benchmark(const std::vector<synth::Tile>& clean, const std::vector<synth::Corruption>& modes,
                               const std::vector<double>& severities);

// Balanced variant for classifier training: each tile contributes itself and
// one corrupted copy, with (mode, severity) assigned round-robin.
HsBenchmark build_hs_training_set(const std::vector<synth::Tile>& clean, const std::vector<synth::Corruption>& modes,
                                  const std::vector<double>& severities);

struct HsClassifier {
    net::Classifier classifier;
    double alpha = 0;
    int T = 0;
};

// Cycles both sets through the pair, trains on `train` and calibrates alpha
// on `val` (minimum positive score).
HsClassifier train_hs_classifier(const HsBenchmark& train, const HsBenchmark& val, const cycle::CyclePair& pair, int T,
                                 int C, const net::BackboneConfig& bc, const net::HeadConfig& hc);

struct HsGroupRate {
    synth::Corruption mode = synth::Corruption::blur;
    double severity = 0;
    int n = 0;
    int rejected = 0;
    double rate() const noexcept { return n ? static_cast<double>(rejected) / n : 0.0; }
};

struct BaselineResult {
    metrics::SeparationReport report;  // auc is orientation-free: max(AUC, 1 - AUC)
    bool lower_is_positive = false;
    double best_threshold = 0;  // accuracy-maximising cut on this very set (an upper bound)
    double best_accuracy = 0;
};

struct HsReport {
    metrics::SeparationReport aqua;  // threshold = alpha
    BaselineResult nuclei_count;     // normalised count
    BaselineResult nuclei_area;      // mean component area
    std::vector<HsGroupRate> rates;  // per mode, ascending severity
    double clean_rejection_rate = 0;
    std::vector<net::ScoreRecord> records;  // aligned with bench.items
    std::vector<metrics::NucleiStats> nuclei;
};

// Throws std::invalid_argument when the classifier is missing (null or no heads).
HsReport run_hs_assessment(const HsBenchmark& bench, const cycle::CyclePair& pair, const net::Classifier* clf, int T,
                           double alpha);

// Rows: item_id, source_tile_id, mode, severity, label_true, score, verdict,
// nuclei_count_norm, nuclei_mean_area.
std::string hs_items_csv(const HsBenchmark& bench, const HsReport& r, double alpha);
// Rows: mode, severity, n, rejected, rate.
std::string hs_rates_csv(const HsReport& r);
// True when every mode's rejection rate is non-decreasing in severity.
bool severity_monotone(const HsReport& r);

}  // namespace aqua::hs
