// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a flat "key = value" file. Lines starting with '#'
// are comments; lists are comma separated. Every key has a default, so an
// empty file is the default experiment.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aqua/aquanet.hpp"
#include "aqua/synthgen.hpp"
#include "aqua/translators.hpp"

namespace aqua::harness {

struct ExperimentConfig {
    std::uint64_t master_seed = 7;

    // data
    int tile_size = 32;
    int train_tiles = 300;
    int val_tiles = 50;
    int test_tiles = 400;
    int nuclei_min = 3;
    int nuclei_max = 7;
    double radius_min = 2.0;
    double radius_max = 3.5;

    // translators
    int translator_train_tiles = 40;  // leading train tiles; the rest feed the classifier
    int translator_val_tiles = 16;
    int epochs = 60;
    int cadence = 5;
    int batch = 4;
    double learning_rate = 2e-3;
    double adversarial_weight = 0.0;
    std::vector<int> widths{16, 32, 64};
    int early_stop_epoch = 10;
    int overfit_subset = 1;
    int overfit_epochs = 300;
    int overfit_cadence = 25;
    int overfit_keep_last = 2;

    // checkpoint labels and pool harvesting
    int epoch_min = 40;
    double val_max = 0.020;
    double poor_min_val = 0.06;

    // independent training runs per pool
    int train_full_runs = 11;
    int train_early_runs = 10;
    int val_full_runs = 4;
    int val_early_runs = 4;
    int test_full_runs = 2;
    int test_early_runs = 5;
    int external_full_runs = 7;
    int external_early_runs = 14;
    int external_overfit_runs = 10;
    bool classifier_include_overfit = false;  // contaminates training; the external stage refuses to run

    // classifier
    int T = 5;
    int C = 4;
    std::string ensemble = "mean";
    int train_images_per_class = 600;
    int val_images_per_model = 20;
    int backbone_epochs = 4;
    int backbone_batch = 8;
    double backbone_lr = 2e-3;
    int backbone_max_frames = 600;
    int head_epochs = 150;
    int head_batch = 16;
    double head_lr = 3e-3;
    double head_weight_decay = 1e-4;
    int head_temporal_channels = 16;
    int head_hidden = 16;
    bool alpha_midpoint = true;

    // test benchmark and model-level study
    int test_good_models = 5;
    int test_poor_models = 5;
    int test_images_per_model = 40;
    std::vector<int> N_grid{2, 5, 10, 20};
    int R = 100;
    int beta_N = 5;
    int beta_R = 100;

    // external generalization
    int external_good = 20;
    int external_early = 20;
    int external_overfit = 20;
    int external_images_per_model = 20;

    // ablations
    std::vector<int> ablate_T_values{1, 5};
    std::vector<int> ablate_C_values{1, 5};
    int ablate_C_seeds = 5;

    // histochemical-stain checks
    std::vector<std::string> hs_modes{"blur", "contrast_fade", "stain_washout"};
    std::vector<double> hs_train_severities{0.3, 0.6, 0.9};
    std::vector<double> hs_eval_severities{0.3, 0.45, 0.6, 0.9};
    int hs_train_tiles = 300;
    int hs_test_tiles = 50;

    // Throws ConfigError on the first invalid field.
    void validate() const;

    synth::DatasetConfig dataset() const;
    translate::TrainConfig translator(translate::Direction dir, translate::Regime regime, std::uint64_t seed) const;
    translate::LabelThresholds thresholds() const;
    net::BackboneConfig backbone(std::uint64_t seed) const;
    net::HeadConfig head(std::uint64_t seed) const;
    std::vector<synth::Corruption> corruption_modes() const;
};

// Parses "key = value" text. Unknown keys, malformed values and duplicate
// keys are ConfigErrors. The result is validated.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key in schema order with its resolved value; parse_config of this
// text reproduces the config exactly.
std::string resolved_text(const ExperimentConfig& c);

// Documented schema: "key  default  description" lines.
std::string schema_text();

// Hash of the resolved text; stages record it to detect mismatched inputs.
std::uint64_t config_hash(const ExperimentConfig& c);

// Applies one "key=value" override (used for --seed and tests).
void set_value(ExperimentConfig& c, const std::string& key, const std::string& value);

}  // namespace aqua::harness
