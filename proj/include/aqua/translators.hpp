// SPDX-License-Identifier: Apache-2.0
//
// Forward (VS: AF -> HE) and backward (VAF: HE -> AF) image translators and
// the training regimes that produce good, early-stopped and overfitted
// checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aqua/core/tensor.hpp"
#include "aqua/nn/layers.hpp"
#include "aqua/synthgen.hpp"

namespace aqua::translate {

enum class Direction { VS, VAF };
enum class Regime { full, overfit_subset };
enum class QualityLabel { good, poor_early, poor_overfit };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Regime r) noexcept;
std::string_view to_string(QualityLabel q) noexcept;
Direction parse_direction(std::string_view s);
Regime parse_regime(std::string_view s);
QualityLabel parse_quality(std::string_view s);

synth::Domain input_domain(Direction d) noexcept;
synth::Domain output_domain(Direction d) noexcept;

struct Widths {
    int level1 = 16;
    int level2 = 32;
    int level3 = 64;
    bool operator==(const Widths&) const = default;
};

// Three-level encoder-decoder with skip connections:
//   e1 = act(conv(x))              full resolution
//   e2 = act(conv(pool(e1)))       1/2
//   e3 = act(conv(pool(e2)))       1/4 (bottleneck)
//   d2 = act(conv([up(e3), e2]))   1/2
//   d1 = act(conv([up(d2), e1]))   full
//   y  = conv1x1(d1)               raw output; inference clamps to [0,1]
class Translator {
public:
    struct Cache;

    Translator(Direction dir, Widths widths = {});

    void init(std::uint64_t seed);
    Tensor forward_raw(const Tensor& in) const;
    Tensor forward_train(const Tensor& in, Cache& cache) const;
    void backward(const Cache& cache, const Tensor& grad_out, Tensor* grad_in = nullptr);

    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
    bool all_finite() const;
    std::uint64_t hash() const;

    Direction direction() const noexcept { return dir_; }
    const Widths& widths() const noexcept { return widths_; }
    int in_channels() const noexcept;
    int out_channels() const noexcept;
    std::string architecture() const;

private:
    Direction dir_;
    Widths widths_;
    nn::Conv2d e1_, e2_, e3_, d2_, d1_, out_;
};

struct Translator::Cache {
    Tensor in, e1_pre, e1, p1, e2_pre, e2, p2, e3_pre, e3, c2, dec2_pre, dec2, c1, dec1_pre, dec1;
};

struct Checkpoint {
    std::string id;
    std::shared_ptr<const Translator> params;
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    QualityLabel quality_label = QualityLabel::good;
    Regime regime = Regime::full;
    int train_subset_size = 0;
    std::uint64_t seed = 0;

    Direction direction() const { return params->direction(); }
};

struct LabelThresholds {
    int epoch_min = 0;
    double val_max = 0;
};

// good iff regime=full, epoch >= epoch_min and val_loss <= val_max;
// poor_overfit for every overfit_subset checkpoint; poor_early otherwise.
QualityLabel label_checkpoint(const Checkpoint& c, const LabelThresholds& t);

struct TrainConfig {
    Regime regime = Regime::full;
    int epochs = 40;              // length of the learning-rate schedule
    int stop_epoch = 0;           // early stop (0 = run the whole schedule)
    int cadence = 5;
    int log_every = 1;            // validation pass frequency for the CSV log (checkpoint epochs always logged)
    int batch = 4;
    double learning_rate = 2e-3;
    std::uint64_t seed = 1;
    int subset_size = 4;          // overfit_subset only
    double adversarial_weight = 0.0;
    Widths widths{};
    std::string id_prefix = "ckpt";
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0;  // running mean over the epoch's minibatches
    double val_loss = 0;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;  // one per cadence step (epoch 0 only when epochs == 0)
    std::vector<EpochLog> log;            // epochs with a validation pass
    std::string log_csv() const;
};

// Checkpoints are labelled with the regime rule only (full -> good,
// overfit -> poor_overfit); relabel with label_checkpoint once thresholds are known.
TrainResult train_translator(Direction dir, const std::vector<synth::Tile>& train,
                             const std::vector<synth::Tile>& val, const TrainConfig& cfg);

// Mean L1 between clamped outputs and targets over the tiles.
double evaluate_l1(const Translator& t, const std::vector<synth::Tile>& tiles);

// Deterministic inference; output clamped to [0,1]. Throws on domain mismatch.
synth::Patch apply(const Checkpoint& c, const synth::Patch& p);
synth::Patch apply(const Translator& t, const synth::Patch& p);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aqua::translate
