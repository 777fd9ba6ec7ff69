// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth-free quality classifier. A frozen convolutional backbone maps
// each HE frame of a cycle sequence to a feature map; the frame descriptor is
// the per-channel map mean plus the per-channel mean absolute deviation from
// the map of frame 0 (64 values). Each voting head
// runs a temporal convolution over the T axis, pools, and ends in a logistic
// unit. The ensemble score is the mean head probability.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aqua/cycler.hpp"
#include "aqua/nn/layers.hpp"
#include "aqua/synthgen.hpp"

namespace aqua::net {

inline constexpr int kFeatureDim = 64;

// 3 -> 16 (pool) -> 32 (pool) -> 32.
class Backbone {
public:
    struct Cache {
        Tensor in, a1_pre, a1, p1, a2_pre, a2, p2, a3_pre;
    };

    Backbone();
    void init(std::uint64_t seed);

    // 32 x H/4 x W/4, a pure function of the frame.
    Tensor feature_map(const Tensor& he) const;
    // Final feature map (32 x H/4 x W/4), with activations kept for backward.
    Tensor encode_train(const Tensor& in, Cache& cache) const;
    void backward(const Cache& cache, const Tensor& grad_map);

    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
    std::uint64_t hash() const { return nn::hash_params(params()); }

private:
    nn::Conv2d c1_, c2_, c3_;
};

// Backbone plus a two-layer upsampling decoder; used only for pre-training.
class FrameAutoencoder {
public:
    FrameAutoencoder();
    void init(std::uint64_t seed);
    Tensor reconstruct(const Tensor& in) const;
    // Mean L1 between clamped reconstructions and inputs.
    double reconstruction_l1(const std::vector<synth::Patch>& frames) const;
    double train_step(const std::vector<const Tensor*>& batch, nn::Adam& opt);

    std::vector<nn::Param*> params();
    Backbone encoder;

private:
    nn::Conv2d d1_, d2_;
};

struct BackboneConfig {
    int epochs = 4;
    int batch = 8;
    double learning_rate = 2e-3;
    std::size_t max_frames = 600;  // seeded subsample when more frames are supplied
    std::uint64_t seed = 1;
};

struct PretrainResult {
    Backbone backbone;
    std::vector<double> epoch_loss;
    double final_reconstruction_l1 = 0;  // on the training frames
    std::uint64_t hash = 0;
};

// Autoencodes negative frames, then returns the frozen encoder.
PretrainResult pretrain_backbone(const std::vector<synth::Patch>& negative_frames, const BackboneConfig& cfg);
PretrainResult pretrain_backbone(const std::vector<cycle::CycleSeq>& negative_seqs, const BackboneConfig& cfg);

// Stacked per-frame descriptors of one sequence, row-major T x kFeatureDim.
// Frame 0's deviation half is zero by construction.
struct FeatureSeq {
    int T = 0;
    std::vector<double> x;
};

FeatureSeq extract(const Backbone& b, const cycle::CycleSeq& seq);

struct HeadConfig {
    int epochs = 150;
    int batch = 16;
    double learning_rate = 3e-3;
    double weight_decay = 1e-4;
    int temporal_channels = 16;
    int hidden = 16;
    std::uint64_t seed = 1;
};

class VotingHead {
public:
    VotingHead() = default;
    VotingHead(int T, int temporal_channels, int hidden);

    // Hallucination probability, strictly inside (0, 1). Throws on T mismatch.
    double predict(const FeatureSeq& f) const;
    double logit(const FeatureSeq& f) const;

    int T() const noexcept { return T_; }
    std::uint64_t hash() const;

    std::uint64_t head_seed = 0;
    std::vector<std::int64_t> bootstrap_indices;

    // Feature standardisation (fit on the training sequences).
    std::vector<double> feat_mean, feat_std;
    // Temporal conv (K x D x 3), dense (H x K), output (1 x H).
    std::vector<double> wt, bt, w1, b1, w2, b2;

    int temporal_channels() const noexcept { return K_; }
    int hidden() const noexcept { return H_; }

private:
    int T_ = 0, K_ = 0, H_ = 0;
};

struct LabeledFeatures {
    FeatureSeq features;
    bool positive = false;
};

// C heads, each with its own seed and bootstrap resample. Throws on a
// single-class training set.
std::vector<VotingHead> train_heads(const std::vector<LabeledFeatures>& data, int C, const HeadConfig& cfg);

struct ScoreRecord {
    std::string tile_id;
    std::string model_id;  // producer of the image under test
    std::string vs_checkpoint_id;
    std::string vaf_checkpoint_id;
    std::vector<double> per_head_scores;
    double mean_score = 0;
    std::optional<bool> positive;  // true label when known
    int T = 0;
    int C = 0;
};

ScoreRecord score(const FeatureSeq& f, const std::vector<VotingHead>& heads);
ScoreRecord score(const cycle::CycleSeq& seq, const Backbone& b, const std::vector<VotingHead>& heads);

enum class Verdict { accept, reject };
enum class EnsembleMode { mean, majority };
std::string_view to_string(Verdict v) noexcept;
std::string_view to_string(EnsembleMode m) noexcept;
EnsembleMode parse_ensemble_mode(std::string_view s);

// mean: reject iff mean_score >= alpha. majority: reject iff at least half of
// the heads score >= alpha.
Verdict classify(const ScoreRecord& r, double alpha, EnsembleMode mode = EnsembleMode::mean);

std::string scores_csv(const std::vector<ScoreRecord>& records);

struct Classifier {
    Backbone backbone;
    std::vector<VotingHead> heads;
    std::uint64_t backbone_hash = 0;
    std::string meta_json;  // free-form training provenance
};

struct TrainedClassifier {
    Classifier classifier;
    std::vector<double> pretrain_loss;  // per backbone epoch
    double reconstruction_l1 = 0;
    std::vector<FeatureSeq> features;   // of the training sequences, in input order
};

// Pretrains the backbone on the negative sequences, freezes it, extracts
// descriptors for every sequence and trains C heads on them.
TrainedClassifier train_classifier(const std::vector<cycle::CycleSeq>& seqs, const std::vector<bool>& positive, int C,
                                   const BackboneConfig& bc, const HeadConfig& hc);

void save_classifier(const Classifier& c, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace aqua::net
