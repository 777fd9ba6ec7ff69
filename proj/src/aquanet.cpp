// SPDX-License-Identifier: Apache-2.0
#include "aqua/aquanet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "aqua/core/error.hpp"
#include "aqua/core/rng.hpp"
#include "aqua/io/array_file.hpp"
#include "aqua/io/text.hpp"

namespace aqua::net {

namespace {

constexpr int kMapChannels = kFeatureDim / 2;

double leaky(double v) { return v > 0 ? v : v * nn::kLeakySlope; }
double leaky_grad(double pre) { return pre > 0 ? 1.0 : nn::kLeakySlope; }

double sigmoid_clamped(double z) {
    z = std::clamp(z, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

// ---- backbone ------------------------------------------------------------------

Backbone::Backbone() : c1_("bb.c1", 3, 16, 3), c2_("bb.c2", 16, 32, 3), c3_("bb.c3", 32, kMapChannels, 3) {}

void Backbone::init(std::uint64_t seed) {
    Rng rng(seed);
    for (nn::Conv2d* c : {&c1_, &c2_, &c3_}) c->init(rng);
}

Tensor Backbone::encode_train(const Tensor& in, Cache& k) const {
    if (in.channels() != 3) throw std::invalid_argument("backbone: expects a 3-channel HE frame");
    k.in = in;
    k.a1_pre = c1_.forward(in);
    k.a1 = nn::leaky_relu(k.a1_pre);
    k.p1 = nn::avg_pool2(k.a1);
    k.a2_pre = c2_.forward(k.p1);
    k.a2 = nn::leaky_relu(k.a2_pre);
    k.p2 = nn::avg_pool2(k.a2);
    k.a3_pre = c3_.forward(k.p2);
    return nn::leaky_relu(k.a3_pre);
}

void Backbone::backward(const Cache& k, const Tensor& grad_map) {
    Tensor g = grad_map, gp;
    nn::leaky_relu_backward(k.a3_pre, g);
    c3_.backward(k.p2, g, &gp);
    g = nn::avg_pool2_backward(gp);
    nn::leaky_relu_backward(k.a2_pre, g);
    c2_.backward(k.p1, g, &gp);
    g = nn::avg_pool2_backward(gp);
    nn::leaky_relu_backward(k.a1_pre, g);
    c1_.backward(k.in, g, nullptr);
}

Tensor Backbone::feature_map(const Tensor& he) const {
    Cache k;
    return encode_train(he, k);
}

std::vector<nn::Param*> Backbone::params() {
    return {&c1_.weight, &c1_.bias, &c2_.weight, &c2_.bias, &c3_.weight, &c3_.bias};
}

std::vector<const nn::Param*> Backbone::params() const {
    return {&c1_.weight, &c1_.bias, &c2_.weight, &c2_.bias, &c3_.weight, &c3_.bias};
}

// ---- autoencoder pre-training ----------------------------------------------------

FrameAutoencoder::FrameAutoencoder() : d1_("ae.d1", kMapChannels, 16, 3), d2_("ae.d2", 16, 3, 3) {}

void FrameAutoencoder::init(std::uint64_t seed) {
    encoder.init(derive_seed(seed, "encoder"));
    Rng rng(derive_seed(seed, "decoder"));
    d1_.init(rng);
    d2_.init(rng);
}

Tensor FrameAutoencoder::reconstruct(const Tensor& in) const {
    Backbone::Cache k;
    const Tensor z = encoder.encode_train(in, k);
    return d2_.forward(nn::upsample2(nn::leaky_relu(d1_.forward(nn::upsample2(z)))));
}

double FrameAutoencoder::reconstruction_l1(const std::vector<synth::Patch>& frames) const {
    if (frames.empty()) throw std::invalid_argument("reconstruction_l1: no frames");
    double total = 0;
    for (const auto& f : frames) {
        const Tensor r = reconstruct(f.pixels);
        double s = 0;
        for (std::size_t i = 0; i < r.size(); ++i)
            s += std::abs(static_cast<double>(std::clamp(r.storage()[i], 0.0f, 1.0f)) - f.pixels.storage()[i]);
        total += s / static_cast<double>(r.size());
    }
    return total / static_cast<double>(frames.size());
}

double FrameAutoencoder::train_step(const std::vector<const Tensor*>& batch, nn::Adam& opt) {
    opt.zero_grad();
    double loss = 0;
    const float scale = 1.0f / static_cast<float>(batch.size());
    for (const Tensor* x : batch) {
        Backbone::Cache k;
        const Tensor z = encoder.encode_train(*x, k);
        const Tensor u1 = nn::upsample2(z);
        const Tensor h_pre = d1_.forward(u1);
        const Tensor u2 = nn::upsample2(nn::leaky_relu(h_pre));
        const Tensor out = d2_.forward(u2);
        Tensor g(out.channels(), out.height(), out.width());
        const float gs = scale / static_cast<float>(out.size());
        double l1 = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const float d = out.storage()[i] - x->storage()[i];
            l1 += std::abs(static_cast<double>(d));
            g.storage()[i] = d > 0 ? gs : (d < 0 ? -gs : 0.0f);
        }
        loss += l1 / static_cast<double>(out.size());
        Tensor gu2, gu1;
        d2_.backward(u2, g, &gu2);
        Tensor gh = nn::upsample2_backward(gu2);
        nn::leaky_relu_backward(h_pre, gh);
        d1_.backward(u1, gh, &gu1);
        encoder.backward(k, nn::upsample2_backward(gu1));
    }
    opt.step();
    return loss / static_cast<double>(batch.size());
}

std::vector<nn::Param*> FrameAutoencoder::params() {
    auto p = encoder.params();
    for (nn::Param* q : {&d1_.weight, &d1_.bias, &d2_.weight, &d2_.bias}) p.push_back(q);
    return p;
}

PretrainResult pretrain_backbone(const std::vector<synth::Patch>& negative_frames, const BackboneConfig& cfg) {
    if (negative_frames.empty()) throw std::invalid_argument("pretrain_backbone: no negative frames");
    if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.learning_rate > 0))
        throw std::invalid_argument("pretrain_backbone: bad hyperparameters");
    std::vector<const Tensor*> frames;
    if (negative_frames.size() > cfg.max_frames) {
        Rng rng(derive_seed(cfg.seed, "frames"));
        auto idx = rng.sample_without_replacement(negative_frames.size(), cfg.max_frames);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) frames.push_back(&negative_frames[i].pixels);
    } else {
        for (const auto& f : negative_frames) frames.push_back(&f.pixels);
    }

    FrameAutoencoder ae;
    ae.init(derive_seed(cfg.seed, "init"));
    auto params = ae.params();
    nn::Adam opt(params, cfg.learning_rate);
    PretrainResult r;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(frames.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        double sum = 0;
        int steps = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            std::vector<const Tensor*> batch;
            for (std::size_t i = b0; i < std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch)); ++i)
                batch.push_back(frames[order[i]]);
            const double l = ae.train_step(batch, opt);
            if (!std::isfinite(l)) throw DivergenceError("backbone reconstruction loss is not finite", epoch);
            sum += l;
            ++steps;
        }
        r.epoch_loss.push_back(sum / std::max(1, steps));
    }
    std::vector<synth::Patch> used;
    used.reserve(frames.size());
    for (const Tensor* t : frames) used.push_back(synth::Patch{*t, synth::Domain::HE, {}, 0});
    r.final_reconstruction_l1 = ae.reconstruction_l1(used);
    r.backbone = ae.encoder;
    r.hash = r.backbone.hash();
    return r;
}

PretrainResult pretrain_backbone(const std::vector<cycle::CycleSeq>& negative_seqs, const BackboneConfig& cfg) {
    std::vector<synth::Patch> frames;
    for (const auto& s : negative_seqs) frames.insert(frames.end(), s.frames.begin(), s.frames.end());
    return pretrain_backbone(frames, cfg);
}

FeatureSeq extract(const Backbone& b, const cycle::CycleSeq& seq) {
    if (seq.frames.empty()) throw std::invalid_argument("extract: empty sequence");
    FeatureSeq f;
    f.T = static_cast<int>(seq.frames.size());
    f.x.reserve(static_cast<std::size_t>(f.T) * kFeatureDim);
    const Tensor ref = b.feature_map(seq.frames[0].pixels);
    const double n = static_cast<double>(ref.plane());
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const Tensor map = t == 0 ? ref : b.feature_map(seq.frames[t].pixels);
        // Channel means first, then mean |map_t - map_0| per channel.
        for (int c = 0; c < kMapChannels; ++c) {
            const float* p = map.channel(c);
            double m = 0;
            for (std::size_t i = 0; i < map.plane(); ++i) m += p[i];
            f.x.push_back(m / n);
        }
        for (int c = 0; c < kMapChannels; ++c) {
            const float* p = map.channel(c);
            const float* r = ref.channel(c);
            double d = 0;
            for (std::size_t i = 0; i < map.plane(); ++i) d += std::abs(static_cast<double>(p[i]) - r[i]);
            f.x.push_back(d / n);
        }
    }
    return f;
}

// ---- voting heads -----------------------------------------------------------------

VotingHead::VotingHead(int T, int K, int H)
    : feat_mean(kFeatureDim, 0.0),
      feat_std(kFeatureDim, 1.0),
      wt(static_cast<std::size_t>(K) * kFeatureDim * 3, 0.0),
      bt(K, 0.0),
      w1(static_cast<std::size_t>(H) * K, 0.0),
      b1(H, 0.0),
      w2(H, 0.0),
      b2(1, 0.0),
      T_(T),
      K_(K),
      H_(H) {
    if (T < 1 || K < 1 || H < 1) throw std::invalid_argument("VotingHead: bad shape");
}

namespace {

constexpr int D = kFeatureDim;

// Activations of one forward pass, kept for the backward pass.
struct HeadPass {
    std::vector<double> z, h, m, g, u;
    double logit = 0;
};

void head_forward(const VotingHead& hd, const FeatureSeq& f, HeadPass& s) {
    if (f.T != hd.T()) throw std::invalid_argument("VotingHead: sequence length does not match the trained T");
    if (f.x.size() != static_cast<std::size_t>(f.T) * D) throw std::invalid_argument("VotingHead: bad feature size");
    const int T = f.T, K = hd.temporal_channels(), H = hd.hidden();
    s.z.resize(static_cast<std::size_t>(T) * D);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < D; ++i) s.z[t * D + i] = (f.x[t * D + i] - hd.feat_mean[i]) / hd.feat_std[i];
    s.h.assign(static_cast<std::size_t>(T) * K, 0.0);
    s.m.assign(K, 0.0);
    for (int t = 0; t < T; ++t)
        for (int o = 0; o < K; ++o) {
            double acc = hd.bt[o];
            for (int k = 0; k < 3; ++k) {
                const int tt = t + k - 1;
                if (tt < 0 || tt >= T) continue;
                for (int i = 0; i < D; ++i) acc += hd.wt[(o * D + i) * 3 + k] * s.z[tt * D + i];
            }
            s.h[t * K + o] = acc;
            s.m[o] += leaky(acc) / T;
        }
    s.g.assign(H, 0.0);
    s.u.assign(H, 0.0);
    s.logit = hd.b2[0];
    for (int j = 0; j < H; ++j) {
        double acc = hd.b1[j];
        for (int o = 0; o < K; ++o) acc += hd.w1[j * K + o] * s.m[o];
        s.g[j] = acc;
        s.u[j] = leaky(acc);
        s.logit += hd.w2[j] * s.u[j];
    }
}

struct HeadGrads {
    std::vector<double> wt, bt, w1, b1, w2, b2;
    explicit HeadGrads(const VotingHead& h)
        : wt(h.wt.size()), bt(h.bt.size()), w1(h.w1.size()), b1(h.b1.size()), w2(h.w2.size()), b2(1) {}
};

void head_backward(const VotingHead& hd, const HeadPass& s, double dlogit, HeadGrads& gr) {
    const int T = hd.T(), K = hd.temporal_channels(), H = hd.hidden();
    gr.b2[0] += dlogit;
    std::vector<double> dm(K, 0.0);
    for (int j = 0; j < H; ++j) {
        gr.w2[j] += dlogit * s.u[j];
        const double dg = dlogit * hd.w2[j] * leaky_grad(s.g[j]);
        gr.b1[j] += dg;
        for (int o = 0; o < K; ++o) {
            gr.w1[j * K + o] += dg * s.m[o];
            dm[o] += dg * hd.w1[j * K + o];
        }
    }
    for (int t = 0; t < T; ++t)
        for (int o = 0; o < K; ++o) {
            const double dh = dm[o] / T * leaky_grad(s.h[t * K + o]);
            gr.bt[o] += dh;
            for (int k = 0; k < 3; ++k) {
                const int tt = t + k - 1;
                if (tt < 0 || tt >= T) continue;
                for (int i = 0; i < D; ++i) gr.wt[(o * D + i) * 3 + k] += dh * s.z[tt * D + i];
            }
        }
}

class AdamD {
public:
    AdamD(std::vector<std::vector<double>*> p, double lr) : p_(std::move(p)), lr_(lr) {
        for (auto* v : p_) {
            m_.emplace_back(v->size(), 0.0);
            v_.emplace_back(v->size(), 0.0);
        }
    }
    void step(const std::vector<const std::vector<double>*>& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
        for (std::size_t k = 0; k < p_.size(); ++k)
            for (std::size_t i = 0; i < p_[k]->size(); ++i) {
                const double gi = (*g[k])[i];
                m_[k][i] = 0.9 * m_[k][i] + 0.1 * gi;
                v_[k][i] = 0.999 * v_[k][i] + 0.001 * gi * gi;
                (*p_[k])[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + 1e-8);
            }
    }

private:
    std::vector<std::vector<double>*> p_;
    std::vector<std::vector<double>> m_, v_;
    double lr_;
    long t_ = 0;
};

void he_uniform(std::vector<double>& w, double fan_in, Rng& rng) {
    const double b = std::sqrt(6.0 / fan_in);
    for (double& v : w) v = rng.uniform(-b, b);
}

}  // namespace

double VotingHead::logit(const FeatureSeq& f) const {
    HeadPass s;
    head_forward(*this, f, s);
    return s.logit;
}

double VotingHead::predict(const FeatureSeq& f) const { return sigmoid_clamped(logit(f)); }

std::uint64_t VotingHead::hash() const {
    std::uint64_t h = fnv1a64("voting-head");
    for (const auto* v : {&feat_mean, &feat_std, &wt, &bt, &w1, &b1, &w2, &b2})
        h = fnv1a64(v->data(), v->size() * sizeof(double), h);
    return h;
}

std::vector<VotingHead> train_heads(const std::vector<LabeledFeatures>& data, int C, const HeadConfig& cfg) {
    if (C < 1) throw std::invalid_argument("train_heads: C must be >= 1");
    if (data.empty()) throw std::invalid_argument("train_heads: no training sequences");
    if (cfg.epochs < 0 || cfg.batch < 1 || !(cfg.learning_rate > 0))
        throw std::invalid_argument("train_heads: bad hyperparameters");
    const int T = data[0].features.T;
    std::size_t npos = 0;
    for (const auto& d : data) {
        if (d.features.T != T) throw std::invalid_argument("train_heads: mixed sequence lengths");
        npos += d.positive;
    }
    if (npos == 0 || npos == data.size()) throw std::invalid_argument("train_heads: training set has a single class");

    // Standardisation statistics over every training frame.
    std::vector<double> mean(D, 0.0), sd(D, 0.0);
    const double nf = static_cast<double>(data.size()) * T;
    for (const auto& d : data)
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < D; ++i) mean[i] += d.features.x[t * D + i];
    for (double& m : mean) m /= nf;
    for (const auto& d : data)
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < D; ++i) {
                const double e = d.features.x[t * D + i] - mean[i];
                sd[i] += e * e;
            }
    for (double& s : sd) s = std::sqrt(s / nf) > 1e-8 ? std::sqrt(s / nf) : 1.0;

    std::vector<VotingHead> heads;
    for (int c = 0; c < C; ++c) {
        VotingHead hd(T, cfg.temporal_channels, cfg.hidden);
        hd.head_seed = derive_seed(cfg.seed, "head", static_cast<std::uint64_t>(c));
        hd.feat_mean = mean;
        hd.feat_std = sd;

        // Bootstrap resample; redrawn until it holds both classes.
        const std::size_t n = data.size();
        for (int attempt = 0;; ++attempt) {
            Rng rng(derive_seed(hd.head_seed, "bootstrap", static_cast<std::uint64_t>(attempt)));
            hd.bootstrap_indices.assign(n, 0);
            std::size_t p = 0;
            for (auto& idx : hd.bootstrap_indices) {
                idx = static_cast<std::int64_t>(rng.below(n));
                p += data[static_cast<std::size_t>(idx)].positive;
            }
            if (p > 0 && p < n) break;
            if (attempt == 100) throw std::invalid_argument("train_heads: cannot draw a two-class bootstrap sample");
        }

        Rng init(derive_seed(hd.head_seed, "init"));
        he_uniform(hd.wt, 3.0 * D, init);
        he_uniform(hd.w1, cfg.temporal_channels, init);
        he_uniform(hd.w2, cfg.hidden, init);

        AdamD opt({&hd.wt, &hd.bt, &hd.w1, &hd.b1, &hd.w2, &hd.b2}, cfg.learning_rate);
        std::vector<std::int64_t> order = hd.bootstrap_indices;
        HeadPass pass;
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            Rng rng(derive_seed(hd.head_seed, "epoch", static_cast<std::uint64_t>(epoch)));
            rng.shuffle(order);
            for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
                const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
                HeadGrads gr(hd);
                for (std::size_t i = b0; i < b1; ++i) {
                    const auto& d = data[static_cast<std::size_t>(order[i])];
                    head_forward(hd, d.features, pass);
                    const double p = sigmoid_clamped(pass.logit);
                    head_backward(hd, pass, (p - (d.positive ? 1.0 : 0.0)) / static_cast<double>(b1 - b0), gr);
                }
                for (std::size_t i = 0; i < gr.wt.size(); ++i) gr.wt[i] += cfg.weight_decay * hd.wt[i];
                for (std::size_t i = 0; i < gr.w1.size(); ++i) gr.w1[i] += cfg.weight_decay * hd.w1[i];
                for (std::size_t i = 0; i < gr.w2.size(); ++i) gr.w2[i] += cfg.weight_decay * hd.w2[i];
                opt.step({&gr.wt, &gr.bt, &gr.w1, &gr.b1, &gr.w2, &gr.b2});
            }
            for (const auto* v : {&hd.wt, &hd.w1, &hd.w2})
                for (double x : *v)
                    if (!std::isfinite(x)) throw DivergenceError("voting head weights are not finite", epoch);
        }
        heads.push_back(std::move(hd));
    }
    return heads;
}

// ---- scoring -------------------------------------------------------------------------

ScoreRecord score(const FeatureSeq& f, const std::vector<VotingHead>& heads) {
    if (heads.empty()) throw std::invalid_argument("score: no heads");
    ScoreRecord r;
    r.T = f.T;
    r.C = static_cast<int>(heads.size());
    for (const auto& h : heads) r.per_head_scores.push_back(h.predict(f));
    // Summing in sorted order keeps the mean exactly invariant to head order.
    std::vector<double> sorted = r.per_head_scores;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0;
    for (double s : sorted) sum += s;
    r.mean_score = sum / static_cast<double>(heads.size());
    return r;
}

ScoreRecord score(const cycle::CycleSeq& seq, const Backbone& b, const std::vector<VotingHead>& heads) {
    ScoreRecord r = score(extract(b, seq), heads);
    r.tile_id = seq.source_tile_id;
    r.vs_checkpoint_id = seq.vs_checkpoint_id;
    r.vaf_checkpoint_id = seq.vaf_checkpoint_id;
    return r;
}

std::string_view to_string(Verdict v) noexcept { return v == Verdict::accept ? "accept" : "reject"; }
std::string_view to_string(EnsembleMode m) noexcept { return m == EnsembleMode::mean ? "mean" : "majority"; }

EnsembleMode parse_ensemble_mode(std::string_view s) {
    if (s == "mean") return EnsembleMode::mean;
    if (s == "majority") return EnsembleMode::majority;
    throw std::invalid_argument("unknown ensemble mode: " + std::string(s));
}

Verdict classify(const ScoreRecord& r, double alpha, EnsembleMode mode) {
    if (mode == EnsembleMode::mean) return r.mean_score >= alpha ? Verdict::reject : Verdict::accept;
    std::size_t votes = 0;
    for (double s : r.per_head_scores) votes += s >= alpha;
    return 2 * votes >= r.per_head_scores.size() ? Verdict::reject : Verdict::accept;
}

std::string scores_csv(const std::vector<ScoreRecord>& records) {
    std::size_t C = 0;
    for (const auto& r : records) C = std::max(C, r.per_head_scores.size());
    std::vector<std::string> header{"tile_id", "model_id"};
    for (std::size_t c = 0; c < C; ++c) header.push_back("head" + std::to_string(c));
    header.insert(header.end(), {"mean_score", "label_true", "vs_checkpoint_id", "vaf_checkpoint_id", "T", "C"});
    io::CsvWriter csv(header);
    for (const auto& r : records) {
        std::vector<std::string> row{r.tile_id, r.model_id};
        for (std::size_t c = 0; c < C; ++c)
            row.push_back(c < r.per_head_scores.size() ? io::fmt_num(r.per_head_scores[c]) : "");
        row.push_back(io::fmt_num(r.mean_score));
        row.push_back(r.positive ? (*r.positive ? "positive" : "negative") : "");
        row.insert(row.end(), {r.vs_checkpoint_id, r.vaf_checkpoint_id, std::to_string(r.T), std::to_string(r.C)});
        csv.row(std::move(row));
    }
    return csv.str();
}

TrainedClassifier train_classifier(const std::vector<cycle::CycleSeq>& seqs, const std::vector<bool>& positive, int C,
                                   const BackboneConfig& bc, const HeadConfig& hc) {
    if (seqs.size() != positive.size()) throw std::invalid_argument("train_classifier: labels do not match sequences");
    std::vector<cycle::CycleSeq> neg;
    for (std::size_t i = 0; i < seqs.size(); ++i)
        if (!positive[i]) neg.push_back(seqs[i]);
    auto pre = pretrain_backbone(neg, bc);
    TrainedClassifier out;
    out.pretrain_loss = pre.epoch_loss;
    out.reconstruction_l1 = pre.final_reconstruction_l1;
    out.classifier.backbone = pre.backbone;
    out.classifier.backbone_hash = pre.hash;
    std::vector<LabeledFeatures> data;
    data.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        out.features.push_back(extract(out.classifier.backbone, seqs[i]));
        data.push_back({out.features.back(), positive[i]});
    }
    out.classifier.heads = train_heads(data, C, hc);
    if (out.classifier.backbone.hash() != out.classifier.backbone_hash)
        throw std::logic_error("train_classifier: backbone changed during head training");
    return out;
}

// ---- persistence ------------------------------------------------------------------------

void save_classifier(const Classifier& c, const std::filesystem::path& path) {
    io::ArrayFile f;
    for (const nn::Param* p : c.backbone.params()) f.put_f32(p->name, {p->value.size()}, p->value);
    nlohmann::ordered_json meta;
    meta["backbone_hash"] = c.backbone_hash;
    meta["feature_dim"] = kFeatureDim;
    meta["heads"] = nlohmann::json::array();
    for (std::size_t i = 0; i < c.heads.size(); ++i) {
        const auto& h = c.heads[i];
        const std::string pre = "head" + std::to_string(i) + "/";
        f.put_f64(pre + "feat_mean", {h.feat_mean.size()}, h.feat_mean);
        f.put_f64(pre + "feat_std", {h.feat_std.size()}, h.feat_std);
        f.put_f64(pre + "wt", {h.wt.size()}, h.wt);
        f.put_f64(pre + "bt", {h.bt.size()}, h.bt);
        f.put_f64(pre + "w1", {h.w1.size()}, h.w1);
        f.put_f64(pre + "b1", {h.b1.size()}, h.b1);
        f.put_f64(pre + "w2", {h.w2.size()}, h.w2);
        f.put_f64(pre + "b2", {h.b2.size()}, h.b2);
        f.put_i64(pre + "bootstrap", {h.bootstrap_indices.size()}, h.bootstrap_indices);
        meta["heads"].push_back({{"T", h.T()},
                                 {"temporal_channels", h.temporal_channels()},
                                 {"hidden", h.hidden()},
                                 {"head_seed", h.head_seed}});
    }
    meta["training"] = c.meta_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(c.meta_json);
    f.put_text("meta.json", meta.dump(2));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    f.save(path);
}

Classifier load_classifier(const std::filesystem::path& path) {
    const auto f = io::ArrayFile::load(path);
    const auto meta = nlohmann::json::parse(f.get_text("meta.json"));
    Classifier c;
    for (nn::Param* p : c.backbone.params()) {
        auto v = f.get_f32(p->name);
        if (v.size() != p->value.size()) throw std::runtime_error("classifier: size mismatch for " + p->name);
        p->value = std::move(v);
    }
    c.backbone_hash = meta.at("backbone_hash").get<std::uint64_t>();
    if (c.backbone.hash() != c.backbone_hash) throw std::runtime_error("classifier: backbone hash mismatch");
    const auto& hs = meta.at("heads");
    for (std::size_t i = 0; i < hs.size(); ++i) {
        VotingHead h(hs[i].at("T").get<int>(), hs[i].at("temporal_channels").get<int>(), hs[i].at("hidden").get<int>());
        h.head_seed = hs[i].at("head_seed").get<std::uint64_t>();
        const std::string pre = "head" + std::to_string(i) + "/";
        auto load = [&](const std::string& name, std::vector<double>& dst) {
            auto v = f.get_f64(pre + name);
            if (v.size() != dst.size()) throw std::runtime_error("classifier: size mismatch for " + pre + name);
            dst = std::move(v);
        };
        load("feat_mean", h.feat_mean);
        load("feat_std", h.feat_std);
        load("wt", h.wt);
        load("bt", h.bt);
        load("w1", h.w1);
        load("b1", h.b1);
        load("w2", h.w2);
        load("b2", h.b2);
        h.bootstrap_indices = f.get_i64(pre + "bootstrap");
        c.heads.push_back(std::move(h));
    }
    c.meta_json = meta.at("training").dump();
    return c;
}

}  // namespace aqua::net
