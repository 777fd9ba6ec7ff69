// SPDX-License-Identifier: Apache-2.0
#include "aqua/translators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "aqua/core/error.hpp"
#include "aqua/core/rng.hpp"
#include "aqua/io/array_file.hpp"
#include "aqua/io/text.hpp"

namespace aqua::translate {

using synth::Domain;

std::string_view to_string(Direction d) noexcept { return d == Direction::VS ? "VS" : "VAF"; }
std::string_view to_string(Regime r) noexcept { return r == Regime::full ? "full" : "overfit_subset"; }
std::string_view to_string(QualityLabel q) noexcept {
    switch (q) {
        case QualityLabel::good: return "good";
        case QualityLabel::poor_early: return "poor_early";
        case QualityLabel::poor_overfit: return "poor_overfit";
    }
    return "?";
}

Direction parse_direction(std::string_view s) {
    if (s == "VS") return Direction::VS;
    if (s == "VAF") return Direction::VAF;
    throw std::invalid_argument("unknown direction: " + std::string(s));
}

Regime parse_regime(std::string_view s) {
    if (s == "full") return Regime::full;
    if (s == "overfit_subset") return Regime::overfit_subset;
    throw std::invalid_argument("unknown regime: " + std::string(s));
}

QualityLabel parse_quality(std::string_view s) {
    if (s == "good") return QualityLabel::good;
    if (s == "poor_early") return QualityLabel::poor_early;
    if (s == "poor_overfit") return QualityLabel::poor_overfit;
    throw std::invalid_argument("unknown quality label: " + std::string(s));
}

Domain input_domain(Direction d) noexcept { return d == Direction::VS ? Domain::AF : Domain::HE; }
Domain output_domain(Direction d) noexcept { return d == Direction::VS ? Domain::HE : Domain::AF; }

// ---- network -------------------------------------------------------------------

Translator::Translator(Direction dir, Widths w)
    : dir_(dir),
      widths_(w),
      e1_("e1", synth::channels_of(input_domain(dir)), w.level1, 3),
      e2_("e2", w.level1, w.level2, 3),
      e3_("e3", w.level2, w.level3, 3),
      d2_("d2", w.level3 + w.level2, w.level2, 3),
      d1_("d1", w.level2 + w.level1, w.level1, 3),
      out_("out", w.level1, synth::channels_of(output_domain(dir)), 1) {}

int Translator::in_channels() const noexcept { return synth::channels_of(input_domain(dir_)); }
int Translator::out_channels() const noexcept { return synth::channels_of(output_domain(dir_)); }

std::string Translator::architecture() const {
    return "unet3(" + std::to_string(widths_.level1) + "," + std::to_string(widths_.level2) + "," +
           std::to_string(widths_.level3) + ")/k3/leaky0.1/avgpool/nearest/" + std::to_string(in_channels()) + "->" +
           std::to_string(out_channels());
}

void Translator::init(std::uint64_t seed) {
    Rng rng(seed);
    for (nn::Conv2d* c : {&e1_, &e2_, &e3_, &d2_, &d1_, &out_}) c->init(rng);
}

Tensor Translator::forward_train(const Tensor& in, Cache& k) const {
    if (in.channels() != in_channels()) throw std::invalid_argument("translator: input channel mismatch");
    k.in = in;
    k.e1_pre = e1_.forward(in);
    k.e1 = nn::leaky_relu(k.e1_pre);
    k.p1 = nn::avg_pool2(k.e1);
    k.e2_pre = e2_.forward(k.p1);
    k.e2 = nn::leaky_relu(k.e2_pre);
    k.p2 = nn::avg_pool2(k.e2);
    k.e3_pre = e3_.forward(k.p2);
    k.e3 = nn::leaky_relu(k.e3_pre);
    k.c2 = nn::concat_channels(nn::upsample2(k.e3), k.e2);
    k.dec2_pre = d2_.forward(k.c2);
    k.dec2 = nn::leaky_relu(k.dec2_pre);
    k.c1 = nn::concat_channels(nn::upsample2(k.dec2), k.e1);
    k.dec1_pre = d1_.forward(k.c1);
    k.dec1 = nn::leaky_relu(k.dec1_pre);
    return out_.forward(k.dec1);
}

Tensor Translator::forward_raw(const Tensor& in) const {
    Cache k;
    return forward_train(in, k);
}

void Translator::backward(const Cache& k, const Tensor& grad_out, Tensor* grad_in) {
    Tensor g, g_c, g_up, g_skip1, g_skip2, g_pool;
    out_.backward(k.dec1, grad_out, &g);
    nn::leaky_relu_backward(k.dec1_pre, g);
    d1_.backward(k.c1, g, &g_c);
    nn::split_channels(g_c, widths_.level2, g_up, g_skip1);
    g = nn::upsample2_backward(g_up);

    nn::leaky_relu_backward(k.dec2_pre, g);
    d2_.backward(k.c2, g, &g_c);
    nn::split_channels(g_c, widths_.level3, g_up, g_skip2);
    g = nn::upsample2_backward(g_up);

    nn::leaky_relu_backward(k.e3_pre, g);
    e3_.backward(k.p2, g, &g_pool);
    g = nn::avg_pool2_backward(g_pool);
    for (std::size_t i = 0; i < g.size(); ++i) g.storage()[i] += g_skip2.storage()[i];

    nn::leaky_relu_backward(k.e2_pre, g);
    e2_.backward(k.p1, g, &g_pool);
    g = nn::avg_pool2_backward(g_pool);
    for (std::size_t i = 0; i < g.size(); ++i) g.storage()[i] += g_skip1.storage()[i];

    nn::leaky_relu_backward(k.e1_pre, g);
    e1_.backward(k.in, g, grad_in);
}

std::vector<nn::Param*> Translator::params() {
    std::vector<nn::Param*> p;
    for (nn::Conv2d* c : {&e1_, &e2_, &e3_, &d2_, &d1_, &out_}) {
        p.push_back(&c->weight);
        p.push_back(&c->bias);
    }
    return p;
}

std::vector<const nn::Param*> Translator::params() const {
    std::vector<const nn::Param*> p;
    for (const nn::Conv2d* c : {&e1_, &e2_, &e3_, &d2_, &d1_, &out_}) {
        p.push_back(&c->weight);
        p.push_back(&c->bias);
    }
    return p;
}

bool Translator::all_finite() const {
    for (const nn::Param* p : params())
        for (float v : p->value)
            if (!std::isfinite(v)) return false;
    return true;
}

std::uint64_t Translator::hash() const { return nn::hash_params(params()); }

// ---- conditional patch discriminator (adversarial term) ----------------------------

namespace {

// Least-squares patch discriminator on [input, output] pairs.
class Discriminator {
public:
    Discriminator(int cin, std::uint64_t seed)
        : c1_("disc.c1", cin, 16, 3), c2_("disc.c2", 16, 32, 3), c3_("disc.c3", 32, 1, 1) {
        Rng rng(seed);
        for (nn::Conv2d* c : {&c1_, &c2_, &c3_}) c->init(rng);
    }

    struct Cache {
        Tensor in, a1_pre, a1, p1, a2_pre, a2, p2;
    };

    // Mean of the patch logits.
    double forward(const Tensor& in, Cache& k) const {
        k.in = in;
        k.a1_pre = c1_.forward(in);
        k.a1 = nn::leaky_relu(k.a1_pre);
        k.p1 = nn::avg_pool2(k.a1);
        k.a2_pre = c2_.forward(k.p1);
        k.a2 = nn::leaky_relu(k.a2_pre);
        k.p2 = nn::avg_pool2(k.a2);
        const Tensor map = c3_.forward(k.p2);
        double s = 0;
        for (float v : map.storage()) s += v;
        return s / static_cast<double>(map.size());
    }

    // d(loss)/d(mean logit) = dscore; returns gradient w.r.t. the input when wanted.
    void backward(const Cache& k, double dscore, Tensor* grad_in) {
        Tensor gmap(1, k.p2.height(), k.p2.width(), static_cast<float>(dscore / (k.p2.height() * k.p2.width())));
        Tensor g, gp;
        c3_.backward(k.p2, gmap, &gp);
        g = nn::avg_pool2_backward(gp);
        nn::leaky_relu_backward(k.a2_pre, g);
        c2_.backward(k.p1, g, &gp);
        g = nn::avg_pool2_backward(gp);
        nn::leaky_relu_backward(k.a1_pre, g);
        c1_.backward(k.in, g, grad_in);
    }

    std::vector<nn::Param*> params() {
        return {&c1_.weight, &c1_.bias, &c2_.weight, &c2_.bias, &c3_.weight, &c3_.bias};
    }

private:
    nn::Conv2d c1_, c2_, c3_;
};

const Tensor& input_of(const synth::Tile& t, Direction d) {
    return d == Direction::VS ? t.pair.af.pixels : t.pair.he.pixels;
}

const Tensor& target_of(const synth::Tile& t, Direction d) {
    return d == Direction::VS ? t.pair.he.pixels : t.pair.af.pixels;
}

double l1_clamped(const Tensor& raw, const Tensor& target) {
    double s = 0;
    for (std::size_t i = 0; i < raw.size(); ++i)
        s += std::abs(static_cast<double>(std::clamp(raw.storage()[i], 0.0f, 1.0f)) - target.storage()[i]);
    return s / static_cast<double>(raw.size());
}

}  // namespace

double evaluate_l1(const Translator& t, const std::vector<synth::Tile>& tiles) {
    if (tiles.empty()) return 0.0;
    double s = 0;
    for (const auto& tile : tiles)
        s += l1_clamped(t.forward_raw(input_of(tile, t.direction())), target_of(tile, t.direction()));
    return s / static_cast<double>(tiles.size());
}

QualityLabel label_checkpoint(const Checkpoint& c, const LabelThresholds& t) {
    if (c.regime == Regime::overfit_subset) return QualityLabel::poor_overfit;
    return (c.epoch >= t.epoch_min && c.val_loss <= t.val_max) ? QualityLabel::good : QualityLabel::poor_early;
}

std::string TrainResult::log_csv() const {
    io::CsvWriter csv({"epoch", "train_loss", "val_loss"});
    for (const auto& e : log) csv.row({std::to_string(e.epoch), io::fmt_num(e.train_loss), io::fmt_num(e.val_loss)});
    return csv.str();
}

TrainResult train_translator(Direction dir, const std::vector<synth::Tile>& train, const std::vector<synth::Tile>& val,
                             const TrainConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("train_translator: empty training split");
    if (cfg.epochs < 0 || cfg.stop_epoch < 0 || cfg.stop_epoch > cfg.epochs || cfg.cadence < 1 ||
        cfg.log_every < 1 || cfg.batch < 1 || !(cfg.learning_rate > 0))
        throw std::invalid_argument("train_translator: bad hyperparameters");

    Translator net(dir, cfg.widths);
    net.init(derive_seed(cfg.seed, "init"));

    std::vector<synth::Tile> subset;
    if (cfg.regime == Regime::overfit_subset) {
        if (cfg.subset_size < 1 || static_cast<std::size_t>(cfg.subset_size) > train.size())
            throw std::invalid_argument("train_translator: bad overfit subset size");
        Rng rng(derive_seed(cfg.seed, "subset"));
        for (std::size_t i : rng.sample_without_replacement(train.size(), static_cast<std::size_t>(cfg.subset_size)))
            subset.push_back(train[i]);
    }
    const std::vector<synth::Tile>& data = cfg.regime == Regime::overfit_subset ? subset : train;

    TrainResult result;
    auto snapshot = [&](int epoch, double val_loss) {
        Checkpoint c;
        c.params = std::make_shared<const Translator>(net);
        c.epoch = epoch;
        c.train_loss = evaluate_l1(net, data);
        c.val_loss = val_loss;
        c.regime = cfg.regime;
        c.quality_label = cfg.regime == Regime::full ? QualityLabel::good : QualityLabel::poor_overfit;
        c.train_subset_size = static_cast<int>(data.size());
        c.seed = cfg.seed;
        char buf[32];
        std::snprintf(buf, sizeof buf, "-e%04d", epoch);
        c.id = cfg.id_prefix + buf;
        result.checkpoints.push_back(std::move(c));
    };

    if (cfg.epochs == 0) {
        snapshot(0, evaluate_l1(net, val));
        return result;
    }

    auto params = net.params();
    nn::Adam opt(params, cfg.learning_rate, 0.9, 0.999);
    std::optional<Discriminator> disc;
    std::optional<nn::Adam> disc_opt;
    std::vector<nn::Param*> disc_params;
    if (cfg.adversarial_weight > 0) {
        disc.emplace(net.in_channels() + net.out_channels(), derive_seed(cfg.seed, "disc-init"));
        disc_params = disc->params();
        disc_opt.emplace(disc_params, cfg.learning_rate, 0.5, 0.999);
    }

    const int last = cfg.stop_epoch > 0 ? cfg.stop_epoch : cfg.epochs;
    for (int epoch = 1; epoch <= last; ++epoch) {
        // Cosine decay down to 5% of the base rate.
        const double progress = static_cast<double>(epoch - 1) / cfg.epochs;
        const double lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress)));
        opt.set_lr(lr);
        if (disc_opt) disc_opt->set_lr(lr);
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        double loss_sum = 0;
        std::size_t loss_n = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
            const float scale = 1.0f / static_cast<float>(b1 - b0);
            opt.zero_grad();
            if (disc_opt) disc_opt->zero_grad();
            for (std::size_t bi = b0; bi < b1; ++bi) {
                const auto& tile = data[order[bi]];
                const Tensor& x = input_of(tile, dir);
                const Tensor& y = target_of(tile, dir);
                Translator::Cache cache;
                const Tensor out = net.forward_train(x, cache);
                Tensor grad(out.channels(), out.height(), out.width());
                const float gs = scale / static_cast<float>(out.size());
                double l1 = 0;
                for (std::size_t i = 0; i < out.size(); ++i) {
                    const float d = out.storage()[i] - y.storage()[i];
                    l1 += std::abs(static_cast<double>(d));
                    grad.storage()[i] = d > 0 ? gs : (d < 0 ? -gs : 0.0f);
                }
                l1 /= static_cast<double>(out.size());
                if (!std::isfinite(l1)) throw DivergenceError("translator loss is not finite", epoch);
                loss_sum += l1;
                ++loss_n;

                if (disc) {
                    const double w = cfg.adversarial_weight;
                    Tensor fake_in = nn::concat_channels(x, out);
                    Tensor real_in = nn::concat_channels(x, y);
                    Discriminator::Cache kf, kr;
                    // Generator term: w * (D(fake) - 1)^2, gradient reaches the translator output.
                    const double df = disc->forward(fake_in, kf);
                    Tensor g_fake_in;
                    std::vector<std::vector<float>> saved;
                    for (nn::Param* p : disc_params) saved.push_back(p->grad);
                    disc->backward(kf, scale * w * 2.0 * (df - 1.0), &g_fake_in);
                    // Restore: the generator step must not leak into discriminator gradients.
                    for (std::size_t i = 0; i < disc_params.size(); ++i) disc_params[i]->grad = saved[i];
                    Tensor g_x, g_out;
                    nn::split_channels(g_fake_in, x.channels(), g_x, g_out);
                    for (std::size_t i = 0; i < grad.size(); ++i) grad.storage()[i] += g_out.storage()[i];
                    // Discriminator terms: (D(real) - 1)^2 + D(fake)^2, fake detached.
                    const double dr = disc->forward(real_in, kr);
                    disc->backward(kr, scale * 2.0 * (dr - 1.0), nullptr);
                    disc->forward(fake_in, kf);
                    disc->backward(kf, scale * 2.0 * df, nullptr);
                }
                net.backward(cache, grad);
            }
            opt.step();
            if (disc_opt) disc_opt->step();
        }
        if (!net.all_finite()) throw DivergenceError("translator weights are not finite", epoch);
        const bool snap = epoch % cfg.cadence == 0 || epoch == last;
        if (!snap && epoch % cfg.log_every != 0) continue;
        const double val_loss = evaluate_l1(net, val);
        result.log.push_back({epoch, loss_sum / static_cast<double>(std::max<std::size_t>(1, loss_n)), val_loss});
        if (snap) snapshot(epoch, val_loss);
    }
    return result;
}

synth::Patch apply(const Translator& t, const synth::Patch& p) {
    if (p.domain != input_domain(t.direction()))
        throw std::invalid_argument(std::string("apply: ") + std::string(to_string(t.direction())) + " expects " +
                                    std::string(synth::to_string(input_domain(t.direction()))) + " input");
    Tensor out = t.forward_raw(p.pixels);
    for (float& v : out.storage()) v = std::clamp(v, 0.0f, 1.0f);
    return synth::Patch{std::move(out), output_domain(t.direction()), p.tile_id, p.seed};
}

synth::Patch apply(const Checkpoint& c, const synth::Patch& p) { return apply(*c.params, p); }

// ---- persistence -----------------------------------------------------------------------

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    io::ArrayFile f;
    for (const nn::Param* p : c.params->params())
        f.put_f32(p->name, {p->value.size()}, p->value);
    nlohmann::ordered_json j;
    j["id"] = c.id;
    j["direction"] = std::string(to_string(c.direction()));
    j["architecture"] = c.params->architecture();
    j["widths"] = {c.params->widths().level1, c.params->widths().level2, c.params->widths().level3};
    j["epoch"] = c.epoch;
    j["train_loss"] = c.train_loss;
    j["val_loss"] = c.val_loss;
    j["regime"] = std::string(to_string(c.regime));
    j["quality_label"] = std::string(to_string(c.quality_label));
    j["train_subset_size"] = c.train_subset_size;
    j["seed"] = c.seed;
    f.put_text("meta.json", j.dump(2));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    f.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto f = io::ArrayFile::load(path);
    const auto j = nlohmann::json::parse(f.get_text("meta.json"));
    const auto w = j.at("widths").get<std::vector<int>>();
    auto net = std::make_shared<Translator>(parse_direction(j.at("direction").get<std::string>()),
                                            Widths{w.at(0), w.at(1), w.at(2)});
    for (nn::Param* p : net->params()) {
        auto v = f.get_f32(p->name);
        if (v.size() != p->value.size()) throw std::runtime_error("checkpoint: size mismatch for " + p->name);
        p->value = std::move(v);
    }
    Checkpoint c;
    c.params = std::move(net);
    c.id = j.at("id").get<std::string>();
    c.epoch = j.at("epoch").get<int>();
    c.train_loss = j.at("train_loss").get<double>();
    c.val_loss = j.at("val_loss").get<double>();
    c.regime = parse_regime(j.at("regime").get<std::string>());
    c.quality_label = parse_quality(j.at("quality_label").get<std::string>());
    c.train_subset_size = j.at("train_subset_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace aqua::translate
