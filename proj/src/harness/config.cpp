// SPDX-License-Identifier: Apache-2.0
#include "aqua/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "aqua/core/error.hpp"
#include "aqua/core/rng.hpp"
#include "aqua/io/text.hpp"

namespace aqua::harness {

namespace {

using C = ExperimentConfig;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("config: " + key + ": cannot parse '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: " + key + ": expected true/false, got '" + v + "'");
}

std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(double v) { return io::fmt_num(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const std::string& v) { return v; }
template <typename T>
std::string fmt(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

template <typename T>
T parse_as(const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) return parse_bool(key, v);
    else if constexpr (std::is_same_v<T, std::string>) return v;
    else return parse_number<T>(key, v);
}

struct Field {
    std::string key;
    std::string help;
    std::function<std::string(const C&)> get;
    std::function<void(C&, const std::string&)> set;
};

template <typename T>
Field field(std::string key, T C::*m, std::string help) {
    Field f;
    f.key = key;
    f.help = std::move(help);
    f.get = [m](const C& c) { return fmt(c.*m); };
    f.set = [m, key](C& c, const std::string& v) {
        if constexpr (requires { typename T::value_type; } && !std::is_same_v<T, std::string>) {
            T out;
            for (const auto& item : split_list(v)) out.push_back(parse_as<typename T::value_type>(key, item));
            c.*m = std::move(out);
        } else {
            c.*m = parse_as<T>(key, v);
        }
    };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        field("master_seed", &C::master_seed, "root of every random substream"),
        field("tile_size", &C::tile_size, "tile edge in pixels (multiple of 4)"),
        field("train_tiles", &C::train_tiles, "train split size"),
        field("val_tiles", &C::val_tiles, "validation split size"),
        field("test_tiles", &C::test_tiles, "test split size"),
        field("nuclei_min", &C::nuclei_min, "fewest nuclei requested per tile"),
        field("nuclei_max", &C::nuclei_max, "most nuclei requested per tile"),
        field("radius_min", &C::radius_min, "smallest nucleus semi-axis, px"),
        field("radius_max", &C::radius_max, "largest nucleus semi-axis, px"),
        field("translator_train_tiles", &C::translator_train_tiles,
              "leading train tiles used to fit translators; the remainder feed the classifier"),
        field("translator_val_tiles", &C::translator_val_tiles, "validation tiles for translator losses"),
        field("epochs", &C::epochs, "translator schedule length"),
        field("cadence", &C::cadence, "checkpoint every this many epochs"),
        field("batch", &C::batch, "translator minibatch"),
        field("learning_rate", &C::learning_rate, "translator Adam step size"),
        field("adversarial_weight", &C::adversarial_weight, "LSGAN term weight (0 = pure L1)"),
        field("widths", &C::widths, "encoder-decoder channel widths per level"),
        field("early_stop_epoch", &C::early_stop_epoch, "stop epoch of early-stopped runs"),
        field("overfit_subset", &C::overfit_subset, "tiles seen by overfit-regime runs"),
        field("overfit_epochs", &C::overfit_epochs, "overfit-regime schedule length"),
        field("overfit_cadence", &C::overfit_cadence, "overfit-regime checkpoint cadence"),
        field("overfit_keep_last", &C::overfit_keep_last, "converged checkpoints kept per overfit run"),
        field("epoch_min", &C::epoch_min, "good label: minimum epoch"),
        field("val_max", &C::val_max, "good label: maximum validation L1"),
        field("poor_min_val", &C::poor_min_val, "poor pools: minimum validation L1 of failing checkpoints"),
        field("train_full_runs", &C::train_full_runs, "full VS runs feeding classifier training"),
        field("train_early_runs", &C::train_early_runs, "early-stopped VS runs feeding classifier training"),
        field("val_full_runs", &C::val_full_runs, "full VS runs for calibration"),
        field("val_early_runs", &C::val_early_runs, "early-stopped VS runs for calibration"),
        field("test_full_runs", &C::test_full_runs, "full VS runs for the test benchmark"),
        field("test_early_runs", &C::test_early_runs, "early-stopped VS runs for the test benchmark"),
        field("external_full_runs", &C::external_full_runs, "full VS runs for external generalization"),
        field("external_early_runs", &C::external_early_runs, "early-stopped VS runs for external generalization"),
        field("external_overfit_runs", &C::external_overfit_runs, "overfit-regime VS runs"),
        field("classifier_include_overfit", &C::classifier_include_overfit,
              "add overfit checkpoints to classifier training (the external stage then aborts)"),
        field("T", &C::T, "cycle sequence length (frame 0 is the image itself)"),
        field("C", &C::C, "voting heads"),
        field("ensemble", &C::ensemble, "mean | majority"),
        field("train_images_per_class", &C::train_images_per_class, "classifier training images per class"),
        field("val_images_per_model", &C::val_images_per_model, "validation images per calibration model"),
        field("backbone_epochs", &C::backbone_epochs, "autoencoder pre-training epochs"),
        field("backbone_batch", &C::backbone_batch, "autoencoder minibatch"),
        field("backbone_lr", &C::backbone_lr, "autoencoder Adam step size"),
        field("backbone_max_frames", &C::backbone_max_frames, "negative frames used for pre-training"),
        field("head_epochs", &C::head_epochs, "voting-head epochs"),
        field("head_batch", &C::head_batch, "voting-head minibatch"),
        field("head_lr", &C::head_lr, "voting-head Adam step size"),
        field("head_weight_decay", &C::head_weight_decay, "voting-head L2 weight"),
        field("head_temporal_channels", &C::head_temporal_channels, "temporal conv output channels"),
        field("head_hidden", &C::head_hidden, "dense layer width"),
        field("alpha_midpoint", &C::alpha_midpoint, "alpha halfway to the nearest lower negative"),
        field("test_good_models", &C::test_good_models, "good models in the test benchmark"),
        field("test_poor_models", &C::test_poor_models, "poor models in the test benchmark"),
        field("test_images_per_model", &C::test_images_per_model, "disjoint test tiles per test model"),
        field("N_grid", &C::N_grid, "images per model-level decision"),
        field("R", &C::R, "resamples per (model, N)"),
        field("beta_N", &C::beta_N, "images per resample when fitting beta"),
        field("beta_R", &C::beta_R, "resamples per validation model when fitting beta"),
        field("external_good", &C::external_good, "unseen good models"),
        field("external_early", &C::external_early, "unseen early-stopped models"),
        field("external_overfit", &C::external_overfit, "unseen overfit models"),
        field("external_images_per_model", &C::external_images_per_model, "test images per external model (= N)"),
        field("ablate_T_values", &C::ablate_T_values, "sequence lengths compared"),
        field("ablate_C_values", &C::ablate_C_values, "ensemble sizes compared"),
        field("ablate_C_seeds", &C::ablate_C_seeds, "head seeds per ensemble size"),
        field("hs_modes", &C::hs_modes, "corruption modes"),
        field("hs_train_severities", &C::hs_train_severities, "severities seen in HS classifier training"),
        field("hs_eval_severities", &C::hs_eval_severities, "severities in the HS test benchmark"),
        field("hs_train_tiles", &C::hs_train_tiles, "clean train tiles for the HS classifier"),
        field("hs_test_tiles", &C::hs_test_tiles, "clean test tiles in the HS benchmark"),
    };
    return f;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
}

}  // namespace

void ExperimentConfig::validate() const {
    require(tile_size >= 8 && tile_size % 4 == 0, "tile_size must be a multiple of 4, >= 8");
    require(train_tiles > 0 && val_tiles > 0 && test_tiles > 0, "split sizes must be positive");
    require(nuclei_min >= 0 && nuclei_min <= nuclei_max, "need 0 <= nuclei_min <= nuclei_max");
    require(radius_min > 0 && radius_min <= radius_max, "need 0 < radius_min <= radius_max");
    require(translator_train_tiles > 0 && translator_train_tiles < train_tiles,
            "translator_train_tiles must leave classifier tiles in the train split");
    require(translator_val_tiles > 0 && translator_val_tiles <= val_tiles, "translator_val_tiles out of range");
    require(epochs >= 1 && cadence >= 1 && batch >= 1, "epochs, cadence and batch must be >= 1");
    require(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate must be positive");
    require(adversarial_weight >= 0, "adversarial_weight must be >= 0");
    require(widths.size() == 3 && widths[0] > 0 && widths[1] > 0 && widths[2] > 0, "widths needs 3 positive values");
    require(early_stop_epoch >= 1 && early_stop_epoch <= epochs, "early_stop_epoch must be in [1, epochs]");
    require(overfit_subset >= 1 && overfit_subset <= translator_train_tiles, "overfit_subset out of range");
    require(overfit_epochs >= 1 && overfit_cadence >= 1, "overfit_epochs and overfit_cadence must be >= 1");
    require(overfit_keep_last >= 1 && overfit_keep_last <= (overfit_epochs + overfit_cadence - 1) / overfit_cadence,
            "overfit_keep_last exceeds the checkpoints of one overfit run");
    require(epoch_min >= 0 && val_max > 0 && poor_min_val >= val_max, "need val_max > 0 and poor_min_val >= val_max");
    for (int v : {train_full_runs, train_early_runs, val_full_runs, val_early_runs, test_full_runs, test_early_runs,
                  external_full_runs, external_early_runs, external_overfit_runs})
        require(v >= 0, "run counts must be >= 0");
    require(train_full_runs > 0, "train_full_runs must be positive");
    require(T >= 1 && C >= 1, "T and C must be >= 1");
    require(ensemble == "mean" || ensemble == "majority", "ensemble must be mean or majority");
    require(train_images_per_class >= 1 && val_images_per_model >= 1, "image counts must be positive");
    require(val_images_per_model <= val_tiles, "val_images_per_model exceeds val_tiles");
    require(backbone_epochs >= 1 && backbone_batch >= 1 && backbone_lr > 0 && backbone_max_frames >= 1,
            "bad backbone hyperparameters");
    require(head_epochs >= 1 && head_batch >= 1 && head_lr > 0 && head_weight_decay >= 0 &&
                head_temporal_channels >= 1 && head_hidden >= 1,
            "bad head hyperparameters");
    require(test_good_models >= 1 && test_poor_models >= 1, "test benchmark needs both model classes");
    require(test_images_per_model >= 1 && (test_good_models + test_poor_models) * test_images_per_model <= test_tiles,
            "test models x test_images_per_model exceeds test_tiles");
    require(!N_grid.empty() && R >= 1, "N_grid must be nonempty and R >= 1");
    for (int n : N_grid) require(n >= 1 && n <= test_images_per_model, "N_grid values must be in [1, test_images_per_model]");
    require(beta_N >= 1 && beta_N <= val_images_per_model && beta_R >= 2, "need 1 <= beta_N <= val_images_per_model, beta_R >= 2");
    require(external_good >= 0 && external_early >= 0 && external_overfit >= 0, "external counts must be >= 0");
    require(external_images_per_model >= 1 && external_images_per_model <= test_tiles,
            "external_images_per_model out of range");
    require(!ablate_T_values.empty() && !ablate_C_values.empty() && ablate_C_seeds >= 1, "ablation lists must be nonempty");
    for (int t : ablate_T_values) require(t >= 1, "ablate_T_values must be >= 1");
    for (int c : ablate_C_values) require(c >= 1, "ablate_C_values must be >= 1");
    require(!hs_modes.empty(), "hs_modes must be nonempty");
    for (const auto& m : hs_modes) {
        try {
            synth::parse_corruption(m);
        } catch (const std::exception&) {
            throw ConfigError("config: unknown corruption mode '" + m + "'");
        }
    }
    require(!hs_train_severities.empty() && !hs_eval_severities.empty(), "hs severity lists must be nonempty");
    for (double s : hs_train_severities) require(s > 0 && s <= 1, "severities must be in (0, 1]");
    for (double s : hs_eval_severities) require(s > 0 && s <= 1, "severities must be in (0, 1]");
    require(hs_train_tiles >= 1 && hs_train_tiles <= train_tiles, "hs_train_tiles out of range");
    require(hs_test_tiles >= 1 && hs_test_tiles <= test_tiles, "hs_test_tiles out of range");
}

synth::DatasetConfig ExperimentConfig::dataset() const {
    synth::DatasetConfig d;
    d.train = train_tiles;
    d.val = val_tiles;
    d.test = test_tiles;
    d.master_seed = derive_seed(master_seed, "data");
    d.tile_size = tile_size;
    d.nuclei_min = nuclei_min;
    d.nuclei_max = nuclei_max;
    d.radius_min = radius_min;
    d.radius_max = radius_max;
    return d;
}

translate::TrainConfig ExperimentConfig::translator(translate::Direction, translate::Regime regime,
                                                    std::uint64_t seed) const {
    translate::TrainConfig t;
    t.regime = regime;
    t.seed = seed;
    t.batch = batch;
    t.learning_rate = learning_rate;
    t.adversarial_weight = adversarial_weight;
    t.widths = {widths[0], widths[1], widths[2]};
    if (regime == translate::Regime::overfit_subset) {
        t.epochs = overfit_epochs;
        t.cadence = overfit_cadence;
        t.subset_size = overfit_subset;
    } else {
        t.epochs = epochs;
        t.cadence = cadence;
    }
    t.log_every = t.cadence;
    return t;
}

translate::LabelThresholds ExperimentConfig::thresholds() const { return {epoch_min, val_max}; }

net::BackboneConfig ExperimentConfig::backbone(std::uint64_t seed) const {
    net::BackboneConfig b;
    b.epochs = backbone_epochs;
    b.batch = backbone_batch;
    b.learning_rate = backbone_lr;
    b.max_frames = static_cast<std::size_t>(backbone_max_frames);
    b.seed = seed;
    return b;
}

net::HeadConfig ExperimentConfig::head(std::uint64_t seed) const {
    net::HeadConfig h;
    h.epochs = head_epochs;
    h.batch = head_batch;
    h.learning_rate = head_lr;
    h.weight_decay = head_weight_decay;
    h.temporal_channels = head_temporal_channels;
    h.hidden = head_hidden;
    h.seed = seed;
    return h;
}

std::vector<synth::Corruption> ExperimentConfig::corruption_modes() const {
    std::vector<synth::Corruption> m;
    for (const auto& s : hs_modes) m.push_back(synth::parse_corruption(s));
    return m;
}

void set_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError("config: unknown key '" + key + "'");
    f->set(c, value);
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + key);
        try {
            set_value(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(io::read_text(path));
}

std::string resolved_text(const ExperimentConfig& c) {
    std::string s;
    for (const auto& f : fields()) s += f.key + " = " + f.get(c) + "\n";
    return s;
}

std::string schema_text() {
    ExperimentConfig d;
    std::string s;
    for (const auto& f : fields()) s += f.key + " = " + f.get(d) + "    # " + f.help + "\n";
    return s;
}

std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(resolved_text(c)); }

}  // namespace aqua::harness
