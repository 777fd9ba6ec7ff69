// SPDX-License-Identifier: Apache-2.0
#include "aqua/harness/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "aqua/core/error.hpp"
#include "aqua/core/rng.hpp"
#include "aqua/cycler.hpp"
#include "aqua/harness/plots.hpp"
#include "aqua/hschecks.hpp"
#include "aqua/io/array_file.hpp"
#include "aqua/io/png.hpp"
#include "aqua/io/text.hpp"
#include "aqua/metrics.hpp"

namespace aqua::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using translate::Checkpoint;
using translate::Direction;
using translate::QualityLabel;
using translate::Regime;

// ---- stage table ------------------------------------------------------------------

namespace {

struct StageInfo {
    Stage stage;
    const char* name;
    std::vector<Stage> deps;
};

const std::vector<StageInfo>& stage_table() {
    static const std::vector<StageInfo> t{
        {Stage::gen_data, "gen-data", {}},
        {Stage::train_translators, "train-translators", {Stage::gen_data}},
        {Stage::pool_checkpoints, "pool-checkpoints", {Stage::train_translators}},
        {Stage::train_classifier, "train-classifier", {Stage::pool_checkpoints}},
        {Stage::calibrate, "calibrate", {Stage::train_classifier}},
        {Stage::evaluate, "evaluate", {Stage::calibrate}},
        {Stage::maqua_study, "maqua-study", {Stage::evaluate}},
        {Stage::external, "external", {Stage::calibrate}},
        {Stage::ablate_T, "ablate-T", {Stage::evaluate}},
        {Stage::ablate_C, "ablate-C", {Stage::evaluate}},
        {Stage::hs_bench, "hs-bench", {Stage::pool_checkpoints}},
        {Stage::report,
         "report",
         {Stage::evaluate, Stage::maqua_study, Stage::external, Stage::ablate_T, Stage::ablate_C, Stage::hs_bench}},
    };
    return t;
}

const StageInfo& info(Stage s) {
    for (const auto& i : stage_table())
        if (i.stage == s) return i;
    throw std::logic_error("unknown stage");
}

}  // namespace

std::string_view to_string(Stage s) noexcept {
    for (const auto& i : stage_table())
        if (i.stage == s) return i.name;
    return "?";
}

Stage parse_stage(std::string_view s) {
    for (const auto& i : stage_table())
        if (s == i.name) return i.stage;
    throw ConfigError("unknown stage '" + std::string(s) + "'");
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> v = [] {
        std::vector<Stage> out;
        for (const auto& i : stage_table()) out.push_back(i.stage);
        return out;
    }();
    return v;
}

const std::vector<Stage>& dependencies(Stage s) { return info(s).deps; }

// ---- shared helpers ---------------------------------------------------------------------

namespace {

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ordered_json read_json(const fs::path& p) {
    if (!fs::exists(p)) throw DependencyError("missing artifact " + p.string());
    return ordered_json::parse(io::read_text(p));
}

void write_json(const fs::path& p, const ordered_json& j) { io::write_text(p, j.dump(2) + "\n"); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    if (!fs::exists(p)) throw DependencyError("missing artifact " + p.string());
    auto rows = io::parse_csv(io::read_text(p));
    if (rows.empty()) throw DependencyError("empty artifact " + p.string());
    return rows;
}

// Column lookup by header name.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    explicit Table(std::vector<std::vector<std::string>> all) {
        header = all.front();
        rows.assign(all.begin() + 1, all.end());
    }
    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw DependencyError("artifact lacks column " + name);
    }
};

double to_d(const std::string& s) { return std::stod(s); }

// --- translator runs

struct RunSpec {
    std::string run_id;
    std::string pool;  // deploy, train, val, test, external
    std::string kind;  // full, early, overfit
    Direction dir = Direction::VS;
};

std::vector<RunSpec> translator_runs(const ExperimentConfig& c) {
    std::vector<RunSpec> runs{{"vs-deploy", "deploy", "full", Direction::VS},
                              {"vaf-deploy", "deploy", "full", Direction::VAF}};
    auto add = [&](const std::string& pool, const std::string& tag, const std::string& kind, int n) {
        for (int i = 0; i < n; ++i) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "vs-%s-%s%02d", tag.c_str(), kind.substr(0, 1).c_str(), i);
            runs.push_back({buf, pool, kind, Direction::VS});
        }
    };
    add("train", "train", "full", c.train_full_runs);
    add("train", "train", "early", c.train_early_runs);
    add("val", "val", "full", c.val_full_runs);
    add("val", "val", "early", c.val_early_runs);
    add("test", "test", "full", c.test_full_runs);
    add("test", "test", "early", c.test_early_runs);
    add("external", "ext", "full", c.external_full_runs);
    add("external", "ext", "early", c.external_early_runs);
    add("external", "ext", "overfit", c.external_overfit_runs);
    return runs;
}

struct CkptRow {
    std::string id, run_id, pool, kind, direction;
    int epoch = 0;
    double train_loss = 0, val_loss = 0;
    std::string label;
};

std::vector<CkptRow> read_checkpoint_index(const fs::path& p) {
    const Table t(read_csv(p));
    std::vector<CkptRow> out;
    for (const auto& r : t.rows)
        out.push_back({r[t.col("checkpoint_id")], r[t.col("run_id")], r[t.col("pool")], r[t.col("kind")],
                       r[t.col("direction")], std::stoi(r[t.col("epoch")]), to_d(r[t.col("train_loss")]),
                       to_d(r[t.col("val_loss")]), r[t.col("quality_label")]});
    return out;
}

// --- pools

struct PoolEntry {
    std::string id;
    std::string pool;   // train, val, test, external
    std::string role;   // good, poor_early, poor_overfit
};

struct Pools {
    std::string deploy_vs, deploy_vaf;
    std::vector<PoolEntry> entries;

    std::vector<std::string> ids(const std::string& pool, const std::string& role) const {
        std::vector<std::string> v;
        for (const auto& e : entries)
            if (e.pool == pool && (role.empty() || e.role == role)) v.push_back(e.id);
        return v;
    }
    const PoolEntry* find(const std::string& pool, const std::string& id) const {
        for (const auto& e : entries)
            if (e.pool == pool && e.id == id) return &e;
        return nullptr;
    }
};

Pools read_pools(const fs::path& dir) {
    Pools p;
    const auto j = read_json(dir / "pools.json");
    p.deploy_vs = j.at("deploy_vs").get<std::string>();
    p.deploy_vaf = j.at("deploy_vaf").get<std::string>();
    const Table t(read_csv(dir / "pools.csv"));
    for (const auto& r : t.rows) p.entries.push_back({r[t.col("checkpoint_id")], r[t.col("pool")], r[t.col("role")]});
    return p;
}

class CheckpointStore {
public:
    explicit CheckpointStore(fs::path dir) : dir_(std::move(dir)) {}
    const Checkpoint& get(const std::string& id) {
        auto it = cache_.find(id);
        if (it != cache_.end()) return it->second;
        const fs::path p = dir_ / (id + ".ckpt");
        if (!fs::exists(p)) throw DependencyError("missing checkpoint " + p.string());
        return cache_.emplace(id, translate::load_checkpoint(p)).first->second;
    }

private:
    fs::path dir_;
    std::map<std::string, Checkpoint> cache_;
};

// --- images under test

struct Image {
    std::string model_id;
    std::string tile_id;
    bool positive = false;
    std::string role;  // pool role of the producing model
};

std::string image_id(const Image& im) { return im.model_id + "/" + im.tile_id; }

struct TileSet {
    std::vector<synth::Tile> tiles;
    std::map<std::string, std::size_t> index;

    explicit TileSet(std::vector<synth::Tile> t) : tiles(std::move(t)) {
        for (std::size_t i = 0; i < tiles.size(); ++i) index[tiles[i].id] = i;
    }
    const synth::Tile& at(const std::string& id) const {
        auto it = index.find(id);
        if (it == index.end()) throw DependencyError("unknown tile " + id);
        return tiles[it->second];
    }
};

bool is_positive_role(const std::string& role) { return role != "good"; }

struct Rendered {
    synth::Patch vs;  // image under test
    cycle::CycleSeq seq;
};

Rendered render(const Image& im, const TileSet& tiles, CheckpointStore& store, const cycle::CyclePair& pair, int T) {
    const auto& tile = tiles.at(im.tile_id);
    Rendered r;
    r.vs = translate::apply(store.get(im.model_id), tile.pair.af);
    r.vs.tile_id = im.tile_id;
    r.seq = cycle::run_cycles(r.vs, pair, T);
    return r;
}

// Feature cache: (n, T, D) doubles plus labels, aligned with an image list.
void save_features(const fs::path& p, const std::vector<net::FeatureSeq>& f, const std::vector<bool>& labels) {
    io::ArrayFile a;
    const int T = f.empty() ? 0 : f[0].T;
    std::vector<double> x;
    for (const auto& s : f) x.insert(x.end(), s.x.begin(), s.x.end());
    a.put_f64("features", {f.size(), static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(net::kFeatureDim)}, x);
    std::vector<std::int64_t> l(labels.begin(), labels.end());
    a.put_i64("labels", {l.size()}, l);
    a.save(p);
}

std::vector<net::LabeledFeatures> load_features(const fs::path& p) {
    if (!fs::exists(p)) throw DependencyError("missing artifact " + p.string());
    const auto a = io::ArrayFile::load(p);
    const auto& e = a.get("features");
    const auto x = a.get_f64("features");
    const auto l = a.get_i64("labels");
    const std::size_t n = e.shape[0], T = e.shape[1], D = e.shape[2];
    std::vector<net::LabeledFeatures> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].features.T = static_cast<int>(T);
        out[i].features.x.assign(x.begin() + static_cast<std::ptrdiff_t>(i * T * D),
                                 x.begin() + static_cast<std::ptrdiff_t>((i + 1) * T * D));
        out[i].positive = l[i] != 0;
    }
    return out;
}

std::string images_csv(const std::vector<Image>& v) {
    io::CsvWriter w({"image_id", "model_id", "tile_id", "role", "label_true"});
    for (const auto& im : v)
        w.row({image_id(im), im.model_id, im.tile_id, im.role, im.positive ? "positive" : "negative"});
    return w.str();
}

// Sorted draw of k of n indices.
std::vector<std::size_t> pick(std::size_t n, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    auto idx = rng.sample_without_replacement(n, k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

struct EvalSummary {
    double alpha = 0;
    metrics::Confusion confusion;
    metrics::SeparationReport sep;
};

EvalSummary summarize(const std::vector<double>& scores, const std::vector<bool>& labels, double alpha) {
    EvalSummary s;
    s.alpha = alpha;
    std::vector<metrics::LabeledScore> ls;
    std::vector<double> p, n;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        ls.push_back({scores[i], labels[i]});
        (labels[i] ? p : n).push_back(scores[i]);
    }
    s.confusion = metrics::confusion(ls, alpha);
    s.sep = metrics::separation("aqua", p, n);
    return s;
}

ordered_json confusion_json(const metrics::Confusion& c) {
    return {{"tp", c.tp},
            {"fn", c.fn},
            {"tn", c.tn},
            {"fp", c.fp},
            {"accuracy", c.accuracy()},
            {"sensitivity", c.sensitivity()},
            {"specificity", c.specificity()}};
}

}  // namespace

// ---- pipeline plumbing ------------------------------------------------------------------

Pipeline::Pipeline(ExperimentConfig cfg, fs::path out, std::ostream* log)
    : cfg_(std::move(cfg)), out_(std::move(out)), log_(log) {
    cfg_.validate();
    hash_ = config_hash(cfg_);
}

fs::path Pipeline::stage_dir(Stage s) const { return out_ / std::string(to_string(s)); }

bool Pipeline::is_complete(Stage s) const {
    const fs::path rec = stage_dir(s) / "stage.json";
    if (!fs::exists(rec)) return false;
    try {
        return read_json(rec).at("config_hash").get<std::string>() == hex(hash_);
    } catch (const std::exception&) {
        return false;
    }
}

void Pipeline::check_dependencies(Stage s) const {
    for (Stage d : dependencies(s)) {
        const fs::path rec = stage_dir(d) / "stage.json";
        if (!fs::exists(rec))
            throw DependencyError("stage " + std::string(to_string(s)) + " needs " + std::string(to_string(d)) +
                                  ", which has not run (missing " + rec.string() + ")");
        const auto h = read_json(rec).at("config_hash").get<std::string>();
        if (h != hex(hash_))
            throw DependencyError("stage " + std::string(to_string(d)) + " was produced with config hash " + h +
                                  ", current config hashes to " + hex(hash_) + "; rerun it with --force");
    }
}

void Pipeline::note(const std::string& line) {
    stage_log_ += line + "\n";
    if (log_) *log_ << line << std::endl;
}

void Pipeline::write_stage_record(Stage s, const std::string& log_text) const {
    ordered_json j;
    j["stage"] = std::string(to_string(s));
    j["config_hash"] = hex(hash_);
    auto deps = ordered_json::array();
    for (Stage d : dependencies(s)) deps.push_back(std::string(to_string(d)));
    j["depends_on"] = deps;
    write_json(stage_dir(s) / "stage.json", j);
    io::write_text(stage_dir(s) / "stage.log", log_text);
}

void Pipeline::run(Stage s, bool force) {
    if (!force && is_complete(s)) {
        if (log_) *log_ << "[" << to_string(s) << "] up to date" << std::endl;
        return;
    }
    check_dependencies(s);
    fs::create_directories(out_);
    io::write_text(out_ / "config.resolved", resolved_text(cfg_));
    const fs::path dir = stage_dir(s);
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::create_directories(dir);
    stage_log_.clear();
    const auto t0 = std::chrono::steady_clock::now();
    note("[" + std::string(to_string(s)) + "] start");
    switch (s) {
        case Stage::gen_data: gen_data(); break;
        case Stage::train_translators: train_translators(); break;
        case Stage::pool_checkpoints: pool_checkpoints(); break;
        case Stage::train_classifier: train_classifier(); break;
        case Stage::calibrate: calibrate(); break;
        case Stage::evaluate: evaluate(); break;
        case Stage::maqua_study: maqua_study(); break;
        case Stage::external: external(); break;
        case Stage::ablate_T: ablate_T(); break;
        case Stage::ablate_C: ablate_C(); break;
        case Stage::hs_bench: hs_bench(); break;
        case Stage::report: report(); break;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", secs);
    note("[" + std::string(to_string(s)) + "] done in " + buf + " s");
    write_stage_record(s, stage_log_);
}

void Pipeline::run_all(bool force) {
    for (Stage s : all_stages()) run(s, force);
}

// ---- stages ---------------------------------------------------------------------------

void Pipeline::gen_data() {
    const auto m = synth::build_dataset(cfg_.dataset(), stage_dir(Stage::gen_data), true);
    note("tiles: train " + std::to_string(m.tile_ids.at(synth::Split::train).size()) + ", val " +
         std::to_string(m.tile_ids.at(synth::Split::val).size()) + ", test " +
         std::to_string(m.tile_ids.at(synth::Split::test).size()));
}

void Pipeline::train_translators() {
    const fs::path data = stage_dir(Stage::gen_data);
    const auto train = synth::load_split(data, synth::Split::train);
    const auto val = synth::load_split(data, synth::Split::val);
    const std::vector<synth::Tile> tr(train.begin(), train.begin() + cfg_.translator_train_tiles);
    const std::vector<synth::Tile> va(val.begin(), val.begin() + cfg_.translator_val_tiles);

    const fs::path dir = stage_dir(Stage::train_translators);
    fs::create_directories(dir / "ckpt");
    fs::create_directories(dir / "logs");
    io::CsvWriter index({"checkpoint_id", "run_id", "pool", "kind", "direction", "epoch", "train_loss", "val_loss",
                         "quality_label", "seed"});
    for (const auto& run : translator_runs(cfg_)) {
        const Regime regime = run.kind == "overfit" ? Regime::overfit_subset : Regime::full;
        auto tc = cfg_.translator(run.dir, regime, derive_seed(cfg_.master_seed, "translator/" + run.run_id));
        tc.id_prefix = run.run_id;
        if (run.kind == "early") tc.stop_epoch = cfg_.early_stop_epoch;
        const auto t0 = std::chrono::steady_clock::now();
        auto res = translate::train_translator(run.dir, tr, va, tc);
        io::write_text(dir / "logs" / (run.run_id + ".csv"), res.log_csv());
        for (auto& c : res.checkpoints) {
            c.quality_label = translate::label_checkpoint(c, cfg_.thresholds());
            translate::save_checkpoint(c, dir / "ckpt" / (c.id + ".ckpt"));
            index.row({c.id, run.run_id, run.pool, run.kind, std::string(translate::to_string(run.dir)),
                       std::to_string(c.epoch), io::fmt_num(c.train_loss), io::fmt_num(c.val_loss),
                       std::string(translate::to_string(c.quality_label)), std::to_string(c.seed)});
        }
        const auto& last = res.checkpoints.back();
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: %zu checkpoints, final epoch %d val L1 %.4f (%.1f s)", run.run_id.c_str(),
                      res.checkpoints.size(), last.epoch, last.val_loss,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        note(buf);
    }
    index.save(dir / "checkpoints.csv");
}

void Pipeline::pool_checkpoints() {
    const auto rows = read_checkpoint_index(stage_dir(Stage::train_translators) / "checkpoints.csv");
    const fs::path dir = stage_dir(Stage::pool_checkpoints);

    auto last_of = [&](const std::string& run) {
        const CkptRow* best = nullptr;
        for (const auto& r : rows)
            if (r.run_id == run && (!best || r.epoch > best->epoch)) best = &r;
        if (!best) throw DependencyError("no checkpoints for run " + run);
        return *best;
    };
    const CkptRow vs = last_of("vs-deploy"), vaf = last_of("vaf-deploy");
    if (vs.label != "good")
        throw ConfigError("deployment VS checkpoint " + vs.id + " is not good (val L1 " + io::fmt_num(vs.val_loss) +
                          "); raise epochs or val_max");

    // Candidates per pool. Failing checkpoints inside the (val_max, poor_min_val)
    // band are neither clearly good nor clearly poor and are left out.
    std::map<std::string, std::vector<std::string>> good, early;
    std::map<std::string, std::vector<std::vector<std::string>>> overfit_runs;
    std::map<std::string, int> ambiguous;
    for (const auto& r : rows) {
        if (r.pool == "deploy" || r.direction != "VS") continue;
        if (r.label == "good") good[r.pool].push_back(r.id);
        else if (r.label == "poor_early" && r.val_loss >= cfg_.poor_min_val) early[r.pool].push_back(r.id);
        else if (r.label == "poor_early") ++ambiguous[r.pool];
    }
    // Converged tail of each overfit run.
    {
        std::map<std::string, std::vector<const CkptRow*>> by_run;
        for (const auto& r : rows)
            if (r.kind == "overfit") by_run[r.run_id].push_back(&r);
        for (auto& [run, v] : by_run) {
            std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->epoch < b->epoch; });
            std::vector<std::string> tail;
            for (std::size_t i = v.size() - static_cast<std::size_t>(cfg_.overfit_keep_last); i < v.size(); ++i)
                tail.push_back(v[i]->id);
            overfit_runs[v.front()->pool].push_back(tail);
        }
    }

    Pools p;
    p.deploy_vs = vs.id;
    p.deploy_vaf = vaf.id;
    auto add = [&](const std::string& pool, const std::vector<std::string>& ids, const std::string& role) {
        for (const auto& id : ids) p.entries.push_back({id, pool, role});
    };
    auto choose = [&](const std::string& pool, const std::vector<std::string>& cand, int k, const std::string& what) {
        if (static_cast<int>(cand.size()) < k)
            throw ConfigError(pool + " pool has " + std::to_string(cand.size()) + " " + what + " checkpoints, " +
                              std::to_string(k) + " needed; add " + pool + " runs");
        std::vector<std::string> out;
        for (std::size_t i : pick(cand.size(), static_cast<std::size_t>(k),
                                  derive_seed(cfg_.master_seed, "pool/" + pool + "/" + what)))
            out.push_back(cand[i]);
        return out;
    };

    add("train", good["train"], "good");
    add("train", early["train"], "poor_early");
    if (cfg_.classifier_include_overfit) {
        for (const auto& run : overfit_runs["external"]) add("train", run, "poor_overfit");
    }
    if (good["train"].empty() || early["train"].empty())
        throw ConfigError("classifier training pool needs good and poor checkpoints");
    if (good["val"].size() < 2 || early["val"].size() < 2)
        throw ConfigError("validation pool needs at least 2 good and 2 poor checkpoints");
    add("val", good["val"], "good");
    add("val", early["val"], "poor_early");
    add("test", choose("test", good["test"], cfg_.test_good_models, "good"), "good");
    add("test", choose("test", early["test"], cfg_.test_poor_models, "poor_early"), "poor_early");
    add("external", choose("external", good["external"], cfg_.external_good, "good"), "good");
    add("external", choose("external", early["external"], cfg_.external_early, "poor_early"), "poor_early");
    std::vector<std::string> of;
    for (const auto& run : overfit_runs["external"]) of.insert(of.end(), run.begin(), run.end());
    add("external", choose("external", of, cfg_.external_overfit, "poor_overfit"), "poor_overfit");

    io::CsvWriter w({"checkpoint_id", "pool", "role"});
    for (const auto& e : p.entries) w.row({e.id, e.pool, e.role});
    w.save(dir / "pools.csv");
    ordered_json j;
    j["deploy_vs"] = p.deploy_vs;
    j["deploy_vaf"] = p.deploy_vaf;
    j["val_max"] = cfg_.val_max;
    j["epoch_min"] = cfg_.epoch_min;
    j["poor_min_val"] = cfg_.poor_min_val;
    ordered_json counts;
    for (const std::string pool : {"train", "val", "test", "external"})
        counts[pool] = {{"good", p.ids(pool, "good").size()},
                        {"poor_early", p.ids(pool, "poor_early").size()},
                        {"poor_overfit", p.ids(pool, "poor_overfit").size()},
                        {"excluded_ambiguous", ambiguous[pool]}};
    j["counts"] = counts;
    write_json(dir / "pools.json", j);
    for (const std::string pool : {"train", "val", "test", "external"})
        note(pool + ": " + std::to_string(p.ids(pool, "good").size()) + " good, " +
             std::to_string(p.ids(pool, "poor_early").size()) + " early, " +
             std::to_string(p.ids(pool, "poor_overfit").size()) + " overfit, " + std::to_string(ambiguous[pool]) +
             " ambiguous excluded");
}

namespace {

// Classifier training images: per class, models and tiles assigned round-robin
// over a seeded tile permutation.
std::vector<Image> train_image_list(const ExperimentConfig& c, const Pools& p, const std::vector<synth::Tile>& tiles) {
    std::vector<Image> out;
    std::vector<std::string> pos = p.ids("train", "poor_early");
    const auto of = p.ids("train", "poor_overfit");
    pos.insert(pos.end(), of.begin(), of.end());
    for (int cls = 0; cls < 2; ++cls) {
        const auto models = cls ? pos : p.ids("train", "good");
        std::vector<std::size_t> perm(tiles.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        Rng rng(derive_seed(c.master_seed, "train-images", static_cast<std::uint64_t>(cls)));
        rng.shuffle(perm);
        for (int k = 0; k < c.train_images_per_class; ++k) {
            const std::string& m = models[static_cast<std::size_t>(k) % models.size()];
            const auto* e = p.find("train", m);
            out.push_back({m, tiles[perm[static_cast<std::size_t>(k) % perm.size()]].id, cls == 1, e->role});
        }
    }
    return out;
}

std::vector<Image> val_image_list(const ExperimentConfig& c, const Pools& p, const std::vector<synth::Tile>& tiles) {
    std::vector<Image> out;
    for (const auto& e : p.entries) {
        if (e.pool != "val") continue;
        for (std::size_t i : pick(tiles.size(), static_cast<std::size_t>(c.val_images_per_model),
                                  derive_seed(c.master_seed, "val-tiles/" + e.id)))
            out.push_back({e.id, tiles[i].id, is_positive_role(e.role), e.role});
    }
    return out;
}

// Test models take disjoint blocks of test tiles.
std::vector<Image> test_image_list(const ExperimentConfig& c, const Pools& p, const std::vector<synth::Tile>& tiles) {
    std::vector<Image> out;
    std::size_t block = 0;
    for (const auto& e : p.entries) {
        if (e.pool != "test") continue;
        for (int i = 0; i < c.test_images_per_model; ++i)
            out.push_back({e.id, tiles[block * static_cast<std::size_t>(c.test_images_per_model) + i].id,
                           is_positive_role(e.role), e.role});
        ++block;
    }
    return out;
}

std::vector<Image> external_image_list(const ExperimentConfig& c, const Pools& p,
                                       const std::vector<synth::Tile>& tiles) {
    std::vector<Image> out;
    for (const auto& e : p.entries) {
        if (e.pool != "external") continue;
        for (std::size_t i : pick(tiles.size(), static_cast<std::size_t>(c.external_images_per_model),
                                  derive_seed(c.master_seed, "external-tiles/" + e.id)))
            out.push_back({e.id, tiles[i].id, is_positive_role(e.role), e.role});
    }
    return out;
}

struct Env {
    Pools pools;
    CheckpointStore store;
    cycle::CyclePair pair;

    Env(const fs::path& translators, const fs::path& pools_dir)
        : pools(read_pools(pools_dir)), store(translators / "ckpt") {
        pair = cycle::make_pair(store.get(pools.deploy_vs), store.get(pools.deploy_vaf));
    }
};

std::vector<net::ScoreRecord> score_images(const std::vector<Image>& images, const TileSet& tiles, Env& env,
                                           const net::Classifier& clf, int T, std::vector<net::FeatureSeq>* feats,
                                           std::vector<Rendered>* keep = nullptr) {
    std::vector<net::ScoreRecord> out;
    out.reserve(images.size());
    for (const auto& im : images) {
        Rendered r = render(im, tiles, env.store, env.pair, T);
        auto f = net::extract(clf.backbone, r.seq);
        auto rec = net::score(f, clf.heads);
        rec.tile_id = im.tile_id;
        rec.model_id = im.model_id;
        rec.vs_checkpoint_id = env.pair.vs_id;
        rec.vaf_checkpoint_id = env.pair.vaf_id;
        rec.positive = im.positive;
        out.push_back(std::move(rec));
        if (feats) feats->push_back(std::move(f));
        if (keep) keep->push_back(std::move(r));
    }
    return out;
}

std::vector<bool> labels_of(const std::vector<Image>& v) {
    std::vector<bool> l;
    for (const auto& im : v) l.push_back(im.positive);
    return l;
}

net::Classifier load_main_classifier(const fs::path& dir) {
    const fs::path p = dir / "classifier.arr";
    if (!fs::exists(p)) throw DependencyError("missing artifact " + p.string());
    return net::load_classifier(p);
}

}  // namespace

void Pipeline::train_classifier() {
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const auto train = synth::load_split(stage_dir(Stage::gen_data), synth::Split::train);
    const std::vector<synth::Tile> ctiles(train.begin() + cfg_.translator_train_tiles, train.end());
    const TileSet tiles(ctiles);
    const auto images = train_image_list(cfg_, env.pools, ctiles);
    const fs::path dir = stage_dir(Stage::train_classifier);

    std::vector<cycle::CycleSeq> seqs;
    seqs.reserve(images.size());
    for (const auto& im : images) seqs.push_back(render(im, tiles, env.store, env.pair, cfg_.T).seq);
    note("cycled " + std::to_string(seqs.size()) + " training images (T=" + std::to_string(cfg_.T) + ")");

    auto trained = net::train_classifier(seqs, labels_of(images), cfg_.C,
                                         cfg_.backbone(derive_seed(cfg_.master_seed, "backbone")),
                                         cfg_.head(derive_seed(cfg_.master_seed, "heads")));
    ordered_json meta;
    std::set<std::string> models;
    for (const auto& im : images) models.insert(im.model_id);
    meta["T"] = cfg_.T;
    meta["C"] = cfg_.C;
    meta["training_checkpoints"] = std::vector<std::string>(models.begin(), models.end());
    meta["deploy_vs"] = env.pools.deploy_vs;
    meta["deploy_vaf"] = env.pools.deploy_vaf;
    meta["images"] = images.size();
    meta["backbone_reconstruction_l1"] = trained.reconstruction_l1;
    trained.classifier.meta_json = meta.dump();
    net::save_classifier(trained.classifier, dir / "classifier.arr");

    io::write_text(dir / "train_images.csv", images_csv(images));
    save_features(dir / "train_features.arr", trained.features, labels_of(images));
    std::vector<net::ScoreRecord> recs;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto r = net::score(trained.features[i], trained.classifier.heads);
        r.tile_id = images[i].tile_id;
        r.model_id = images[i].model_id;
        r.vs_checkpoint_id = env.pair.vs_id;
        r.vaf_checkpoint_id = env.pair.vaf_id;
        r.positive = images[i].positive;
        recs.push_back(std::move(r));
    }
    io::write_text(dir / "train_scores.csv", net::scores_csv(recs));
    io::CsvWriter bl({"epoch", "reconstruction_l1"});
    for (std::size_t e = 0; e < trained.pretrain_loss.size(); ++e)
        bl.row({std::to_string(e + 1), io::fmt_num(trained.pretrain_loss[e])});
    bl.save(dir / "backbone_loss.csv");
    char buf[160];
    std::snprintf(buf, sizeof buf, "backbone reconstruction L1 %.4f; %d heads on %zu sequences",
                  trained.reconstruction_l1, cfg_.C, images.size());
    note(buf);
}

void Pipeline::calibrate() {
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const auto val = synth::load_split(stage_dir(Stage::gen_data), synth::Split::val);
    const TileSet tiles(val);
    const auto clf = load_main_classifier(stage_dir(Stage::train_classifier));
    const auto images = val_image_list(cfg_, env.pools, val);
    std::vector<net::FeatureSeq> feats;
    const auto recs = score_images(images, tiles, env, clf, cfg_.T, &feats);
    const fs::path dir = stage_dir(Stage::calibrate);

    calib::CalibrationResult c;
    c.alpha = calib::calibrate_alpha(recs, cfg_.alpha_midpoint);
    c.alpha_midpoint = cfg_.alpha_midpoint;
    c.val_positive_min_score = calib::calibrate_alpha(recs, false);
    std::vector<double> scores;
    for (const auto& r : recs) scores.push_back(r.mean_score);
    const auto s = summarize(scores, labels_of(images), c.alpha);
    c.val_positives = s.confusion.tp + s.confusion.fn;
    c.val_negatives = s.confusion.tn + s.confusion.fp;
    c.val_sensitivity = s.confusion.sensitivity();
    c.val_specificity = s.confusion.specificity();

    // Model-level threshold from resampled validation-model means.
    std::vector<calib::StudyModel> models;
    for (const auto& e : env.pools.entries) {
        if (e.pool != "val") continue;
        calib::StudyModel m{e.id, is_positive_role(e.role), {}, {}};
        for (std::size_t i = 0; i < images.size(); ++i)
            if (images[i].model_id == e.id) {
                m.tile_ids.push_back(images[i].tile_id);
                m.scores.push_back(recs[i].mean_score);
            }
        (m.poor ? c.beta_poor_models : c.beta_good_models).push_back(e.id);
        models.push_back(std::move(m));
    }
    std::vector<double> g, p;
    calib::resampled_sbars(models, cfg_.beta_N, cfg_.beta_R, derive_seed(cfg_.master_seed, "beta"), g, p);
    c.beta = calib::calibrate_beta(g, p);
    c.beta_N = cfg_.beta_N;
    c.beta_R = cfg_.beta_R;
    c.master_seed = cfg_.master_seed;
    c.vs_checkpoint_id = env.pools.deploy_vs;
    c.vaf_checkpoint_id = env.pools.deploy_vaf;
    c.backbone_hash = clf.backbone_hash;

    io::write_text(dir / "calibration.json", calib::to_json(c));
    io::write_text(dir / "val_scores.csv", net::scores_csv(recs));
    io::write_text(dir / "val_images.csv", images_csv(images));
    save_features(dir / "val_features.arr", feats, labels_of(images));
    char buf[200];
    std::snprintf(buf, sizeof buf, "alpha %.6g (val sens %.3f spec %.3f); beta %.6g (mu_good %.4f mu_poor %.4f)",
                  c.alpha, c.val_sensitivity, c.val_specificity, c.beta->beta, c.beta->lda.mu_good,
                  c.beta->lda.mu_poor);
    note(buf);
}

namespace {

calib::CalibrationResult load_calibration(const fs::path& dir) {
    const fs::path p = dir / "calibration.json";
    if (!fs::exists(p)) throw DependencyError("missing artifact " + p.string());
    return calib::calibration_from_json(io::read_text(p));
}

ordered_json separation_json(const metrics::SeparationReport& r) {
    ordered_json j;
    j["metric"] = r.metric_name;
    j["abs_t"] = r.abs_t;
    j["kl_divergence"] = r.kl_divergence;
    j["kl_direction"] = "positive||negative";
    if (r.auc) j["auc"] = *r.auc;
    return j;
}

}  // namespace

void Pipeline::evaluate() {
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const auto test = synth::load_split(stage_dir(Stage::gen_data), synth::Split::test);
    const TileSet tiles(test);
    const auto clf = load_main_classifier(stage_dir(Stage::train_classifier));
    const auto cal = load_calibration(stage_dir(Stage::calibrate));
    const auto images = test_image_list(cfg_, env.pools, test);
    std::vector<net::FeatureSeq> feats;
    std::vector<Rendered> rendered;
    const auto recs = score_images(images, tiles, env, clf, cfg_.T, &feats, &rendered);
    const fs::path dir = stage_dir(Stage::evaluate);
    const auto mode = net::parse_ensemble_mode(cfg_.ensemble);

    io::CsvWriter table({"tile_id", "model_id", "mse", "pcc", "psnr_db", "aqua_score", "verdict", "label_true"});
    std::vector<double> mp, mn, cp, cn, pp, pn, sp, sn;
    std::vector<metrics::LabeledScore> ls;
    metrics::Confusion conf;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& gt = tiles.at(images[i].tile_id).pair.he;
        const double mse = metrics::mse(rendered[i].vs, gt);
        const double pcc = metrics::pcc(rendered[i].vs, gt);
        const double psnr = metrics::psnr(rendered[i].vs, gt);
        const bool pos = images[i].positive;
        const bool rej = net::classify(recs[i], cal.alpha, mode) == net::Verdict::reject;
        (pos ? conf.tp : conf.tn) += pos == rej;
        (pos ? conf.fn : conf.fp) += pos != rej;
        (pos ? mp : mn).push_back(mse);
        (pos ? cp : cn).push_back(pcc);
        (pos ? pp : pn).push_back(psnr);
        (pos ? sp : sn).push_back(recs[i].mean_score);
        table.row({images[i].tile_id, images[i].model_id, io::fmt_num(mse), io::fmt_num(pcc), io::fmt_num(psnr),
                   io::fmt_num(recs[i].mean_score), rej ? "reject" : "accept", pos ? "positive" : "negative"});
    }
    table.save(dir / "metric_table.csv");
    io::write_text(dir / "test_scores.csv", net::scores_csv(recs));
    io::write_text(dir / "test_images.csv", images_csv(images));
    save_features(dir / "test_features.arr", feats, labels_of(images));

    // Poor images have larger MSE but smaller PCC and PSNR; AUC is oriented so
    // that 1 means perfect ranking for every metric.
    auto negate = [](std::vector<double> v) {
        for (double& x : v) x = -x;
        return v;
    };
    std::vector<metrics::SeparationReport> seps{
        metrics::separation("aqua", sp, sn), metrics::separation("mse", mp, mn),
        metrics::separation("pcc", negate(cp), negate(cn)), metrics::separation("psnr", negate(pp), negate(pn))};
    // KL and |t| are computed on the raw values.
    seps[2].kl_divergence = metrics::kl_divergence(cp, cn);
    seps[3].kl_divergence = metrics::kl_divergence(pp, pn);
    io::CsvWriter sw({"metric", "abs_t", "kl_divergence", "auc", "kl_direction"});
    for (const auto& s : seps)
        sw.row({s.metric_name, io::fmt_num(s.abs_t), io::fmt_num(s.kl_divergence), io::fmt_num(*s.auc),
                "positive||negative"});
    sw.save(dir / "separation.csv");

    ordered_json j;
    j["alpha"] = cal.alpha;
    j["ensemble"] = cfg_.ensemble;
    j["images"] = images.size();
    j["confusion"] = confusion_json(conf);
    auto arr = ordered_json::array();
    for (const auto& s : seps) arr.push_back(separation_json(s));
    j["separation"] = arr;
    write_json(dir / "evaluation.json", j);
    char buf[200];
    std::snprintf(buf, sizeof buf, "test: accuracy %.4f sensitivity %.4f specificity %.4f at alpha %.6g",
                  conf.accuracy(), conf.sensitivity(), conf.specificity(), cal.alpha);
    note(buf);
    for (const auto& s : seps) {
        std::snprintf(buf, sizeof buf, "  %-5s |t| %8.3f  KL %8.3f  AUC %.4f", s.metric_name.c_str(), s.abs_t,
                      s.kl_divergence, *s.auc);
        note(buf);
    }
}

void Pipeline::maqua_study() {
    const auto cal = load_calibration(stage_dir(Stage::calibrate));
    const Table t(read_csv(stage_dir(Stage::evaluate) / "metric_table.csv"));
    std::map<std::string, calib::StudyModel> by_model;
    std::vector<std::string> order;
    for (const auto& r : t.rows) {
        const std::string& id = r[t.col("model_id")];
        auto [it, fresh] = by_model.try_emplace(id);
        if (fresh) {
            order.push_back(id);
            it->second.model_id = id;
            it->second.poor = r[t.col("label_true")] == "positive";
        }
        it->second.tile_ids.push_back(r[t.col("tile_id")]);
        it->second.scores.push_back(to_d(r[t.col("aqua_score")]));
    }
    std::vector<calib::StudyModel> models;
    for (const auto& id : order) models.push_back(by_model[id]);
    const auto rep = calib::maqua_study(models, cfg_.N_grid, cfg_.R, cal.beta->beta, cfg_.master_seed);
    const fs::path dir = stage_dir(Stage::maqua_study);
    io::write_text(dir / "study_rows.csv", calib::study_rows_csv(rep));
    io::write_text(dir / "study_resamples.csv", calib::study_resamples_csv(rep));
    io::write_text(dir / "study_summary.json", calib::study_summary_json(rep));
    for (const auto& s : rep.per_N) {
        char buf[120];
        std::snprintf(buf, sizeof buf, "N=%d: model accuracy %.4f, KL %.3f", s.N, s.accuracy, s.kl);
        note(buf);
    }
}

void Pipeline::external() {
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const auto clf = load_main_classifier(stage_dir(Stage::train_classifier));

    // Contamination guard: the classifier must never have seen an overfit model.
    const auto meta = nlohmann::json::parse(clf.meta_json);
    const auto rows = read_checkpoint_index(stage_dir(Stage::train_translators) / "checkpoints.csv");
    std::map<std::string, std::string> label;
    for (const auto& r : rows) label[r.id] = r.label;
    std::vector<std::string> bad;
    for (const auto& id : meta.at("training_checkpoints")) {
        const auto s = id.get<std::string>();
        if (label[s] == "poor_overfit") bad.push_back(s);
    }
    if (!bad.empty())
        throw ConfigError("external generalization aborted: the classifier was trained on " +
                          std::to_string(bad.size()) + " overfit checkpoint(s) (first: " + bad.front() +
                          "), so overfit models are not unseen; set classifier_include_overfit = false");

    const auto cal = load_calibration(stage_dir(Stage::calibrate));
    const auto test = synth::load_split(stage_dir(Stage::gen_data), synth::Split::test);
    const TileSet tiles(test);
    const auto images = external_image_list(cfg_, env.pools, test);
    const auto recs = score_images(images, tiles, env, clf, cfg_.T, nullptr);
    const auto mode = net::parse_ensemble_mode(cfg_.ensemble);
    const fs::path dir = stage_dir(Stage::external);
    io::write_text(dir / "external_scores.csv", net::scores_csv(recs));

    struct Agg {
        std::string role;
        double sum = 0;
        int n = 0, rejected = 0;
    };
    std::map<std::string, Agg> per_model;
    std::vector<std::string> order;
    std::map<std::string, std::pair<int, int>> img_by_role;  // rejected, total
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto [it, fresh] = per_model.try_emplace(images[i].model_id);
        if (fresh) order.push_back(images[i].model_id);
        it->second.role = images[i].role;
        it->second.sum += recs[i].mean_score;
        ++it->second.n;
        const bool rej = net::classify(recs[i], cal.alpha, mode) == net::Verdict::reject;
        it->second.rejected += rej;
        img_by_role[images[i].role].first += rej;
        ++img_by_role[images[i].role].second;
    }
    io::CsvWriter mw({"model_id", "role", "N", "sbar", "verdict", "correct", "image_rejection_rate"});
    std::map<std::string, std::pair<int, int>> model_by_role;  // correct, total
    int correct = 0;
    for (const auto& id : order) {
        const auto& a = per_model[id];
        const double sbar = a.sum / a.n;
        const bool reject = sbar >= cal.beta->beta;
        const bool ok = reject == is_positive_role(a.role);
        correct += ok;
        model_by_role[a.role].first += ok;
        ++model_by_role[a.role].second;
        mw.row({id, a.role, std::to_string(a.n), io::fmt_num(sbar), reject ? "reject_model" : "accept_model",
                ok ? "1" : "0", io::fmt_num(static_cast<double>(a.rejected) / a.n)});
    }
    mw.save(dir / "external_models.csv");

    ordered_json j;
    j["alpha"] = cal.alpha;
    j["beta"] = cal.beta->beta;
    j["images_per_model"] = cfg_.external_images_per_model;
    ordered_json img, mod;
    for (const auto& [role, v] : img_by_role)
        img[role] = {{"rejected", v.first}, {"total", v.second}, {"rate", static_cast<double>(v.first) / v.second}};
    for (const auto& [role, v] : model_by_role)
        mod[role] = {{"correct", v.first}, {"total", v.second}, {"accuracy", static_cast<double>(v.first) / v.second}};
    j["image_level"] = img;
    j["model_level"] = mod;
    j["model_accuracy"] = order.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
    write_json(dir / "external_summary.json", j);
    for (const auto& [role, v] : img_by_role) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s images rejected: %d/%d; models correct: %d/%d", role.c_str(), v.first,
                      v.second, model_by_role[role].first, model_by_role[role].second);
        note(buf);
    }
}

namespace {

struct AblationRun {
    double alpha = 0;
    metrics::Confusion conf;
    metrics::SeparationReport sep;
};

AblationRun evaluate_heads(const std::vector<net::VotingHead>& heads, const std::vector<net::LabeledFeatures>& val,
                           const std::vector<net::LabeledFeatures>& test, bool midpoint, net::EnsembleMode mode) {
    std::vector<net::ScoreRecord> vr;
    for (const auto& v : val) {
        auto r = net::score(v.features, heads);
        r.positive = v.positive;
        vr.push_back(std::move(r));
    }
    AblationRun a;
    a.alpha = calib::calibrate_alpha(vr, midpoint);
    std::vector<double> p, n;
    for (const auto& t : test) {
        const auto r = net::score(t.features, heads);
        const bool rej = net::classify(r, a.alpha, mode) == net::Verdict::reject;
        (t.positive ? a.conf.tp : a.conf.tn) += t.positive == rej;
        (t.positive ? a.conf.fn : a.conf.fp) += t.positive != rej;
        (t.positive ? p : n).push_back(r.mean_score);
    }
    a.sep = metrics::separation("aqua", p, n);
    return a;
}

std::vector<net::LabeledFeatures> features_of(const net::Backbone& b, const std::vector<cycle::CycleSeq>& seqs,
                                              const std::vector<bool>& labels) {
    std::vector<net::LabeledFeatures> out;
    for (std::size_t i = 0; i < seqs.size(); ++i) out.push_back({net::extract(b, seqs[i]), labels[i]});
    return out;
}

cycle::CycleSeq prefix(const cycle::CycleSeq& s, int T) {
    cycle::CycleSeq p = s;
    p.frames.resize(static_cast<std::size_t>(T));
    p.T = T;
    return p;
}

}  // namespace

void Pipeline::ablate_T() {
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const fs::path data = stage_dir(Stage::gen_data);
    const auto train = synth::load_split(data, synth::Split::train);
    const std::vector<synth::Tile> ctiles(train.begin() + cfg_.translator_train_tiles, train.end());
    const auto val = synth::load_split(data, synth::Split::val);
    const auto test = synth::load_split(data, synth::Split::test);
    const TileSet ttr(ctiles), tva(val), tte(test);
    const auto itr = train_image_list(cfg_, env.pools, ctiles);
    const auto iva = val_image_list(cfg_, env.pools, val);
    const auto ite = test_image_list(cfg_, env.pools, test);
    const int tmax = *std::max_element(cfg_.ablate_T_values.begin(), cfg_.ablate_T_values.end());

    // Longest sequences once; shorter T values are prefixes.
    auto cycle_all = [&](const std::vector<Image>& ims, const TileSet& ts) {
        std::vector<cycle::CycleSeq> v;
        for (const auto& im : ims) v.push_back(render(im, ts, env.store, env.pair, tmax).seq);
        return v;
    };
    const auto str = cycle_all(itr, ttr), sva = cycle_all(iva, tva), ste = cycle_all(ite, tte);
    note("cycled " + std::to_string(str.size() + sva.size() + ste.size()) + " images to T=" + std::to_string(tmax));

    const auto mode = net::parse_ensemble_mode(cfg_.ensemble);
    io::CsvWriter w({"T", "alpha", "accuracy", "sensitivity", "specificity", "abs_t", "kl_divergence", "auc"});
    ordered_json j = ordered_json::array();
    for (int T : cfg_.ablate_T_values) {
        auto trunc = [&](const std::vector<cycle::CycleSeq>& v) {
            std::vector<cycle::CycleSeq> o;
            for (const auto& s : v) o.push_back(prefix(s, T));
            return o;
        };
        const auto ttrain = trunc(str);
        auto trained = net::train_classifier(ttrain, labels_of(itr), cfg_.C,
                                             cfg_.backbone(derive_seed(cfg_.master_seed, "backbone")),
                                             cfg_.head(derive_seed(cfg_.master_seed, "heads")));
        const auto& b = trained.classifier.backbone;
        const auto fva = features_of(b, trunc(sva), labels_of(iva));
        const auto fte = features_of(b, trunc(ste), labels_of(ite));
        const auto a = evaluate_heads(trained.classifier.heads, fva, fte, cfg_.alpha_midpoint, mode);
        w.row({std::to_string(T), io::fmt_num(a.alpha), io::fmt_num(a.conf.accuracy()),
               io::fmt_num(a.conf.sensitivity()), io::fmt_num(a.conf.specificity()), io::fmt_num(a.sep.abs_t),
               io::fmt_num(a.sep.kl_divergence), io::fmt_num(*a.sep.auc)});
        j.push_back({{"T", T},
                     {"alpha", a.alpha},
                     {"confusion", confusion_json(a.conf)},
                     {"abs_t", a.sep.abs_t},
                     {"kl_divergence", a.sep.kl_divergence},
                     {"auc", *a.sep.auc}});
        char buf[160];
        std::snprintf(buf, sizeof buf, "T=%d: accuracy %.4f sensitivity %.4f KL %.3f |t| %.2f", T, a.conf.accuracy(),
                      a.conf.sensitivity(), a.sep.kl_divergence, a.sep.abs_t);
        note(buf);
    }
    const fs::path dir = stage_dir(Stage::ablate_T);
    w.save(dir / "ablate_T.csv");
    write_json(dir / "ablate_T.json", j);
}

void Pipeline::ablate_C() {
    const auto tr = load_features(stage_dir(Stage::train_classifier) / "train_features.arr");
    const auto va = load_features(stage_dir(Stage::calibrate) / "val_features.arr");
    const auto te = load_features(stage_dir(Stage::evaluate) / "test_features.arr");
    const auto mode = net::parse_ensemble_mode(cfg_.ensemble);
    io::CsvWriter w({"C", "seed", "alpha", "accuracy", "sensitivity", "specificity"});
    ordered_json summary = ordered_json::array();
    for (int C : cfg_.ablate_C_values) {
        double acc = 0, sens = 0, spec = 0;
        for (int s = 0; s < cfg_.ablate_C_seeds; ++s) {
            const auto heads =
                net::train_heads(tr, C, cfg_.head(derive_seed(cfg_.master_seed, "ablate-C", static_cast<std::uint64_t>(s))));
            const auto a = evaluate_heads(heads, va, te, cfg_.alpha_midpoint, mode);
            w.row({std::to_string(C), std::to_string(s), io::fmt_num(a.alpha), io::fmt_num(a.conf.accuracy()),
                   io::fmt_num(a.conf.sensitivity()), io::fmt_num(a.conf.specificity())});
            acc += a.conf.accuracy();
            sens += a.conf.sensitivity();
            spec += a.conf.specificity();
        }
        const double k = cfg_.ablate_C_seeds;
        summary.push_back({{"C", C},
                           {"seeds", cfg_.ablate_C_seeds},
                           {"mean_accuracy", acc / k},
                           {"mean_sensitivity", sens / k},
                           {"mean_specificity", spec / k}});
        char buf[160];
        std::snprintf(buf, sizeof buf, "C=%d: mean accuracy %.4f, mean sensitivity %.4f over %d seeds", C, acc / k,
                      sens / k, cfg_.ablate_C_seeds);
        note(buf);
    }
    const fs::path dir = stage_dir(Stage::ablate_C);
    w.save(dir / "ablate_C.csv");
    write_json(dir / "ablate_C.json", summary);
}

void Pipeline::hs_bench() {
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const fs::path data = stage_dir(Stage::gen_data);
    const auto train = synth::load_split(data, synth::Split::train);
    const auto val = synth::load_split(data, synth::Split::val);
    const auto test = synth::load_split(data, synth::Split::test);
    const std::vector<synth::Tile> htr(train.begin(), train.begin() + cfg_.hs_train_tiles);
    const std::vector<synth::Tile> hte(test.begin(), test.begin() + cfg_.hs_test_tiles);
    const auto modes = cfg_.corruption_modes();

    const auto btr = hs::build_hs_training_set(htr, modes, cfg_.hs_train_severities);
    const auto bva = hs::build_hs_benchmark(val, modes, cfg_.hs_train_severities);
    const auto bte = hs::build_hs_benchmark(hte, modes, cfg_.hs_eval_severities);
    auto hc = hs::train_hs_classifier(btr, bva, env.pair, cfg_.T, cfg_.C,
                                      cfg_.backbone(derive_seed(cfg_.master_seed, "hs-backbone")),
                                      cfg_.head(derive_seed(cfg_.master_seed, "hs-heads")));
    note("HS classifier alpha " + io::fmt_num(hc.alpha));
    const auto r = hs::run_hs_assessment(bte, env.pair, &hc.classifier, cfg_.T, hc.alpha);
    const fs::path dir = stage_dir(Stage::hs_bench);
    io::write_text(dir / "hs_benchmark.json", bte.to_json());
    io::write_text(dir / "hs_items.csv", hs::hs_items_csv(bte, r, hc.alpha));
    io::write_text(dir / "hs_rates.csv", hs::hs_rates_csv(r));
    hc.classifier.meta_json = ordered_json{{"T", cfg_.T}, {"C", cfg_.C}, {"alpha", hc.alpha}}.dump();
    net::save_classifier(hc.classifier, dir / "hs_classifier.arr");

    io::CsvWriter sw({"metric", "auc", "abs_t", "kl_divergence", "lower_is_positive", "best_accuracy"});
    sw.row({"aqua", io::fmt_num(*r.aqua.auc), io::fmt_num(r.aqua.abs_t), io::fmt_num(r.aqua.kl_divergence), "false",
            io::fmt_num(r.aqua.confusion->accuracy())});
    for (const auto* b : {&r.nuclei_count, &r.nuclei_area})
        sw.row({b->report.metric_name, io::fmt_num(*b->report.auc), io::fmt_num(b->report.abs_t),
                io::fmt_num(b->report.kl_divergence), b->lower_is_positive ? "true" : "false",
                io::fmt_num(b->best_accuracy)});
    sw.save(dir / "hs_separation.csv");

    ordered_json j;
    j["alpha"] = hc.alpha;
    j["auc_aqua"] = *r.aqua.auc;
    j["auc_nuclei_count"] = *r.nuclei_count.report.auc;
    j["auc_nuclei_area"] = *r.nuclei_area.report.auc;
    j["confusion"] = confusion_json(*r.aqua.confusion);
    j["clean_rejection_rate"] = r.clean_rejection_rate;
    j["severity_monotone"] = hs::severity_monotone(r);
    j["positives"] = bte.positives();
    j["negatives"] = bte.items.size() - bte.positives();
    write_json(dir / "hs_summary.json", j);
    char buf[200];
    std::snprintf(buf, sizeof buf, "AUC aqua %.4f, nuclei count %.4f, nuclei area %.4f; severity monotone %s",
                  *r.aqua.auc, *r.nuclei_count.report.auc, *r.nuclei_area.report.auc,
                  hs::severity_monotone(r) ? "yes" : "no");
    note(buf);
}

void Pipeline::report() {
    const fs::path dir = stage_dir(Stage::report);
    const auto eval = read_json(stage_dir(Stage::evaluate) / "evaluation.json");
    const auto study = read_json(stage_dir(Stage::maqua_study) / "study_summary.json");
    const auto ext = read_json(stage_dir(Stage::external) / "external_summary.json");
    const auto abT = read_json(stage_dir(Stage::ablate_T) / "ablate_T.json");
    const auto abC = read_json(stage_dir(Stage::ablate_C) / "ablate_C.json");
    const auto hsj = read_json(stage_dir(Stage::hs_bench) / "hs_summary.json");
    const auto cal = read_json(stage_dir(Stage::calibrate) / "calibration.json");

    ordered_json s;
    s["config_hash"] = hex(hash_);
    s["calibration"] = {{"alpha", cal.at("alpha")}, {"beta", cal.at("beta")}};
    s["benchmark"] = eval;
    s["maqua"] = study;
    s["external"] = ext;
    s["ablate_T"] = abT;
    s["ablate_C"] = abC;
    s["hs"] = hsj;
    write_json(dir / "summary.json", s);

    // Markdown digest.
    std::string md = "# Experiment report\n\nConfig hash `" + hex(hash_) + "`.\n\n";
    auto f = [](double v) {
        char b[32];
        std::snprintf(b, sizeof b, "%.4f", v);
        return std::string(b);
    };
    const auto& c = eval.at("confusion");
    md += "## Image-level benchmark\n\nalpha = " + f(eval.at("alpha").get<double>()) +
          ", accuracy " + f(c.at("accuracy").get<double>()) + ", sensitivity " + f(c.at("sensitivity").get<double>()) +
          ", specificity " + f(c.at("specificity").get<double>()) + "\n\n| metric | abs t | KL | AUC |\n|---|---|---|---|\n";
    for (const auto& r : eval.at("separation"))
        md += "| " + r.at("metric").get<std::string>() + " | " + f(r.at("abs_t").get<double>()) + " | " +
              f(r.at("kl_divergence").get<double>()) + " | " + f(r.at("auc").get<double>()) + " |\n";
    md += "\n## Model-level study (beta = " + f(study.at("beta").get<double>()) + ")\n\n| N | accuracy | KL |\n|---|---|---|\n";
    for (const auto& r : study.at("per_N"))
        md += "| " + std::to_string(r.at("N").get<int>()) + " | " + f(r.at("accuracy").get<double>()) + " | " +
              f(r.at("kl").get<double>()) + " |\n";
    md += "\n## External generalization\n\nmodel accuracy " + f(ext.at("model_accuracy").get<double>()) + "\n\n";
    for (const auto& [role, v] : ext.at("image_level").items())
        md += "- " + role + " images rejected: " + f(v.at("rate").get<double>()) + "\n";
    md += "\n## Ablations\n\n| T | accuracy | sensitivity | KL |\n|---|---|---|---|\n";
    for (const auto& r : abT)
        md += "| " + std::to_string(r.at("T").get<int>()) + " | " + f(r.at("confusion").at("accuracy").get<double>()) +
              " | " + f(r.at("confusion").at("sensitivity").get<double>()) + " | " +
              f(r.at("kl_divergence").get<double>()) + " |\n";
    md += "\n| C | mean accuracy | mean sensitivity |\n|---|---|---|\n";
    for (const auto& r : abC)
        md += "| " + std::to_string(r.at("C").get<int>()) + " | " + f(r.at("mean_accuracy").get<double>()) + " | " +
              f(r.at("mean_sensitivity").get<double>()) + " |\n";
    md += "\n## Stain checks\n\nAUC aqua " + f(hsj.at("auc_aqua").get<double>()) + ", nuclei count " +
          f(hsj.at("auc_nuclei_count").get<double>()) + ", nuclei area " + f(hsj.at("auc_nuclei_area").get<double>()) +
          "; severity monotone: " + (hsj.at("severity_monotone").get<bool>() ? "yes" : "no") + "\n";
    io::write_text(dir / "summary.md", md);

    // Plots.
    {
        const Table t(read_csv(stage_dir(Stage::evaluate) / "metric_table.csv"));
        plot::Series neg{"negative", "#1f77b4", {}, {}}, pos{"positive", "#d62728", {}, {}};
        std::vector<double> sn, sp;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double v = to_d(t.rows[i][t.col("aqua_score")]);
            auto& se = t.rows[i][t.col("label_true")] == "positive" ? pos : neg;
            se.x.push_back(static_cast<double>(i));
            se.y.push_back(v);
        }
        io::write_text(dir / "test_scores.svg",
                       plot::scatter("Test image scores", "confidence score", {neg, pos}, eval.at("alpha").get<double>(),
                                     "alpha"));
    }
    {
        std::vector<std::string> cats;
        plot::Series t{"|t|", "#2ca02c", {}, {}}, kl{"KL", "#9467bd", {}, {}};
        for (const auto& r : eval.at("separation")) {
            cats.push_back(r.at("metric").get<std::string>());
            t.y.push_back(r.at("abs_t").get<double>());
            kl.y.push_back(r.at("kl_divergence").get<double>());
        }
        io::write_text(dir / "separation.svg", plot::bars("Positive/negative separation", cats, {t, kl}));
    }
    {
        const Table t(read_csv(stage_dir(Stage::maqua_study) / "study_resamples.csv"));
        const Table rows(read_csv(stage_dir(Stage::maqua_study) / "study_rows.csv"));
        std::set<std::string> poor;
        for (const auto& r : rows.rows)
            if (r[rows.col("label")] == "poor") poor.insert(r[rows.col("model_id")]);
        std::map<int, std::pair<plot::Series, plot::Series>> h;
        for (const auto& r : t.rows) {
            const int N = std::stoi(r[t.col("N")]);
            auto& pr = h[N];
            pr.first.name = "good, N=" + std::to_string(N);
            pr.first.color = "#1f77b4";
            pr.second.name = "poor, N=" + std::to_string(N);
            pr.second.color = "#d62728";
            (poor.count(r[t.col("model_id")]) ? pr.second : pr.first).y.push_back(to_d(r[t.col("sbar")]));
        }
        for (auto& [N, pr] : h)
            io::write_text(dir / ("sbar_hist_N" + std::to_string(N) + ".svg"),
                           plot::histograms("Model mean score, N=" + std::to_string(N), {pr.first, pr.second}, 20,
                                            study.at("beta").get<double>()));
    }
    {
        const Table t(read_csv(stage_dir(Stage::hs_bench) / "hs_rates.csv"));
        std::map<std::string, plot::Series> by_mode;
        const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
        for (const auto& r : t.rows) {
            auto& se = by_mode[r[t.col("mode")]];
            se.name = r[t.col("mode")];
            se.color = colors[(by_mode.size() - 1) % 4];
            se.x.push_back(to_d(r[t.col("severity")]));
            se.y.push_back(to_d(r[t.col("rate")]));
        }
        std::vector<plot::Series> v;
        for (auto& [k, se] : by_mode) v.push_back(se);
        io::write_text(dir / "hs_rejection.svg", plot::lines("Stain artifact rejection", "severity", "rejection rate", v));
    }
    note("wrote summary.json, summary.md and plots");
}

// ---- single-item commands -----------------------------------------------------------------

std::string Pipeline::assess_image(const std::string& tile_id, const std::string& model_id, const fs::path& png) {
    check_dependencies(Stage::evaluate);
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const auto clf = load_main_classifier(stage_dir(Stage::train_classifier));
    const auto cal = load_calibration(stage_dir(Stage::calibrate));
    synth::Patch he;
    std::string model = model_id.empty() ? env.pools.deploy_vs : model_id;
    std::string tile = tile_id;
    if (!png.empty()) {
        he = synth::Patch{io::read_png(png), synth::Domain::HE, png.filename().string(), 0};
        he.validate();
        model = "external-image";
        tile = he.tile_id;
    } else {
        const fs::path data = stage_dir(Stage::gen_data);
        std::optional<synth::Tile> found;
        for (auto split : {synth::Split::test, synth::Split::val, synth::Split::train}) {
            for (auto& t : synth::load_split(data, split))
                if (t.id == tile_id) found = std::move(t);
            if (found) break;
        }
        if (!found) throw ConfigError("unknown tile id '" + tile_id + "'");
        he = translate::apply(env.store.get(model), found->pair.af);
        he.tile_id = tile_id;
    }
    const auto rec = net::score(cycle::run_cycles(he, env.pair, cfg_.T), clf.backbone, clf.heads);
    const auto v = net::classify(rec, cal.alpha, net::parse_ensemble_mode(cfg_.ensemble));
    return "tile=" + tile + " model=" + model + " score=" + io::fmt_num(rec.mean_score) +
           " alpha=" + io::fmt_num(cal.alpha) + " verdict=" + std::string(net::to_string(v));
}

calib::ModelVerdict Pipeline::assess_model(const std::string& model_id, int N) {
    check_dependencies(Stage::evaluate);
    Env env(stage_dir(Stage::train_translators), stage_dir(Stage::pool_checkpoints));
    const auto clf = load_main_classifier(stage_dir(Stage::train_classifier));
    const auto cal = load_calibration(stage_dir(Stage::calibrate));
    const auto test = synth::load_split(stage_dir(Stage::gen_data), synth::Split::test);
    std::vector<std::string> ids;
    for (const auto& t : test) ids.push_back(t.id);
    const Checkpoint& model = env.store.get(model_id);
    return calib::assess_model(model_id, ids, N, cal.beta->beta, calib::sample_seed(cfg_.master_seed, model_id, 0),
                               [&](std::size_t i) {
                                   auto he = translate::apply(model, test[i].pair.af);
                                   he.tile_id = test[i].id;
                                   return net::score(cycle::run_cycles(he, env.pair, cfg_.T), clf.backbone, clf.heads);
                               });
}

}  // namespace aqua::harness
