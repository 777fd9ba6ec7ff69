// SPDX-License-Identifier: Apache-2.0
#include "aqua/hschecks.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "aqua/io/text.hpp"

namespace aqua::hs {

using synth::Corruption;

std::size_t HsBenchmark::positives() const noexcept {
    std::size_t n = 0;
    for (const auto& it : items) n += it.positive();
    return n;
}

std::string HsBenchmark::to_json() const {
    nlohmann::ordered_json j;
    j["clean_tile_ids"] = clean_ids;
    auto m = nlohmann::ordered_json::array();
    for (auto c : modes) m.push_back(std::string(synth::to_string(c)));
    j["modes"] = m;
    j["severities"] = severities;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& it : items) {
        nlohmann::ordered_json e;
        e["id"] = it.id;
        e["source_tile_id"] = it.source_tile_id;
        e["mode"] = it.mode ? std::string(synth::to_string(*it.mode)) : "none";
        e["severity"] = it.severity;
        arr.push_back(e);
    }
    j["items"] = arr;
    return j.dump(2) + "\n";
}

std::string corrupted_id(const std::string& tile_id, Corruption mode, double severity) {
    return tile_id + "~" + std::string(synth::to_string(mode)) + "@" + io::fmt_num(severity);
}

namespace {

HsItem clean_item(const synth::Tile& t) { return HsItem{t.id, t.id, std::nullopt, 0.0, t.pair.he}; }

HsItem corrupted_item(const synth::Tile& t, Corruption mode, double severity) {
    synth::Patch p = synth::corrupt_hs(t.pair.he, mode, severity);
    const std::string id = corrupted_id(t.id, mode, severity);
    p.tile_id = id;
    return HsItem{id, t.id, mode, severity, std::move(p)};
}

void check_lists(const std::vector<synth::Tile>& clean, const std::vector<Corruption>& modes,
                 const std::vector<double>& severities) {
    if (clean.empty()) throw std::invalid_argument("hs benchmark: no clean tiles");
    if (modes.empty()) throw std::invalid_argument("hs benchmark: no corruption modes");
    if (severities.empty()) throw std::invalid_argument("hs benchmark: no severities, so no positives");
}

}  // namespace

HsBenchmark build_hs_benchmark(const std::vector<synth::Tile>& clean, const std::vector<Corruption>& modes,
                               const std::vector<double>& severities) {
    check_lists(clean, modes, severities);
    HsBenchmark b;
    b.modes = modes;
    b.severities = severities;
    for (const auto& t : clean) {
        b.clean_ids.push_back(t.id);
        b.items.push_back(clean_item(t));
    }
    for (const auto& t : clean)
        for (auto m : modes)
            for (double s : severities) b.items.push_back(corrupted_item(t, m, s));
    return b;
}

HsBenchmark build_hs_training_set(const std::vector<synth::Tile>& clean, const std::vector<Corruption>& modes,
                                  const std::vector<double>& severities) {
    check_lists(clean, modes, severities);
    HsBenchmark b;
    b.modes = modes;
    b.severities = severities;
    for (const auto& t : clean) {
        b.clean_ids.push_back(t.id);
        b.items.push_back(clean_item(t));
    }
    const std::size_t combos = modes.size() * severities.size();
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const std::size_t k = i % combos;
        b.items.push_back(corrupted_item(clean[i], modes[k / severities.size()], severities[k % severities.size()]));
    }
    return b;
}

namespace {

std::vector<cycle::CycleSeq> cycle_all(const HsBenchmark& b, const cycle::CyclePair& pair, int T) {
    std::vector<cycle::CycleSeq> out;
    out.reserve(b.items.size());
    for (const auto& it : b.items) out.push_back(cycle::run_cycles(it.he, pair, T));
    return out;
}

BaselineResult baseline(std::string name, const std::vector<double>& pos, const std::vector<double>& neg) {
    BaselineResult r;
    const double a = metrics::auc(pos, neg);
    r.lower_is_positive = a < 0.5;
    std::vector<double> p = pos, n = neg;
    if (r.lower_is_positive) {
        for (double& v : p) v = -v;
        for (double& v : n) v = -v;
    }
    r.report = metrics::separation(std::move(name), p, n);
    // Best cut among the observed values ("score >= cut" is positive).
    std::vector<double> cuts = p;
    cuts.insert(cuts.end(), n.begin(), n.end());
    std::sort(cuts.begin(), cuts.end());
    const double total = static_cast<double>(p.size() + n.size());
    r.best_accuracy = -1;
    for (double c : cuts) {
        std::size_t ok = 0;
        for (double v : p) ok += v >= c;
        for (double v : n) ok += v < c;
        if (ok / total > r.best_accuracy) {
            r.best_accuracy = ok / total;
            r.best_threshold = r.lower_is_positive ? -c : c;
        }
    }
    return r;
}

}  // namespace

HsClassifier train_hs_classifier(const HsBenchmark& train, const HsBenchmark& val, const cycle::CyclePair& pair, int T,
                                 int C, const net::BackboneConfig& bc, const net::HeadConfig& hc) {
    const auto seqs = cycle_all(train, pair, T);
    std::vector<bool> labels;
    for (const auto& it : train.items) labels.push_back(it.positive());
    auto trained = net::train_classifier(seqs, labels, C, bc, hc);
    HsClassifier out;
    out.classifier = std::move(trained.classifier);
    out.T = T;
    double alpha = 1.0;
    bool any = false;
    for (const auto& it : val.items) {
        if (!it.positive()) continue;
        const auto r = net::score(cycle::run_cycles(it.he, pair, T), out.classifier.backbone, out.classifier.heads);
        alpha = any ? std::min(alpha, r.mean_score) : r.mean_score;
        any = true;
    }
    if (!any) throw std::invalid_argument("train_hs_classifier: validation set has no positives");
    out.alpha = alpha;
    return out;
}

HsReport run_hs_assessment(const HsBenchmark& bench, const cycle::CyclePair& pair, const net::Classifier* clf, int T,
                           double alpha) {
    if (clf == nullptr || clf->heads.empty()) throw std::invalid_argument("run_hs_assessment: missing classifier");
    HsReport r;
    std::vector<double> sp, sn, cp, cn, ap, an;
    std::vector<metrics::LabeledScore> labeled;
    std::map<std::pair<int, double>, HsGroupRate> groups;
    int clean = 0, clean_rej = 0;
    for (const auto& it : bench.items) {
        auto rec = net::score(cycle::run_cycles(it.he, pair, T), clf->backbone, clf->heads);
        rec.tile_id = it.id;
        rec.model_id = "hs";
        rec.positive = it.positive();
        const auto nuc = metrics::count_nuclei(it.he);
        const bool rej = net::classify(rec, alpha) == net::Verdict::reject;
        (it.positive() ? sp : sn).push_back(rec.mean_score);
        (it.positive() ? cp : cn).push_back(nuc.count_per_unit_area);
        (it.positive() ? ap : an).push_back(nuc.mean_area_px);
        labeled.push_back({rec.mean_score, it.positive()});
        if (it.mode) {
            auto& g = groups[{static_cast<int>(*it.mode), it.severity}];
            g.mode = *it.mode;
            g.severity = it.severity;
            ++g.n;
            g.rejected += rej;
        } else {
            ++clean;
            clean_rej += rej;
        }
        r.records.push_back(std::move(rec));
        r.nuclei.push_back(nuc);
    }
    if (sp.empty() || sn.empty()) throw std::invalid_argument("run_hs_assessment: benchmark needs both classes");
    r.aqua = metrics::separation("aqua", sp, sn);
    r.aqua.threshold = alpha;
    r.aqua.confusion = metrics::confusion(labeled, alpha);
    r.nuclei_count = baseline("nuclei_count", cp, cn);
    r.nuclei_area = baseline("nuclei_area", ap, an);
    for (auto& [k, g] : groups) r.rates.push_back(g);
    r.clean_rejection_rate = clean ? static_cast<double>(clean_rej) / clean : 0.0;
    return r;
}

std::string hs_items_csv(const HsBenchmark& bench, const HsReport& r, double alpha) {
    io::CsvWriter w({"item_id", "source_tile_id", "mode", "severity", "label_true", "score", "verdict",
                     "nuclei_count_norm", "nuclei_mean_area"});
    for (std::size_t i = 0; i < bench.items.size(); ++i) {
        const auto& it = bench.items[i];
        const auto& rec = r.records.at(i);
        w.row({it.id, it.source_tile_id, it.mode ? std::string(synth::to_string(*it.mode)) : "none",
               io::fmt_num(it.severity), it.positive() ? "positive" : "negative", io::fmt_num(rec.mean_score),
               std::string(net::to_string(net::classify(rec, alpha))), io::fmt_num(r.nuclei[i].count_per_unit_area),
               io::fmt_num(r.nuclei[i].mean_area_px)});
    }
    return w.str();
}

std::string hs_rates_csv(const HsReport& r) {
    io::CsvWriter w({"mode", "severity", "n", "rejected", "rate"});
    for (const auto& g : r.rates)
        w.row({std::string(synth::to_string(g.mode)), io::fmt_num(g.severity), std::to_string(g.n),
               std::to_string(g.rejected), io::fmt_num(g.rate())});
    return w.str();
}

bool severity_monotone(const HsReport& r) {
    // rates are ordered by (mode, severity)
    for (std::size_t i = 1; i < r.rates.size(); ++i)
        if (r.rates[i].mode == r.rates[i - 1].mode && r.rates[i].rate() < r.rates[i - 1].rate()) return false;
    return true;
}

}  // namespace aqua::hs
