// SPDX-License-Identifier: Apache-2.0
#include "aqua/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "aqua/core/rng.hpp"
#include "aqua/io/array_file.hpp"
#include "aqua/io/png.hpp"
#include "aqua/io/text.hpp"

namespace aqua::synth {

int channels_of(Domain d) noexcept { return d == Domain::AF ? 1 : 3; }

std::string_view to_string(Domain d) noexcept { return d == Domain::AF ? "AF" : "HE"; }

void Patch::validate() const {
    if (pixels.channels() != channels_of(domain))
        throw std::invalid_argument("patch " + tile_id + ": channel count does not match domain");
    for (float v : pixels.storage())
        if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("patch " + tile_id + ": value outside [0,1]");
}

void TissueSpec::validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (nuclei_count < 0) throw std::invalid_argument("TissueSpec: nuclei_count < 0");
    if (!finite(radius_min) || !finite(radius_max) || radius_min <= 0 || radius_min > radius_max)
        throw std::invalid_argument("TissueSpec: bad radius range");
    if (!finite(background_texture_scale) || background_texture_scale <= 0)
        throw std::invalid_argument("TissueSpec: background_texture_scale must be positive");
    if (!finite(cytoplasm_density) || cytoplasm_density < 0 || cytoplasm_density > 1)
        throw std::invalid_argument("TissueSpec: cytoplasm_density outside [0,1]");
}

TissueGeometry generate_geometry(const TissueSpec& spec, int tile_size) {
    spec.validate();
    if (tile_size < 8 || tile_size % 4) throw std::invalid_argument("tile size must be a multiple of 4, >= 8");
    Rng rng(spec.rng_seed);
    TissueGeometry g;
    g.af_gain = rng.uniform(0.8, 1.2);

    // Cytoplasm: four low-frequency plane waves with random phase and direction.
    struct Wave { double kx, ky, phase, amp; };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i) {
        const double cycles = rng.uniform(0.6, 2.0) / spec.background_texture_scale;
        const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double k = 2.0 * std::numbers::pi * cycles / tile_size;
        waves.push_back({k * std::cos(dir), k * std::sin(dir), rng.uniform(0.0, 2.0 * std::numbers::pi),
                         rng.uniform(0.15, 0.3)});
    }
    g.cytoplasm = Tensor(1, tile_size, tile_size);
    for (int y = 0; y < tile_size; ++y)
        for (int x = 0; x < tile_size; ++x) {
            double v = 0.55;
            for (const auto& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
            g.cytoplasm.at(0, y, x) = static_cast<float>(spec.cytoplasm_density * std::clamp(v, 0.0, 1.0));
        }

    // Nuclei: rejection sampling keeps them separated so each one is a distinct blob.
    for (int i = 0; i < spec.nuclei_count; ++i) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            Nucleus n;
            n.rx = rng.uniform(spec.radius_min, spec.radius_max);
            n.ry = rng.uniform(spec.radius_min, spec.radius_max);
            n.theta = rng.uniform(0.0, std::numbers::pi);
            const double margin = std::max(n.rx, n.ry) + 1.0;
            n.cx = rng.uniform(margin, tile_size - margin);
            n.cy = rng.uniform(margin, tile_size - margin);
            bool ok = true;
            for (const auto& o : g.nuclei) {
                const double d = std::hypot(n.cx - o.cx, n.cy - o.cy);
                if (d < 1.5 * (std::max(n.rx, n.ry) + std::max(o.rx, o.ry)) + 1.0) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                g.nuclei.push_back(n);
                break;
            }
        }
    }

    // Gaussian-profile ellipses: 0.5 at the nominal boundary.
    g.nuclear = Tensor(1, tile_size, tile_size);
    for (const auto& n : g.nuclei) {
        const double c = std::cos(n.theta), s = std::sin(n.theta);
        const int r = static_cast<int>(std::ceil(3.0 * std::max(n.rx, n.ry)));
        const int x0 = std::max(0, static_cast<int>(n.cx) - r), x1 = std::min(tile_size - 1, static_cast<int>(n.cx) + r);
        const int y0 = std::max(0, static_cast<int>(n.cy) - r), y1 = std::min(tile_size - 1, static_cast<int>(n.cy) + r);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - n.cx, dy = y + 0.5 - n.cy;
                const double u = (c * dx + s * dy) / n.rx, v = (-s * dx + c * dy) / n.ry;
                const float val = static_cast<float>(std::exp(-std::numbers::ln2 * (u * u + v * v)));
                float& dst = g.nuclear.at(0, y, x);
                dst = std::max(dst, val);
            }
    }
    return g;
}

Tensor render_af(const TissueGeometry& g) {
    Tensor af(1, g.nuclear.height(), g.nuclear.width());
    const float gain = static_cast<float>(g.af_gain);
    for (std::size_t i = 0; i < af.size(); ++i) {
        const float v = gain * (0.08f + 0.22f * g.cytoplasm.storage()[i] + 0.55f * g.nuclear.storage()[i]);
        af.storage()[i] = std::clamp(v, 0.0f, 1.0f);
    }
    return af;
}

Tensor render_he(const TissueGeometry& g) {
    const int h = g.nuclear.height(), w = g.nuclear.width();
    Tensor he(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float c = g.cytoplasm.at(0, y, x);
            const float n = g.nuclear.at(0, y, x);
            // Denser nuclei render slightly darker.
            const float shade = 1.0f - 0.15f * n;
            for (int ch = 0; ch < 3; ++ch) {
                const float base = StainPalette::background[ch] * (1.0f - c) + StainPalette::cytoplasm[ch] * c;
                const float v = base * (1.0f - n) + StainPalette::nucleus[ch] * shade * n;
                he.at(ch, y, x) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    return he;
}

PatchPair generate_pair(const TissueSpec& spec, int tile_size, std::string tile_id) {
    PatchPair p;
    p.geometry = generate_geometry(spec, tile_size);
    p.af = Patch{render_af(p.geometry), Domain::AF, tile_id, spec.rng_seed};
    p.he = Patch{render_he(p.geometry), Domain::HE, std::move(tile_id), spec.rng_seed};
    return p;
}

// ---- corruption ---------------------------------------------------------------

std::string_view to_string(Corruption c) noexcept {
    switch (c) {
        case Corruption::blur: return "blur";
        case Corruption::contrast_fade: return "contrast_fade";
        case Corruption::stain_washout: return "stain_washout";
    }
    return "?";
}

Corruption parse_corruption(std::string_view s) {
    if (s == "blur") return Corruption::blur;
    if (s == "contrast_fade") return Corruption::contrast_fade;
    if (s == "stain_washout") return Corruption::stain_washout;
    throw std::invalid_argument("unknown corruption mode: " + std::string(s));
}

namespace {

constexpr double kMaxBlurSigma = 3.0;
constexpr double kMaxContrastLoss = 0.8;
constexpr double kMaxWashout = 0.85;

Tensor gaussian_blur(const Tensor& in, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0;
    for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= sum;
    const int h = in.height(), w = in.width();
    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
    Tensor tmp(in.channels(), h, w), out(in.channels(), h, w);
    for (int c = 0; c < in.channels(); ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -r; i <= r; ++i) acc += k[i + r] * in.at(c, y, clampi(x + i, w));
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(c, clampi(y + i, h), x);
                out.at(c, y, x) = static_cast<float>(acc);
            }
    }
    return out;
}

}  // namespace

Patch corrupt_hs(const Patch& p, Corruption mode, double severity) {
    if (!(severity > 0.0 && severity <= 1.0)) throw std::invalid_argument("corrupt_hs: severity must be in (0,1]");
    if (p.domain != Domain::HE) throw std::invalid_argument("corrupt_hs: expects an HE patch");
    Patch out = p;
    auto& px = out.pixels;
    switch (mode) {
        case Corruption::blur: {
            const double sigma = kMaxBlurSigma * severity;
            if (sigma > 1e-3) px = gaussian_blur(p.pixels, sigma);
            break;
        }
        case Corruption::contrast_fade: {
            const double keep = 1.0 - kMaxContrastLoss * severity;
            for (int c = 0; c < px.channels(); ++c) {
                double mean = 0;
                const float* src = p.pixels.channel(c);
                for (std::size_t i = 0; i < px.plane(); ++i) mean += src[i];
                mean /= static_cast<double>(px.plane());
                float* dst = px.channel(c);
                for (std::size_t i = 0; i < px.plane(); ++i)
                    dst[i] = static_cast<float>(mean + keep * (src[i] - mean));
            }
            break;
        }
        case Corruption::stain_washout: {
            const double a = kMaxWashout * severity;
            for (int y = 0; y < px.height(); ++y)
                for (int x = 0; x < px.width(); ++x) {
                    const double gray = (p.pixels.at(0, y, x) + p.pixels.at(1, y, x) + p.pixels.at(2, y, x)) / 3.0;
                    for (int c = 0; c < 3; ++c) {
                        const double v = p.pixels.at(c, y, x);
                        px.at(c, y, x) = static_cast<float>(v + a * (gray - v));
                    }
                }
            break;
        }
    }
    for (float& v : px.storage()) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

// ---- datasets ------------------------------------------------------------------

std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + std::string(s));
}

std::string DatasetManifest::to_json() const {
    nlohmann::ordered_json j;
    j["generator_version"] = generator_version;
    j["master_seed"] = master_seed;
    j["tile_size"] = tile_size;
    nlohmann::ordered_json splits = nlohmann::ordered_json::array();
    for (const auto& [split, ids] : tile_ids) {
        nlohmann::ordered_json s;
        s["split"] = std::string(to_string(split));
        s["tile_ids"] = ids;
        splits.push_back(s);
    }
    j["splits"] = splits;
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    m.generator_version = j.at("generator_version").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.tile_size = j.at("tile_size").get<int>();
    for (const auto& s : j.at("splits"))
        m.tile_ids[parse_split(s.at("split").get<std::string>())] = s.at("tile_ids").get<std::vector<std::string>>();
    return m;
}

TissueSpec tile_spec(const DatasetConfig& cfg, std::string_view tile_id) {
    const std::uint64_t seed = derive_seed(cfg.master_seed, tile_id);
    Rng rng(derive_seed(seed, "spec"));
    TissueSpec s;
    s.nuclei_count = cfg.nuclei_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.nuclei_max - cfg.nuclei_min + 1)));
    s.radius_min = cfg.radius_min;
    s.radius_max = cfg.radius_max;
    s.background_texture_scale = rng.uniform(0.6, 1.6);
    s.cytoplasm_density = rng.uniform(0.45, 0.9);
    s.rng_seed = seed;
    return s;
}

DatasetManifest make_manifest(const DatasetConfig& cfg) {
    if (cfg.train < 0 || cfg.val < 0 || cfg.test < 0) throw std::invalid_argument("negative split size");
    if (cfg.nuclei_min < 0 || cfg.nuclei_min > cfg.nuclei_max) throw std::invalid_argument("bad nuclei range");
    DatasetManifest m;
    m.master_seed = cfg.master_seed;
    m.tile_size = cfg.tile_size;
    auto fill = [&](Split s, int n) {
        auto& ids = m.tile_ids[s];
        for (int i = 0; i < n; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s-%05d", std::string(to_string(s)).c_str(), i);
            ids.emplace_back(buf);
        }
    };
    fill(Split::train, cfg.train);
    fill(Split::val, cfg.val);
    fill(Split::test, cfg.test);
    return m;
}

Tile make_tile(const DatasetConfig& cfg, std::string_view tile_id) {
    return Tile{std::string(tile_id), generate_pair(tile_spec(cfg, tile_id), cfg.tile_size, std::string(tile_id))};
}

std::vector<Tile> make_split(const DatasetConfig& cfg, const DatasetManifest& m, Split split) {
    std::vector<Tile> out;
    const auto it = m.tile_ids.find(split);
    if (it == m.tile_ids.end()) return out;
    for (const auto& id : it->second) out.push_back(make_tile(cfg, id));
    return out;
}

namespace {

std::vector<float> nuclei_array(const std::vector<Nucleus>& ns) {
    std::vector<float> v;
    for (const auto& n : ns)
        for (double x : {n.cx, n.cy, n.rx, n.ry, n.theta}) v.push_back(static_cast<float>(x));
    return v;
}

}  // namespace

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir, bool force) {
    const auto manifest_path = dir / "manifest.json";
    if (std::filesystem::exists(manifest_path) && !force)
        throw std::runtime_error("refusing to overwrite " + manifest_path.string() + " (use --force)");
    const DatasetManifest m = make_manifest(cfg);
    std::filesystem::create_directories(dir);
    for (const auto& [split, ids] : m.tile_ids) {
        io::ArrayFile arr;
        for (const auto& tile : make_split(cfg, m, split)) {
            arr.put_tensor(tile.id + "/af", tile.pair.af.pixels);
            arr.put_tensor(tile.id + "/he", tile.pair.he.pixels);
            arr.put_f32(tile.id + "/nuclei", {tile.pair.geometry.nuclei.size(), 5},
                        nuclei_array(tile.pair.geometry.nuclei));
            const auto png_dir = dir / "png" / std::string(to_string(split));
            io::write_png(png_dir / (tile.id + "_af.png"), tile.pair.af.pixels);
            io::write_png(png_dir / (tile.id + "_he.png"), tile.pair.he.pixels);
        }
        arr.save(dir / ("tiles_" + std::string(to_string(split)) + ".arr"));
    }
    io::write_text(manifest_path, m.to_json());
    return m;
}

std::vector<Tile> load_split(const std::filesystem::path& dir, Split split) {
    const auto m = DatasetManifest::from_json(io::read_text(dir / "manifest.json"));
    const auto arr = io::ArrayFile::load(dir / ("tiles_" + std::string(to_string(split)) + ".arr"));
    std::vector<Tile> out;
    for (const auto& id : m.tile_ids.at(split)) {
        Tile t;
        t.id = id;
        const std::uint64_t seed = derive_seed(m.master_seed, id);
        t.pair.af = Patch{arr.get_tensor(id + "/af"), Domain::AF, id, seed};
        t.pair.he = Patch{arr.get_tensor(id + "/he"), Domain::HE, id, seed};
        const auto nv = arr.get_f32(id + "/nuclei");
        for (std::size_t i = 0; i + 4 < nv.size(); i += 5)
            t.pair.geometry.nuclei.push_back({nv[i], nv[i + 1], nv[i + 2], nv[i + 3], nv[i + 4]});
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace aqua::synth
