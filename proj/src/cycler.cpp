// SPDX-License-Identifier: Apache-2.0
#include "aqua/cycler.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "aqua/io/array_file.hpp"
#include "aqua/io/text.hpp"

namespace aqua::cycle {

using synth::Domain;
using synth::Patch;

CyclePair make_pair(const translate::Checkpoint& vs, const translate::Checkpoint& vaf) {
    if (!vs.params || !vaf.params) throw std::invalid_argument("make_pair: empty checkpoint");
    if (vs.direction() != translate::Direction::VS) throw std::invalid_argument("make_pair: first checkpoint is not VS");
    if (vaf.direction() != translate::Direction::VAF)
        throw std::invalid_argument("make_pair: second checkpoint is not VAF");
    auto vs_net = vs.params;
    auto vaf_net = vaf.params;
    return CyclePair{vs.id, vaf.id, [vs_net](const Patch& p) { return translate::apply(*vs_net, p); },
                     [vaf_net](const Patch& p) { return translate::apply(*vaf_net, p); }};
}

CycleSeq run_cycles(const Patch& he, const CyclePair& pair, int T, bool keep_af) {
    if (T < 1) throw std::invalid_argument("run_cycles: T must be >= 1");
    if (he.domain != Domain::HE) throw std::invalid_argument("run_cycles: input must be an HE patch");
    CycleSeq seq;
    seq.source_tile_id = he.tile_id;
    seq.vs_checkpoint_id = pair.vs_id;
    seq.vaf_checkpoint_id = pair.vaf_id;
    seq.T = T;
    seq.frames.reserve(static_cast<std::size_t>(T));
    seq.frames.push_back(he);
    for (int k = 1; k < T; ++k) {
        Patch af = pair.vaf(seq.frames.back());
        if (af.domain != Domain::AF) throw std::invalid_argument("run_cycles: VAF did not produce an AF patch");
        Patch next = pair.vs(af);
        if (next.domain != Domain::HE || !next.pixels.same_shape(he.pixels))
            throw std::invalid_argument("run_cycles: VS output does not match the input shape");
        next.tile_id = he.tile_id;
        next.seed = he.seed;
        if (keep_af) seq.af_frames.push_back(std::move(af));
        seq.frames.push_back(std::move(next));
    }
    return seq;
}

CycleSeq run_cycles(const Patch& he, const translate::Checkpoint& vs, const translate::Checkpoint& vaf, int T,
                    bool keep_af) {
    return run_cycles(he, make_pair(vs, vaf), T, keep_af);
}

std::vector<double> drift_profile(const CycleSeq& seq) {
    if (seq.frames.size() < 2) throw std::invalid_argument("drift_profile: needs T >= 2");
    const auto& ref = seq.frames[0].pixels.storage();
    std::vector<double> out;
    for (std::size_t k = 1; k < seq.frames.size(); ++k) {
        const auto& f = seq.frames[k].pixels.storage();
        double s = 0;
        for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(static_cast<double>(f[i]) - ref[i]);
        out.push_back(s / static_cast<double>(f.size()));
    }
    return out;
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& p) {
    auto s = p;
    s += ".json";
    return s;
}

void put_stack(io::ArrayFile& f, const std::string& name, const std::vector<Patch>& frames) {
    if (frames.empty()) return;
    const Tensor& t0 = frames[0].pixels;
    std::vector<float> v;
    v.reserve(frames.size() * t0.size());
    for (const auto& p : frames) v.insert(v.end(), p.pixels.storage().begin(), p.pixels.storage().end());
    f.put_f32(name,
              {frames.size(), static_cast<std::uint64_t>(t0.channels()), static_cast<std::uint64_t>(t0.height()),
               static_cast<std::uint64_t>(t0.width())},
              v);
}

std::vector<Patch> get_stack(const io::ArrayFile& f, const std::string& name, Domain d, const std::string& tile_id) {
    const auto& e = f.get(name);
    if (e.shape.size() != 4) throw std::runtime_error("cycle file: bad frame stack shape");
    const auto v = f.get_f32(name);
    const int c = static_cast<int>(e.shape[1]), h = static_cast<int>(e.shape[2]), w = static_cast<int>(e.shape[3]);
    std::vector<Patch> out;
    const std::size_t n = static_cast<std::size_t>(c) * h * w;
    for (std::uint64_t k = 0; k < e.shape[0]; ++k) {
        Tensor t(c, h, w);
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(k * n), v.begin() + static_cast<std::ptrdiff_t>((k + 1) * n),
                  t.storage().begin());
        out.push_back(Patch{std::move(t), d, tile_id, 0});
    }
    return out;
}

}  // namespace

void save_cycle_seq(const CycleSeq& seq, const std::filesystem::path& path) {
    io::ArrayFile f;
    put_stack(f, "frames", seq.frames);
    put_stack(f, "af_frames", seq.af_frames);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    f.save(path);
    nlohmann::ordered_json j;
    j["tile_id"] = seq.source_tile_id;
    j["vs_checkpoint_id"] = seq.vs_checkpoint_id;
    j["vaf_checkpoint_id"] = seq.vaf_checkpoint_id;
    j["T"] = seq.T;
    j["seed"] = seq.frames.empty() ? 0 : seq.frames[0].seed;
    j["af_retained"] = !seq.af_frames.empty();
    io::write_text(sidecar(path), j.dump(2) + "\n");
}

CycleSeq load_cycle_seq(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(io::read_text(sidecar(path)));
    const auto f = io::ArrayFile::load(path);
    CycleSeq seq;
    seq.source_tile_id = j.at("tile_id").get<std::string>();
    seq.vs_checkpoint_id = j.at("vs_checkpoint_id").get<std::string>();
    seq.vaf_checkpoint_id = j.at("vaf_checkpoint_id").get<std::string>();
    seq.T = j.at("T").get<int>();
    seq.frames = get_stack(f, "frames", Domain::HE, seq.source_tile_id);
    const auto seed = j.at("seed").get<std::uint64_t>();
    for (auto& p : seq.frames) p.seed = seed;
    if (j.at("af_retained").get<bool>()) seq.af_frames = get_stack(f, "af_frames", Domain::AF, seq.source_tile_id);
    if (static_cast<int>(seq.frames.size()) != seq.T) throw std::runtime_error("cycle file: frame count != T");
    return seq;
}

}  // namespace aqua::cycle
