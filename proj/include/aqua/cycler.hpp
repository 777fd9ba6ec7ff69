// SPDX-License-Identifier: Apache-2.0
//
// Inference-time VS/VAF iteration. Given an HE image, produce
//   frames[0] = image, frames[k] = VS(VAF(frames[k-1])).
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "aqua/synthgen.hpp"
#include "aqua/translators.hpp"

namespace aqua::cycle {

using Mapping = std::function<synth::Patch(const synth::Patch&)>;

// The two translators used for cycling. Built from checkpoints in normal use;
// tests plug in stubs.
struct CyclePair {
    std::string vs_id;
    std::string vaf_id;
    Mapping vs;   // AF -> HE
    Mapping vaf;  // HE -> AF
};

// Throws std::invalid_argument unless vs is a VS checkpoint and vaf a VAF one.
CyclePair make_pair(const translate::Checkpoint& vs, const translate::Checkpoint& vaf);

struct CycleSeq {
    std::vector<synth::Patch> frames;     // T HE frames
    std::vector<synth::Patch> af_frames;  // T-1 AF intermediates, only when retained
    std::string source_tile_id;
    std::string vs_checkpoint_id;
    std::string vaf_checkpoint_id;
    int T = 0;
};

CycleSeq run_cycles(const synth::Patch& he, const CyclePair& pair, int T, bool keep_af = false);
CycleSeq run_cycles(const synth::Patch& he, const translate::Checkpoint& vs, const translate::Checkpoint& vaf, int T,
                    bool keep_af = false);

// Mean absolute difference of frames[1..T-1] to frames[0]. Requires T >= 2.
std::vector<double> drift_profile(const CycleSeq& seq);

// Stacked frames in an array file plus "<path>.json" with the provenance fields.
void save_cycle_seq(const CycleSeq& seq, const std::filesystem::path& path);
CycleSeq load_cycle_seq(const std::filesystem::path& path);

}  // namespace aqua::cycle
