// SPDX-License-Identifier: Apache-2.0
//
// Procedural tissue tiles. Each tile is defined by a latent geometry
// (elliptical nuclei plus a smooth cytoplasm field) rendered twice: as a
// one-channel autofluorescence-like image and as a three-channel H&E-like
// image. Both renderings are pure functions of the geometry, so a perfect
// AF -> HE mapping exists.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aqua/core/tensor.hpp"

namespace aqua::synth {

enum class Domain { AF, HE };

int channels_of(Domain d) noexcept;
std::string_view to_string(Domain d) noexcept;

struct Patch {
    Tensor pixels;
    Domain domain = Domain::HE;
    std::string tile_id;
    std::uint64_t seed = 0;

    // Throws std::invalid_argument when the channel count or value range is wrong.
    void validate() const;
};

struct TissueSpec {
    int nuclei_count = 10;
    double radius_min = 2.0;
    double radius_max = 3.5;
    double background_texture_scale = 1.0;  // larger = smoother cytoplasm field
    double cytoplasm_density = 0.7;         // [0,1]
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct Nucleus {
    double cx = 0, cy = 0;  // centre, pixels
    double rx = 0, ry = 0;  // semi-axes, pixels
    double theta = 0;       // rotation, radians
};

struct TissueGeometry {
    std::vector<Nucleus> nuclei;  // actual placements (may be fewer than requested)
    Tensor cytoplasm;             // 1 x H x W, [0, density]
    Tensor nuclear;               // 1 x H x W, [0, 1]
    double af_gain = 1.0;
};

// Fixed stain palette. Repo constants, not measured values.
struct StainPalette {
    static constexpr float nucleus[3] = {0.28f, 0.24f, 0.55f};
    static constexpr float cytoplasm[3] = {0.95f, 0.70f, 0.78f};
    static constexpr float background[3] = {0.97f, 0.96f, 0.97f};
};

TissueGeometry generate_geometry(const TissueSpec& spec, int tile_size);
Tensor render_af(const TissueGeometry& g);
Tensor render_he(const TissueGeometry& g);

struct PatchPair {
    Patch af;
    Patch he;
    TissueGeometry geometry;
};

inline constexpr int kDefaultTileSize = 128;

PatchPair generate_pair(const TissueSpec& spec, int tile_size = kDefaultTileSize, std::string tile_id = {});

enum class Corruption { blur, contrast_fade, stain_washout };
std::string_view to_string(Corruption c) noexcept;
Corruption parse_corruption(std::string_view s);

// Histochemical-staining artifact simulator. severity in (0, 1].
Patch corrupt_hs(const Patch& p, Corruption mode, double severity);

// ---- Datasets ---------------------------------------------------------------

enum class Split { train, val, test };
std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view s);

inline constexpr std::string_view kGeneratorVersion = "aqua-synthgen/1";

struct DatasetConfig {
    int train = 200;
    int val = 50;
    int test = 50;
    std::uint64_t master_seed = 1;
    int tile_size = kDefaultTileSize;
    int nuclei_min = 12;
    int nuclei_max = 28;
    double radius_min = 2.0;
    double radius_max = 3.5;
};

struct DatasetManifest {
    std::string generator_version{kGeneratorVersion};
    std::uint64_t master_seed = 0;
    int tile_size = 0;
    std::map<Split, std::vector<std::string>> tile_ids;

    std::string to_json() const;
    static DatasetManifest from_json(std::string_view text);
    bool operator==(const DatasetManifest&) const = default;
};

struct Tile {
    std::string id;
    PatchPair pair;
};

// Per-tile spec drawn deterministically from (master seed, tile id).
TissueSpec tile_spec(const DatasetConfig& cfg, std::string_view tile_id);
DatasetManifest make_manifest(const DatasetConfig& cfg);
Tile make_tile(const DatasetConfig& cfg, std::string_view tile_id);
std::vector<Tile> make_split(const DatasetConfig& cfg, const DatasetManifest& m, Split split);

// Writes manifest.json, tiles_<split>.arr (exact floats + nuclei metadata)
// and 8-bit PNGs under png/<split>/. Refuses to replace an existing manifest
// unless force is set.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& dir, bool force = false);
std::vector<Tile> load_split(const std::filesystem::path& dir, Split split);

}  // namespace aqua::synth
