// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment stages. Each stage reads its upstream artifacts from
// the output directory, writes its own subdirectory plus stage.json (config
// hash, inputs) and stage.log, and is a pure function of the config, so
// deleting a stage directory and rerunning regenerates identical files.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "aqua/calibration.hpp"
#include "aqua/harness/config.hpp"

namespace aqua::harness {

enum class Stage {
    gen_data,
    train_translators,
    pool_checkpoints,
    train_classifier,
    calibrate,
    evaluate,
    maqua_study,
    external,
    ablate_T,
    ablate_C,
    hs_bench,
    report,
};

std::string_view to_string(Stage s) noexcept;
// Accepts the CLI spelling ("gen-data", "ablate-T", ...). Throws ConfigError.
Stage parse_stage(std::string_view s);
const std::vector<Stage>& all_stages();
const std::vector<Stage>& dependencies(Stage s);

// Environment variable consulted when no output directory is given.
inline constexpr const char* kOutEnv = "AQUA_OUT";

class Pipeline {
public:
    // `log` receives one progress line per step; may be null.
    Pipeline(ExperimentConfig cfg, std::filesystem::path out, std::ostream* log = nullptr);

    // Runs one stage. A stage whose stage.json matches the current config is
    // skipped unless force is set. Throws DependencyError when an upstream
    // stage is missing or was produced under a different config.
    void run(Stage s, bool force = false);
    // All stages in order.
    void run_all(bool force = false);

    bool is_complete(Stage s) const;
    std::filesystem::path stage_dir(Stage s) const;
    const std::filesystem::path& out() const noexcept { return out_; }
    const ExperimentConfig& config() const noexcept { return cfg_; }

    // One image through the deployed classifier. The image is either a tile id
    // rendered by `model_id` (default: the deployment VS checkpoint) or an HE
    // PNG. Returns "tile=... model=... score=... alpha=... verdict=...".
    std::string assess_image(const std::string& tile_id, const std::string& model_id,
                             const std::filesystem::path& png = {});
    // Model-level decision over N sampled test tiles.
    calib::ModelVerdict assess_model(const std::string& model_id, int N);

private:
    void check_dependencies(Stage s) const;
    void write_stage_record(Stage s, const std::string& log_text) const;

    void gen_data();
    void train_translators();
    void pool_checkpoints();
    void train_classifier();
    void calibrate();
    void evaluate();
    void maqua_study();
    void external();
    void ablate_T();
    void ablate_C();
    void hs_bench();
    void report();

    void note(const std::string& line);

    ExperimentConfig cfg_;
    std::filesystem::path out_;
    std::ostream* log_;
    std::uint64_t hash_;
    std::string stage_log_;
};

}  // namespace aqua::harness
