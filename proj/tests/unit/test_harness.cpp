#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "aqua/core/error.hpp"
#include "aqua/harness/config.hpp"
#include "aqua/harness/pipeline.hpp"
#include "aqua/io/text.hpp"
#include "test_util.hpp"

using namespace aqua;
using namespace aqua::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig smoke() { return load_config(fs::path(AQUA_SOURCE_DIR) / "configs" / "smoke.cfg"); }

// Every file under a directory except stage logs (they carry wall-clock times).
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "stage.log")
            m[fs::relative(e.path(), dir).string()] = io::read_text(e.path());
    return m;
}

// One smoke run shared by the pipeline tests.
struct SmokeRun {
    test::TempDir dir{"smoke"};
    Pipeline p{smoke(), dir.path / "out"};
    SmokeRun() { p.run_all(); }
};

SmokeRun& smoke_run() {
    static SmokeRun r;
    return r;
}

int cli(const std::string& args) {
    const int rc = std::system((std::string(AQUA_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config: empty text is the default experiment") {
    const auto c = parse_config("# nothing\n\n");
    CHECK(resolved_text(c) == resolved_text(ExperimentConfig{}));
    CHECK(c.T == 5);
    CHECK(c.C == 4);
    CHECK(c.N_grid == std::vector<int>{2, 5, 10, 20});
}

TEST_CASE("config: resolved text round-trips and hashes") {
    auto c = parse_config("T = 3\nN_grid = 2, 4\nhs_modes = blur\nlearning_rate = 0.001\n");
    CHECK(c.T == 3);
    CHECK(c.N_grid == std::vector<int>{2, 4});
    CHECK(c.hs_modes == std::vector<std::string>{"blur"});
    const auto back = parse_config(resolved_text(c));
    CHECK(resolved_text(back) == resolved_text(c));
    CHECK(config_hash(back) == config_hash(c));
    set_value(c, "T", "4");
    CHECK(config_hash(back) != config_hash(c));
    CHECK(schema_text().find("master_seed") != std::string::npos);
}

TEST_CASE("config: errors") {
    CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("T = 3\nT = 4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("T = three\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("T 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("T = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("C = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("N_grid = \n"), ConfigError);
    CHECK_THROWS_AS(parse_config("hs_modes = smudge\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("ensemble = median\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("val_tiles = -1\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.cfg"), ConfigError);
}

TEST_CASE("stages: names and dependency graph") {
    for (Stage s : all_stages()) {
        CHECK(parse_stage(to_string(s)) == s);
        for (Stage d : dependencies(s)) CHECK(static_cast<int>(d) < static_cast<int>(s));
    }
    CHECK_THROWS_AS(parse_stage("train"), ConfigError);
}

TEST_CASE("stages refuse to run without upstream artifacts") {
    test::TempDir dir("deps");
    Pipeline p(smoke(), dir.path);
    CHECK_THROWS_AS(p.run(Stage::calibrate), DependencyError);
    CHECK_THROWS_AS(p.run(Stage::train_translators), DependencyError);
    try {
        p.run(Stage::report);
    } catch (const DependencyError& e) {
        CHECK(std::string(e.what()).find("evaluate") != std::string::npos);
    }
}

TEST_CASE("smoke pipeline produces a complete report") {
    auto& r = smoke_run();
    for (Stage s : all_stages()) CHECK(r.p.is_complete(s));
    const auto rep = r.p.stage_dir(Stage::report);
    for (const char* f : {"summary.json", "summary.md", "test_scores.svg", "separation.svg", "hs_rejection.svg"})
        CHECK(fs::exists(rep / f));
    CHECK(fs::exists(r.dir.path / "out" / "config.resolved"));
    const auto line = r.p.assess_image("test-00000", "", {});
    CHECK(line.rfind("tile=test-00000 model=vs-deploy", 0) == 0);
    CHECK(line.find(" score=") != std::string::npos);
    CHECK(line.find(" alpha=") != std::string::npos);
    CHECK(line.find(" verdict=") != std::string::npos);
    CHECK_THROWS_AS(r.p.assess_image("nope", "", {}), ConfigError);
    const auto v = r.p.assess_model("vs-test-f00-e0020", 4);
    CHECK(v.N == 4);
    CHECK(v.sample_tile_ids.size() == 4);
}

TEST_CASE("rerunning a stage reproduces its files") {
    auto& r = smoke_run();
    for (Stage s : {Stage::calibrate, Stage::maqua_study, Stage::ablate_C, Stage::hs_bench}) {
        const auto dir = r.p.stage_dir(s);
        const auto before = snapshot(dir);
        fs::remove_all(dir);
        r.p.run(s);
        CHECK(snapshot(dir) == before);
    }
}

TEST_CASE("a changed config is detected downstream") {
    auto& r = smoke_run();
    auto cfg = smoke();
    cfg.R = 6;
    Pipeline other(cfg, r.dir.path / "out");
    CHECK_FALSE(other.is_complete(Stage::maqua_study));
    CHECK_THROWS_AS(other.run(Stage::maqua_study), DependencyError);
}

TEST_CASE("external stage refuses a contaminated classifier") {
    test::TempDir dir("contaminated");
    auto cfg = smoke();
    cfg.classifier_include_overfit = true;
    Pipeline p(cfg, dir.path);
    for (Stage s : {Stage::gen_data, Stage::train_translators, Stage::pool_checkpoints, Stage::train_classifier,
                    Stage::calibrate})
        p.run(s);
    try {
        p.run(Stage::external);
        FAIL("expected the contamination guard to fire");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("overfit") != std::string::npos);
    }
    CHECK_FALSE(p.is_complete(Stage::external));
}

TEST_CASE("cli exit codes") {
    test::TempDir dir("cli");
    const std::string out = " --out " + dir.path.string();
    CHECK(cli("--print-config") == 0);
    CHECK(cli("--set T=0 --print-config") == 2);
    CHECK(cli("--config /nonexistent.cfg --print-config") == 2);
    CHECK(cli("--bogus-flag") == 2);
    CHECK(cli(out + " calibrate") == 3);
    CHECK(cli(out + " run --stage no-such-stage") == 2);
    const std::string cfg = " --config " + (fs::path(AQUA_SOURCE_DIR) / "configs" / "smoke.cfg").string();
    CHECK(cli(cfg + out + " gen-data") == 0);
    CHECK(fs::exists(dir.path / "gen-data" / "stage.json"));
    // Same stage under a different seed: upstream hash mismatch.
    CHECK(cli(cfg + out + " --seed 8 train-translators") == 3);
}
