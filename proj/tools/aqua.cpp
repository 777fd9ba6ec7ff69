// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver for the experiment stages.
//
//   aqua --config configs/default.cfg --out runs/a run
//   aqua --out runs/a assess-image --tile test-00017
//
// Exit codes: 0 ok, 2 config error, 3 missing upstream stage, 4 divergence,
// 1 anything else.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aqua/core/error.hpp"
#include "aqua/harness/config.hpp"
#include "aqua/harness/pipeline.hpp"

namespace {

using aqua::harness::Stage;

struct Options {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    long long seed = -1;
    bool force = false;
    bool print_config = false;
    bool print_schema = false;
    std::string stage;
    std::string tile, model, png;
    int N = 20;
};

aqua::harness::ExperimentConfig resolve(const Options& o) {
    auto cfg = o.config.empty() ? aqua::harness::ExperimentConfig{} : aqua::harness::load_config(o.config);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw aqua::ConfigError("--set expects key=value, got '" + kv + "'");
        aqua::harness::set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(o.seed);
    cfg.validate();
    return cfg;
}

std::string out_dir(const Options& o) {
    if (!o.out.empty()) return o.out;
    if (const char* e = std::getenv(aqua::harness::kOutEnv); e && *e) return e;
    return "aqua_out";
}

int run(CLI::App& app, const Options& o) {
    if (o.print_schema) {
        std::cout << aqua::harness::schema_text();
        return 0;
    }
    const auto cfg = resolve(o);
    if (o.print_config) {
        std::cout << aqua::harness::resolved_text(cfg);
        return 0;
    }
    aqua::harness::Pipeline p(cfg, out_dir(o), &std::cerr);
    for (const auto* sub : app.get_subcommands()) {
        const std::string name = sub->get_name();
        if (name == "run") {
            if (o.stage.empty()) p.run_all(o.force);
            else p.run(aqua::harness::parse_stage(o.stage), o.force);
        } else if (name == "assess-image") {
            if (o.tile.empty() == o.png.empty()) throw aqua::ConfigError("assess-image needs exactly one of --tile or --png");
            std::cout << p.assess_image(o.tile, o.model, o.png) << "\n";
        } else if (name == "assess-model") {
            const auto v = p.assess_model(o.model, o.N);
            std::cout << "model=" << v.model_id << " N=" << v.N << " sbar=" << v.sbar
                      << " verdict=" << aqua::calib::to_string(v.verdict) << "\n";
        } else {
            p.run(aqua::harness::parse_stage(name), o.force);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic virtual-staining quality assessment experiments"};
    Options o;
    app.add_option("--config", o.config, "key = value config file (defaults when omitted)");
    app.add_option("--out", o.out, std::string("output root (default $") + aqua::harness::kOutEnv + " or ./aqua_out)");
    app.add_option("--seed", o.seed, "override master_seed");
    app.add_option("--set", o.overrides, "override one config key, key=value (repeatable)");
    app.add_flag("--force", o.force, "rerun stages even when up to date");
    app.add_flag("--print-config", o.print_config, "print the resolved config and exit");
    app.add_flag("--print-schema", o.print_schema, "print the documented config schema and exit");
    app.require_subcommand(0, 1);

    for (Stage s : aqua::harness::all_stages()) {
        const std::string name(aqua::harness::to_string(s));
        app.add_subcommand(name, "run the " + name + " stage")->fallthrough();
    }
    auto* all = app.add_subcommand("run", "run every stage in order, or one with --stage");
    all->add_option("--stage", o.stage, "single stage to run");
    all->fallthrough();
    auto* ai = app.add_subcommand("assess-image", "score one image with the deployed classifier");
    ai->add_option("--tile", o.tile, "tile id rendered through --model");
    ai->add_option("--model", o.model, "VS checkpoint id (default: deployment checkpoint)");
    ai->add_option("--png", o.png, "HE image file to score instead of a tile");
    ai->fallthrough();
    auto* am = app.add_subcommand("assess-model", "model-level verdict over N sampled test tiles");
    am->add_option("--model", o.model, "VS checkpoint id")->required();
    am->add_option("-N,--N", o.N, "number of sampled tiles")->check(CLI::PositiveNumber);
    am->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (app.get_subcommands().empty() && !o.print_config && !o.print_schema) {
        std::cerr << app.help();
        return 2;
    }
    try {
        return run(app, o);
    } catch (const aqua::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const aqua::DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return 3;
    } catch (const aqua::DivergenceError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
