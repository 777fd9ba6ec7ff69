// Shared helpers for the unit tests.
#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "aqua/core/rng.hpp"
#include "aqua/cycler.hpp"
#include "aqua/synthgen.hpp"

namespace aqua::test {

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("aqua-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

// VAF stub keeps the HE frame aside so the matching VS stub can return it:
// VS(VAF(x)) == x exactly.
inline cycle::CyclePair identity_pair() {
    auto stash = std::make_shared<synth::Patch>();
    cycle::CyclePair p;
    p.vs_id = "identity-vs";
    p.vaf_id = "identity-vaf";
    p.vaf = [stash](const synth::Patch& he) {
        *stash = he;
        return synth::Patch{Tensor(1, he.pixels.height(), he.pixels.width(), 0.5f), synth::Domain::AF, he.tile_id,
                            he.seed};
    };
    p.vs = [stash](const synth::Patch&) { return *stash; };
    return p;
}

}  // namespace aqua::test
