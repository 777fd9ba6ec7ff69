// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "aqua/core/tensor.hpp"

namespace aqua::io {

// Writes a 1- or 3-channel tensor with values in [0,1] as an 8-bit PNG
// (grayscale or RGB). Values are clamped and rounded to nearest.
void write_png(const std::filesystem::path& path, const Tensor& image);

// Reads an 8-bit grayscale or RGB PNG written by write_png.
Tensor read_png(const std::filesystem::path& path);

}  // namespace aqua::io
