// SPDX-License-Identifier: Apache-2.0
//
// Array container: a flat, self-describing file of named arrays.
//
//   magic     8 bytes  "AQUAARR1"
//   count     u32
//   per entry:
//     name_len u32, name bytes (UTF-8)
//     dtype    u8    0 = f32, 1 = f64, 2 = u8, 3 = i64
//     ndim     u32
//     dims     u64 x ndim
//     nbytes   u64
//     payload  nbytes, little-endian
//
// Entries keep insertion order; names are unique.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aqua/core/tensor.hpp"

namespace aqua::io {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, i64 = 3 };

struct ArrayEntry {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> bytes;  // little-endian payload
};

class ArrayFile {
public:
    void put_f32(std::string name, std::vector<std::uint64_t> shape, const std::vector<float>& values);
    void put_f64(std::string name, std::vector<std::uint64_t> shape, const std::vector<double>& values);
    void put_i64(std::string name, std::vector<std::uint64_t> shape, const std::vector<std::int64_t>& values);
    void put_text(std::string name, std::string_view text);
    void put_tensor(std::string name, const Tensor& t);

    bool contains(std::string_view name) const;
    const ArrayEntry& get(std::string_view name) const;
    std::vector<float> get_f32(std::string_view name) const;
    std::vector<double> get_f64(std::string_view name) const;
    std::vector<std::int64_t> get_i64(std::string_view name) const;
    std::string get_text(std::string_view name) const;
    Tensor get_tensor(std::string_view name) const;

    const std::vector<ArrayEntry>& entries() const noexcept { return entries_; }

    std::vector<std::uint8_t> serialize() const;
    static ArrayFile deserialize(const std::vector<std::uint8_t>& buf);
    void save(const std::filesystem::path& path) const;
    static ArrayFile load(const std::filesystem::path& path);

private:
    void put(ArrayEntry e);
    std::vector<ArrayEntry> entries_;
};

}  // namespace aqua::io
