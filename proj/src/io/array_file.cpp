// SPDX-License-Identifier: Apache-2.0
#include "aqua/io/array_file.hpp"

#include <algorithm>
#include <bit>
#include <iterator>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace aqua::io {

namespace {

constexpr char kMagic[8] = {'A', 'Q', 'U', 'A', 'A', 'R', 'R', '1'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T read_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw std::runtime_error("array container: truncated");
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
}

template <typename T>
std::vector<std::uint8_t> to_le_bytes(const std::vector<T>& values) {
    std::vector<std::uint8_t> out;
    out.reserve(values.size() * sizeof(T));
    for (T v : values) append_le(out, v);
    return out;
}

template <typename T>
std::vector<T> from_le_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % sizeof(T)) throw std::runtime_error("array container: payload size mismatch");
    std::vector<T> out;
    out.reserve(bytes.size() / sizeof(T));
    std::size_t pos = 0;
    while (pos < bytes.size()) out.push_back(read_le<T>(bytes, pos));
    return out;
}

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::f32: return 4;
        case DType::f64: return 8;
        case DType::u8: return 1;
        case DType::i64: return 8;
    }
    throw std::runtime_error("array container: unknown dtype");
}

}  // namespace

void ArrayFile::put(ArrayEntry e) {
    if (contains(e.name)) throw std::invalid_argument("array container: duplicate entry " + e.name);
    if (element_count(e.shape) * dtype_size(e.dtype) != e.bytes.size())
        throw std::invalid_argument("array container: shape does not match payload for " + e.name);
    entries_.push_back(std::move(e));
}

void ArrayFile::put_f32(std::string name, std::vector<std::uint64_t> shape, const std::vector<float>& values) {
    put({std::move(name), DType::f32, std::move(shape), to_le_bytes(values)});
}

void ArrayFile::put_f64(std::string name, std::vector<std::uint64_t> shape, const std::vector<double>& values) {
    put({std::move(name), DType::f64, std::move(shape), to_le_bytes(values)});
}

void ArrayFile::put_i64(std::string name, std::vector<std::uint64_t> shape, const std::vector<std::int64_t>& values) {
    put({std::move(name), DType::i64, std::move(shape), to_le_bytes(values)});
}

void ArrayFile::put_text(std::string name, std::string_view text) {
    put({std::move(name), DType::u8, {text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())});
}

void ArrayFile::put_tensor(std::string name, const Tensor& t) {
    put_f32(std::move(name),
            {static_cast<std::uint64_t>(t.channels()), static_cast<std::uint64_t>(t.height()),
             static_cast<std::uint64_t>(t.width())},
            t.storage());
}

bool ArrayFile::contains(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const ArrayEntry& ArrayFile::get(std::string_view name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw std::out_of_range("array container: no entry named " + std::string(name));
}

std::vector<float> ArrayFile::get_f32(std::string_view name) const {
    const auto& e = get(name);
    if (e.dtype != DType::f32) throw std::runtime_error("array container: " + e.name + " is not f32");
    return from_le_bytes<float>(e.bytes);
}

std::vector<double> ArrayFile::get_f64(std::string_view name) const {
    const auto& e = get(name);
    if (e.dtype != DType::f64) throw std::runtime_error("array container: " + e.name + " is not f64");
    return from_le_bytes<double>(e.bytes);
}

std::vector<std::int64_t> ArrayFile::get_i64(std::string_view name) const {
    const auto& e = get(name);
    if (e.dtype != DType::i64) throw std::runtime_error("array container: " + e.name + " is not i64");
    return from_le_bytes<std::int64_t>(e.bytes);
}

std::string ArrayFile::get_text(std::string_view name) const {
    const auto& e = get(name);
    if (e.dtype != DType::u8) throw std::runtime_error("array container: " + e.name + " is not text");
    return std::string(e.bytes.begin(), e.bytes.end());
}

Tensor ArrayFile::get_tensor(std::string_view name) const {
    const auto& e = get(name);
    if (e.shape.size() != 3) throw std::runtime_error("array container: " + e.name + " is not rank 3");
    Tensor t(static_cast<int>(e.shape[0]), static_cast<int>(e.shape[1]), static_cast<int>(e.shape[2]));
    t.storage() = get_f32(name);
    return t;
}

std::vector<std::uint8_t> ArrayFile::serialize() const {
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<std::uint8_t>(e.dtype));
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) append_le<std::uint64_t>(out, d);
        append_le<std::uint64_t>(out, e.bytes.size());
        out.insert(out.end(), e.bytes.begin(), e.bytes.end());
    }
    return out;
}

ArrayFile ArrayFile::deserialize(const std::vector<std::uint8_t>& buf) {
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("array container: bad magic");
    std::size_t pos = 8;
    const auto count = read_le<std::uint32_t>(buf, pos);
    ArrayFile f;
    for (std::uint32_t i = 0; i < count; ++i) {
        ArrayEntry e;
        const auto name_len = read_le<std::uint32_t>(buf, pos);
        if (pos + name_len > buf.size()) throw std::runtime_error("array container: truncated name");
        e.name.assign(reinterpret_cast<const char*>(buf.data() + pos), name_len);
        pos += name_len;
        e.dtype = static_cast<DType>(read_le<std::uint8_t>(buf, pos));
        const auto ndim = read_le<std::uint32_t>(buf, pos);
        for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(read_le<std::uint64_t>(buf, pos));
        const auto nbytes = read_le<std::uint64_t>(buf, pos);
        if (pos + nbytes > buf.size()) throw std::runtime_error("array container: truncated payload");
        e.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                       buf.begin() + static_cast<std::ptrdiff_t>(pos + nbytes));
        pos += nbytes;
        f.put(std::move(e));
    }
    return f;
}

void ArrayFile::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ArrayFile ArrayFile::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace aqua::io
