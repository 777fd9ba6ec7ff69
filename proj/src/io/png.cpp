// SPDX-License-Identifier: Apache-2.0
#include "aqua/io/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqua::io {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

}  // namespace

void write_png(const std::filesystem::path& path, const Tensor& image) {
    const int c = image.channels();
    if (c != 1 && c != 3) throw std::invalid_argument("write_png: need 1 or 3 channels");
    const int h = image.height(), w = image.width();
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + w * c));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const float v = std::clamp(image.at(ch, y, x), 0.0f, 1.0f);
                raw.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
            }
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    z.resize(zlen);

    std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(w));
    put_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                  // bit depth
    ihdr.push_back(c == 1 ? 0 : 2);     // grayscale / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", z);
    put_chunk(out, "IEND", {});

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Tensor read_png(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || !std::equal(kSignature.begin(), kSignature.end(), buf.begin()))
        throw std::runtime_error("read_png: not a PNG");
    std::size_t pos = 8;
    int w = 0, h = 0, c = 0;
    std::vector<std::uint8_t> z;
    while (pos + 12 <= buf.size()) {
        const std::uint32_t len = get_u32_be(buf.data() + pos);
        const std::string type(reinterpret_cast<const char*>(buf.data() + pos + 4), 4);
        const std::uint8_t* data = buf.data() + pos + 8;
        if (type == "IHDR") {
            w = static_cast<int>(get_u32_be(data));
            h = static_cast<int>(get_u32_be(data + 4));
            if (data[8] != 8 || (data[9] != 0 && data[9] != 2) || data[12] != 0)
                throw std::runtime_error("read_png: unsupported format");
            c = data[9] == 0 ? 1 : 3;
        } else if (type == "IDAT") {
            z.insert(z.end(), data, data + len);
        }
        pos += 12 + len;
    }
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (1 + w * c));
    uLongf rlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rlen != raw.size())
        throw std::runtime_error("read_png: inflate failed");
    Tensor t(c, h, w);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (1 + w * c);
        if (row[0] != 0) throw std::runtime_error("read_png: unsupported filter");
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) t.at(ch, y, x) = row[1 + x * c + ch] / 255.0f;
    }
    return t;
}

}  // namespace aqua::io
