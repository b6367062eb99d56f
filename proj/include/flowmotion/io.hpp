// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowmotion/tensor.hpp"

namespace flowmotion {

/// Thrown on malformed FMLT/PGM payloads.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// FMLT: magic "FMLT", u32-LE version (=1), u32-LE rank, rank x u32-LE dims,
// then prod(dims) float32-LE values, row-major.
// --------------------------------------------------------------------------

namespace detail {

inline void put_u32le(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline constexpr std::uint32_t kFmltVersion = 1;

inline std::string fmlt_encode(const std::vector<std::uint32_t>& dims,
                               std::span<const float> values) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    if (n != values.size()) {
        throw format_error("fmlt_encode: dims product does not match value count");
    }
    std::string buf;
    buf.reserve(12 + 4 * dims.size() + 4 * values.size());
    buf += "FMLT";
    detail::put_u32le(buf, kFmltVersion);
    detail::put_u32le(buf, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) detail::put_u32le(buf, d);
    for (float v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::put_u32le(buf, bits);
    }
    return buf;
}

struct FmltTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

inline FmltTensor fmlt_decode(std::span<const unsigned char> buf) {
    if (buf.size() < 4 || std::memcmp(buf.data(), "FMLT", 4) != 0) {
        throw format_error("fmlt: bad magic");
    }
    if (buf.size() < 12) throw format_error("fmlt: truncated header");
    std::uint32_t version = detail::get_u32le(buf.data() + 4);
    if (version != kFmltVersion) {
        throw format_error("fmlt: unsupported version " + std::to_string(version));
    }
    std::uint32_t rank = detail::get_u32le(buf.data() + 8);
    if (rank == 0 || rank > 8) throw format_error("fmlt: bad rank");
    if (buf.size() < 12 + 4ull * rank) throw format_error("fmlt: truncated dims");
    FmltTensor out;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint32_t d = detail::get_u32le(buf.data() + 12 + 4ull * i);
        if (d == 0) throw format_error("fmlt: zero dim");
        out.dims.push_back(d);
        n *= d;
    }
    std::size_t off = 12 + 4ull * rank;
    if (buf.size() != off + 4 * n) throw format_error("fmlt: truncated payload");
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = detail::get_u32le(buf.data() + off + 4 * i);
        std::memcpy(&out.values[i], &bits, 4);
    }
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open for writing: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("write failed: " + path.string());
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path.string());
    std::vector<unsigned char> buf{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};
    return buf;
}

inline void save_tensor(const std::filesystem::path& path, const LatentTensor& t) {
    const auto& s = t.shape();
    write_file(path, fmlt_encode({static_cast<std::uint32_t>(s.f),
                                  static_cast<std::uint32_t>(s.h),
                                  static_cast<std::uint32_t>(s.w),
                                  static_cast<std::uint32_t>(s.c)},
                                 t.values()));
}

inline LatentTensor load_tensor(const std::filesystem::path& path) {
    auto raw = read_file(path);
    auto dec = fmlt_decode(raw);
    if (dec.dims.size() != 4) {
        throw format_error("fmlt: expected rank-4 latent, got rank " +
                           std::to_string(dec.dims.size()));
    }
    Shape4 s{static_cast<int>(dec.dims[0]), static_cast<int>(dec.dims[1]),
             static_cast<int>(dec.dims[2]), static_cast<int>(dec.dims[3])};
    return LatentTensor(s, std::move(dec.values));
}

// --------------------------------------------------------------------------
// 8-bit grayscale images and binary PGM (P5, maxval 255).
// --------------------------------------------------------------------------

struct Image {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> px;  // row-major

    Image() = default;
    Image(int h_, int w_, std::uint8_t fill = 0)
        : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, fill) {}

    std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
    bool operator==(const Image&) const = default;
};

inline std::uint8_t quantize01(float v) {
    float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

inline std::string pgm_encode(const Image& img) {
    std::string buf = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) +
                      "\n255\n";
    buf.append(reinterpret_cast<const char*>(img.px.data()), img.px.size());
    return buf;
}

inline Image pgm_decode(std::span<const unsigned char> buf) {
    // Minimal P5 parser: "P5" ws width ws height ws maxval single-ws raster.
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < buf.size() &&
               (buf[pos] == ' ' || buf[pos] == '\n' || buf[pos] == '\t' ||
                buf[pos] == '\r')) {
            ++pos;
        }
    };
    auto read_int = [&]() -> long {
        skip_ws();
        if (pos < buf.size() && buf[pos] == '#') {  // comment line
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
            skip_ws();
        }
        long v = 0;
        bool any = false;
        while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
            v = v * 10 + (buf[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw format_error("pgm: malformed header");
        return v;
    };
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
        throw format_error("pgm: bad magic");
    }
    pos = 2;
    long w = read_int();
    long h = read_int();
    long maxv = read_int();
    if (w <= 0 || h <= 0 || maxv != 255) throw format_error("pgm: bad header");
    ++pos;  // the single whitespace byte before the raster
    if (buf.size() - pos < static_cast<std::size_t>(w * h)) {
        throw format_error("pgm: truncated raster");
    }
    Image img(static_cast<int>(h), static_cast<int>(w));
    std::copy_n(buf.data() + pos, img.px.size(), img.px.data());
    return img;
}

inline void save_pgm(const std::filesystem::path& path, const Image& img) {
    write_file(path, pgm_encode(img));
}

inline Image load_pgm(const std::filesystem::path& path) {
    auto raw = read_file(path);
    return pgm_decode(raw);
}

}  // namespace flowmotion
