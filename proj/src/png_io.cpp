// Minimal PNG codec over zlib: 8-bit gray/RGB, non-interlaced. Writing uses
// filter 0 rows; reading understands all five standard row filters.

#include "dda/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "dda/errors.hpp"

namespace dda {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

std::uint32_t get_u32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& payload) {
    put_u32(out, std::uint32_t(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = ::crc32(0, out.data() + crc_start, uInt(out.size() - crc_start));
    put_u32(out, std::uint32_t(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

void write_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw IoError("write_png: unsupported channel count for " + path);
    if (Index(img.pixels.size()) != img.h * img.w * img.channels)
        throw IoError("write_png: pixel buffer size mismatch for " + path);

    const Index stride = img.w * img.channels;
    std::vector<unsigned char> raw((stride + 1) * img.h);
    for (Index y = 0; y < img.h; ++y) {
        raw[y * (stride + 1)] = 0; // filter 0
        std::memcpy(raw.data() + y * (stride + 1) + 1, img.pixels.data() + y * stride, stride);
    }

    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed for " + path);
    compressed.resize(bound);

    std::vector<unsigned char> out;
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);

    std::vector<unsigned char> ihdr;
    put_u32(ihdr, std::uint32_t(img.w));
    put_u32(ihdr, std::uint32_t(img.h));
    ihdr.push_back(8);                         // bit depth
    ihdr.push_back(img.channels == 3 ? 2 : 0); // color type
    ihdr.push_back(0);                         // compression
    ihdr.push_back(0);                         // filter
    ihdr.push_back(0);                         // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("write_png: cannot open " + path);
    const std::size_t written = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (written != out.size()) throw IoError("write_png: short write to " + path);
}

ImageU8 read_png(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("read_png: cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<unsigned char> data(size);
    const std::size_t got = std::fread(data.data(), 1, size, f);
    std::fclose(f);
    if (long(got) != size) throw IoError("read_png: short read from " + path);

    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (size < 8 || std::memcmp(data.data(), sig, 8) != 0)
        throw IoError("read_png: not a PNG file: " + path);

    ImageU8 img;
    int bit_depth = 0, color_type = -1;
    std::vector<unsigned char> idat;
    std::size_t pos = 8;
    while (pos + 8 <= data.size()) {
        const std::uint32_t len = get_u32(data.data() + pos);
        if (pos + 12 + len > data.size()) throw IoError("read_png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(data.data() + pos + 4);
        const unsigned char* payload = data.data() + pos + 8;
        const std::uint32_t stored_crc = get_u32(data.data() + pos + 8 + len);
        const auto crc = ::crc32(0, data.data() + pos + 4, uInt(len + 4));
        if (std::uint32_t(crc) != stored_crc)
            throw IoError("read_png: chunk crc mismatch in " + path);
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("read_png: bad IHDR in " + path);
            img.w = get_u32(payload);
            img.h = get_u32(payload + 4);
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw IoError("read_png: interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (bit_depth != 8 || (color_type != 0 && color_type != 2))
        throw IoError("read_png: only 8-bit gray/RGB supported: " + path);
    img.channels = color_type == 2 ? 3 : 1;
    if (img.h <= 0 || img.w <= 0) throw IoError("read_png: bad dimensions in " + path);

    const Index stride = img.w * img.channels;
    std::vector<unsigned char> raw((stride + 1) * img.h);
    uLongf raw_len = uLongf(raw.size());
    if (idat.empty() ||
        uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError("read_png: inflate failed for " + path);

    img.pixels.resize(stride * img.h);
    const Index bpp = img.channels;
    for (Index y = 0; y < img.h; ++y) {
        const unsigned char filter = raw[y * (stride + 1)];
        const unsigned char* src = raw.data() + y * (stride + 1) + 1;
        unsigned char* dst = img.pixels.data() + y * stride;
        const unsigned char* prev = y > 0 ? img.pixels.data() + (y - 1) * stride : nullptr;
        for (Index x = 0; x < stride; ++x) {
            const int a = x >= bpp ? dst[x - bpp] : 0;
            const int b = prev ? prev[x] : 0;
            const int c = (prev && x >= bpp) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("read_png: unknown filter in " + path);
            }
            dst[x] = (unsigned char)(v & 0xff);
        }
    }
    return img;
}

ImageU8 tensor_to_u8(const Tensor<float>& t) {
    if (t.shape.n != 1 || t.shape.c != 3)
        throw IoError("tensor_to_u8: expected [1,3,H,W], got " + t.shape.str());
    ImageU8 img;
    img.h = t.shape.h;
    img.w = t.shape.w;
    img.channels = 3;
    img.pixels.resize(img.h * img.w * 3);
    for (Index y = 0; y < img.h; ++y)
        for (Index x = 0; x < img.w; ++x)
            for (Index c = 0; c < 3; ++c) {
                const float v = std::min(1.0f, std::max(0.0f, t.at(0, c, y, x)));
                img.pixels[(y * img.w + x) * 3 + c] = (unsigned char)std::lround(v * 255.0f);
            }
    return img;
}

Tensor<float> u8_to_tensor(const ImageU8& img) {
    if (img.channels != 3) throw IoError("u8_to_tensor: expected RGB");
    Tensor<float> t(1, 3, img.h, img.w);
    for (Index y = 0; y < img.h; ++y)
        for (Index x = 0; x < img.w; ++x)
            for (Index c = 0; c < 3; ++c)
                t.at(0, c, y, x) = float(img.pixels[(y * img.w + x) * 3 + c]) / 255.0f;
    return t;
}

} // namespace dda
