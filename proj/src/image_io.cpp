#include "strans/image_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace strans {

namespace {

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, size_t len) {
    put_u32be(out, static_cast<std::uint32_t>(len));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + len));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    ST_CHECK(f, "cannot open for writing: " << path);
    const size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    ST_CHECK(n == bytes.size(), "short write to " << path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    ST_CHECK(f, "cannot open: " << path);
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<std::uint8_t> data(size > 0 ? static_cast<size_t>(size) : 0);
    const size_t n = std::fread(data.data(), 1, data.size(), f);
    std::fclose(f);
    ST_CHECK(n == data.size(), "short read from " << path);
    return data;
}

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

void write_png_rgb(const std::string& path, const std::uint8_t* rgb, index_t w,
                   index_t h) {
    ST_CHECK(w > 0 && h > 0, "empty image");
    // raw stream: one zero filter byte per scanline
    std::vector<std::uint8_t> raw(static_cast<size_t>(h) * (1 + w * 3));
    for (index_t y = 0; y < h; ++y) {
        std::uint8_t* row = raw.data() + y * (1 + w * 3);
        row[0] = 0;
        std::memcpy(row + 1, rgb + y * w * 3, static_cast<size_t>(w) * 3);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    const int rc = compress2(comp.data(), &comp_len, raw.data(),
                             static_cast<uLong>(raw.size()), 6);
    ST_CHECK(rc == Z_OK, "deflate failed with code " << rc);
    comp.resize(comp_len);

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kSignature, kSignature + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(w >> 24);
    ihdr[1] = static_cast<std::uint8_t>(w >> 16);
    ihdr[2] = static_cast<std::uint8_t>(w >> 8);
    ihdr[3] = static_cast<std::uint8_t>(w);
    ihdr[4] = static_cast<std::uint8_t>(h >> 24);
    ihdr[5] = static_cast<std::uint8_t>(h >> 16);
    ihdr[6] = static_cast<std::uint8_t>(h >> 8);
    ihdr[7] = static_cast<std::uint8_t>(h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type RGB
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // interlace
    append_chunk(out, "IHDR", ihdr, sizeof ihdr);
    append_chunk(out, "IDAT", comp.data(), comp.size());
    append_chunk(out, "IEND", nullptr, 0);
    write_file(path, out);
}

std::vector<std::uint8_t> read_png_rgb(const std::string& path, index_t& w,
                                       index_t& h) {
    const std::vector<std::uint8_t> data = read_file(path);
    ST_CHECK(data.size() > 8 && std::memcmp(data.data(), kSignature, 8) == 0,
             "not a PNG file: " << path);
    w = h = 0;
    int color_type = -1;
    std::vector<std::uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= data.size()) {
        const std::uint32_t len = get_u32be(data.data() + pos);
        ST_CHECK(pos + 12 + len <= data.size(), "truncated chunk in " << path);
        const char* type = reinterpret_cast<const char*>(data.data() + pos + 4);
        const std::uint8_t* body = data.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            ST_CHECK(len == 13, "bad IHDR in " << path);
            w = get_u32be(body);
            h = get_u32be(body + 4);
            ST_CHECK(body[8] == 8, "only 8-bit PNGs supported: " << path);
            color_type = body[9];
            ST_CHECK(color_type == 2 || color_type == 6,
                     "only RGB/RGBA PNGs supported: " << path);
            ST_CHECK(body[12] == 0, "interlaced PNGs unsupported: " << path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), body, body + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    ST_CHECK(w > 0 && h > 0 && !idat.empty(), "missing image data in " << path);

    const index_t bpp = color_type == 2 ? 3 : 4;
    const size_t stride = static_cast<size_t>(w) * bpp;
    std::vector<std::uint8_t> raw(static_cast<size_t>(h) * (1 + stride));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int rc = uncompress(raw.data(), &raw_len, idat.data(),
                              static_cast<uLong>(idat.size()));
    ST_CHECK(rc == Z_OK && raw_len == raw.size(),
             "inflate failed for " << path << " (code " << rc << ")");

    // undo per-scanline filters in place
    std::vector<std::uint8_t> px(static_cast<size_t>(h) * stride);
    for (index_t y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[y * (1 + stride)];
        const std::uint8_t* src = raw.data() + y * (1 + stride) + 1;
        std::uint8_t* dst = px.data() + y * stride;
        const std::uint8_t* up = y > 0 ? px.data() + (y - 1) * stride : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            const int b = up ? up[x] : 0;
            const int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: ST_CHECK(false, "bad filter " << int(filter) << " in " << path);
            }
            dst[x] = static_cast<std::uint8_t>(v);
        }
    }
    if (bpp == 3) return px;
    std::vector<std::uint8_t> rgb(static_cast<size_t>(h) * w * 3);
    for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) {
        rgb[i * 3 + 0] = px[i * 4 + 0];
        rgb[i * 3 + 1] = px[i * 4 + 1];
        rgb[i * 3 + 2] = px[i * 4 + 2];
    }
    return rgb;
}

void write_png_grid(const std::string& path, const std::uint8_t* images,
                    index_t count, index_t res, index_t cols) {
    ST_CHECK(count > 0 && cols > 0, "empty grid");
    const index_t rows = (count + cols - 1) / cols;
    std::vector<std::uint8_t> canvas(static_cast<size_t>(rows * res) * cols * res * 3,
                                     0);
    for (index_t n = 0; n < count; ++n) {
        const index_t gy = n / cols, gx = n % cols;
        for (index_t y = 0; y < res; ++y)
            std::memcpy(canvas.data() +
                            ((gy * res + y) * cols * res + gx * res) * 3,
                        images + (n * res + y) * res * 3,
                        static_cast<size_t>(res) * 3);
    }
    write_png_rgb(path, canvas.data(), cols * res, rows * res);
}

}  // namespace strans
