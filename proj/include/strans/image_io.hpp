#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "strans/common.hpp"

// Minimal PNG support: 8-bit RGB out, 8-bit RGB/RGBA in, no interlacing.
// Encoding is fully deterministic (fixed filter and compression level), so
// identical pixels produce identical files.

namespace strans {

void write_png_rgb(const std::string& path, const std::uint8_t* rgb, index_t w,
                   index_t h);

/// Returns w*h*3 bytes row-major; accepts color type 2 (RGB) and 6 (RGBA,
/// alpha dropped), bit depth 8, non-interlaced.
std::vector<std::uint8_t> read_png_rgb(const std::string& path, index_t& w,
                                       index_t& h);

/// Tiles `count` images of side `res` (tightly packed u8 RGB) into a
/// `cols`-wide grid and writes one PNG.
void write_png_grid(const std::string& path, const std::uint8_t* images,
                    index_t count, index_t res, index_t cols);

}  // namespace strans
