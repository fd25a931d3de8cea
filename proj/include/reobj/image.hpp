// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace reobj {

/// Interleaved RGB raster (row-major, HWC) with values in [0,1].
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Raster() = default;
    Raster(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    float& at(int x, int y, int c) noexcept { return pixels[index(x, y, c)]; }
    float at(int x, int y, int c) const noexcept { return pixels[index(x, y, c)]; }

    bool empty() const noexcept { return width == 0 || height == 0; }
};

/// Bilinear resample with half-pixel centres, edge samples clamped.
Raster resize_bilinear(const Raster& src, int out_w, int out_h);

/// Decodes an 8-bit PNG or JPEG file; values are mapped to [0,1] by v/255.
Raster read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Values are clamped to [0,1] and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Raster& image);

}  // namespace reobj
