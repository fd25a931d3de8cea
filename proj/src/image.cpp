// SPDX-License-Identifier: Apache-2.0
#include "reobj/image.hpp"

#include <png.h>

#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include "reobj/errors.hpp"

namespace reobj {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error("cannot open image file: " + path.string());
    return f;
}

Raster read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw Error("png decode failed: " + path.string() + " (" + image.message + ")");
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw Error("png decode failed: " + path.string() + " (" + image.message + ")");
    }
    Raster out(static_cast<int>(image.width), static_cast<int>(image.height));
    std::transform(buffer.begin(), buffer.end(), out.pixels.begin(),
                   [](png_byte v) { return static_cast<float>(v) / 255.0f; });
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

[[noreturn]] void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

Raster read_jpeg(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegErrorManager jerr{};
    cinfo.err = jpeg_std_error(&jerr.base);
    jerr.base.error_exit = jpeg_error_exit;
    Raster out;
    std::vector<unsigned char> row;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error("jpeg decode failed: " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out = Raster(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    row.resize(static_cast<std::size_t>(cinfo.output_width) * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        const auto y = cinfo.output_scanline;
        unsigned char* rows[] = {row.data()};
        jpeg_read_scanlines(&cinfo, rows, 1);
        std::transform(row.begin(), row.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * row.size(),
                       [](unsigned char v) { return static_cast<float>(v) / 255.0f; });
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

}  // namespace

Raster resize_bilinear(const Raster& src, int out_w, int out_h) {
    if (src.empty() || out_w <= 0 || out_h <= 0) throw ShapeError("resize_bilinear: empty source or target");
    Raster out(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(x0, y0, c) * (1.0 - wx) + src.at(x1, y0, c) * wx;
                const double bottom = src.at(x0, y1, c) * (1.0 - wx) + src.at(x1, y1, c) * wx;
                out.at(x, y, c) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

Raster read_image(const std::filesystem::path& path) {
    std::array<unsigned char, 8> magic{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open image file: " + path.string());
        in.read(reinterpret_cast<char*>(magic.data()), magic.size());
        if (in.gcount() < 3) throw Error("image file too short: " + path.string());
    }
    if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N') return read_png(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
    throw Error("unsupported image format (expected PNG or JPEG): " + path.string());
}

void write_png(const std::filesystem::path& path, const Raster& image) {
    std::vector<png_byte> buffer(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), buffer.begin(), [](float v) {
        return static_cast<png_byte>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    });
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
        throw Error("png encode failed: " + path.string() + " (" + png.message + ")");
}

}  // namespace reobj
