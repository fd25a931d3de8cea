// SPDX-License-Identifier: Apache-2.0
#include "reobj/encoding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace reobj::encoding {

bool FeatureMap::valid() const noexcept {
    if (height <= 0 || width <= 0 || channels <= 0 || data.size() != size()) return false;
    return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
}

std::string FeatureMap::shape_string() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

const char* to_string(Provenance p) noexcept {
    switch (p) {
        case Provenance::concat: return "concat";
        case Provenance::full: return "full";
        case Provenance::fg_only: return "fg_only";
        case Provenance::bg_only: return "bg_only";
    }
    return "?";
}

namespace {

// Cell [begin, end) along one axis; the last cell absorbs the remainder.
std::pair<int, int> cell_span(int index, int grid, int extent) {
    const int step = extent / grid;
    const int begin = index * step;
    const int end = index == grid - 1 ? extent : begin + step;
    return {begin, end};
}

void describe_cell(const Raster& image, int cy, int cx, int grid, FeatureMap& out) {
    const auto [y0, y1] = cell_span(cy, grid, image.height);
    const auto [x0, x1] = cell_span(cx, grid, image.width);
    const double n = static_cast<double>(y1 - y0) * (x1 - x0);

    double sum[3] = {0, 0, 0};
    std::size_t nonzero = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            bool any = false;
            for (int c = 0; c < 3; ++c) {
                const float v = image.at(x, y, c);
                sum[c] += v;
                any = any || v != 0.0f;
            }
            nonzero += any ? 1 : 0;
        }
    double mean[3];
    for (int c = 0; c < 3; ++c) mean[c] = sum[c] / n;

    double sq[3] = {0, 0, 0};
    double grad = 0.0;
    auto lum = [&](int x, int y) {
        return (static_cast<double>(image.at(x, y, 0)) + image.at(x, y, 1) + image.at(x, y, 2)) / 3.0;
    };
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double d = image.at(x, y, c) - mean[c];
                sq[c] += d * d;
            }
            const double gx = (lum(std::min(x + 1, x1 - 1), y) - lum(std::max(x - 1, x0), y)) / 2.0;
            const double gy = (lum(x, std::min(y + 1, y1 - 1)) - lum(x, std::max(y - 1, y0))) / 2.0;
            grad += std::sqrt(gx * gx + gy * gy);
        }

    for (int c = 0; c < 3; ++c) {
        out.at(cy, cx, c) = static_cast<float>(mean[c]);
        out.at(cy, cx, 3 + c) = static_cast<float>(std::sqrt(sq[c] / n));
    }
    out.at(cy, cx, 6) = static_cast<float>(grad / n);
    out.at(cy, cx, 7) = static_cast<float>(static_cast<double>(nonzero) / n);
}

}  // namespace

FeatureMap toy_extract(const Raster& image, const ExtractorConfig& cfg, kernels::Exec exec) {
    if (cfg.kind != ExtractorKind::toy) throw Error("toy_extract: extractor kind is not toy");
    if (cfg.grid < 1) throw ShapeError("toy_extract: grid must be >= 1");
    if (cfg.channels_per_stream != kToyChannels)
        throw ShapeError("toy_extract: the toy descriptor has exactly 8 channels per stream");
    if (image.width != image.height) throw ShapeError("toy_extract: image must be square");
    if (image.width < cfg.grid) throw ShapeError("toy_extract: image smaller than the grid");

    FeatureMap out(cfg.grid, cfg.grid, kToyChannels);
    const int cells = cfg.grid * cfg.grid;
#pragma omp parallel for schedule(static) if (exec == kernels::Exec::parallel)
    for (int i = 0; i < cells; ++i) describe_cell(image, i / cfg.grid, i % cfg.grid, cfg.grid, out);
    return out;
}

JointEmbeddingInput concat_features(const FeatureMap& fg, const FeatureMap& bg) {
    if (fg.height != bg.height || fg.width != bg.width)
        throw ShapeError("concat_features: spatial shapes differ: fg " + fg.shape_string() + " vs bg " +
                         bg.shape_string());
    JointEmbeddingInput joint{FeatureMap(fg.height, fg.width, fg.channels + bg.channels), Provenance::concat};
    auto dst = joint.map.data.begin();
    const std::size_t positions = static_cast<std::size_t>(fg.height) * fg.width;
    for (std::size_t p = 0; p < positions; ++p) {
        dst = std::copy_n(fg.data.begin() + static_cast<std::ptrdiff_t>(p * fg.channels), fg.channels, dst);
        dst = std::copy_n(bg.data.begin() + static_cast<std::ptrdiff_t>(p * bg.channels), bg.channels, dst);
    }
    return joint;
}

std::vector<float> flatten_features(const FeatureMap& m) { return m.data; }

FeatureMap unflatten_features(std::span<const float> values, int height, int width, int channels) {
    FeatureMap m(height, width, channels);
    if (values.size() != m.size())
        throw ShapeError("unflatten_features: " + std::to_string(values.size()) + " values for shape " +
                         m.shape_string());
    std::copy(values.begin(), values.end(), m.data.begin());
    return m;
}

// ---------------------------------------------------------------------------
// RTEN

namespace {

constexpr char kMagic[4] = {'R', 'T', 'E', 'N'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::size_t kHeaderSize = 4 + 3 + 3 * 4;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

}  // namespace

std::vector<unsigned char> encode_tensor(const FeatureMap& m) {
    if (!m.valid()) throw ShapeError("write_tensor: map is malformed or has non-finite values (" + m.shape_string() + ")");
    std::vector<unsigned char> out;
    out.reserve(kHeaderSize + m.size() * 4);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(kVersion);
    out.push_back(kDtypeF32);
    out.push_back(3);
    put_u32(out, static_cast<std::uint32_t>(m.height));
    put_u32(out, static_cast<std::uint32_t>(m.width));
    put_u32(out, static_cast<std::uint32_t>(m.channels));
    for (float v : m.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

FeatureMap decode_tensor(std::span<const unsigned char> bytes, const std::string& origin) {
    if (bytes.size() < 4) throw FormatError(FormatErrc::truncated, origin, "missing magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(FormatErrc::bad_magic, origin, "expected RTEN");
    if (bytes.size() < 7) throw FormatError(FormatErrc::truncated, origin, "header");
    if (bytes[4] != kVersion)
        throw FormatError(FormatErrc::unsupported_version, origin, "version " + std::to_string(bytes[4]));
    if (bytes[5] != kDtypeF32)
        throw FormatError(FormatErrc::unsupported_dtype, origin, "dtype " + std::to_string(bytes[5]));
    if (bytes[6] != 3) throw FormatError(FormatErrc::bad_shape, origin, "ndim " + std::to_string(bytes[6]));
    if (bytes.size() < kHeaderSize) throw FormatError(FormatErrc::truncated, origin, "shape");
    const std::uint32_t h = get_u32(bytes.data() + 7);
    const std::uint32_t w = get_u32(bytes.data() + 11);
    const std::uint32_t c = get_u32(bytes.data() + 15);
    if (h == 0 || w == 0 || c == 0 || h > (1u << 20) || w > (1u << 20) || c > (1u << 20))
        throw FormatError(FormatErrc::bad_shape, origin,
                          std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c));
    const std::uint64_t count = std::uint64_t{h} * w * c;
    const std::uint64_t payload = bytes.size() - kHeaderSize;
    if (payload < count * 4)
        throw FormatError(FormatErrc::truncated, origin,
                          "payload " + std::to_string(payload) + " bytes, need " + std::to_string(count * 4));
    if (payload > count * 4) throw FormatError(FormatErrc::trailing_data, origin, "");
    FeatureMap m(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    const unsigned char* p = bytes.data() + kHeaderSize;
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
    return m;
}

void write_tensor(const std::filesystem::path& path, const FeatureMap& m) {
    const auto bytes = encode_tensor(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(FormatErrc::io, path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::io, path.string(), "write failed");
}

FeatureMap read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io, path.string(), "cannot open for reading");
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes, path.string());
}

}  // namespace reobj::encoding

namespace reobj {

const char* to_string(FormatErrc code) noexcept {
    switch (code) {
        case FormatErrc::io: return "io error";
        case FormatErrc::bad_magic: return "bad magic";
        case FormatErrc::unsupported_version: return "unsupported version";
        case FormatErrc::unsupported_dtype: return "unsupported dtype";
        case FormatErrc::bad_shape: return "bad shape";
        case FormatErrc::truncated: return "truncated";
        case FormatErrc::trailing_data: return "trailing data";
    }
    return "?";
}

}  // namespace reobj
