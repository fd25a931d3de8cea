// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reobj/errors.hpp"
#include "reobj/image.hpp"
#include "reobj/kernels.hpp"

namespace reobj::encoding {

/// H x W x C tensor, row-major with channels fastest.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    FeatureMap() = default;
    FeatureMap(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t size() const noexcept { return static_cast<std::size_t>(height) * width * channels; }
    float& at(int y, int x, int c) noexcept { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const noexcept {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    /// data length matches the shape and every value is finite.
    bool valid() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

enum class Provenance { concat, full, fg_only, bg_only };

const char* to_string(Provenance p) noexcept;

struct JointEmbeddingInput {
    FeatureMap map;
    Provenance provenance = Provenance::full;
};

enum class ExtractorKind { toy, imported };

struct ExtractorConfig {
    ExtractorKind kind = ExtractorKind::toy;
    int grid = 7;
    int channels_per_stream = 8;
};

inline constexpr int kToyChannels = 8;

/// Hand-crafted per-cell descriptor used in place of a pretrained backbone.
/// Each of grid x grid cells yields
///   [meanR, meanG, meanB, stdR, stdG, stdB, mean |grad L|, fraction of nonzero pixels]
/// with L = (R+G+B)/3. Gradients use central differences clamped to the cell so
/// that a cell's descriptor depends on its own pixels only. Remainder rows and
/// columns belong to the last cell.
FeatureMap toy_extract(const Raster& image, const ExtractorConfig& cfg, kernels::Exec exec = kernels::Exec::serial);

/// Stacks channels fg-then-bg.
JointEmbeddingInput concat_features(const FeatureMap& fg, const FeatureMap& bg);

std::vector<float> flatten_features(const FeatureMap& m);
FeatureMap unflatten_features(std::span<const float> values, int height, int width, int channels);

// RTEN binary tensor file: "RTEN", u8 version=1, u8 dtype=0 (f32), u8 ndim=3,
// ndim x u32 shape (H,W,C), then H*W*C little-endian f32 values.
void write_tensor(const std::filesystem::path& path, const FeatureMap& m);
FeatureMap read_tensor(const std::filesystem::path& path);

std::vector<unsigned char> encode_tensor(const FeatureMap& m);
FeatureMap decode_tensor(std::span<const unsigned char> bytes, const std::string& origin = "<memory>");

}  // namespace reobj::encoding
