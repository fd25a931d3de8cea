// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "reobj/dataset.hpp"
#include "reobj/image.hpp"

namespace reobj::eval {

enum class Appearance { identical, distinct };

Appearance parse_appearance(const std::string& s);
const char* to_string(Appearance a) noexcept;

/// Synthetic rigid scene: every instance is the same kind of object standing in
/// front of its own surroundings. `fg` controls whether instances share one
/// object appearance; `bg` whether each instance gets its own background
/// texture. Views of an instance differ by a small object translation, a
/// parallax shift of the background, a global exposure gain and additive
/// Gaussian noise.
struct SynthConfig {
    int instances = 10;
    int views = 6;
    Appearance fg = Appearance::identical;
    Appearance bg = Appearance::distinct;
    double noise = 0.02;
    std::uint64_t seed = 0;

    int image_width = 320;
    int image_height = 240;
    int object_size = 96;
    int max_jitter = 3;    // object translation, px
    int max_parallax = 2;  // background shift relative to the object, px
    double max_gain_change = 0.15;  // per-view exposure gain drawn from [1-g, 1+g]
    double mask_inset = 2.0;        // annotated mask lies this far inside the silhouette, px
    std::string class_label = "chair";
    std::string scene_id = "scene0000";

    void validate() const;
};

struct SynthDataset {
    std::vector<dataset::DetectionRecord> records;
    /// (relative image path, raster) in record order.
    std::vector<std::pair<std::string, Raster>> images;
};

SynthDataset synth_benchmark(const SynthConfig& cfg);

/// Writes manifest.jsonl and images/*.png under `dir`.
void write_synth(const std::filesystem::path& dir, const SynthDataset& data);

}  // namespace reobj::eval
