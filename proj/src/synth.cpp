// SPDX-License-Identifier: Apache-2.0
#include "reobj/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace reobj::eval {

Appearance parse_appearance(const std::string& s) {
    if (s == "identical") return Appearance::identical;
    if (s == "distinct") return Appearance::distinct;
    throw Error("unknown appearance '" + s + "' (expected identical or distinct)");
}

const char* to_string(Appearance a) noexcept { return a == Appearance::identical ? "identical" : "distinct"; }

void SynthConfig::validate() const {
    if (instances < 2) throw Error("synth: need at least 2 instances");
    if (views < 2) throw Error("synth: need at least 2 views per instance");
    if (!(noise >= 0.0)) throw Error("synth: noise must be >= 0");
    if (object_size < 8 || object_size + 2 * max_jitter + 2 > std::min(image_width, image_height))
        throw Error("synth: object does not fit the image");
    if (max_jitter < 0 || max_parallax < 0) throw Error("synth: jitter and parallax must be >= 0");
    if (!(max_gain_change >= 0.0 && max_gain_change < 1.0)) throw Error("synth: gain change must lie in [0, 1)");
    if (!(mask_inset >= 0.0 && 2.0 * mask_inset < object_size)) throw Error("synth: mask inset too large");
}

namespace {

using Color = std::array<double, 3>;

// Background: base colour plus two oriented sinusoidal gratings, in world coordinates.
struct Texture {
    Color base{};
    struct Grating {
        double fx = 0, fy = 0, phase = 0;
        Color amplitude{};
    };
    std::array<Grating, 2> gratings{};

    Color at(double u, double v) const {
        Color c = base;
        for (const auto& g : gratings) {
            const double s = std::sin(2.0 * std::numbers::pi * (g.fx * u + g.fy * v) + g.phase);
            for (int i = 0; i < 3; ++i) c[i] += g.amplitude[i] * s;
        }
        return c;
    }
};

Texture random_texture(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Texture t;
    // Rooms share a muted palette; instances differ by tint and pattern.
    const Color room{0.55, 0.50, 0.45};
    for (int i = 0; i < 3; ++i) t.base[i] = room[i] + (unit(rng) - 0.5) * 0.30;
    for (auto& g : t.gratings) {
        const double theta = unit(rng) * std::numbers::pi;
        const double period = 6.0 + unit(rng) * 26.0;
        g.fx = std::cos(theta) / period;
        g.fy = std::sin(theta) / period;
        g.phase = unit(rng) * 2.0 * std::numbers::pi;
        const double amp = 0.05 + unit(rng) * 0.15;
        for (int i = 0; i < 3; ++i) g.amplitude[i] = amp * (0.6 + 0.8 * unit(rng));
    }
    return t;
}

Color hue_color(double hue) {
    // HSV with s=0.75, v=0.85
    const double s = 0.75, v = 0.85;
    const double h6 = hue * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1 - s), q = v * (1 - s * f), r = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: return {v, r, p};
        case 1: return {q, v, p};
        case 2: return {p, v, r};
        case 3: return {p, q, v};
        case 4: return {r, p, v};
        default: return {v, p, q};
    }
}

// Object: filled ellipse inscribed in its box, with a shared vertical shading.
struct ObjectLook {
    Color color{};
    Color at(double ly) const {
        const double shade = 0.85 + 0.3 * ly;  // ly in [0,1] from top to bottom
        return {color[0] * shade, color[1] * shade, color[2] * shade};
    }
};

// Ellipse inscribed in a size x size box, shrunk by `inset` px on every side.
bool inside_ellipse(int x, int y, int size, double inset) {
    const double r = 0.5 * size - inset;
    const double dx = (x + 0.5 - 0.5 * size) / r;
    const double dy = (y + 0.5 - 0.5 * size) / r;
    return dx * dx + dy * dy <= 1.0;
}

}  // namespace

SynthDataset synth_benchmark(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Texture> textures;
    const Texture shared_texture = random_texture(rng);
    for (int k = 0; k < cfg.instances; ++k)
        textures.push_back(cfg.bg == Appearance::distinct ? random_texture(rng) : shared_texture);

    std::vector<ObjectLook> looks;
    const ObjectLook shared_look{{0.45, 0.30, 0.20}};
    for (int k = 0; k < cfg.instances; ++k)
        looks.push_back(cfg.fg == Appearance::distinct
                            ? ObjectLook{hue_color(static_cast<double>(k) / cfg.instances)}
                            : shared_look);

    const int size = cfg.object_size;
    // The annotated mask sits a couple of pixels inside the rendered silhouette, so
    // bilinear resampling at the mask edge does not blend background into the
    // foreground stream.
    std::vector<std::uint8_t> object_bits(static_cast<std::size_t>(size) * size);
    std::vector<std::uint8_t> mask_bits(object_bits.size());
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            object_bits[static_cast<std::size_t>(y) * size + x] = inside_ellipse(x, y, size, 0.0);
            mask_bits[static_cast<std::size_t>(y) * size + x] = inside_ellipse(x, y, size, cfg.mask_inset);
        }
    const auto mask = dataset::MaskBitmap::encode(size, size, mask_bits);

    std::uniform_int_distribution<int> jitter(-cfg.max_jitter, cfg.max_jitter);
    std::uniform_real_distribution<double> parallax(-cfg.max_parallax, cfg.max_parallax);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> gain(1.0 - cfg.max_gain_change, 1.0 + cfg.max_gain_change);

    SynthDataset out;
    for (int k = 0; k < cfg.instances; ++k) {
        for (int v = 0; v < cfg.views; ++v) {
            const int jx = jitter(rng), jy = jitter(rng);
            const double px = parallax(rng), py = parallax(rng);
            const double g = gain(rng);
            const int x0 = (cfg.image_width - size) / 2 + jx;
            const int y0 = (cfg.image_height - size) / 2 + jy;

            Raster img(cfg.image_width, cfg.image_height);
            for (int y = 0; y < cfg.image_height; ++y)
                for (int x = 0; x < cfg.image_width; ++x) {
                    const int lx = x - x0, ly = y - y0;
                    const bool on_object = lx >= 0 && ly >= 0 && lx < size && ly < size &&
                                           object_bits[static_cast<std::size_t>(ly) * size + lx];
                    // Background lives in world coordinates: it moves with the camera
                    // (jitter) and additionally by parallax.
                    const Color c = on_object ? looks[k].at((ly + 0.5) / size)
                                              : textures[k].at(x - jx + px, y - jy + py);
                    for (int ch = 0; ch < 3; ++ch) {
                        const double n = cfg.noise > 0.0 ? cfg.noise * gauss(rng) : 0.0;
                        img.at(x, y, ch) = static_cast<float>(std::clamp(g * c[ch] + n, 0.0, 1.0));
                    }
                }

            char id[32];
            std::snprintf(id, sizeof id, "i%02d_v%02d", k, v);
            char inst[32];
            std::snprintf(inst, sizeof inst, "inst%02d", k);

            dataset::DetectionRecord r;
            r.record_id = id;
            r.scene_id = cfg.scene_id;
            r.frame_id = id;
            r.image_path = std::string("images/") + id + ".png";
            r.class_label = cfg.class_label;
            r.instance_id = inst;
            r.det_bbox = {x0, y0, size, size};
            r.gt_bbox = dataset::BBox{x0 + 1, y0 - 1, size, size};
            r.gt_label = cfg.class_label;
            r.mask = mask;
            r.score = 0.9;
            out.records.push_back(std::move(r));
            out.images.emplace_back(out.records.back().image_path, std::move(img));
        }
    }
    return out;
}

void write_synth(const std::filesystem::path& dir, const SynthDataset& data) {
    std::filesystem::create_directories(dir / "images");
    for (const auto& [rel, img] : data.images) write_png(dir / rel, img);
    dataset::write_manifest(dir / "manifest.jsonl", data.records);
}

}  // namespace reobj::eval
