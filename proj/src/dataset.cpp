// SPDX-License-Identifier: Apache-2.0
#include "reobj/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace reobj::dataset {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Mask

std::vector<std::uint8_t> MaskBitmap::decode() const {
    if (!consistent()) throw ShapeError("mask run lengths do not sum to width*height");
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<std::size_t>(width) * height);
    std::uint8_t value = 0;
    for (auto run : runs) {
        bits.insert(bits.end(), run, value);
        value ^= 1u;
    }
    return bits;
}

MaskBitmap MaskBitmap::encode(int width, int height, const std::vector<std::uint8_t>& bits) {
    if (bits.size() != static_cast<std::size_t>(width) * height)
        throw ShapeError("mask bit count does not match width*height");
    MaskBitmap m;
    m.width = width;
    m.height = height;
    std::uint8_t current = 0;
    std::uint32_t count = 0;
    for (auto b : bits) {
        const std::uint8_t v = b ? 1 : 0;
        if (v != current) {
            m.runs.push_back(count);
            count = 0;
            current = v;
        }
        ++count;
    }
    m.runs.push_back(count);
    return m;
}

bool MaskBitmap::consistent() const noexcept {
    if (width <= 0 || height <= 0) return false;
    const std::uint64_t total = std::accumulate(runs.begin(), runs.end(), std::uint64_t{0});
    return total == static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
}

Raster CropPair::full() const {
    Raster out = fg_image;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] += bg_image.pixels[i];
    return out;
}

std::vector<std::string> SplitAssignment::ids_with_role(int fold, Role role) const {
    std::vector<std::string> ids;
    for (const auto& [id, roles] : assignments)
        if (roles.at(static_cast<std::size_t>(fold)) == role) ids.push_back(id);
    return ids;
}

// ---------------------------------------------------------------------------
// Geometry and validation

double compute_iou(const BBox& a, const BBox& b) noexcept {
    const std::int64_t ix0 = std::max(a.x, b.x);
    const std::int64_t iy0 = std::max(a.y, b.y);
    const std::int64_t ix1 = std::min<std::int64_t>(std::int64_t{a.x} + a.w, std::int64_t{b.x} + b.w);
    const std::int64_t iy1 = std::min<std::int64_t>(std::int64_t{a.y} + a.h, std::int64_t{b.y} + b.h);
    if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
    const std::int64_t inter = (ix1 - ix0) * (iy1 - iy0);
    const std::int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

const char* to_string(Validation v) noexcept {
    switch (v) {
        case Validation::valid: return "valid";
        case Validation::low_overlap: return "low_overlap";
        case Validation::label_mismatch: return "label_mismatch";
        case Validation::unvalidatable: return "unvalidatable";
    }
    return "?";
}

Validation classify_detection(const DetectionRecord& rec, double iou_threshold) {
    if (!rec.gt_bbox || !rec.gt_label) return Validation::unvalidatable;
    if (!(compute_iou(rec.det_bbox, *rec.gt_bbox) > iou_threshold)) return Validation::low_overlap;
    if (rec.class_label != *rec.gt_label) return Validation::label_mismatch;
    return Validation::valid;
}

bool validate_detection(const DetectionRecord& rec, double iou_threshold) {
    const auto v = classify_detection(rec, iou_threshold);
    if (v == Validation::unvalidatable)
        throw UnvalidatableRecord("record " + rec.record_id + " has no ground-truth box or label");
    return v == Validation::valid;
}

BBox expand_bbox(const BBox& b, int border, int img_w, int img_h) noexcept {
    const int x0 = std::clamp(b.x - border, 0, img_w);
    const int y0 = std::clamp(b.y - border, 0, img_h);
    const int x1 = std::clamp(b.x + b.w + border, 0, img_w);
    const int y1 = std::clamp(b.y + b.h + border, 0, img_h);
    return BBox{x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

CropPair crop_resize_split(const Raster& image, const DetectionRecord& rec, int border, int out_size) {
    if (out_size <= 0) throw ShapeError("crop size must be positive");
    const BBox box = expand_bbox(rec.det_bbox, border, image.width, image.height);
    if (!box.valid())
        throw RejectedDetection("record " + rec.record_id + ": expanded box is empty after clamping to the image");
    if (rec.mask.width != rec.det_bbox.w || rec.mask.height != rec.det_bbox.h)
        throw ShapeError("record " + rec.record_id + ": mask size differs from detection box");

    Raster crop(box.w, box.h);
    for (int y = 0; y < box.h; ++y)
        for (int x = 0; x < box.w; ++x)
            for (int c = 0; c < 3; ++c) crop.at(x, y, c) = image.at(box.x + x, box.y + y, c);
    const Raster resized = resize_bilinear(crop, out_size, out_size);

    // Mask in expanded-box coordinates; pixels outside the detection box are background.
    const auto det_bits = rec.mask.decode();
    std::vector<std::uint8_t> box_bits(static_cast<std::size_t>(box.w) * box.h, 0);
    const int off_x = rec.det_bbox.x - box.x;
    const int off_y = rec.det_bbox.y - box.y;
    for (int y = 0; y < rec.det_bbox.h; ++y) {
        const int by = y + off_y;
        if (by < 0 || by >= box.h) continue;
        for (int x = 0; x < rec.det_bbox.w; ++x) {
            const int bx = x + off_x;
            if (bx < 0 || bx >= box.w) continue;
            box_bits[static_cast<std::size_t>(by) * box.w + bx] =
                det_bits[static_cast<std::size_t>(y) * rec.det_bbox.w + x];
        }
    }

    CropPair pair{Raster(out_size, out_size), Raster(out_size, out_size), rec.record_id};
    for (int y = 0; y < out_size; ++y) {
        const int sy = std::min(box.h - 1, static_cast<int>(std::floor((y + 0.5) * box.h / out_size)));
        for (int x = 0; x < out_size; ++x) {
            const int sx = std::min(box.w - 1, static_cast<int>(std::floor((x + 0.5) * box.w / out_size)));
            const bool fg = box_bits[static_cast<std::size_t>(sy) * box.w + sx] != 0;
            Raster& dst = fg ? pair.fg_image : pair.bg_image;
            for (int c = 0; c < 3; ++c) dst.at(x, y, c) = resized.at(x, y, c);
        }
    }
    return pair;
}

// ---------------------------------------------------------------------------
// Splits

SplitAssignment make_splits(const std::vector<DetectionRecord>& records, int folds, std::uint64_t seed) {
    if (records.empty()) throw Error("make_splits: no records");
    if (folds < 2) throw Error("make_splits: fold count must be at least 2");

    std::map<std::string, std::vector<std::string>> by_instance;
    for (const auto& r : records) by_instance[r.instance_id].push_back(r.record_id);

    SplitAssignment split;
    split.fold_count = folds;
    split.seed = seed;
    std::mt19937_64 rng(seed);
    std::size_t cursor = 0;  // round-robin position carried across instances for balanced folds
    for (auto& [instance, ids] : by_instance) {
        std::sort(ids.begin(), ids.end());
        if (ids.size() < static_cast<std::size_t>(folds)) {
            split.train_only_instances.push_back(instance);
            for (const auto& id : ids) split.assignments[id].assign(folds, Role::train);
            continue;
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        for (const auto& id : ids) {
            auto& roles = split.assignments[id];
            roles.assign(folds, Role::train);
            roles[cursor % folds] = Role::test;
            ++cursor;
        }
    }
    if (split.assignments.size() != records.size()) throw Error("make_splits: duplicate record ids");
    return split;
}

void write_splits(const std::filesystem::path& path, const SplitAssignment& split) {
    json j;
    j["fold_count"] = split.fold_count;
    j["seed"] = split.seed;
    j["train_only_instances"] = split.train_only_instances;
    json assignments = json::object();
    for (const auto& [id, roles] : split.assignments) {
        json arr = json::array();
        for (auto r : roles) arr.push_back(r == Role::train ? "train" : "test");
        assignments[id] = std::move(arr);
    }
    j["assignments"] = std::move(assignments);
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

SplitAssignment read_splits(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    const json j = json::parse(in);
    SplitAssignment split;
    split.fold_count = j.at("fold_count").get<int>();
    split.seed = j.at("seed").get<std::uint64_t>();
    split.train_only_instances = j.at("train_only_instances").get<std::vector<std::string>>();
    for (const auto& [id, arr] : j.at("assignments").items()) {
        auto& roles = split.assignments[id];
        for (const auto& r : arr) roles.push_back(r.get<std::string>() == "test" ? Role::test : Role::train);
        if (roles.size() != static_cast<std::size_t>(split.fold_count))
            throw Error("splits file: record " + id + " has wrong fold count");
    }
    return split;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::string format_issues(const std::vector<ManifestIssue>& issues) {
    std::ostringstream os;
    os << "manifest has " << issues.size() << " malformed line(s)";
    for (const auto& i : issues) os << "\n  line " << i.line << ", field '" << i.field << "': " << i.message;
    return os.str();
}

struct FieldError {
    std::string field;
    std::string message;
};

const json& require(const json& obj, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) throw FieldError{field, "missing required field"};
    return *it;
}

std::string get_string(const json& obj, const char* field) {
    const json& v = require(obj, field);
    if (!v.is_string()) throw FieldError{field, "expected a string"};
    return v.get<std::string>();
}

BBox get_box(const json& v, const char* field) {
    if (!v.is_array() || v.size() != 4) throw FieldError{field, "expected [x,y,w,h]"};
    for (const auto& e : v)
        if (!e.is_number_integer()) throw FieldError{field, "box coordinates must be integers"};
    BBox b{v[0].get<int>(), v[1].get<int>(), v[2].get<int>(), v[3].get<int>()};
    if (!b.valid()) throw FieldError{field, "box width and height must be positive"};
    return b;
}

DetectionRecord parse_record(const json& j, std::size_t line) {
    if (!j.is_object()) throw FieldError{"<line>", "expected a JSON object"};
    DetectionRecord r;
    if (auto it = j.find("record_id"); it != j.end() && !it->is_null()) {
        if (!it->is_string() || it->get<std::string>().empty()) throw FieldError{"record_id", "expected a non-empty string"};
        r.record_id = it->get<std::string>();
    } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "det%06zu", line);
        r.record_id = buf;
    }
    r.scene_id = get_string(j, "scene_id");
    r.frame_id = get_string(j, "frame_id");
    r.image_path = get_string(j, "image_path");
    r.class_label = get_string(j, "class_label");
    r.instance_id = get_string(j, "instance_id");
    r.det_bbox = get_box(require(j, "det_bbox"), "det_bbox");
    if (auto it = j.find("gt_bbox"); it != j.end() && !it->is_null()) r.gt_bbox = get_box(*it, "gt_bbox");
    if (auto it = j.find("gt_label"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw FieldError{"gt_label", "expected a string"};
        r.gt_label = it->get<std::string>();
    }

    const json& mask = require(j, "mask");
    if (!mask.is_object()) throw FieldError{"mask", "expected {\"w\",\"h\",\"rle\"}"};
    const json& mw = require(mask, "w");
    const json& mh = require(mask, "h");
    const json& rle = require(mask, "rle");
    if (!mw.is_number_integer() || !mh.is_number_integer()) throw FieldError{"mask", "w and h must be integers"};
    if (!rle.is_array()) throw FieldError{"mask", "rle must be an array"};
    r.mask.width = mw.get<int>();
    r.mask.height = mh.get<int>();
    for (const auto& run : rle) {
        if (!run.is_number_integer() || run.get<std::int64_t>() < 0) throw FieldError{"mask", "run lengths must be non-negative integers"};
        r.mask.runs.push_back(run.get<std::uint32_t>());
    }
    if (r.mask.width != r.det_bbox.w || r.mask.height != r.det_bbox.h)
        throw FieldError{"mask", "mask dimensions differ from det_bbox"};
    if (!r.mask.consistent()) throw FieldError{"mask", "run lengths do not sum to w*h"};

    const json& score = require(j, "score");
    if (!score.is_number()) throw FieldError{"score", "expected a number"};
    r.score = score.get<double>();
    if (!(r.score >= 0.0 && r.score <= 1.0)) throw FieldError{"score", "score outside [0,1]"};
    return r;
}

}  // namespace

ManifestError::ManifestError(std::vector<ManifestIssue> issues)
    : Error(format_issues(issues)), issues_(std::move(issues)) {}

std::vector<DetectionRecord> parse_manifest(const std::string& text) {
    std::vector<DetectionRecord> records;
    std::vector<ManifestIssue> issues;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        try {
            auto rec = parse_record(json::parse(line), line_no);
            if (!seen.insert(rec.record_id).second) {
                issues.push_back({line_no, "record_id", "duplicate record id " + rec.record_id});
                continue;
            }
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            issues.push_back({line_no, "<json>", e.what()});
        } catch (const FieldError& e) {
            issues.push_back({line_no, e.field, e.message});
        }
    }
    if (!issues.empty()) throw ManifestError(std::move(issues));
    return records;
}

std::vector<DetectionRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open manifest: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str());
}

std::string to_manifest_line(const DetectionRecord& rec) {
    auto box = [](const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); };
    // ordered_json keeps the field order stable and readable
    nlohmann::ordered_json j;
    j["record_id"] = rec.record_id;
    j["scene_id"] = rec.scene_id;
    j["frame_id"] = rec.frame_id;
    j["image_path"] = rec.image_path;
    j["class_label"] = rec.class_label;
    j["instance_id"] = rec.instance_id;
    j["det_bbox"] = box(rec.det_bbox);
    j["gt_bbox"] = rec.gt_bbox ? box(*rec.gt_bbox) : json(nullptr);
    j["gt_label"] = rec.gt_label ? json(*rec.gt_label) : json(nullptr);
    j["mask"] = {{"w", rec.mask.width}, {"h", rec.mask.height}, {"rle", rec.mask.runs}};
    j["score"] = rec.score;
    return j.dump();
}

void write_manifest(const std::filesystem::path& path, const std::vector<DetectionRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path.string());
    for (const auto& r : records) out << to_manifest_line(r) << '\n';
}

std::map<std::string, ClassStats> class_stats(const std::vector<DetectionRecord>& records) {
    std::map<std::string, std::set<std::string>> instances;
    std::map<std::string, ClassStats> stats;
    for (const auto& r : records) {
        ++stats[r.class_label].views;
        instances[r.class_label].insert(r.instance_id);
    }
    for (auto& [label, s] : stats) s.instances = instances[label].size();
    return stats;
}

}  // namespace reobj::dataset
