// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reobj/errors.hpp"
#include "reobj/image.hpp"

namespace reobj::dataset {

/// Axis-aligned box in integer pixels; (x, y) is the top-left corner.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool valid() const noexcept { return w > 0 && h > 0; }
    std::int64_t area() const noexcept { return static_cast<std::int64_t>(w) * h; }
    bool contains(const BBox& o) const noexcept {
        return o.x >= x && o.y >= y && o.x + o.w <= x + w && o.y + o.h <= y + h;
    }
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Row-major run-length encoded boolean raster. Runs alternate background,
/// foreground, background, ... and always start with a (possibly empty)
/// background run.
struct MaskBitmap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> runs;

    std::vector<std::uint8_t> decode() const;
    static MaskBitmap encode(int width, int height, const std::vector<std::uint8_t>& bits);

    /// Sum of runs equals width*height.
    bool consistent() const noexcept;
    friend bool operator==(const MaskBitmap&, const MaskBitmap&) = default;
};

struct DetectionRecord {
    std::string record_id;
    std::string scene_id;
    std::string frame_id;
    std::string image_path;
    std::string class_label;
    std::string instance_id;
    BBox det_bbox;
    std::optional<BBox> gt_bbox;
    std::optional<std::string> gt_label;
    MaskBitmap mask;
    double score = 1.0;
};

struct CropPair {
    Raster fg_image;
    Raster bg_image;
    std::string record_id;

    Raster full() const;
};

enum class Role : std::uint8_t { train, test };

struct SplitAssignment {
    int fold_count = 0;
    std::uint64_t seed = 0;
    /// assignments[record_id][fold]
    std::map<std::string, std::vector<Role>> assignments;
    /// Instances with fewer views than folds; their views are train in every fold.
    std::vector<std::string> train_only_instances;

    std::vector<std::string> ids_with_role(int fold, Role role) const;
};

inline constexpr double kDefaultIouThreshold = 0.6;
inline constexpr int kDefaultBorder = 10;
inline constexpr int kDefaultCropSize = 224;

double compute_iou(const BBox& a, const BBox& b) noexcept;

enum class Validation { valid, low_overlap, label_mismatch, unvalidatable };

const char* to_string(Validation v) noexcept;

/// Classifies a detection against its ground truth. IoU must be strictly greater
/// than the threshold and the labels must agree.
Validation classify_detection(const DetectionRecord& rec, double iou_threshold = kDefaultIouThreshold);

class UnvalidatableRecord : public Error {
public:
    using Error::Error;
};

/// Boolean form of classify_detection. Throws UnvalidatableRecord when the record
/// carries no ground truth.
bool validate_detection(const DetectionRecord& rec, double iou_threshold = kDefaultIouThreshold);

/// Grows every side by `border`, clamped to [0,img_w) x [0,img_h). The result
/// has zero extent when the box lies entirely outside the image.
BBox expand_bbox(const BBox& b, int border, int img_w, int img_h) noexcept;

class RejectedDetection : public Error {
public:
    using Error::Error;
};

/// Crops the expanded box, resizes it to out_size x out_size (bilinear) and splits it
/// into masked foreground and background using the nearest-neighbour resized mask.
CropPair crop_resize_split(const Raster& image, const DetectionRecord& rec, int border = kDefaultBorder,
                           int out_size = kDefaultCropSize);

/// View-level split stratified per instance.
SplitAssignment make_splits(const std::vector<DetectionRecord>& records, int folds, std::uint64_t seed);

struct ManifestIssue {
    std::size_t line = 0;
    std::string field;
    std::string message;
};

class ManifestError : public Error {
public:
    explicit ManifestError(std::vector<ManifestIssue> issues);
    const std::vector<ManifestIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<ManifestIssue> issues_;
};

/// Parses a JSONL manifest. All malformed lines are collected and reported together.
std::vector<DetectionRecord> load_manifest(const std::filesystem::path& path);
std::vector<DetectionRecord> parse_manifest(const std::string& text);

std::string to_manifest_line(const DetectionRecord& rec);
void write_manifest(const std::filesystem::path& path, const std::vector<DetectionRecord>& records);

struct ClassStats {
    std::size_t views = 0;
    std::size_t instances = 0;
};

/// Per-class number of views and unique instances (the bookkeeping behind a
/// "views / instances per class" table).
std::map<std::string, ClassStats> class_stats(const std::vector<DetectionRecord>& records);

void write_splits(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment read_splits(const std::filesystem::path& path);

}  // namespace reobj::dataset
