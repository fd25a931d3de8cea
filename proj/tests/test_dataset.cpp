// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "oracles.hpp"
#include "reobj/dataset.hpp"

using namespace reobj;
using namespace reobj::dataset;

namespace {

DetectionRecord record(const std::string& id, const std::string& inst, BBox det = {10, 10, 4, 3}) {
    DetectionRecord r;
    r.record_id = id;
    r.scene_id = "s0";
    r.frame_id = "f" + id;
    r.image_path = "img.png";
    r.class_label = "chair";
    r.instance_id = inst;
    r.det_bbox = det;
    r.gt_bbox = det;
    r.gt_label = "chair";
    r.mask = MaskBitmap::encode(det.w, det.h, std::vector<std::uint8_t>(static_cast<std::size_t>(det.w) * det.h, 1));
    r.score = 0.5;
    return r;
}

}  // namespace

TEST_CASE("compute_iou examples") {
    CHECK(compute_iou({0, 0, 100, 100}, {0, 0, 100, 100}) == 1.0);
    CHECK(compute_iou({0, 0, 100, 100}, {0, 0, 100, 60}) == doctest::Approx(6000.0 / 10000.0));
    CHECK(compute_iou({0, 0, 10, 10}, {20, 20, 5, 5}) == 0.0);
    CHECK(compute_iou({0, 0, 10, 10}, {10, 0, 10, 10}) == 0.0);  // touching edges share no area
}

TEST_CASE("compute_iou agrees with pixel counting and is symmetric") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pos(0, 30), ext(1, 20);
    for (int i = 0; i < 2000; ++i) {
        const BBox a{pos(rng), pos(rng), ext(rng), ext(rng)};
        const BBox b{pos(rng), pos(rng), ext(rng), ext(rng)};
        const double v = compute_iou(a, b);
        CHECK(v == doctest::Approx(oracle::iou_by_pixels(a, b)).epsilon(1e-12));
        CHECK(v == compute_iou(b, a));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK((v == 1.0) == (a == b));
    }
}

TEST_CASE("validation uses a strict IoU threshold and label agreement") {
    auto r = record("a", "i");
    r.det_bbox = {0, 0, 100, 100};
    r.mask = MaskBitmap::encode(100, 100, std::vector<std::uint8_t>(10000, 1));

    r.gt_bbox = BBox{0, 0, 100, 60};  // IoU exactly 0.6
    CHECK_FALSE(validate_detection(r));
    CHECK(classify_detection(r) == Validation::low_overlap);

    r.gt_bbox = BBox{0, 0, 100, 61};  // IoU 0.61
    CHECK(validate_detection(r));

    r.gt_bbox = BBox{0, 0, 100, 90};
    r.gt_label = "table";
    CHECK_FALSE(validate_detection(r));
    CHECK(classify_detection(r) == Validation::label_mismatch);

    r.gt_label.reset();
    CHECK(classify_detection(r) == Validation::unvalidatable);
    CHECK_THROWS_AS(validate_detection(r), UnvalidatableRecord);

    r.gt_label = "chair";
    r.gt_bbox = BBox{0, 0, 100, 61};
    CHECK_FALSE(validate_detection(r, 0.61));  // threshold is configurable
}

TEST_CASE("expand_bbox examples") {
    CHECK(expand_bbox({50, 50, 100, 100}, 10, 640, 480) == BBox{40, 40, 120, 120});
    CHECK(expand_bbox({0, 0, 20, 20}, 10, 640, 480) == BBox{0, 0, 30, 30});
    CHECK(expand_bbox({630, 470, 10, 10}, 10, 640, 480) == BBox{620, 460, 20, 20});
    CHECK(expand_bbox({5, 5, 3, 3}, 0, 640, 480) == BBox{5, 5, 3, 3});
}

TEST_CASE("expand_bbox contains its input and stays inside the image") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> dim(1, 300), border(0, 40);
    for (int i = 0; i < 2000; ++i) {
        const int iw = dim(rng), ih = dim(rng);
        const int x = std::uniform_int_distribution<int>(0, iw - 1)(rng);
        const int y = std::uniform_int_distribution<int>(0, ih - 1)(rng);
        const BBox b{x, y, std::uniform_int_distribution<int>(1, iw - x)(rng),
                     std::uniform_int_distribution<int>(1, ih - y)(rng)};
        const int bd = border(rng);
        const BBox e = expand_bbox(b, bd, iw, ih);
        CHECK(e.contains(b));
        CHECK(e.x >= 0);
        CHECK(e.y >= 0);
        CHECK(e.x + e.w <= iw);
        CHECK(e.y + e.h <= ih);
        CHECK(e.x == std::max(0, b.x - bd));
        CHECK(e.x + e.w == std::min(iw, b.x + b.w + bd));
    }
}

TEST_CASE("mask run-length encoding round trips") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const int w = 1 + static_cast<int>(rng() % 17), h = 1 + static_cast<int>(rng() % 13);
        const auto m = testutil::random_mask(rng, w, h, 0.3);
        CHECK(m.consistent());
        CHECK(MaskBitmap::encode(w, h, m.decode()) == m);
    }
    const auto starts_fg = MaskBitmap::encode(2, 1, {1, 0});
    CHECK(starts_fg.runs == std::vector<std::uint32_t>{0, 1, 1});
}

TEST_CASE("crop_resize_split degenerate masks") {
    Raster gray(40, 30, 0.5f);
    auto r = record("a", "i", {10, 10, 8, 6});
    auto pair = crop_resize_split(gray, r, 2, 16);
    CHECK(pair.fg_image.width == 16);
    CHECK(pair.fg_image.height == 16);
    // The mask covers the box but not the border, so the border is background.
    r.det_bbox = {0, 0, 40, 30};
    r.mask = MaskBitmap::encode(40, 30, std::vector<std::uint8_t>(1200, 1));
    pair = crop_resize_split(gray, r, 10, 16);
    CHECK(std::all_of(pair.bg_image.pixels.begin(), pair.bg_image.pixels.end(), [](float v) { return v == 0.0f; }));
    CHECK(std::all_of(pair.fg_image.pixels.begin(), pair.fg_image.pixels.end(), [](float v) { return v == 0.5f; }));

    r.mask = MaskBitmap::encode(40, 30, std::vector<std::uint8_t>(1200, 0));
    pair = crop_resize_split(gray, r, 10, 16);
    CHECK(std::all_of(pair.fg_image.pixels.begin(), pair.fg_image.pixels.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("crop_resize_split: disjoint support and exact reconstruction") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 200; ++i) {
        const int iw = 20 + static_cast<int>(rng() % 40), ih = 20 + static_cast<int>(rng() % 40);
        const auto img = testutil::random_raster(rng, iw, ih);
        const int bw = 1 + static_cast<int>(rng() % (iw - 1)), bh = 1 + static_cast<int>(rng() % (ih - 1));
        auto r = record("a", "i", {static_cast<int>(rng() % (iw - bw + 1)), static_cast<int>(rng() % (ih - bh + 1)), bw, bh});
        r.mask = testutil::random_mask(rng, bw, bh);
        const int out = 8 + static_cast<int>(rng() % 24);
        const auto pair = crop_resize_split(img, r, static_cast<int>(rng() % 12), out);
        for (int y = 0; y < out; ++y)
            for (int x = 0; x < out; ++x) {
                bool fg_any = false, bg_any = false;
                for (int c = 0; c < 3; ++c) {
                    fg_any |= pair.fg_image.at(x, y, c) != 0.0f;
                    bg_any |= pair.bg_image.at(x, y, c) != 0.0f;
                }
                REQUIRE_FALSE((fg_any && bg_any));
            }
    }
}

TEST_CASE("crop_resize_split reconstruction equals the resized crop") {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 100; ++i) {
        const auto img = testutil::random_raster(rng, 50, 40);
        auto r = record("a", "i", {12, 9, 20, 15});
        r.mask = testutil::random_mask(rng, 20, 15);
        const auto pair = crop_resize_split(img, r, 10, 32);
        // crop of the expanded box (2,0)-(42,34), resized directly
        const BBox e = expand_bbox(r.det_bbox, 10, 50, 40);
        Raster crop(e.w, e.h);
        for (int y = 0; y < e.h; ++y)
            for (int x = 0; x < e.w; ++x)
                for (int c = 0; c < 3; ++c) crop.at(x, y, c) = img.at(e.x + x, e.y + y, c);
        const auto resized = resize_bilinear(crop, 32, 32);
        const auto full = pair.full();
        CHECK(full.pixels == resized.pixels);
    }
}

TEST_CASE("crop_resize_split places the mask at its offset in the expanded box") {
    Raster white(30, 30, 1.0f);
    auto r = record("a", "i", {10, 10, 10, 10});
    r.mask = MaskBitmap::encode(10, 10, std::vector<std::uint8_t>(100, 1));
    // expanded box is 30x30 with the mask in the middle third; identity resize
    const auto pair = crop_resize_split(white, r, 10, 30);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 30; ++x) {
            const bool inside = x >= 10 && x < 20 && y >= 10 && y < 20;
            CHECK(pair.fg_image.at(x, y, 0) == (inside ? 1.0f : 0.0f));
        }
}

TEST_CASE("crop_resize_split rejects a box outside the image") {
    Raster img(20, 20, 0.3f);
    auto r = record("a", "i", {40, 40, 4, 3});
    CHECK_THROWS_AS(crop_resize_split(img, r, 0, 8), RejectedDetection);
}

TEST_CASE("make_splits partitions every fold") {
    std::vector<DetectionRecord> recs;
    for (int i = 0; i < 9; ++i) recs.push_back(record("x" + std::to_string(i), "only"));
    const auto split = make_splits(recs, 3, 42);
    for (int f = 0; f < 3; ++f) CHECK(split.ids_with_role(f, Role::test).size() == 3);
    for (const auto& [id, roles] : split.assignments)
        CHECK(std::count(roles.begin(), roles.end(), Role::test) == 1);
}

TEST_CASE("make_splits: partition, stratification, determinism, degenerate instances") {
    std::mt19937_64 rng(9);
    std::vector<DetectionRecord> recs;
    for (int k = 0; k < 12; ++k) {
        const int views = 1 + static_cast<int>(rng() % 8);
        for (int v = 0; v < views; ++v) recs.push_back(record("r" + std::to_string(k) + "_" + std::to_string(v), "inst" + std::to_string(k)));
    }
    const auto a = make_splits(recs, 3, 77);
    const auto b = make_splits(recs, 3, 77);
    CHECK(a.assignments == b.assignments);
    CHECK(a.assignments.size() == recs.size());
    for (int f = 0; f < 3; ++f) {
        auto tr = a.ids_with_role(f, Role::train), te = a.ids_with_role(f, Role::test);
        CHECK(tr.size() + te.size() == recs.size());
        std::vector<std::string> both;
        std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::back_inserter(both));
        CHECK(both.empty());
    }
    std::map<std::string, int> views;
    for (const auto& r : recs) ++views[r.instance_id];
    for (const auto& r : recs) {
        const auto& roles = a.assignments.at(r.record_id);
        const auto tests = std::count(roles.begin(), roles.end(), Role::test);
        if (views[r.instance_id] < 3) {
            CHECK(tests == 0);
            CHECK(std::find(a.train_only_instances.begin(), a.train_only_instances.end(), r.instance_id) !=
                  a.train_only_instances.end());
        } else {
            CHECK(tests == 1);
        }
    }
    // each fold holds floor or ceil of views/folds test views of every eligible instance
    for (const auto& [inst, n] : views) {
        if (n < 3) continue;
        for (int f = 0; f < 3; ++f) {
            int t = 0;
            for (const auto& r : recs)
                if (r.instance_id == inst && a.assignments.at(r.record_id)[f] == Role::test) ++t;
            CHECK(t >= n / 3);
            CHECK(t <= (n + 2) / 3);
        }
    }
}

TEST_CASE("splits survive a file round trip") {
    std::vector<DetectionRecord> recs;
    for (int i = 0; i < 7; ++i) recs.push_back(record("y" + std::to_string(i), i < 5 ? "a" : "b"));
    const auto split = make_splits(recs, 3, 1);
    const auto dir = testutil::temp_dir("splits");
    write_splits(dir / "s.json", split);
    const auto back = read_splits(dir / "s.json");
    CHECK(back.assignments == split.assignments);
    CHECK(back.train_only_instances == split.train_only_instances);
    CHECK(back.fold_count == 3);
}

TEST_CASE("manifest parsing") {
    CHECK(parse_manifest("").empty());
    const std::string good =
        R"({"record_id":"d1","scene_id":"s","frame_id":"f","image_path":"a.png","class_label":"chair",)"
        R"("instance_id":"i1","det_bbox":[1,2,3,2],"mask":{"w":3,"h":2,"rle":[1,4,1]},"score":0.8,)"
        R"("gt_bbox":[1,2,3,2],"gt_label":"chair"})";
    const auto recs = parse_manifest(good + "\n");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].det_bbox == BBox{1, 2, 3, 2});
    CHECK(recs[0].mask.decode() == std::vector<std::uint8_t>{0, 1, 1, 1, 1, 0});
    CHECK(recs[0].gt_label == std::optional<std::string>("chair"));
    CHECK(parse_manifest(to_manifest_line(recs[0]) + "\n")[0].mask == recs[0].mask);

    SUBCASE("negative width is reported at its line") {
        std::string bad = good;
        bad.replace(bad.find("[1,2,3,2]"), 9, "[1,2,-3,2]");
        try {
            parse_manifest(good + "\n\n" + bad + "\n");
            FAIL("expected a ManifestError");
        } catch (const ManifestError& e) {
            REQUIRE(e.issues().size() == 1);
            CHECK(e.issues()[0].line == 3);
            CHECK(e.issues()[0].field == "det_bbox");
        }
    }
    SUBCASE("missing field names the field") {
        std::string bad = good;
        bad.replace(bad.find(R"("class_label":"chair",)"), 22, "");
        try {
            parse_manifest(bad);
            FAIL("expected a ManifestError");
        } catch (const ManifestError& e) {
            REQUIRE(e.issues().size() == 1);
            CHECK(e.issues()[0].field == "class_label");
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }
    SUBCASE("mask runs must cover the box") {
        std::string bad = good;
        bad.replace(bad.find("[1,4,1]"), 7, "[1,4]");
        CHECK_THROWS_AS(parse_manifest(bad), ManifestError);
    }
    SUBCASE("duplicate ids and malformed JSON are collected together") {
        try {
            parse_manifest(good + "\n" + good + "\n{not json\n");
            FAIL("expected a ManifestError");
        } catch (const ManifestError& e) {
            CHECK(e.issues().size() == 2);
        }
    }
    SUBCASE("records without ground truth parse and are unvalidatable") {
        std::string no_gt = good;
        no_gt.replace(no_gt.find(R"(,"gt_bbox")"), std::string(R"(,"gt_bbox":[1,2,3,2],"gt_label":"chair")").size(), "");
        const auto r = parse_manifest(no_gt);
        CHECK(classify_detection(r[0]) == Validation::unvalidatable);
    }
}

TEST_CASE("load_manifest reads files and write_manifest round trips") {
    const auto dir = testutil::temp_dir("manifest");
    std::vector<DetectionRecord> recs = {record("a", "i"), record("b", "j")};
    recs[1].gt_bbox.reset();
    recs[1].gt_label.reset();
    write_manifest(dir / "m.jsonl", recs);
    const auto back = load_manifest(dir / "m.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].record_id == "a");
    CHECK_FALSE(back[1].gt_bbox.has_value());
    CHECK(back[1].mask == recs[1].mask);
    CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), Error);
}

TEST_CASE("class_stats counts views and distinct instances") {
    std::vector<DetectionRecord> recs = {record("a", "i"), record("b", "i"), record("c", "j")};
    recs[2].class_label = "table";
    recs.push_back(record("d", "k"));
    const auto stats = class_stats(recs);
    CHECK(stats.at("chair").views == 3);
    CHECK(stats.at("chair").instances == 2);
    CHECK(stats.at("table").views == 1);
    CHECK(stats.at("table").instances == 1);
}
