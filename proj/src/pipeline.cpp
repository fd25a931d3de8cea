// SPDX-License-Identifier: Apache-2.0
#include "reobj/pipeline.hpp"

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "reobj/convblock.hpp"
#include "reobj/model_io.hpp"

namespace reobj::cli {

using nlohmann::json;

std::string canonical(const json& config) { return config.dump(); }

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
    return os.str();
}

void configure_logging() {
    static bool configured = false;
    if (!configured) {
        auto logger = spdlog::stderr_logger_mt("reobj");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
        configured = true;
    }
    const char* env = std::getenv("REOBJ_LOG");
    const std::string level = env ? env : "info";
    if (level == "error")
        spdlog::set_level(spdlog::level::err);
    else if (level == "debug")
        spdlog::set_level(spdlog::level::debug);
    else
        spdlog::set_level(spdlog::level::info);
}

namespace {

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    return json::parse(in);
}

std::string digest_of(const fs::path& meta) {
    if (!fs::exists(meta)) return {};
    const json j = read_json(meta);
    return j.value("config_digest", std::string{});
}

std::map<std::string, dataset::DetectionRecord> by_id(const std::vector<dataset::DetectionRecord>& records) {
    std::map<std::string, dataset::DetectionRecord> m;
    for (const auto& r : records) m.emplace(r.record_id, r);
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth

json to_json(const eval::SynthConfig& c) {
    return {{"instances", c.instances},       {"views", c.views},
            {"fg", eval::to_string(c.fg)},    {"bg", eval::to_string(c.bg)},
            {"noise", c.noise},               {"seed", c.seed},
            {"image_width", c.image_width},   {"image_height", c.image_height},
            {"object_size", c.object_size},   {"max_jitter", c.max_jitter},
            {"max_parallax", c.max_parallax}, {"max_gain_change", c.max_gain_change},
            {"mask_inset", c.mask_inset},     {"class_label", c.class_label},
            {"scene_id", c.scene_id}};
}

void run_synth(const SynthOptions& opt) {
    const json cfg = {{"command", "synth"}, {"synth", to_json(opt.config)}};
    const auto data = eval::synth_benchmark(opt.config);
    eval::write_synth(opt.out, data);
    write_json(opt.out / "synth.json", {{"config", cfg}, {"config_digest", config_digest(cfg)}});
    spdlog::info("synth: wrote {} views of {} instances to {}", data.records.size(), opt.config.instances,
                 opt.out.string());
}

// ---------------------------------------------------------------------------
// ingest

IngestSummary run_ingest(const IngestOptions& opt) {
    const json cfg = {{"command", "ingest"}, {"iou", opt.iou},     {"border", opt.border},
                      {"size", opt.size},    {"folds", opt.folds}, {"seed", opt.seed},
                      {"crops", opt.images.has_value()}};
    IngestSummary summary;
    summary.digest = config_digest(cfg);

    const auto records = dataset::load_manifest(opt.manifest);
    summary.total = records.size();
    fs::create_directories(opt.out);

    std::vector<dataset::DetectionRecord> valid;
    {
        std::ofstream report(opt.out / "validation.csv", std::ios::binary);
        report << "# config_digest: " << summary.digest << "\nrecord_id,status\n";
        for (const auto& r : records) {
            const auto v = dataset::classify_detection(r, opt.iou);
            report << r.record_id << ',' << dataset::to_string(v) << '\n';
            switch (v) {
                case dataset::Validation::valid: ++summary.valid; valid.push_back(r); break;
                case dataset::Validation::low_overlap: ++summary.low_overlap; break;
                case dataset::Validation::label_mismatch: ++summary.label_mismatch; break;
                case dataset::Validation::unvalidatable: ++summary.unvalidatable; break;
            }
        }
    }
    if (summary.unvalidatable > 0)
        spdlog::warn("ingest: {} record(s) lack ground truth and were reported as unvalidatable",
                     summary.unvalidatable);

    std::vector<dataset::DetectionRecord> kept;
    if (opt.images) {
        fs::create_directories(opt.out / "crops");
        std::map<std::string, Raster> cache;
        for (const auto& r : valid) {
            auto it = cache.find(r.image_path);
            if (it == cache.end()) it = cache.emplace(r.image_path, read_image(*opt.images / r.image_path)).first;
            try {
                const auto pair = dataset::crop_resize_split(it->second, r, opt.border, opt.size);
                write_png(opt.out / "crops" / (r.record_id + ".fg.png"), pair.fg_image);
                write_png(opt.out / "crops" / (r.record_id + ".bg.png"), pair.bg_image);
                kept.push_back(r);
            } catch (const dataset::RejectedDetection& e) {
                ++summary.rejected;
                spdlog::warn("ingest: {}", e.what());
            }
        }
    } else {
        kept = valid;
    }
    if (kept.empty()) throw Error("ingest: no valid detections remain");

    const auto split = dataset::make_splits(kept, opt.folds, opt.seed);
    if (!split.train_only_instances.empty())
        spdlog::warn("ingest: {} instance(s) have fewer than {} views and are train-only",
                     split.train_only_instances.size(), opt.folds);
    dataset::write_manifest(opt.out / "records.jsonl", kept);
    dataset::write_splits(opt.out / "splits.json", split);

    {
        std::ofstream stats(opt.out / "class_stats.csv", std::ios::binary);
        stats << "# config_digest: " << summary.digest << "\nclass,views,instances\n";
        for (const auto& [label, s] : dataset::class_stats(kept)) stats << label << ',' << s.views << ',' << s.instances << '\n';
    }
    write_json(opt.out / "ingest.json", {{"config", cfg},
                                         {"config_digest", summary.digest},
                                         {"total", summary.total},
                                         {"valid", summary.valid},
                                         {"low_overlap", summary.low_overlap},
                                         {"label_mismatch", summary.label_mismatch},
                                         {"unvalidatable", summary.unvalidatable},
                                         {"rejected", summary.rejected},
                                         {"train_only_instances", split.train_only_instances}});
    spdlog::info("ingest: {} of {} detections valid, {} kept", summary.valid, summary.total, kept.size());
    return summary;
}

// ---------------------------------------------------------------------------
// features

FeaturesSummary run_features(const FeaturesOptions& opt) {
    const DataLayout layout{opt.data};
    if (!fs::exists(layout.records())) {
        if (!fs::exists(layout.manifest()))
            throw Error("features: neither " + layout.records().string() + " nor " + layout.manifest().string() +
                        " exists");
        spdlog::info("features: no ingest output yet, ingesting {} with defaults", layout.manifest().string());
        IngestOptions ingest;
        ingest.manifest = layout.manifest();
        if (opt.extractor.kind == encoding::ExtractorKind::toy) ingest.images = layout.root;
        ingest.out = layout.ingest();
        ingest.seed = opt.seed;
        run_ingest(ingest);
    }
    const auto records = dataset::load_manifest(layout.records());
    const bool toy = opt.extractor.kind == encoding::ExtractorKind::toy;
    const json cfg = {{"command", "features"},
                      {"extractor", toy ? "toy" : "imported"},
                      {"grid", opt.extractor.grid},
                      {"channels_per_stream", toy ? opt.extractor.channels_per_stream : 0},
                      {"ingest_digest", digest_of(layout.ingest() / "ingest.json")}};
    FeaturesSummary summary;
    summary.digest = config_digest(cfg);
    fs::create_directories(layout.features());

    const kernels::Exec exec = opt.parallel ? kernels::Exec::parallel : kernels::Exec::serial;
    for (const auto& r : records) {
        encoding::FeatureMap fg, bg, full;
        if (toy) {
            const auto fg_img = read_image(layout.crops() / (r.record_id + ".fg.png"));
            const auto bg_img = read_image(layout.crops() / (r.record_id + ".bg.png"));
            const dataset::CropPair pair{fg_img, bg_img, r.record_id};
            fg = encoding::toy_extract(fg_img, opt.extractor, exec);
            bg = encoding::toy_extract(bg_img, opt.extractor, exec);
            full = encoding::toy_extract(pair.full(), opt.extractor, exec);
        } else {
            if (!opt.source) throw Error("features: the imported extractor needs --source");
            fg = encoding::read_tensor(*opt.source / (r.record_id + ".fg.rten"));
            bg = encoding::read_tensor(*opt.source / (r.record_id + ".bg.rten"));
            full = encoding::read_tensor(*opt.source / (r.record_id + ".full.rten"));
        }
        for (const auto* m : {&fg, &bg, &full}) {
            if (m->height != m->width) throw ShapeError("features: " + r.record_id + " has non-square map " + m->shape_string());
            if (summary.records == 0 && m == &fg) {
                summary.grid = m->height;
                summary.channels = m->channels;
            }
            if (m->height != summary.grid || m->channels != summary.channels)
                throw ShapeError("features: " + r.record_id + " has shape " + m->shape_string() +
                                 ", expected a single shape across the export");
        }
        encoding::write_tensor(layout.features() / (r.record_id + ".fg.rten"), fg);
        encoding::write_tensor(layout.features() / (r.record_id + ".bg.rten"), bg);
        encoding::write_tensor(layout.features() / (r.record_id + ".full.rten"), full);
        ++summary.records;
    }
    write_json(layout.features() / "features.json", {{"config", cfg},
                                                     {"config_digest", summary.digest},
                                                     {"records", summary.records},
                                                     {"shape", {summary.grid, summary.grid, summary.channels}}});
    spdlog::info("features: {} records, maps {}x{}x{} per stream", summary.records, summary.grid, summary.grid,
                 summary.channels);
    return summary;
}

// ---------------------------------------------------------------------------
// train

json to_json(const tripletnet::TrainConfig& c) {
    return {{"margin", c.margin},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"same_class_negative_fraction", c.same_class_negative_fraction},
            {"triplets_per_epoch", c.triplets_per_epoch},
            {"head",
             {{"in_channels", c.head.in_channels},
              {"conv1", c.head.conv1_channels},
              {"conv2", c.head.conv2_channels},
              {"embed", c.head.embed_dim}}}};
}

namespace {

// Sampler and initialisation draw from different streams of the same user seed.
constexpr std::uint64_t kInitSeedSalt = 0x9E3779B97F4A7C15ull;

int check_fold(int fold, const dataset::SplitAssignment& split) {
    if (fold < 0 || fold >= split.fold_count)
        throw Error("fold " + std::to_string(fold) + " out of range (0.." + std::to_string(split.fold_count - 1) + ")");
    return fold;
}

}  // namespace

TrainSummary run_train(const TrainOptions& opt) {
    const DataLayout layout{opt.data};
    const fs::path features_dir = opt.features.value_or(layout.features());
    const auto records = by_id(dataset::load_manifest(layout.records()));
    const auto split = dataset::read_splits(layout.splits());
    const int fold = check_fold(opt.fold, split);

    std::vector<tripletnet::SampleRef> refs;
    for (const auto& id : split.ids_with_role(fold, dataset::Role::train)) {
        const auto& r = records.at(id);
        refs.push_back({r.record_id, r.instance_id, r.class_label});
    }
    if (refs.empty()) throw Error("train: fold has no training views");

    const tripletnet::DirectoryFeatureSource source(features_dir, opt.mode);
    tripletnet::TrainConfig cfg = opt.config;
    cfg.head.in_channels = source.load(refs.front().record_id).map.channels;

    const json run_cfg = {{"command", "train"},
                          {"mode", tripletnet::to_string(opt.mode)},
                          {"fold", fold},
                          {"train", to_json(cfg)},
                          {"features_digest", digest_of(features_dir / "features.json")}};
    TrainSummary summary;
    summary.digest = config_digest(run_cfg);
    summary.train_views = refs.size();

    spdlog::info("train: mode {}, {} training views, head {}->{}->{}->{}", tripletnet::to_string(opt.mode),
                 refs.size(), cfg.head.in_channels, cfg.head.conv1_channels, cfg.head.conv2_channels,
                 cfg.head.embed_dim);
    const auto result = tripletnet::train(refs, source, cfg, cfg.seed ^ kInitSeedSalt);
    summary.epoch_loss = result.epoch_loss;

    if (opt.out.has_parent_path()) fs::create_directories(opt.out.parent_path());
    tripletnet::write_model(opt.out, result.params, summary.digest);
    if (opt.loss_log) {
        std::ofstream log(*opt.loss_log, std::ios::binary);
        if (!log) throw Error("cannot write " + opt.loss_log->string());
        log << "# config_digest: " << summary.digest << "\nepoch,loss\n";
        char buf[64];
        for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%.9g", result.epoch_loss[e]);
            log << e + 1 << ',' << buf << '\n';
        }
    }
    if (!result.epoch_loss.empty())
        spdlog::info("train: loss {:.4f} -> {:.4f} over {} epochs", result.epoch_loss.front(),
                     result.epoch_loss.back(), result.epoch_loss.size());
    return summary;
}

// ---------------------------------------------------------------------------
// eval

EvalResult run_eval(const EvalOptions& opt) {
    const DataLayout layout{opt.data};
    const fs::path features_dir = opt.features.value_or(layout.features());
    const auto records = by_id(dataset::load_manifest(layout.records()));
    const auto split = dataset::read_splits(layout.splits());
    const int fold = check_fold(opt.fold, split);

    std::vector<eval::EvalRecord> test;
    for (const auto& id : split.ids_with_role(fold, dataset::Role::test)) {
        const auto& r = records.at(id);
        test.push_back({r.record_id, r.instance_id, r.scene_id});
    }

    auto load_stream = [&features_dir](const std::string& stream, const std::string& id) {
        if (stream == "concat")
            return encoding::concat_features(encoding::read_tensor(features_dir / (id + ".fg.rten")),
                                             encoding::read_tensor(features_dir / (id + ".bg.rten")))
                .map;
        if (stream == "full" || stream == "fg" || stream == "bg")
            return encoding::read_tensor(features_dir / (id + "." + stream + ".rten"));
        throw Error("unknown stream '" + stream + "' (expected full, fg, bg or concat)");
    };

    std::string model_digest;
    std::optional<tripletnet::ConvBlockParams<float>> params;
    eval::Embedder embedder;
    std::string stream = opt.stream;
    if (opt.mode == eval::Mode::no_train) {
        embedder = [&](const eval::EvalRecord& r) { return encoding::flatten_features(load_stream(stream, r.record_id)); };
    } else {
        if (!opt.model) throw Error("eval: mode " + std::string(eval::to_string(opt.mode)) + " needs --model");
        auto model = tripletnet::read_model(*opt.model);
        model_digest = model.config_digest;
        params = std::move(model.params);
        stream = opt.mode == eval::Mode::concat ? "concat" : "full";
        const kernels::Exec exec = opt.parallel ? kernels::Exec::parallel : kernels::Exec::serial;
        embedder = [&, exec](const eval::EvalRecord& r) {
            const encoding::JointEmbeddingInput x{load_stream(stream, r.record_id),
                                                  stream == "concat" ? encoding::Provenance::concat
                                                                     : encoding::Provenance::full};
            return tripletnet::convblock_forward(*params, x, exec).embedding;
        };
    }

    std::vector<int> ks = opt.ranks;
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    const json cfg = {{"command", "eval"},
                      {"mode", eval::to_string(opt.mode)},
                      {"stream", stream},
                      {"fold", fold},
                      {"ranks", ks},
                      {"within_scene", opt.within_scene},
                      {"seed", opt.seed},
                      {"model_digest", model_digest},
                      {"features_digest", digest_of(features_dir / "features.json")}};

    const auto gallery = eval::build_gallery(test, embedder, opt.mode);
    eval::MatchOptions match;
    match.within_scene = opt.within_scene;
    match.exec = opt.parallel ? kernels::Exec::parallel : kernels::Exec::serial;
    const auto outcomes = eval::evaluate_probes(gallery, match);

    EvalResult result;
    result.metrics = eval::summarize(opt.mode, outcomes, ks);
    result.metrics.seed = opt.seed;
    result.metrics.config_digest = config_digest(cfg);
    result.cmc = eval::cmc_from_outcomes(outcomes);
    if (result.metrics.excluded > 0)
        spdlog::warn("eval: {} probe(s) excluded (no other test view of their instance)", result.metrics.excluded);

    if (opt.out) eval::write_metrics_csv(*opt.out, result.metrics);
    if (opt.cmc) eval::write_cmc_csv(*opt.cmc, result.cmc, result.metrics.config_digest);
    for (std::size_t i = 0; i < ks.size(); ++i)
        spdlog::info("eval: {} ({}) rank-{} accuracy {:.4f} over {} probes", eval::to_string(opt.mode), stream, ks[i],
                     result.metrics.accuracy[i], result.metrics.probes);
    return result;
}

// ---------------------------------------------------------------------------
// report

ReportTable run_report(const ReportOptions& opt) {
    if (opt.metrics.empty()) throw Error("report: at least one metrics file is required");
    std::vector<eval::MetricsReport> reports;
    for (const auto& p : opt.metrics) reports.push_back(eval::read_metrics_csv(p));
    for (std::size_t i = 1; i < reports.size(); ++i)
        if (reports[i].ks != reports[0].ks) {
            std::string files;
            for (const auto& p : opt.metrics) files += "\n  " + p.string();
            throw Error("report: metrics files use different rank sets:" + files);
        }

    ReportTable table;
    table.ranks = reports[0].ks;
    std::map<std::string, int> seen;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::string name = eval::to_string(reports[i].mode);
        if (seen[name]++ > 0) name += " (" + opt.metrics[i].stem().string() + ")";
        table.columns.push_back(name);
    }
    table.percent.assign(table.ranks.size(), std::vector<double>(reports.size()));
    for (std::size_t r = 0; r < table.ranks.size(); ++r)
        for (std::size_t c = 0; c < reports.size(); ++c) table.percent[r][c] = reports[c].accuracy[r] * 100.0;

    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };

    if (opt.out) {
        std::ofstream out(*opt.out, std::ios::binary);
        if (!out) throw Error("cannot write " + opt.out->string());
        out << "rank";
        for (const auto& c : table.columns) out << ',' << c;
        out << '\n';
        for (std::size_t r = 0; r < table.ranks.size(); ++r) {
            out << table.ranks[r];
            for (double v : table.percent[r]) out << ',' << pct(v);
            out << '\n';
        }
    }

    // Plain text; '*' marks the best column per rank.
    std::ostringstream text;
    std::size_t width = 10;
    for (const auto& c : table.columns) width = std::max(width, c.size() + 2);
    text << std::left << std::setw(10) << "rank";
    for (const auto& c : table.columns) text << std::right << std::setw(static_cast<int>(width)) << c;
    text << '\n';
    for (std::size_t r = 0; r < table.ranks.size(); ++r) {
        const double best = *std::max_element(table.percent[r].begin(), table.percent[r].end());
        text << std::left << std::setw(10) << ("rank-" + std::to_string(table.ranks[r]));
        for (double v : table.percent[r])
            text << std::right << std::setw(static_cast<int>(width))
                 << (pct(v) + (v == best && table.columns.size() > 1 ? "*" : " "));
        text << '\n';
    }
    table.text = text.str();

    if (opt.cmc_out) {
        std::ofstream out(*opt.cmc_out, std::ios::binary);
        if (!out) throw Error("cannot write " + opt.cmc_out->string());
        out << "series,rank,rate\n";
        for (const auto& p : opt.cmc) {
            const auto curve = eval::read_cmc_csv(p);
            char buf[32];
            for (std::size_t i = 0; i < curve.ranks.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.6f", curve.rates[i]);
                out << p.stem().string() << ',' << curve.ranks[i] << ',' << buf << '\n';
            }
        }
    }
    return table;
}

}  // namespace reobj::cli
