// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reobj/dataset.hpp"
#include "reobj/eval.hpp"
#include "reobj/synth.hpp"
#include "reobj/train.hpp"

// Pipeline stages behind the `reobj` subcommands. Each stage is reproducible from
// its options; every file it writes carries the SHA-256 digest of the canonical
// JSON of its parameters (filesystem paths excluded).

namespace reobj::cli {

namespace fs = std::filesystem;

/// Canonical serialisation: keys sorted, no whitespace.
std::string canonical(const nlohmann::json& config);
std::string sha256_hex(const std::string& bytes);
inline std::string config_digest(const nlohmann::json& config) { return sha256_hex(canonical(config)); }

/// Standard layout of a data directory.
struct DataLayout {
    fs::path root;
    fs::path manifest() const { return root / "manifest.jsonl"; }
    fs::path ingest() const { return root / "ingest"; }
    fs::path records() const { return ingest() / "records.jsonl"; }
    fs::path splits() const { return ingest() / "splits.json"; }
    fs::path crops() const { return ingest() / "crops"; }
    fs::path features() const { return root / "features"; }
};

struct SynthOptions {
    eval::SynthConfig config;
    fs::path out;
};

nlohmann::json to_json(const eval::SynthConfig& cfg);
void run_synth(const SynthOptions& opt);

struct IngestOptions {
    fs::path manifest;
    std::optional<fs::path> images;  // without images only validation and splits are produced
    fs::path out;
    double iou = dataset::kDefaultIouThreshold;
    int border = dataset::kDefaultBorder;
    int size = dataset::kDefaultCropSize;
    int folds = 3;
    std::uint64_t seed = 0;
};

struct IngestSummary {
    std::size_t total = 0;
    std::size_t valid = 0;
    std::size_t low_overlap = 0;
    std::size_t label_mismatch = 0;
    std::size_t unvalidatable = 0;
    std::size_t rejected = 0;
    std::string digest;
};

IngestSummary run_ingest(const IngestOptions& opt);

struct FeaturesOptions {
    fs::path data;
    encoding::ExtractorConfig extractor;
    std::optional<fs::path> source;  // RTEN directory for the imported extractor
    std::uint64_t seed = 0;
    bool parallel = false;
};

struct FeaturesSummary {
    std::size_t records = 0;
    int grid = 0;
    int channels = 0;
    std::string digest;
};

FeaturesSummary run_features(const FeaturesOptions& opt);

struct TrainOptions {
    tripletnet::InputMode mode = tripletnet::InputMode::concat;
    fs::path data;
    std::optional<fs::path> features;  // defaults to <data>/features
    tripletnet::TrainConfig config;
    int fold = 0;
    fs::path out;
    std::optional<fs::path> loss_log;
};

struct TrainSummary {
    std::vector<double> epoch_loss;
    std::size_t train_views = 0;
    std::string digest;
};

nlohmann::json to_json(const tripletnet::TrainConfig& cfg);
TrainSummary run_train(const TrainOptions& opt);

struct EvalOptions {
    eval::Mode mode = eval::Mode::no_train;
    std::optional<fs::path> model;
    fs::path data;
    std::optional<fs::path> features;
    std::vector<int> ranks = eval::kDefaultRanks;
    std::optional<fs::path> out;
    std::optional<fs::path> cmc;
    int fold = 0;
    bool within_scene = false;
    /// Representation used by no-train: full, fg, bg or concat.
    std::string stream = "full";
    std::uint64_t seed = 0;
    bool parallel = false;
};

struct EvalResult {
    eval::MetricsReport metrics;
    eval::CMCCurve cmc;
};

EvalResult run_eval(const EvalOptions& opt);

struct ReportOptions {
    std::vector<fs::path> metrics;
    std::vector<fs::path> cmc;
    std::optional<fs::path> out;      // side-by-side table, CSV
    std::optional<fs::path> cmc_out;  // merged CMC points, CSV
};

struct ReportTable {
    std::vector<std::string> columns;          // one per metrics file
    std::vector<int> ranks;
    std::vector<std::vector<double>> percent;  // [rank][column]
    std::string text;
};

ReportTable run_report(const ReportOptions& opt);

/// Sets the spdlog level from REOBJ_LOG (error, info, debug); defaults to info.
void configure_logging();

/// Entry point of the `reobj` executable. Returns the process exit code:
/// 0 on success, 2 on a usage error, 1 on any other failure.
int run(int argc, const char* const* argv);

}  // namespace reobj::cli
