// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "reobj/errors.hpp"
#include "reobj/kernels.hpp"

namespace reobj::eval {

enum class Mode { no_train, full, concat };

const char* to_string(Mode m) noexcept;
Mode parse_mode(const std::string& s);

struct EvalRecord {
    std::string record_id;
    std::string instance_id;
    std::string scene_id;
};

struct GalleryEntry {
    std::string record_id;
    std::string instance_id;
    std::string scene_id;
    std::vector<float> embedding;
};

/// Test views with their embeddings, sorted by record id.
struct GalleryIndex {
    std::vector<GalleryEntry> entries;
    Mode mode = Mode::no_train;

    std::size_t dim() const noexcept { return entries.empty() ? 0 : entries.front().embedding.size(); }
};

using Embedder = std::function<std::vector<float>(const EvalRecord&)>;

/// One entry per record, ordered by record id. Throws on an empty test set,
/// duplicate ids or embeddings of unequal length.
GalleryIndex build_gallery(const std::vector<EvalRecord>& records, const Embedder& embedder, Mode mode);

using DistanceFn = std::function<double(std::span<const float>, std::span<const float>)>;

struct MatchOptions {
    /// Empty means squared Euclidean distance through the distance kernel.
    DistanceFn distance;
    /// Restrict each probe's gallery to views from the same scene.
    bool within_scene = false;
    kernels::Exec exec = kernels::Exec::serial;
};

struct RankedMatch {
    std::string record_id;
    double distance = 0.0;
};

/// Ranks every gallery entry other than the probe itself, ascending by distance
/// with ties broken by record id.
std::vector<RankedMatch> rank_probe(const GalleryEntry& probe, const GalleryIndex& gallery,
                                    const MatchOptions& options = {});

/// Leave-one-out result for one probe.
struct ProbeOutcome {
    std::string record_id;
    std::size_t gallery_size = 0;
    /// 1-based rank of the first same-instance entry; 0 if the gallery holds none.
    std::size_t first_hit = 0;
};

std::vector<ProbeOutcome> evaluate_probes(const GalleryIndex& gallery, const MatchOptions& options = {});

struct MetricsReport {
    Mode mode = Mode::no_train;
    std::vector<int> ks;
    std::vector<double> accuracy;
    std::size_t probes = 0;     // probes with at least one same-instance gallery entry
    std::size_t excluded = 0;   // probes whose instance has no other test view
    std::size_t gallery = 0;    // largest per-probe gallery
    std::uint64_t seed = 0;
    std::string config_digest;
};

struct CMCCurve {
    std::vector<int> ranks;
    std::vector<double> rates;
};

inline const std::vector<int> kDefaultRanks = {1, 5, 20, 50};

MetricsReport rank_k_accuracy(const GalleryIndex& gallery, const std::vector<int>& ks, const MatchOptions& options = {});
MetricsReport summarize(Mode mode, const std::vector<ProbeOutcome>& outcomes, const std::vector<int>& ks);

/// Cumulative identification rate at ranks 1..largest gallery.
CMCCurve cmc_curve(const GalleryIndex& gallery, const MatchOptions& options = {});
CMCCurve cmc_from_outcomes(const std::vector<ProbeOutcome>& outcomes);

// metrics.csv: "# config_digest: <hex>" then header mode,k,accuracy,probes,gallery,seed.
// cmc.csv: "# config_digest: <hex>" then header rank,rate.
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_metrics_csv(const std::filesystem::path& path);
void write_cmc_csv(const std::filesystem::path& path, const CMCCurve& curve, const std::string& config_digest);
CMCCurve read_cmc_csv(const std::filesystem::path& path);

}  // namespace reobj::eval
