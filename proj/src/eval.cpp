// SPDX-License-Identifier: Apache-2.0
#include "reobj/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace reobj::eval {

const char* to_string(Mode m) noexcept {
    switch (m) {
        case Mode::no_train: return "no-train";
        case Mode::full: return "full";
        case Mode::concat: return "concat";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "no-train") return Mode::no_train;
    if (s == "full") return Mode::full;
    if (s == "concat") return Mode::concat;
    throw Error("unknown mode '" + s + "' (expected no-train, full or concat)");
}

GalleryIndex build_gallery(const std::vector<EvalRecord>& records, const Embedder& embedder, Mode mode) {
    if (records.empty()) throw Error("build_gallery: empty test set");
    GalleryIndex g;
    g.mode = mode;
    g.entries.reserve(records.size());
    for (const auto& r : records) g.entries.push_back({r.record_id, r.instance_id, r.scene_id, embedder(r)});
    std::sort(g.entries.begin(), g.entries.end(),
              [](const GalleryEntry& a, const GalleryEntry& b) { return a.record_id < b.record_id; });
    for (std::size_t i = 1; i < g.entries.size(); ++i)
        if (g.entries[i].record_id == g.entries[i - 1].record_id)
            throw Error("build_gallery: duplicate record id " + g.entries[i].record_id);
    const std::size_t dim = g.entries.front().embedding.size();
    for (const auto& e : g.entries)
        if (e.embedding.size() != dim)
            throw ShapeError("build_gallery: embedding of " + e.record_id + " has length " +
                             std::to_string(e.embedding.size()) + ", expected " + std::to_string(dim));
    return g;
}

namespace {

struct DistanceTable {
    std::size_t n = 0;
    std::vector<double> values;  // n x n, only filled for the kernel path
    const GalleryIndex* gallery = nullptr;
    const DistanceFn* fn = nullptr;

    double operator()(std::size_t i, std::size_t j) const {
        if (!values.empty()) return values[i * n + j];
        return (*fn)(gallery->entries[i].embedding, gallery->entries[j].embedding);
    }
};

DistanceTable make_table(const GalleryIndex& gallery, const MatchOptions& options) {
    DistanceTable t;
    t.n = gallery.entries.size();
    t.gallery = &gallery;
    t.fn = &options.distance;
    if (!options.distance) {
        const std::size_t dim = gallery.dim();
        std::vector<float> flat;
        flat.reserve(t.n * dim);
        for (const auto& e : gallery.entries) flat.insert(flat.end(), e.embedding.begin(), e.embedding.end());
        t.values.resize(t.n * t.n);
        kernels::pairwise_sq_dist(options.exec, flat, t.n, flat, t.n, dim, t.values);
    }
    return t;
}

std::vector<std::size_t> ranked_indices(std::size_t probe, const GalleryIndex& gallery, const DistanceTable& table,
                                        bool within_scene, std::vector<double>& dist_out) {
    const auto& p = gallery.entries[probe];
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < gallery.entries.size(); ++j) {
        if (j == probe) continue;
        if (within_scene && gallery.entries[j].scene_id != p.scene_id) continue;
        order.push_back(j);
    }
    dist_out.assign(gallery.entries.size(), 0.0);
    for (auto j : order) dist_out[j] = table(probe, j);
    // entries are sorted by record id, so index order is the tie-break order
    std::stable_sort(order.begin(), order.end(),
                     [&dist_out](std::size_t a, std::size_t b) { return dist_out[a] < dist_out[b]; });
    return order;
}

}  // namespace

std::vector<RankedMatch> rank_probe(const GalleryEntry& probe, const GalleryIndex& gallery,
                                    const MatchOptions& options) {
    if (probe.embedding.size() != gallery.dim())
        throw ShapeError("rank_probe: probe has length " + std::to_string(probe.embedding.size()) +
                         ", gallery " + std::to_string(gallery.dim()));
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < gallery.entries.size(); ++j) {
        const auto& g = gallery.entries[j];
        if (g.record_id == probe.record_id) continue;
        if (options.within_scene && g.scene_id != probe.scene_id) continue;
        double d = 0.0;
        if (options.distance) {
            d = options.distance(probe.embedding, g.embedding);
        } else {
            double out = 0.0;
            kernels::serial::pairwise_sq_dist(probe.embedding, 1, g.embedding, 1, probe.embedding.size(), {&out, 1});
            d = out;
        }
        scored.emplace_back(d, j);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<RankedMatch> out;
    out.reserve(scored.size());
    for (const auto& [d, j] : scored) out.push_back({gallery.entries[j].record_id, d});
    return out;
}

std::vector<ProbeOutcome> evaluate_probes(const GalleryIndex& gallery, const MatchOptions& options) {
    const DistanceTable table = make_table(gallery, options);
    const auto n = static_cast<std::int64_t>(gallery.entries.size());
    std::vector<ProbeOutcome> outcomes(gallery.entries.size());
#pragma omp parallel for schedule(dynamic, 4) if (options.exec == kernels::Exec::parallel && !options.distance)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto probe = static_cast<std::size_t>(i);
        std::vector<double> dist;
        const auto order = ranked_indices(probe, gallery, table, options.within_scene, dist);
        ProbeOutcome& o = outcomes[probe];
        o.record_id = gallery.entries[probe].record_id;
        o.gallery_size = order.size();
        for (std::size_t r = 0; r < order.size(); ++r)
            if (gallery.entries[order[r]].instance_id == gallery.entries[probe].instance_id) {
                o.first_hit = r + 1;
                break;
            }
    }
    return outcomes;
}

MetricsReport summarize(Mode mode, const std::vector<ProbeOutcome>& outcomes, const std::vector<int>& ks) {
    MetricsReport rep;
    rep.mode = mode;
    rep.ks = ks;
    std::vector<std::size_t> hits(ks.size(), 0);
    for (const auto& o : outcomes) {
        rep.gallery = std::max(rep.gallery, o.gallery_size);
        if (o.first_hit == 0) {
            ++rep.excluded;
            continue;
        }
        ++rep.probes;
        for (std::size_t i = 0; i < ks.size(); ++i)
            if (o.first_hit <= static_cast<std::size_t>(ks[i])) ++hits[i];
    }
    for (auto h : hits)
        rep.accuracy.push_back(rep.probes ? static_cast<double>(h) / static_cast<double>(rep.probes) : 0.0);
    return rep;
}

MetricsReport rank_k_accuracy(const GalleryIndex& gallery, const std::vector<int>& ks, const MatchOptions& options) {
    for (int k : ks)
        if (k < 1) throw Error("rank cut-offs must be >= 1");
    if (!std::is_sorted(ks.begin(), ks.end())) throw Error("rank cut-offs must be ascending");
    return summarize(gallery.mode, evaluate_probes(gallery, options), ks);
}

CMCCurve cmc_from_outcomes(const std::vector<ProbeOutcome>& outcomes) {
    std::size_t max_gallery = 0;
    std::size_t eligible = 0;
    for (const auto& o : outcomes) {
        max_gallery = std::max(max_gallery, o.gallery_size);
        if (o.first_hit > 0) ++eligible;
    }
    std::vector<std::size_t> at_rank(max_gallery + 1, 0);
    for (const auto& o : outcomes)
        if (o.first_hit > 0) ++at_rank[o.first_hit];
    CMCCurve c;
    std::size_t cumulative = 0;
    for (std::size_t r = 1; r <= max_gallery; ++r) {
        cumulative += at_rank[r];
        c.ranks.push_back(static_cast<int>(r));
        c.rates.push_back(eligible ? static_cast<double>(cumulative) / static_cast<double>(eligible) : 0.0);
    }
    return c;
}

CMCCurve cmc_curve(const GalleryIndex& gallery, const MatchOptions& options) {
    return cmc_from_outcomes(evaluate_probes(gallery, options));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

// Returns data lines; the digest comment (if any) goes to `digest`.
std::vector<std::string> read_csv_lines(const std::filesystem::path& path, const std::string& header,
                                        std::string& digest) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::vector<std::string> lines;
    std::string line;
    bool seen_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# config_digest:", 0) == 0) {
            digest = line.substr(16);
            digest.erase(0, digest.find_first_not_of(' '));
            continue;
        }
        if (line[0] == '#') continue;
        if (!seen_header) {
            if (line != header) throw Error(path.string() + ": expected header '" + header + "'");
            seen_header = true;
            continue;
        }
        lines.push_back(line);
    }
    if (!seen_header) throw Error(path.string() + ": missing header");
    return lines;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "# config_digest: " << report.config_digest << '\n';
    out << "mode,k,accuracy,probes,gallery,seed\n";
    char buf[64];
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", report.accuracy[i]);
        out << to_string(report.mode) << ',' << report.ks[i] << ',' << buf << ',' << report.probes << ','
            << report.gallery << ',' << report.seed << '\n';
    }
}

MetricsReport read_metrics_csv(const std::filesystem::path& path) {
    MetricsReport rep;
    const auto lines = read_csv_lines(path, "mode,k,accuracy,probes,gallery,seed", rep.config_digest);
    if (lines.empty()) throw Error(path.string() + ": no metric rows");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cells = split_csv(lines[i]);
        if (cells.size() != 6) throw Error(path.string() + ": malformed row '" + lines[i] + "'");
        const Mode m = parse_mode(cells[0]);
        if (i > 0 && m != rep.mode) throw Error(path.string() + ": rows mix several modes");
        rep.mode = m;
        rep.ks.push_back(std::stoi(cells[1]));
        rep.accuracy.push_back(std::stod(cells[2]));
        rep.probes = std::stoull(cells[3]);
        rep.gallery = std::stoull(cells[4]);
        rep.seed = std::stoull(cells[5]);
    }
    return rep;
}

void write_cmc_csv(const std::filesystem::path& path, const CMCCurve& curve, const std::string& config_digest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "# config_digest: " << config_digest << '\n';
    out << "rank,rate\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.ranks.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", curve.rates[i]);
        out << curve.ranks[i] << ',' << buf << '\n';
    }
}

CMCCurve read_cmc_csv(const std::filesystem::path& path) {
    std::string digest;
    CMCCurve c;
    for (const auto& line : read_csv_lines(path, "rank,rate", digest)) {
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw Error(path.string() + ": malformed row '" + line + "'");
        c.ranks.push_back(std::stoi(cells[0]));
        c.rates.push_back(std::stod(cells[1]));
    }
    return c;
}

}  // namespace reobj::eval
