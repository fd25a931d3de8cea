// SPDX-License-Identifier: Apache-2.0
#include <omp.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>

#include "reobj/pipeline.hpp"

namespace reobj::cli {

namespace {

template <typename T>
void optional_path(CLI::App* app, const std::string& flag, std::optional<T>& target, const std::string& help) {
    app->add_option_function<std::string>(flag, [&target](const std::string& s) { target = T(s); }, help);
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Object instance re-identification with joint foreground/background embeddings", "reobj"};
    app.require_subcommand(1, 1);
    app.set_config("--config", "", "TOML file supplying option defaults; flags override");
    app.failure_message(CLI::FailureMessage::help);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP thread count for parallel kernels (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);

    // synth
    SynthOptions synth;
    std::string synth_fg = "identical", synth_bg = "distinct";
    auto* s = app.add_subcommand("synth", "Render a synthetic rigid-scene benchmark");
    s->add_option("--instances", synth.config.instances, "Instances")->capture_default_str();
    s->add_option("--views", synth.config.views, "Views per instance")->capture_default_str();
    s->add_option("--fg", synth_fg, "Object appearance across instances")
        ->check(CLI::IsMember({"identical", "distinct"}))
        ->capture_default_str();
    s->add_option("--bg", synth_bg, "Background appearance across instances")
        ->check(CLI::IsMember({"identical", "distinct"}))
        ->capture_default_str();
    s->add_option("--noise", synth.config.noise, "Gaussian pixel noise sigma")->capture_default_str();
    s->add_option("--width", synth.config.image_width, "Image width")->capture_default_str();
    s->add_option("--height", synth.config.image_height, "Image height")->capture_default_str();
    s->add_option("--object-size", synth.config.object_size, "Object box side, px")->capture_default_str();
    s->add_option("--jitter", synth.config.max_jitter, "Max object translation, px")->capture_default_str();
    s->add_option("--parallax", synth.config.max_parallax, "Max background parallax, px")->capture_default_str();
    s->add_option("--gain", synth.config.max_gain_change, "Max per-view exposure change")->capture_default_str();
    s->add_option("--mask-inset", synth.config.mask_inset, "Mask inset inside the silhouette, px")
        ->capture_default_str();
    s->add_option("--seed", synth.config.seed, "Random seed")->capture_default_str();
    s->add_option("--out", synth.out, "Output directory")->required();

    // ingest
    IngestOptions ingest;
    auto* i = app.add_subcommand("ingest", "Validate detections, cut fg/bg crops and assign folds");
    i->add_option("--manifest", ingest.manifest, "Detection manifest (JSONL)")->required()->check(CLI::ExistingFile);
    optional_path(i, "--images", ingest.images, "Image root; without it only validation and splits are written");
    i->add_option("--iou", ingest.iou, "IoU threshold (strict)")->capture_default_str();
    i->add_option("--border", ingest.border, "Border added around each box, px")->capture_default_str();
    i->add_option("--size", ingest.size, "Crop side after resize, px")->capture_default_str();
    i->add_option("--folds", ingest.folds, "Cross-validation folds")->capture_default_str();
    i->add_option("--seed", ingest.seed, "Split seed")->capture_default_str();
    i->add_option("--out", ingest.out, "Output directory")->required();

    // features
    FeaturesOptions features;
    std::string extractor = "toy";
    auto* f = app.add_subcommand("features", "Compute fg, bg and full feature maps for ingested crops");
    f->add_option("--data", features.data, "Data directory")->required()->check(CLI::ExistingDirectory);
    f->add_option("--extractor", extractor, "Feature extractor")
        ->check(CLI::IsMember({"toy", "imported"}))
        ->capture_default_str();
    f->add_option("--grid", features.extractor.grid, "Toy extractor grid size")->capture_default_str();
    optional_path(f, "--source", features.source, "Directory of exported RTEN files (imported extractor)");
    f->add_option("--seed", features.seed, "Seed used if ingest has to run")->capture_default_str();
    f->add_flag("--parallel", features.parallel, "Use the OpenMP extractor");

    // train
    TrainOptions train;
    std::string train_mode = "concat";
    auto* t = app.add_subcommand("train", "Train the embedding head with the triplet ranking loss");
    t->add_option("--mode", train_mode, "Head input")->check(CLI::IsMember({"concat", "full"}))->capture_default_str();
    t->add_option("--data", train.data, "Data directory")->required()->check(CLI::ExistingDirectory);
    optional_path(t, "--features", train.features, "Feature directory (default <data>/features)");
    t->add_option("--margin", train.config.margin, "Triplet margin")->capture_default_str();
    t->add_option("--lr", train.config.learning_rate, "Learning rate")->capture_default_str();
    t->add_option("--momentum", train.config.momentum, "SGD momentum")->capture_default_str();
    t->add_option("--epochs", train.config.epochs, "Epochs")->capture_default_str();
    t->add_option("--batch", train.config.batch_size, "Triplets per batch")->capture_default_str();
    t->add_option("--triplets-per-epoch", train.config.triplets_per_epoch, "Triplets per epoch (0 = one per anchor view)")
        ->capture_default_str();
    t->add_option("--same-class-negatives", train.config.same_class_negative_fraction,
                  "Fraction of negatives drawn from the anchor's class")
        ->capture_default_str();
    t->add_option("--conv1", train.config.head.conv1_channels, "First conv width")->capture_default_str();
    t->add_option("--conv2", train.config.head.conv2_channels, "Second conv width")->capture_default_str();
    t->add_option("--embed", train.config.head.embed_dim, "Embedding dimension")->capture_default_str();
    t->add_option("--fold", train.fold, "Fold to train on")->capture_default_str();
    t->add_option("--seed", train.config.seed, "Seed")->capture_default_str();
    t->add_option("--out", train.out, "Model file (default <data>/model-<mode>.rmdl)");
    optional_path(t, "--loss-log", train.loss_log, "Per-epoch loss CSV");
    t->add_flag("--parallel", train.config.parallel_batch, "Run triplets of a batch in parallel");

    // eval
    EvalOptions eval;
    std::string eval_mode = "no-train";
    auto* e = app.add_subcommand("eval", "Leave-one-out rank-k evaluation over a test fold");
    e->add_option("--mode", eval_mode, "Setup")
        ->check(CLI::IsMember({"no-train", "full", "concat"}))
        ->capture_default_str();
    optional_path(e, "--model", eval.model, "Model file (default <data>/model-<mode>.rmdl)");
    e->add_option("--data", eval.data, "Data directory")->required()->check(CLI::ExistingDirectory);
    optional_path(e, "--features", eval.features, "Feature directory (default <data>/features)");
    e->add_option("--ranks", eval.ranks, "Ranks to report")->delimiter(',')->check(CLI::PositiveNumber);
    optional_path(e, "--out", eval.out, "Metrics CSV (default <data>/metrics-<mode>.csv)");
    optional_path(e, "--cmc", eval.cmc, "CMC CSV (default <data>/cmc-<mode>.csv)");
    e->add_option("--fold", eval.fold, "Fold whose test views are evaluated")->capture_default_str();
    e->add_flag("--within-scene", eval.within_scene, "Only match probes against views of the same scene");
    e->add_option("--stream", eval.stream, "Representation for no-train")
        ->check(CLI::IsMember({"full", "fg", "bg", "concat"}))
        ->capture_default_str();
    e->add_option("--seed", eval.seed, "Seed recorded in the report")->capture_default_str();
    e->add_flag("--parallel", eval.parallel, "Use the OpenMP kernels");

    // report
    ReportOptions report;
    auto* r = app.add_subcommand("report", "Side-by-side comparison of metrics files");
    r->add_option("metrics", report.metrics, "metrics.csv files")->required()->check(CLI::ExistingFile);
    r->add_option("--cmc", report.cmc, "cmc.csv files to merge")->check(CLI::ExistingFile);
    optional_path(r, "--out", report.out, "Table CSV");
    optional_path(r, "--cmc-out", report.cmc_out, "Merged CMC CSV");
    std::uint64_t report_seed = 0;
    r->add_option("--seed", report_seed, "Accepted for uniformity; unused");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& ok) {
        return app.exit(ok);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 2;
    }

    configure_logging();
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (*s) {
            synth.config.fg = eval::parse_appearance(synth_fg);
            synth.config.bg = eval::parse_appearance(synth_bg);
            run_synth(synth);
        } else if (*i) {
            run_ingest(ingest);
        } else if (*f) {
            features.extractor.kind =
                extractor == "toy" ? encoding::ExtractorKind::toy : encoding::ExtractorKind::imported;
            run_features(features);
        } else if (*t) {
            train.mode = train_mode == "full" ? tripletnet::InputMode::full : tripletnet::InputMode::concat;
            if (train.out.empty()) train.out = train.data / ("model-" + train_mode + ".rmdl");
            run_train(train);
        } else if (*e) {
            eval.mode = eval::parse_mode(eval_mode);
            const std::string tag = eval_mode == "no-train" && eval.stream != "full" ? eval_mode + "-" + eval.stream
                                                                                     : eval_mode;
            if (eval.mode != eval::Mode::no_train && !eval.model)
                eval.model = eval.data / ("model-" + eval_mode + ".rmdl");
            if (!eval.out) eval.out = eval.data / ("metrics-" + tag + ".csv");
            if (!eval.cmc) eval.cmc = eval.data / ("cmc-" + tag + ".csv");
            run_eval(eval);
        } else if (*r) {
            std::cout << run_report(report).text;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace reobj::cli
