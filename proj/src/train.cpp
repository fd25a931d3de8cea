// SPDX-License-Identifier: Apache-2.0
#include "reobj/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <exception>

namespace reobj::tripletnet {

const char* to_string(InputMode m) noexcept { return m == InputMode::concat ? "concat" : "full"; }

void InMemoryFeatureSource::insert(const std::string& record_id, encoding::JointEmbeddingInput input) {
    inputs_.insert_or_assign(record_id, std::move(input));
}

encoding::JointEmbeddingInput InMemoryFeatureSource::load(const std::string& record_id) const {
    auto it = inputs_.find(record_id);
    if (it == inputs_.end()) throw Error("no features for record " + record_id);
    return it->second;
}

DirectoryFeatureSource::DirectoryFeatureSource(std::filesystem::path dir, InputMode mode)
    : dir_(std::move(dir)), mode_(mode) {
    if (!std::filesystem::is_directory(dir_)) throw Error("feature directory not found: " + dir_.string());
}

encoding::JointEmbeddingInput DirectoryFeatureSource::load(const std::string& record_id) const {
    if (mode_ == InputMode::full)
        return {encoding::read_tensor(dir_ / (record_id + ".full.rten")), encoding::Provenance::full};
    return encoding::concat_features(encoding::read_tensor(dir_ / (record_id + ".fg.rten")),
                                     encoding::read_tensor(dir_ / (record_id + ".bg.rten")));
}

void TrainConfig::validate() const {
    if (!(margin >= 0.0)) throw Error("margin must be >= 0");
    if (!(learning_rate >= 0.0)) throw Error("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("momentum must lie in [0,1)");
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (triplets_per_epoch < 0) throw Error("triplets per epoch must be >= 0");
    if (!(same_class_negative_fraction >= 0.0 && same_class_negative_fraction <= 1.0))
        throw Error("same-class negative fraction must lie in [0,1]");
    if (!head.valid()) throw Error("head widths must be positive");
}

namespace {

struct TripletStep {
    double loss = 0.0;
    std::size_t degenerate = 0;
};

// Forward all three towers with the same parameters and back-propagate the hinge.
TripletStep triplet_step(const ConvBlockParams<float>& params, const Triplet& t, float margin,
                         ConvBlockParams<float>& grads) {
    const auto ca = convblock_forward(params, t.anchor_input);
    const auto cp = convblock_forward(params, t.positive_input);
    const auto cn = convblock_forward(params, t.negative_input);
    TripletStep step;
    step.degenerate = std::size_t{ca.degenerate()} + cp.degenerate() + cn.degenerate();
    const auto g = triplet_loss_grad<float>(ca.embedding, cp.embedding, cn.embedding, margin);
    step.loss = g.loss;
    if (g.active()) {
        convblock_backward<float>(params, ca, g.anchor, grads);
        convblock_backward<float>(params, cp, g.positive, grads);
        convblock_backward<float>(params, cn, g.negative, grads);
    }
    return step;
}

}  // namespace

TrainResult train(const std::vector<SampleRef>& train_refs, const FeatureSource& features, const TrainConfig& cfg,
                  std::uint64_t init_seed) {
    cfg.validate();
    TripletSampler sampler(train_refs, cfg.same_class_negative_fraction, cfg.seed);

    TrainResult result;
    result.params = ConvBlockParams<float>::glorot(cfg.head, init_seed);
    auto& params = result.params;
    auto velocity = ConvBlockParams<float>::zeros(cfg.head);

    // Small splits still get kMinBatchesPerEpoch updates per epoch.
    const std::size_t per_epoch =
        cfg.triplets_per_epoch > 0
            ? static_cast<std::size_t>(cfg.triplets_per_epoch)
            : std::max(sampler.eligible_anchor_count(), kMinBatchesPerEpoch * static_cast<std::size_t>(cfg.batch_size));
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto mu = static_cast<float>(cfg.momentum);
    const auto margin = static_cast<float>(cfg.margin);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_sum = 0.0;
        std::size_t remaining = per_epoch;
        std::size_t batch_index = 0;
        while (remaining > 0) {
            const std::size_t b = std::min<std::size_t>(remaining, static_cast<std::size_t>(cfg.batch_size));
            remaining -= b;
            const auto refs = sampler.next_batch(b);

            std::vector<Triplet> batch(b);
            for (std::size_t i = 0; i < b; ++i) {
                auto& t = batch[i];
                t.anchor = sampler.refs()[refs[i].anchor];
                t.positive = sampler.refs()[refs[i].positive];
                t.negative = sampler.refs()[refs[i].negative];
                t.anchor_input = features.load(t.anchor.record_id);
                t.positive_input = features.load(t.positive.record_id);
                t.negative_input = features.load(t.negative.record_id);
            }

            std::vector<ConvBlockParams<float>> local(b, ConvBlockParams<float>::zeros(cfg.head));
            std::vector<TripletStep> steps(b);
            const auto n = static_cast<std::int64_t>(b);
            // Exceptions must not cross the OpenMP region; keep each one and rethrow
            // the lowest-index failure afterwards.
            std::vector<std::exception_ptr> failures(b);
#pragma omp parallel for schedule(dynamic, 1) if (cfg.parallel_batch)
            for (std::int64_t i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(i);
                try {
                    steps[k] = triplet_step(params, batch[k], margin, local[k]);
                } catch (...) {
                    failures[k] = std::current_exception();
                }
            }
            for (const auto& f : failures)
                if (f) std::rethrow_exception(f);

            // Fixed summation order keeps serial and parallel runs bit-identical.
            auto grads = ConvBlockParams<float>::zeros(cfg.head);
            double batch_sum = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                grads.add(local[i]);
                batch_sum += steps[i].loss;
                result.degenerate_embeddings += steps[i].degenerate;
            }
            if (!std::isfinite(batch_sum) || !grads.finite())
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                       std::to_string(batch_index + 1) + ": non-finite loss or gradient");
            grads.scale(1.0f / static_cast<float>(b));
            epoch_sum += batch_sum;

            auto update = [&](std::vector<float>& w, std::vector<float>& v, const std::vector<float>& g) {
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = mu * v[i] + g[i];
                    w[i] -= lr * v[i];
                }
            };
            update(params.conv1_weight, velocity.conv1_weight, grads.conv1_weight);
            update(params.conv1_bias, velocity.conv1_bias, grads.conv1_bias);
            update(params.conv2_weight, velocity.conv2_weight, grads.conv2_weight);
            update(params.conv2_bias, velocity.conv2_bias, grads.conv2_bias);
            update(params.dense_weight, velocity.dense_weight, grads.dense_weight);
            update(params.dense_bias, velocity.dense_bias, grads.dense_bias);
            ++params.generation;
            if (!params.finite())
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                       std::to_string(batch_index + 1) + ": non-finite parameters");
            ++batch_index;
        }
        const double mean = per_epoch > 0 ? epoch_sum / static_cast<double>(per_epoch) : 0.0;
        result.epoch_loss.push_back(mean);
        spdlog::debug("epoch {}/{} mean triplet loss {:.6f}", epoch + 1, cfg.epochs, mean);
    }
    if (result.degenerate_embeddings > 0)
        spdlog::warn("{} embeddings had a zero pre-normalisation vector and were left unnormalised",
                     result.degenerate_embeddings);
    return result;
}

}  // namespace reobj::tripletnet
