// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "reobj/convblock.hpp"
#include "reobj/encoding.hpp"
#include "reobj/triplet.hpp"

namespace reobj::tripletnet {

/// Which representation the head is trained on.
enum class InputMode { concat, full };

const char* to_string(InputMode m) noexcept;

/// Resolves record ids to head inputs on demand.
class FeatureSource {
public:
    virtual ~FeatureSource() = default;
    virtual encoding::JointEmbeddingInput load(const std::string& record_id) const = 0;
};

class InMemoryFeatureSource final : public FeatureSource {
public:
    void insert(const std::string& record_id, encoding::JointEmbeddingInput input);
    encoding::JointEmbeddingInput load(const std::string& record_id) const override;

private:
    std::map<std::string, encoding::JointEmbeddingInput> inputs_;
};

/// Reads <id>.fg.rten + <id>.bg.rten (concat) or <id>.full.rten (full) from a directory per request.
class DirectoryFeatureSource final : public FeatureSource {
public:
    DirectoryFeatureSource(std::filesystem::path dir, InputMode mode);
    encoding::JointEmbeddingInput load(const std::string& record_id) const override;

private:
    std::filesystem::path dir_;
    InputMode mode_;
};

inline constexpr std::size_t kMinBatchesPerEpoch = 10;

struct TrainConfig {
    double margin = 0.2;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double same_class_negative_fraction = 0.5;
    /// Triplets drawn per epoch; 0 means one per eligible anchor view, but at
    /// least kMinBatchesPerEpoch full batches.
    int triplets_per_epoch = 0;
    HeadConfig head;
    /// Per-triplet forward/backward in parallel; gradients are still summed in triplet order.
    bool parallel_batch = false;

    void validate() const;
};

struct TrainResult {
    ConvBlockParams<float> params;
    std::vector<double> epoch_loss;     // mean triplet loss per epoch
    std::size_t degenerate_embeddings = 0;
};

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

/// SGD with momentum over mini-batches of triplet losses (batch mean). The three
/// towers share one parameter set: each triplet member goes through the same
/// forward function with the same weights.
TrainResult train(const std::vector<SampleRef>& train_refs, const FeatureSource& features, const TrainConfig& cfg,
                  std::uint64_t init_seed);

}  // namespace reobj::tripletnet
