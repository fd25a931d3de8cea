// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reobj/encoding.hpp"
#include "reobj/kernels.hpp"

namespace reobj::tripletnet {

struct HeadConfig {
    int in_channels = 16;
    int conv1_channels = 64;
    int conv2_channels = 64;
    int embed_dim = 64;

    bool valid() const noexcept {
        return in_channels > 0 && conv1_channels > 0 && conv2_channels > 0 && embed_dim > 0;
    }
    friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Learnable weights of the embedding head:
///   conv 3x3 (C_in -> K1) -> ReLU -> maxpool 2x2/2 -> conv 3x3 (K1 -> K2) -> ReLU
///   -> global max pool -> dense (K2 -> E) -> L2 normalise.
/// The same struct doubles as the gradient accumulator.
template <typename T>
struct ConvBlockParams {
    HeadConfig config;
    std::vector<T> conv1_weight;  // (3,3,C_in,K1)
    std::vector<T> conv1_bias;    // (K1)
    std::vector<T> conv2_weight;  // (3,3,K1,K2)
    std::vector<T> conv2_bias;    // (K2)
    std::vector<T> dense_weight;  // (K2,E)
    std::vector<T> dense_bias;    // (E)
    /// Bumped on every in-place update; forward caches remember it.
    std::uint64_t generation = 0;

    static ConvBlockParams zeros(const HeadConfig& cfg);
    /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
    static ConvBlockParams glorot(const HeadConfig& cfg, std::uint64_t seed);

    template <typename U>
    ConvBlockParams<U> cast() const;

    /// Visits (name, tensor) pairs in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        f("conv1.weight", conv1_weight);
        f("conv1.bias", conv1_bias);
        f("conv2.weight", conv2_weight);
        f("conv2.bias", conv2_bias);
        f("dense.weight", dense_weight);
        f("dense.bias", dense_bias);
    }
    template <typename F>
    void for_each(F&& f) const {
        f("conv1.weight", conv1_weight);
        f("conv1.bias", conv1_bias);
        f("conv2.weight", conv2_weight);
        f("conv2.bias", conv2_bias);
        f("dense.weight", dense_weight);
        f("dense.bias", dense_bias);
    }

    std::size_t parameter_count() const;
    bool finite() const;
    /// Shapes agree with config.
    bool consistent() const;

    void set_zero();
    void add(const ConvBlockParams& other);
    void scale(T factor);
};

template <typename T>
struct ForwardCache {
    const void* params = nullptr;
    std::uint64_t generation = 0;
    HeadConfig config;
    int height = 0, width = 0;          // input grid
    int pooled_h = 0, pooled_w = 0;     // after the 2x2 pool
    std::vector<T> input;
    std::vector<T> conv1_pre;           // (H,W,K1)
    std::vector<std::uint32_t> pool1_argmax;  // (Hp,Wp,K1) flat index into conv1 activations
    std::vector<T> pool1;               // (Hp,Wp,K1)
    std::vector<T> conv2_pre;           // (Hp,Wp,K2)
    std::vector<std::uint32_t> global_argmax;  // (K2) flat index into conv2 activations
    std::vector<T> pooled;              // (K2)
    std::vector<T> dense_out;           // (E), pre-normalisation
    T norm = T(0);
    std::vector<T> embedding;           // (E)

    /// True when the pre-normalisation output was exactly zero; the embedding is then the zero vector.
    bool degenerate() const noexcept { return norm == T(0); }
};

class StaleCache : public Error {
public:
    using Error::Error;
};

/// Output extent of the 2x2/stride-2 pool. Extents below 2 keep a single clipped window.
inline int pooled_extent(int n) noexcept { return n >= 2 ? n / 2 : 1; }

template <typename T>
ForwardCache<T> convblock_forward(const ConvBlockParams<T>& params, std::span<const T> input, int height, int width,
                                  kernels::Exec exec = kernels::Exec::serial);

ForwardCache<float> convblock_forward(const ConvBlockParams<float>& params, const encoding::JointEmbeddingInput& x,
                                      kernels::Exec exec = kernels::Exec::serial);

/// Back-propagates dL/d(embedding). Parameter gradients are accumulated (+=) into
/// `grads`; the input gradient is written to `grad_input` when it is non-null.
/// Max pools route gradient to the first maximal element in row-major order.
template <typename T>
void convblock_backward(const ConvBlockParams<T>& params, const ForwardCache<T>& cache,
                        std::span<const T> grad_embedding, ConvBlockParams<T>& grads,
                        std::vector<T>* grad_input = nullptr, kernels::Exec exec = kernels::Exec::serial);

}  // namespace reobj::tripletnet
