// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reobj/encoding.hpp"
#include "reobj/errors.hpp"

namespace reobj::tripletnet {

/// Squared Euclidean distance. Similarity is taken as its negation.
template <typename T>
T distance(std::span<const T> u, std::span<const T> v) {
    if (u.size() != v.size())
        throw ShapeError("distance: length mismatch (" + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()) + ")");
    T acc = T(0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const T d = u[i] - v[i];
        acc += d * d;
    }
    return acc;
}

/// max(0, margin + D(a,p) - D(a,n))
template <typename T>
T triplet_loss(std::span<const T> a, std::span<const T> p, std::span<const T> n, T margin) {
    // Differencing the distances first makes p == n give exactly the margin.
    const T v = margin + (distance(a, p) - distance(a, n));
    // NaN must survive the hinge so that divergence is visible to the caller.
    return v <= T(0) ? T(0) : v;
}

template <typename T>
struct TripletLossGrad {
    T loss = T(0);
    std::vector<T> anchor, positive, negative;
    bool active() const noexcept { return loss > T(0); }
};

/// Loss and its gradient with respect to each of the three embeddings. When the
/// hinge is active: dL/da = 2(n - p), dL/dp = -2(a - p), dL/dn = 2(a - n).
template <typename T>
TripletLossGrad<T> triplet_loss_grad(std::span<const T> a, std::span<const T> p, std::span<const T> n, T margin) {
    TripletLossGrad<T> g;
    g.loss = triplet_loss(a, p, n, margin);
    g.anchor.assign(a.size(), T(0));
    g.positive.assign(a.size(), T(0));
    g.negative.assign(a.size(), T(0));
    if (!g.active()) return g;
    for (std::size_t i = 0; i < a.size(); ++i) {
        g.anchor[i] = T(2) * (n[i] - p[i]);
        g.positive[i] = T(-2) * (a[i] - p[i]);
        g.negative[i] = T(2) * (a[i] - n[i]);
    }
    return g;
}

/// Identity of one training view; feature maps are resolved lazily.
struct SampleRef {
    std::string record_id;
    std::string instance_id;
    std::string class_label;
};

/// Indices into TripletSampler::refs().
struct TripletRef {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    friend bool operator==(const TripletRef&, const TripletRef&) = default;
};

struct Triplet {
    SampleRef anchor, positive, negative;
    encoding::JointEmbeddingInput anchor_input, positive_input, negative_input;
};

class SamplerError : public Error {
public:
    using Error::Error;
};

/// Streaming triplet sampler. It holds only the id index (O(N) memory), never
/// feature maps. refs() is the input sorted by (class, instance, record id).
///
/// Anchors are uniform over views whose instance has at least two views; the
/// positive is another view of the same instance; the negative is a view of a
/// different instance, taken from the anchor's class with probability
/// `same_class_fraction` (when such an instance exists) and from any other
/// instance otherwise.
class TripletSampler {
public:
    TripletSampler(std::vector<SampleRef> refs, double same_class_fraction, std::uint64_t seed);

    TripletRef next();
    std::vector<TripletRef> next_batch(std::size_t n);

    const std::vector<SampleRef>& refs() const noexcept { return refs_; }
    std::size_t eligible_anchor_count() const noexcept { return anchors_.size(); }

private:
    struct Block {
        std::size_t begin = 0, end = 0;
        std::size_t size() const noexcept { return end - begin; }
    };

    std::size_t draw_outside(Block outer, Block excluded);

    // refs_ are sorted by (class, instance, record), so instances and classes are contiguous blocks.
    std::vector<SampleRef> refs_;
    double same_class_fraction_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> anchors_;
    std::vector<Block> instance_block_;  // per ref
    std::vector<Block> class_block_;     // per ref
};

/// Triplet invariants: same instance for anchor/positive with distinct views,
/// different instance for the negative.
bool satisfies_invariants(const SampleRef& a, const SampleRef& p, const SampleRef& n) noexcept;

}  // namespace reobj::tripletnet
