// SPDX-License-Identifier: Apache-2.0
#include "reobj/triplet.hpp"

#include <algorithm>
#include <map>
#include <tuple>

namespace reobj::tripletnet {

bool satisfies_invariants(const SampleRef& a, const SampleRef& p, const SampleRef& n) noexcept {
    return a.instance_id == p.instance_id && a.record_id != p.record_id && n.instance_id != a.instance_id;
}

TripletSampler::TripletSampler(std::vector<SampleRef> refs, double same_class_fraction, std::uint64_t seed)
    : refs_(std::move(refs)), same_class_fraction_(same_class_fraction), rng_(seed) {
    if (!(same_class_fraction >= 0.0 && same_class_fraction <= 1.0))
        throw SamplerError("same-class negative fraction must lie in [0,1]");
    std::sort(refs_.begin(), refs_.end(), [](const SampleRef& a, const SampleRef& b) {
        return std::tie(a.class_label, a.instance_id, a.record_id) <
               std::tie(b.class_label, b.instance_id, b.record_id);
    });
    for (std::size_t i = 1; i < refs_.size(); ++i)
        if (refs_[i].record_id == refs_[i - 1].record_id) throw SamplerError("duplicate record id " + refs_[i].record_id);

    const std::size_t n = refs_.size();
    instance_block_.resize(n);
    class_block_.resize(n);
    std::size_t instances = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && refs_[j].class_label == refs_[i].class_label) ++j;
        for (std::size_t k = i; k < j; ++k) class_block_[k] = {i, j};
        i = j;
    }
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && refs_[j].instance_id == refs_[i].instance_id && refs_[j].class_label == refs_[i].class_label)
            ++j;
        for (std::size_t k = i; k < j; ++k) instance_block_[k] = {i, j};
        if (j - i >= 2)
            for (std::size_t k = i; k < j; ++k) anchors_.push_back(k);
        ++instances;
        i = j;
    }
    // An instance id shared by two classes would split into two blocks.
    std::map<std::string, std::size_t> block_of;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [it, inserted] = block_of.emplace(refs_[i].instance_id, instance_block_[i].begin);
        if (!inserted && it->second != instance_block_[i].begin)
            throw SamplerError("instance " + refs_[i].instance_id + " appears under two class labels");
    }
    if (instances < 2) throw SamplerError("triplet sampling needs at least two instances");
    if (anchors_.empty()) throw SamplerError("triplet sampling needs an instance with at least two views");
}

std::size_t TripletSampler::draw_outside(Block outer, Block excluded) {
    const std::size_t count = outer.size() - excluded.size();
    std::uniform_int_distribution<std::size_t> dist(0, count - 1);
    std::size_t idx = outer.begin + dist(rng_);
    if (idx >= excluded.begin) idx += excluded.size();
    return idx;
}

TripletRef TripletSampler::next() {
    TripletRef t;
    std::uniform_int_distribution<std::size_t> pick_anchor(0, anchors_.size() - 1);
    t.anchor = anchors_[pick_anchor(rng_)];
    const Block inst = instance_block_[t.anchor];
    t.positive = draw_outside(inst, {t.anchor, t.anchor + 1});

    const Block cls = class_block_[t.anchor];
    const bool have_same_class = cls.size() > inst.size();
    std::bernoulli_distribution same_class(same_class_fraction_);
    if (same_class(rng_) && have_same_class)
        t.negative = draw_outside(cls, inst);
    else
        t.negative = draw_outside({0, refs_.size()}, inst);
    return t;
}

std::vector<TripletRef> TripletSampler::next_batch(std::size_t n) {
    std::vector<TripletRef> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(next());
    return batch;
}

}  // namespace reobj::tripletnet
