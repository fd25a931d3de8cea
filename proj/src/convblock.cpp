// SPDX-License-Identifier: Apache-2.0
#include "reobj/convblock.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace reobj::tripletnet {

namespace {

template <typename T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
    if (dst.size() != src.size()) throw ShapeError("parameter tensors differ in size");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void relu_inplace(std::vector<T>& v) {
    for (auto& x : v) x = x > T(0) ? x : T(0);
}

}  // namespace

template <typename T>
ConvBlockParams<T> ConvBlockParams<T>::zeros(const HeadConfig& cfg) {
    if (!cfg.valid()) throw ShapeError("head config has a non-positive width");
    ConvBlockParams p;
    p.config = cfg;
    p.conv1_weight.assign(static_cast<std::size_t>(9) * cfg.in_channels * cfg.conv1_channels, T(0));
    p.conv1_bias.assign(cfg.conv1_channels, T(0));
    p.conv2_weight.assign(static_cast<std::size_t>(9) * cfg.conv1_channels * cfg.conv2_channels, T(0));
    p.conv2_bias.assign(cfg.conv2_channels, T(0));
    p.dense_weight.assign(static_cast<std::size_t>(cfg.conv2_channels) * cfg.embed_dim, T(0));
    p.dense_bias.assign(cfg.embed_dim, T(0));
    return p;
}

template <typename T>
ConvBlockParams<T> ConvBlockParams<T>::glorot(const HeadConfig& cfg, std::uint64_t seed) {
    ConvBlockParams p = zeros(cfg);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::vector<T>& w, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : w) v = static_cast<T>(dist(rng));
    };
    fill(p.conv1_weight, 9.0 * cfg.in_channels, 9.0 * cfg.conv1_channels);
    fill(p.conv2_weight, 9.0 * cfg.conv1_channels, 9.0 * cfg.conv2_channels);
    fill(p.dense_weight, cfg.conv2_channels, cfg.embed_dim);
    return p;
}

template <typename T>
template <typename U>
ConvBlockParams<U> ConvBlockParams<T>::cast() const {
    ConvBlockParams<U> out;
    out.config = config;
    auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
    out.conv1_weight = conv(conv1_weight);
    out.conv1_bias = conv(conv1_bias);
    out.conv2_weight = conv(conv2_weight);
    out.conv2_bias = conv(conv2_bias);
    out.dense_weight = conv(dense_weight);
    out.dense_bias = conv(dense_bias);
    out.generation = generation;
    return out;
}

template <typename T>
std::size_t ConvBlockParams<T>::parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const char*, const std::vector<T>& v) { n += v.size(); });
    return n;
}

template <typename T>
bool ConvBlockParams<T>::finite() const {
    bool ok = true;
    for_each([&ok](const char*, const std::vector<T>& v) {
        ok = ok && std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
    });
    return ok;
}

template <typename T>
bool ConvBlockParams<T>::consistent() const {
    if (!config.valid()) return false;
    const auto& c = config;
    return conv1_weight.size() == static_cast<std::size_t>(9) * c.in_channels * c.conv1_channels &&
           conv1_bias.size() == static_cast<std::size_t>(c.conv1_channels) &&
           conv2_weight.size() == static_cast<std::size_t>(9) * c.conv1_channels * c.conv2_channels &&
           conv2_bias.size() == static_cast<std::size_t>(c.conv2_channels) &&
           dense_weight.size() == static_cast<std::size_t>(c.conv2_channels) * c.embed_dim &&
           dense_bias.size() == static_cast<std::size_t>(c.embed_dim);
}

template <typename T>
void ConvBlockParams<T>::set_zero() {
    for_each([](const char*, std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); });
}

template <typename T>
void ConvBlockParams<T>::add(const ConvBlockParams& other) {
    add_into(conv1_weight, other.conv1_weight);
    add_into(conv1_bias, other.conv1_bias);
    add_into(conv2_weight, other.conv2_weight);
    add_into(conv2_bias, other.conv2_bias);
    add_into(dense_weight, other.dense_weight);
    add_into(dense_bias, other.dense_bias);
}

template <typename T>
void ConvBlockParams<T>::scale(T factor) {
    for_each([factor](const char*, std::vector<T>& v) {
        for (auto& x : v) x *= factor;
    });
}

template <typename T>
ForwardCache<T> convblock_forward(const ConvBlockParams<T>& params, std::span<const T> input, int height, int width,
                                  kernels::Exec exec) {
    const HeadConfig& cfg = params.config;
    if (!params.consistent()) throw ShapeError("convblock_forward: parameter shapes disagree with the head config");
    if (height <= 0 || width <= 0) throw ShapeError("convblock_forward: empty input grid");
    if (input.size() != static_cast<std::size_t>(height) * width * cfg.in_channels)
        throw ShapeError("convblock_forward: input has " + std::to_string(input.size()) + " values, expected " +
                         std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(cfg.in_channels));

    const int K1 = cfg.conv1_channels;
    const int K2 = cfg.conv2_channels;
    const int E = cfg.embed_dim;

    ForwardCache<T> c;
    c.params = &params;
    c.generation = params.generation;
    c.config = cfg;
    c.height = height;
    c.width = width;
    c.pooled_h = pooled_extent(height);
    c.pooled_w = pooled_extent(width);
    c.input.assign(input.begin(), input.end());

    const kernels::ConvShape s1{height, width, cfg.in_channels, K1};
    c.conv1_pre.resize(s1.output_size());
    kernels::conv3x3_forward<T>(exec, s1, c.input, params.conv1_weight, params.conv1_bias, c.conv1_pre);
    std::vector<T> act1 = c.conv1_pre;
    relu_inplace(act1);

    // 2x2/2 max pool, floor; first maximum in row-major order wins ties.
    const int Hp = c.pooled_h, Wp = c.pooled_w;
    c.pool1.resize(static_cast<std::size_t>(Hp) * Wp * K1);
    c.pool1_argmax.resize(c.pool1.size());
    for (int py = 0; py < Hp; ++py)
        for (int px = 0; px < Wp; ++px)
            for (int k = 0; k < K1; ++k) {
                std::uint32_t best_idx = 0;
                T best = T(0);
                bool first = true;
                for (int y = 2 * py; y < std::min(2 * py + 2, height); ++y)
                    for (int x = 2 * px; x < std::min(2 * px + 2, width); ++x) {
                        const auto idx = static_cast<std::uint32_t>((y * width + x) * K1 + k);
                        if (first || act1[idx] > best) {
                            best = act1[idx];
                            best_idx = idx;
                            first = false;
                        }
                    }
                const std::size_t o = (static_cast<std::size_t>(py) * Wp + px) * K1 + k;
                c.pool1[o] = best;
                c.pool1_argmax[o] = best_idx;
            }

    const kernels::ConvShape s2{Hp, Wp, K1, K2};
    c.conv2_pre.resize(s2.output_size());
    kernels::conv3x3_forward<T>(exec, s2, c.pool1, params.conv2_weight, params.conv2_bias, c.conv2_pre);
    std::vector<T> act2 = c.conv2_pre;
    relu_inplace(act2);

    c.pooled.resize(K2);
    c.global_argmax.resize(K2);
    const int positions = Hp * Wp;
    for (int k = 0; k < K2; ++k) {
        std::uint32_t best_idx = static_cast<std::uint32_t>(k);
        T best = act2[k];
        for (int p = 1; p < positions; ++p) {
            const auto idx = static_cast<std::uint32_t>(p * K2 + k);
            if (act2[idx] > best) {
                best = act2[idx];
                best_idx = idx;
            }
        }
        c.pooled[k] = best;
        c.global_argmax[k] = best_idx;
    }

    c.dense_out.assign(params.dense_bias.begin(), params.dense_bias.end());
    for (int k = 0; k < K2; ++k) {
        const T g = c.pooled[k];
        const T* w = params.dense_weight.data() + static_cast<std::size_t>(k) * E;
        for (int e = 0; e < E; ++e) c.dense_out[e] += g * w[e];
    }

    T sq = T(0);
    for (T v : c.dense_out) sq += v * v;
    c.norm = std::sqrt(sq);
    c.embedding.assign(E, T(0));
    if (c.norm > T(0))
        for (int e = 0; e < E; ++e) c.embedding[e] = c.dense_out[e] / c.norm;
    return c;
}

ForwardCache<float> convblock_forward(const ConvBlockParams<float>& params, const encoding::JointEmbeddingInput& x,
                                      kernels::Exec exec) {
    if (x.map.channels != params.config.in_channels)
        throw ShapeError("convblock_forward: input has " + std::to_string(x.map.channels) +
                         " channels, head expects " + std::to_string(params.config.in_channels));
    return convblock_forward<float>(params, x.map.data, x.map.height, x.map.width, exec);
}

template <typename T>
void convblock_backward(const ConvBlockParams<T>& params, const ForwardCache<T>& cache,
                        std::span<const T> grad_embedding, ConvBlockParams<T>& grads, std::vector<T>* grad_input,
                        kernels::Exec exec) {
    if (cache.params != &params || cache.generation != params.generation || !(cache.config == params.config))
        throw StaleCache("convblock_backward: cache was produced by different or since-updated parameters");
    const HeadConfig& cfg = params.config;
    if (!(grads.config == cfg) || !grads.consistent())
        throw ShapeError("convblock_backward: gradient accumulator does not match the head config");
    const int K1 = cfg.conv1_channels;
    const int K2 = cfg.conv2_channels;
    const int E = cfg.embed_dim;
    if (grad_embedding.size() != static_cast<std::size_t>(E))
        throw ShapeError("convblock_backward: upstream gradient has wrong length");

    // d/dz of z/|z| = (I - y y^T)/|z|; the zero vector passes no gradient.
    std::vector<T> dz(E, T(0));
    if (cache.norm > T(0)) {
        T dot = T(0);
        for (int e = 0; e < E; ++e) dot += cache.embedding[e] * grad_embedding[e];
        for (int e = 0; e < E; ++e) dz[e] = (grad_embedding[e] - cache.embedding[e] * dot) / cache.norm;
    }

    std::vector<T> dpooled(K2, T(0));
    for (int k = 0; k < K2; ++k) {
        const T* w = params.dense_weight.data() + static_cast<std::size_t>(k) * E;
        T* gw = grads.dense_weight.data() + static_cast<std::size_t>(k) * E;
        T acc = T(0);
        for (int e = 0; e < E; ++e) {
            gw[e] += cache.pooled[k] * dz[e];
            acc += w[e] * dz[e];
        }
        dpooled[k] = acc;
    }
    for (int e = 0; e < E; ++e) grads.dense_bias[e] += dz[e];

    std::vector<T> dconv2(cache.conv2_pre.size(), T(0));
    for (int k = 0; k < K2; ++k) {
        const auto idx = cache.global_argmax[k];
        if (cache.conv2_pre[idx] > T(0)) dconv2[idx] = dpooled[k];
    }

    const kernels::ConvShape s2{cache.pooled_h, cache.pooled_w, K1, K2};
    kernels::conv3x3_backward_params<T>(exec, s2, cache.pool1, dconv2, grads.conv2_weight, grads.conv2_bias);
    std::vector<T> dpool1(cache.pool1.size());
    kernels::conv3x3_backward_input<T>(exec, s2, dconv2, params.conv2_weight, dpool1);

    std::vector<T> dconv1(cache.conv1_pre.size(), T(0));
    for (std::size_t o = 0; o < dpool1.size(); ++o) {
        const auto idx = cache.pool1_argmax[o];
        if (cache.conv1_pre[idx] > T(0)) dconv1[idx] += dpool1[o];
    }

    const kernels::ConvShape s1{cache.height, cache.width, cfg.in_channels, K1};
    kernels::conv3x3_backward_params<T>(exec, s1, cache.input, dconv1, grads.conv1_weight, grads.conv1_bias);
    if (grad_input) {
        grad_input->assign(cache.input.size(), T(0));
        kernels::conv3x3_backward_input<T>(exec, s1, dconv1, params.conv1_weight, *grad_input);
    }
}

template struct ConvBlockParams<float>;
template struct ConvBlockParams<double>;
template ConvBlockParams<double> ConvBlockParams<float>::cast<double>() const;
template ConvBlockParams<float> ConvBlockParams<double>::cast<float>() const;
template ConvBlockParams<float> ConvBlockParams<float>::cast<float>() const;
template ConvBlockParams<double> ConvBlockParams<double>::cast<double>() const;

template ForwardCache<float> convblock_forward<float>(const ConvBlockParams<float>&, std::span<const float>, int, int,
                                                      kernels::Exec);
template ForwardCache<double> convblock_forward<double>(const ConvBlockParams<double>&, std::span<const double>, int,
                                                        int, kernels::Exec);
template void convblock_backward<float>(const ConvBlockParams<float>&, const ForwardCache<float>&,
                                        std::span<const float>, ConvBlockParams<float>&, std::vector<float>*,
                                        kernels::Exec);
template void convblock_backward<double>(const ConvBlockParams<double>&, const ForwardCache<double>&,
                                         std::span<const double>, ConvBlockParams<double>&, std::vector<double>*,
                                         kernels::Exec);

}  // namespace reobj::tripletnet
