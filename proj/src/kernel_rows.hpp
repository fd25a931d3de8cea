// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-row bodies shared by the serial and OpenMP kernels. Keeping one body per
// output row is what makes the two variants bit-identical.

#include <cstddef>
#include <span>

#include "reobj/kernels.hpp"

namespace reobj::kernels::detail {

template <typename T>
inline void conv_forward_row(const ConvShape& s, int y, std::span<const T> in, std::span<const T> weight,
                             std::span<const T> bias, std::span<T> out) {
    const int K = s.out_channels;
    const int C = s.in_channels;
    for (int x = 0; x < s.width; ++x) {
        T* o = out.data() + (static_cast<std::size_t>(y) * s.width + x) * K;
        for (int k = 0; k < K; ++k) o[k] = bias[k];
        for (int ky = 0; ky < 3; ++ky) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= s.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
                const int ix = x + kx - 1;
                if (ix < 0 || ix >= s.width) continue;
                const T* src = in.data() + (static_cast<std::size_t>(iy) * s.width + ix) * C;
                const T* w = weight.data() + static_cast<std::size_t>(ky * 3 + kx) * C * K;
                for (int c = 0; c < C; ++c) {
                    const T v = src[c];
                    const T* wc = w + static_cast<std::size_t>(c) * K;
                    for (int k = 0; k < K; ++k) o[k] += v * wc[k];
                }
            }
        }
    }
}

template <typename T>
inline void conv_backward_input_row(const ConvShape& s, int iy, std::span<const T> grad_out,
                                    std::span<const T> weight, std::span<T> grad_in) {
    const int K = s.out_channels;
    const int C = s.in_channels;
    for (int ix = 0; ix < s.width; ++ix) {
        T* gi = grad_in.data() + (static_cast<std::size_t>(iy) * s.width + ix) * C;
        for (int c = 0; c < C; ++c) gi[c] = T(0);
        for (int ky = 0; ky < 3; ++ky) {
            const int y = iy + 1 - ky;
            if (y < 0 || y >= s.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
                const int x = ix + 1 - kx;
                if (x < 0 || x >= s.width) continue;
                const T* go = grad_out.data() + (static_cast<std::size_t>(y) * s.width + x) * K;
                const T* w = weight.data() + static_cast<std::size_t>(ky * 3 + kx) * C * K;
                for (int c = 0; c < C; ++c) {
                    const T* wc = w + static_cast<std::size_t>(c) * K;
                    T acc = T(0);
                    for (int k = 0; k < K; ++k) acc += go[k] * wc[k];
                    gi[c] += acc;
                }
            }
        }
    }
}

// One weight row is the K-vector at (ky, kx, c).
template <typename T>
inline void conv_backward_weight_row(const ConvShape& s, int row, std::span<const T> in, std::span<const T> grad_out,
                                     std::span<T> grad_weight) {
    const int K = s.out_channels;
    const int C = s.in_channels;
    const int tap = row / C;
    const int c = row % C;
    const int ky = tap / 3;
    const int kx = tap % 3;
    T* gw = grad_weight.data() + static_cast<std::size_t>(row) * K;
    for (int y = 0; y < s.height; ++y) {
        const int iy = y + ky - 1;
        if (iy < 0 || iy >= s.height) continue;
        for (int x = 0; x < s.width; ++x) {
            const int ix = x + kx - 1;
            if (ix < 0 || ix >= s.width) continue;
            const T v = in[(static_cast<std::size_t>(iy) * s.width + ix) * C + c];
            const T* go = grad_out.data() + (static_cast<std::size_t>(y) * s.width + x) * K;
            for (int k = 0; k < K; ++k) gw[k] += v * go[k];
        }
    }
}

template <typename T>
inline void conv_backward_bias(const ConvShape& s, std::span<const T> grad_out, std::span<T> grad_bias) {
    const int K = s.out_channels;
    const std::size_t positions = static_cast<std::size_t>(s.height) * s.width;
    for (std::size_t p = 0; p < positions; ++p)
        for (int k = 0; k < K; ++k) grad_bias[k] += grad_out[p * K + k];
}

inline void sq_dist_row(std::size_t i, std::span<const float> queries, std::span<const float> gallery, std::size_t m,
                        std::size_t dim, std::span<double> out) {
    const float* q = queries.data() + i * dim;
    for (std::size_t j = 0; j < m; ++j) {
        const float* g = gallery.data() + j * dim;
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = static_cast<double>(q[d]) - static_cast<double>(g[d]);
            acc += diff * diff;
        }
        out[i * m + j] = acc;
    }
}

}  // namespace reobj::kernels::detail
