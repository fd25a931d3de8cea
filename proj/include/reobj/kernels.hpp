// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

// Data-parallel inner loops of the embedding head and the matcher.
//
// Every kernel has a serial reference and an OpenMP variant. Both variants
// evaluate each output element with the same arithmetic in the same order, so
// they agree bit for bit; the parallel split is only over independent outputs.
// Tensors are HWC with channels fastest; 3x3 kernels are laid out (3,3,Cin,K).

namespace reobj::kernels {

enum class Exec { serial, parallel };

struct ConvShape {
    int height = 0;
    int width = 0;
    int in_channels = 0;
    int out_channels = 0;

    std::size_t input_size() const noexcept { return static_cast<std::size_t>(height) * width * in_channels; }
    std::size_t output_size() const noexcept { return static_cast<std::size_t>(height) * width * out_channels; }
    std::size_t weight_size() const noexcept { return static_cast<std::size_t>(9) * in_channels * out_channels; }
};

namespace serial {

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight, std::span<const T> bias,
                     std::span<T> out);
template <typename T>
void conv3x3_backward_input(const ConvShape& s, std::span<const T> grad_out, std::span<const T> weight,
                            std::span<T> grad_in);
/// Accumulates (+=) into grad_weight and grad_bias.
template <typename T>
void conv3x3_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> grad_out,
                             std::span<T> grad_weight, std::span<T> grad_bias);

/// out[i*m + j] = sum_d (q[i,d] - g[j,d])^2, accumulated in double.
void pairwise_sq_dist(std::span<const float> queries, std::size_t n, std::span<const float> gallery, std::size_t m,
                      std::size_t dim, std::span<double> out);

}  // namespace serial

namespace omp {

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight, std::span<const T> bias,
                     std::span<T> out);
template <typename T>
void conv3x3_backward_input(const ConvShape& s, std::span<const T> grad_out, std::span<const T> weight,
                            std::span<T> grad_in);
template <typename T>
void conv3x3_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> grad_out,
                             std::span<T> grad_weight, std::span<T> grad_bias);

void pairwise_sq_dist(std::span<const float> queries, std::size_t n, std::span<const float> gallery, std::size_t m,
                      std::size_t dim, std::span<double> out);

}  // namespace omp

template <typename T>
void conv3x3_forward(Exec e, const ConvShape& s, std::span<const T> in, std::span<const T> weight,
                     std::span<const T> bias, std::span<T> out) {
    e == Exec::parallel ? omp::conv3x3_forward<T>(s, in, weight, bias, out)
                        : serial::conv3x3_forward<T>(s, in, weight, bias, out);
}

template <typename T>
void conv3x3_backward_input(Exec e, const ConvShape& s, std::span<const T> grad_out, std::span<const T> weight,
                            std::span<T> grad_in) {
    e == Exec::parallel ? omp::conv3x3_backward_input<T>(s, grad_out, weight, grad_in)
                        : serial::conv3x3_backward_input<T>(s, grad_out, weight, grad_in);
}

template <typename T>
void conv3x3_backward_params(Exec e, const ConvShape& s, std::span<const T> in, std::span<const T> grad_out,
                             std::span<T> grad_weight, std::span<T> grad_bias) {
    e == Exec::parallel ? omp::conv3x3_backward_params<T>(s, in, grad_out, grad_weight, grad_bias)
                        : serial::conv3x3_backward_params<T>(s, in, grad_out, grad_weight, grad_bias);
}

inline void pairwise_sq_dist(Exec e, std::span<const float> queries, std::size_t n, std::span<const float> gallery,
                             std::size_t m, std::size_t dim, std::span<double> out) {
    e == Exec::parallel ? omp::pairwise_sq_dist(queries, n, gallery, m, dim, out)
                        : serial::pairwise_sq_dist(queries, n, gallery, m, dim, out);
}

/// Number of OpenMP threads the parallel variants will use.
int max_threads() noexcept;

}  // namespace reobj::kernels
