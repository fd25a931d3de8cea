// SPDX-License-Identifier: Apache-2.0
#include <omp.h>

#include <cstdint>

#include "kernel_rows.hpp"

namespace reobj::kernels {

int max_threads() noexcept { return omp_get_max_threads(); }

namespace omp {

template <typename T>
void conv3x3_forward(const ConvShape& s, std::span<const T> in, std::span<const T> weight, std::span<const T> bias,
                     std::span<T> out) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < s.height; ++y) detail::conv_forward_row<T>(s, y, in, weight, bias, out);
}

template <typename T>
void conv3x3_backward_input(const ConvShape& s, std::span<const T> grad_out, std::span<const T> weight,
                            std::span<T> grad_in) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < s.height; ++y) detail::conv_backward_input_row<T>(s, y, grad_out, weight, grad_in);
}

template <typename T>
void conv3x3_backward_params(const ConvShape& s, std::span<const T> in, std::span<const T> grad_out,
                             std::span<T> grad_weight, std::span<T> grad_bias) {
    const int rows = 9 * s.in_channels;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) detail::conv_backward_weight_row<T>(s, r, in, grad_out, grad_weight);
    detail::conv_backward_bias<T>(s, grad_out, grad_bias);
}

void pairwise_sq_dist(std::span<const float> queries, std::size_t n, std::span<const float> gallery, std::size_t m,
                      std::size_t dim, std::span<double> out) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
        detail::sq_dist_row(static_cast<std::size_t>(i), queries, gallery, m, dim, out);
}

#define REOBJ_INSTANTIATE(T)                                                                                    \
    template void conv3x3_forward<T>(const ConvShape&, std::span<const T>, std::span<const T>,                 \
                                     std::span<const T>, std::span<T>);                                         \
    template void conv3x3_backward_input<T>(const ConvShape&, std::span<const T>, std::span<const T>,          \
                                            std::span<T>);                                                      \
    template void conv3x3_backward_params<T>(const ConvShape&, std::span<const T>, std::span<const T>,         \
                                             std::span<T>, std::span<T>);

REOBJ_INSTANTIATE(float)
REOBJ_INSTANTIATE(double)
#undef REOBJ_INSTANTIATE

}  // namespace omp
}  // namespace reobj::kernels
