// SPDX-License-Identifier: Apache-2.0
//
// Serial vs OpenMP timings for the hot kernels. Each variant's output is
// compared bit for bit before its time is reported.
//
//   reobj_bench [--reps N] [--threads T]

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>

#include "reobj/convblock.hpp"
#include "reobj/encoding.hpp"
#include "reobj/kernels.hpp"

using namespace reobj;
using kernels::Exec;

namespace {

template <typename F>
double best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

template <typename V>
bool same_bits(const V& a, const V& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(a[0])) == 0;
}

void row(const char* name, double serial_ms, double omp_ms, bool identical) {
    std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name, serial_ms, omp_ms, serial_ms / omp_ms,
                identical ? "identical" : "MISMATCH");
}

std::vector<float> randn(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<float> d;
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serial vs OpenMP kernel timings"};
    int reps = 5, threads = 0;
    app.add_option("--reps", reps, "Repetitions; the best time is reported")->capture_default_str();
    app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");
    CLI11_PARSE(app, argc, argv);
    if (threads > 0) omp_set_num_threads(threads);

    std::mt19937_64 rng(1);
    std::printf("threads: %d\n%-28s %10s %10s %9s\n", kernels::max_threads(), "kernel", "serial ms", "omp ms",
                "speedup");
    bool all_same = true;

    {
        const kernels::ConvShape s{7, 7, 1024, 64};
        const auto in = randn(rng, s.input_size()), w = randn(rng, s.weight_size()), b = randn(rng, 64);
        std::vector<float> o1(s.output_size()), o2(s.output_size());
        const double ts = best_of(reps, [&] { kernels::serial::conv3x3_forward<float>(s, in, w, b, o1); });
        const double tp = best_of(reps, [&] { kernels::omp::conv3x3_forward<float>(s, in, w, b, o2); });
        all_same &= same_bits(o1, o2);
        row("conv3x3 forward 7x7x1024", ts, tp, same_bits(o1, o2));

        const auto go = randn(rng, s.output_size());
        std::vector<float> gi1(s.input_size()), gi2(s.input_size());
        const double ts2 = best_of(reps, [&] { kernels::serial::conv3x3_backward_input<float>(s, go, w, gi1); });
        const double tp2 = best_of(reps, [&] { kernels::omp::conv3x3_backward_input<float>(s, go, w, gi2); });
        all_same &= same_bits(gi1, gi2);
        row("conv3x3 backward input", ts2, tp2, same_bits(gi1, gi2));

        std::vector<float> gw1(s.weight_size()), gb1(64), gw2(s.weight_size()), gb2(64);
        const double ts3 = best_of(reps, [&] {
            std::fill(gw1.begin(), gw1.end(), 0.0f);
            std::fill(gb1.begin(), gb1.end(), 0.0f);
            kernels::serial::conv3x3_backward_params<float>(s, in, go, gw1, gb1);
        });
        const double tp3 = best_of(reps, [&] {
            std::fill(gw2.begin(), gw2.end(), 0.0f);
            std::fill(gb2.begin(), gb2.end(), 0.0f);
            kernels::omp::conv3x3_backward_params<float>(s, in, go, gw2, gb2);
        });
        const bool same = same_bits(gw1, gw2) && same_bits(gb1, gb2);
        all_same &= same;
        row("conv3x3 backward params", ts3, tp3, same);
    }
    {
        const std::size_t n = 400, dim = 64;
        const auto q = randn(rng, n * dim);
        std::vector<double> d1(n * n), d2(n * n);
        const double ts = best_of(reps, [&] { kernels::serial::pairwise_sq_dist(q, n, q, n, dim, d1); });
        const double tp = best_of(reps, [&] { kernels::omp::pairwise_sq_dist(q, n, q, n, dim, d2); });
        all_same &= same_bits(d1, d2);
        row("pairwise distance 400x400", ts, tp, same_bits(d1, d2));
    }
    {
        tripletnet::HeadConfig h;
        h.in_channels = 1024;
        const auto p = tripletnet::ConvBlockParams<float>::glorot(h, 3);
        const auto x = randn(rng, 7 * 7 * 1024);
        tripletnet::ForwardCache<float> c1, c2;
        const double ts = best_of(reps, [&] { c1 = tripletnet::convblock_forward<float>(p, x, 7, 7, Exec::serial); });
        const double tp = best_of(reps, [&] { c2 = tripletnet::convblock_forward<float>(p, x, 7, 7, Exec::parallel); });
        all_same &= same_bits(c1.embedding, c2.embedding);
        row("head forward 7x7x1024", ts, tp, same_bits(c1.embedding, c2.embedding));
    }
    {
        Raster img(224, 224);
        std::uniform_real_distribution<float> u;
        for (auto& v : img.pixels) v = u(rng);
        encoding::ExtractorConfig cfg;
        encoding::FeatureMap m1, m2;
        const double ts = best_of(reps, [&] { m1 = encoding::toy_extract(img, cfg, Exec::serial); });
        const double tp = best_of(reps, [&] { m2 = encoding::toy_extract(img, cfg, Exec::parallel); });
        all_same &= m1 == m2;
        row("toy extractor 224x224", ts, tp, m1 == m2);
    }
    return all_same ? 0 : 1;
}
