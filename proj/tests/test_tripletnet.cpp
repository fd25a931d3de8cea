// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "reobj/convblock.hpp"
#include "reobj/kernels.hpp"
#include "reobj/model_io.hpp"
#include "reobj/triplet.hpp"

using namespace reobj;
using namespace reobj::tripletnet;

namespace {

std::vector<float> randn(std::mt19937_64& rng, std::size_t n, float sigma = 1.0f) {
    std::normal_distribution<float> d(0.0f, sigma);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// distance and loss

TEST_CASE("distance examples") {
    const std::vector<float> x = {0.3f, -1.2f, 4.0f};
    CHECK(distance<float>(x, x) == 0.0f);
    CHECK(distance<float>(std::vector<float>{1, 0}, std::vector<float>{0, 1}) == 2.0f);
    CHECK_THROWS_AS(distance<float>(std::vector<float>{1, 0}, std::vector<float>{1}), ShapeError);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto u = randn(rng, 17), v = randn(rng, 17);
        double ref = 0;
        for (int k = 0; k < 17; ++k) ref += (double(u[k]) - v[k]) * (double(u[k]) - v[k]);
        CHECK(distance<float>(u, v) == doctest::Approx(ref).epsilon(1e-5));
        CHECK(distance<float>(u, v) == distance<float>(v, u));
    }
}

TEST_CASE("triplet loss examples") {
    // D(a,p)=0.1, D(a,n)=0.9 with M=0.2: hinge inactive
    const std::vector<double> a = {0.0, 0.0}, p = {std::sqrt(0.1), 0.0}, n = {0.0, std::sqrt(0.9)};
    CHECK(triplet_loss<double>(a, p, n, 0.2) == 0.0);
    // a == p, D(a,n) = 0.05
    const std::vector<double> n2 = {std::sqrt(0.05), 0.0};
    CHECK(triplet_loss<double>(a, a, n2, 0.2) == doctest::Approx(0.15).epsilon(1e-12));
    // p == n gives exactly M
    const std::vector<float> af = {0.6f, 0.8f}, pf = {-0.28f, 0.96f};
    CHECK(triplet_loss<float>(af, pf, pf, 0.2f) == 0.2f);
}

TEST_CASE("triplet loss properties") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> um(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const auto a = randn(rng, 8), p = randn(rng, 8), n = randn(rng, 8);
        const float m = static_cast<float>(um(rng));
        const float l = triplet_loss<float>(a, p, n, m);
        CHECK(l >= 0.0f);
        if (l == 0.0f && m > 0.0f) CHECK(distance<float>(a, p) < distance<float>(a, n));
    }
}

TEST_CASE("triplet loss gradient follows the symbolic derivative") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a(6), p(6), n(6);
        std::normal_distribution<double> d;
        for (auto* v : {&a, &p, &n})
            for (auto& x : *v) x = d(rng);
        const auto g = triplet_loss_grad<double>(a, p, n, 50.0);  // hinge active
        REQUIRE(g.active());
        for (int k = 0; k < 6; ++k) {
            CHECK(g.anchor[k] == doctest::Approx(2 * (n[k] - p[k])));
            CHECK(g.positive[k] == doctest::Approx(-2 * (a[k] - p[k])));
            CHECK(g.negative[k] == doctest::Approx(2 * (a[k] - n[k])));
            // anchor gradient is minus the sum of the other two
            CHECK(g.anchor[k] == doctest::Approx(-(g.positive[k] + g.negative[k])));
            // finite differences on the anchor
            auto up = a, down = a;
            up[k] += 1e-6;
            down[k] -= 1e-6;
            const double fd = (triplet_loss<double>(up, p, n, 50.0) - triplet_loss<double>(down, p, n, 50.0)) / 2e-6;
            CHECK(g.anchor[k] == doctest::Approx(fd).epsilon(1e-5));
        }
        const auto z = triplet_loss_grad<double>(a, a, std::vector<double>(6, 1e3), 0.2);
        CHECK_FALSE(z.active());
        CHECK(std::all_of(z.anchor.begin(), z.anchor.end(), [](double v) { return v == 0.0; }));
    }
}

// ---------------------------------------------------------------------------
// kernels

TEST_CASE("serial and OpenMP kernels are bit identical") {
    std::mt19937_64 rng(33);
    for (const auto& s : {kernels::ConvShape{7, 7, 16, 64}, kernels::ConvShape{3, 3, 64, 64}, kernels::ConvShape{5, 2, 3, 4},
                          kernels::ConvShape{1, 1, 2, 2}}) {
        const auto in = randn(rng, s.input_size()), w = randn(rng, s.weight_size()), b = randn(rng, s.out_channels);
        const auto go = randn(rng, s.output_size());
        std::vector<float> o1(s.output_size()), o2(s.output_size());
        kernels::serial::conv3x3_forward<float>(s, in, w, b, o1);
        kernels::omp::conv3x3_forward<float>(s, in, w, b, o2);
        CHECK(bit_equal(o1, o2));
        std::vector<float> gi1(s.input_size()), gi2(s.input_size());
        kernels::serial::conv3x3_backward_input<float>(s, go, w, gi1);
        kernels::omp::conv3x3_backward_input<float>(s, go, w, gi2);
        CHECK(bit_equal(gi1, gi2));
        std::vector<float> gw1(s.weight_size(), 0.5f), gw2 = gw1, gb1(s.out_channels, 0.25f), gb2 = gb1;
        kernels::serial::conv3x3_backward_params<float>(s, in, go, gw1, gb1);
        kernels::omp::conv3x3_backward_params<float>(s, in, go, gw2, gb2);
        CHECK(bit_equal(gw1, gw2));
        CHECK(bit_equal(gb1, gb2));
    }
    const auto q = randn(rng, 37 * 24), g = randn(rng, 11 * 24);
    std::vector<double> d1(37 * 11), d2(37 * 11);
    kernels::serial::pairwise_sq_dist(q, 37, g, 11, 24, d1);
    kernels::omp::pairwise_sq_dist(q, 37, g, 11, 24, d2);
    CHECK(bit_equal(d1, d2));
    for (int i = 0; i < 37; ++i)
        for (int j = 0; j < 11; ++j) {
            double ref = 0;
            for (int k = 0; k < 24; ++k) ref += (double(q[i * 24 + k]) - g[j * 24 + k]) * (double(q[i * 24 + k]) - g[j * 24 + k]);
            CHECK(d1[i * 11 + j] == doctest::Approx(ref).epsilon(1e-12));
        }
}

// ---------------------------------------------------------------------------
// head

TEST_CASE("head parameters: shapes, init bounds, counts") {
    HeadConfig cfg{8, 6, 5, 4};
    const auto p = ConvBlockParams<float>::glorot(cfg, 3);
    CHECK(p.consistent());
    CHECK(p.finite());
    CHECK(p.conv1_weight.size() == 9 * 8 * 6);
    CHECK(p.conv2_weight.size() == 9 * 6 * 5);
    CHECK(p.dense_weight.size() == 5 * 4);
    CHECK(p.parameter_count() == 9 * 8 * 6 + 6 + 9 * 6 * 5 + 5 + 5 * 4 + 4);
    const double b1 = std::sqrt(6.0 / (9 * 8 + 9 * 6));
    CHECK(std::all_of(p.conv1_weight.begin(), p.conv1_weight.end(), [&](float v) { return std::abs(v) <= b1; }));
    const double b3 = std::sqrt(6.0 / (5 + 4));
    CHECK(std::all_of(p.dense_weight.begin(), p.dense_weight.end(), [&](float v) { return std::abs(v) <= b3; }));
    CHECK(std::all_of(p.conv1_bias.begin(), p.conv1_bias.end(), [](float v) { return v == 0.0f; }));
    CHECK(bit_equal(ConvBlockParams<float>::glorot(cfg, 3).conv2_weight, p.conv2_weight));
    CHECK_FALSE(bit_equal(ConvBlockParams<float>::glorot(cfg, 4).conv2_weight, p.conv2_weight));
}

TEST_CASE("forward matches the layer-by-layer reference and is unit norm") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        HeadConfig cfg{16, 12, 10, 8};
        const int H = 1 + static_cast<int>(rng() % 8), W = 1 + static_cast<int>(rng() % 8);
        auto p = ConvBlockParams<float>::glorot(cfg, trial);
        p.for_each([&](const char*, std::vector<float>& v) {
            for (auto& x : v) x += 0.05f * randn(rng, 1)[0];
        });
        const auto x = randn(rng, static_cast<std::size_t>(H) * W * 16);
        const auto c = convblock_forward<float>(p, x, H, W);
        const auto ref = oracle::head_forward(p, std::vector<double>(x.begin(), x.end()), H, W);
        REQUIRE(c.embedding.size() == 8);
        double n2 = 0;
        for (int e = 0; e < 8; ++e) {
            CHECK(c.embedding[e] == doctest::Approx(ref[e]).epsilon(1e-4).scale(1e-4));
            n2 += double(c.embedding[e]) * c.embedding[e];
        }
        if (!c.degenerate()) CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-6);
        CHECK(c.pooled_h == (H >= 2 ? H / 2 : 1));
        const auto cp = convblock_forward<float>(p, x, H, W, kernels::Exec::parallel);
        CHECK(bit_equal(cp.embedding, c.embedding));
    }
}

TEST_CASE("7x7 input pools to 3x3") {
    const auto p = ConvBlockParams<float>::glorot({16, 4, 4, 4}, 1);
    const auto c = convblock_forward<float>(p, std::vector<float>(7 * 7 * 16, 1.0f), 7, 7);
    CHECK(c.pooled_h == 3);
    CHECK(c.pooled_w == 3);
    CHECK(c.conv2_pre.size() == 3 * 3 * 4);
}

TEST_CASE("all-zero input with zero biases is degenerate") {
    auto p = ConvBlockParams<float>::glorot({16, 8, 8, 8}, 5);
    const auto c = convblock_forward<float>(p, std::vector<float>(7 * 7 * 16, 0.0f), 7, 7);
    CHECK(c.degenerate());
    CHECK(std::all_of(c.dense_out.begin(), c.dense_out.end(), [](float v) { return v == 0.0f; }));
    CHECK(std::all_of(c.embedding.begin(), c.embedding.end(), [](float v) { return v == 0.0f; }));
    auto grads = ConvBlockParams<float>::zeros(p.config);
    convblock_backward<float>(p, c, std::vector<float>(8, 1.0f), grads);
    grads.for_each([](const char*, const std::vector<float>& v) {
        CHECK(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; }));
    });
}

TEST_CASE("1x1 input with identity centre taps is hand computable") {
    // C_in = K1 = K2 = E = 2, identity centre taps, identity dense.
    HeadConfig cfg{2, 2, 2, 2};
    auto p = ConvBlockParams<float>::zeros(cfg);
    auto centre = [](std::vector<float>& w, int ci, int co) {
        for (int i = 0; i < ci && i < co; ++i) w[(4 * ci + i) * co + i] = 1.0f;  // tap (1,1)
    };
    centre(p.conv1_weight, 2, 2);
    centre(p.conv2_weight, 2, 2);
    p.dense_weight = {1, 0, 0, 1};
    auto c = convblock_forward<float>(p, std::vector<float>{3.0f, 4.0f}, 1, 1);
    CHECK(c.embedding[0] == doctest::Approx(0.6));
    CHECK(c.embedding[1] == doctest::Approx(0.8));
    c = convblock_forward<float>(p, std::vector<float>{-3.0f, 4.0f}, 1, 1);  // ReLU clips the first channel
    CHECK(c.embedding[0] == 0.0f);
    CHECK(c.embedding[1] == 1.0f);
}

TEST_CASE("backward: zero upstream gradient gives zero gradients") {
    std::mt19937_64 rng(2);
    const auto p = ConvBlockParams<float>::glorot({8, 6, 5, 4}, 9);
    const auto x = randn(rng, 5 * 5 * 8);
    const auto c = convblock_forward<float>(p, x, 5, 5);
    auto grads = ConvBlockParams<float>::zeros(p.config);
    std::vector<float> gin;
    convblock_backward<float>(p, c, std::vector<float>(4, 0.0f), grads, &gin);
    grads.for_each([](const char*, const std::vector<float>& v) {
        CHECK(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; }));
    });
    CHECK(std::all_of(gin.begin(), gin.end(), [](float x) { return x == 0.0f; }));
}

TEST_CASE("backward rejects stale caches") {
    std::mt19937_64 rng(2);
    auto p = ConvBlockParams<float>::glorot({8, 6, 5, 4}, 9);
    const auto c = convblock_forward<float>(p, randn(rng, 3 * 3 * 8), 3, 3);
    auto grads = ConvBlockParams<float>::zeros(p.config);
    const auto other = p;
    CHECK_THROWS_AS(convblock_backward<float>(other, c, std::vector<float>(4, 1.0f), grads), StaleCache);
    ++p.generation;
    CHECK_THROWS_AS(convblock_backward<float>(p, c, std::vector<float>(4, 1.0f), grads), StaleCache);
}

TEST_CASE("channel mismatch is an error") {
    const auto p = ConvBlockParams<float>::glorot({16, 4, 4, 4}, 1);
    encoding::JointEmbeddingInput x{encoding::FeatureMap(7, 7, 8), encoding::Provenance::full};
    CHECK_THROWS_AS(convblock_forward(p, x), ShapeError);
}

TEST_CASE("max pool ties route gradient to the first index") {
    // Constant input: every conv1 output in a window is equal.
    HeadConfig cfg{1, 1, 1, 1};
    auto p = ConvBlockParams<float>::zeros(cfg);
    p.conv1_bias = {1.0f};
    p.conv2_weight[4] = 1.0f;  // centre tap
    p.dense_weight = {1.0f};
    const auto c = convblock_forward<float>(p, std::vector<float>(16, 0.0f), 4, 4);
    CHECK(c.pool1_argmax[0] == 0);
    CHECK(c.pool1_argmax[1] == 2);
    CHECK(c.pool1_argmax[2] == 8);
    CHECK(c.global_argmax[0] == 0);
}

TEST_CASE("gradients match central finite differences") {
    for (int cin : {8, 16})
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const auto r = gradcheck::check({cin, 6, 5, 4}, 7, 7, seed);
            INFO("C_in=" << cin << " seed=" << seed << " worst=" << r.worst << " kinks=" << r.kinks);
            CHECK(r.checked > 0);
            CHECK(r.max_rel_error < 1e-3);
        }
    const auto odd = gradcheck::check({3, 4, 3, 5}, 5, 3, 11);
    CHECK(odd.max_rel_error < 1e-3);
}

TEST_CASE("shared weights: an input embeds identically in every triplet role") {
    std::mt19937_64 rng(1);
    const auto p = ConvBlockParams<float>::glorot({16, 8, 8, 8}, 1);
    const auto x = randn(rng, 7 * 7 * 16), y = randn(rng, 7 * 7 * 16);
    const auto e1 = convblock_forward<float>(p, x, 7, 7).embedding;
    convblock_forward<float>(p, y, 7, 7);
    CHECK(bit_equal(convblock_forward<float>(p, x, 7, 7).embedding, e1));
}

// ---------------------------------------------------------------------------
// model file

TEST_CASE("RMDL round trip and errors") {
    const auto dir = testutil::temp_dir("rmdl");
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) {
        HeadConfig cfg{1 + static_cast<int>(rng() % 20), 1 + static_cast<int>(rng() % 9), 1 + static_cast<int>(rng() % 9),
                       1 + static_cast<int>(rng() % 9)};
        auto p = ConvBlockParams<float>::glorot(cfg, rng());
        p.conv1_bias = randn(rng, p.conv1_bias.size());
        const std::string digest = i % 2 ? std::string(64, 'a') : std::string();
        write_model(dir / "m.rmdl", p, digest);
        const auto back = read_model(dir / "m.rmdl");
        REQUIRE(back.params.config == cfg);
        CHECK(back.config_digest == digest);
        std::size_t t = 0;
        std::vector<const std::vector<float>*> orig;
        p.for_each([&](const char*, const std::vector<float>& v) { orig.push_back(&v); });
        back.params.for_each([&](const char*, const std::vector<float>& v) { CHECK(bit_equal(v, *orig[t++])); });
    }
    const auto bytes = encode_model(ConvBlockParams<float>::glorot({4, 3, 2, 2}, 1));
    auto code_of = [](std::vector<unsigned char> b) {
        try {
            decode_model(b);
        } catch (const FormatError& e) {
            return e.code();
        }
        return FormatErrc::io;
    };
    auto bad = bytes;
    bad[1] = 'X';
    CHECK(code_of(bad) == FormatErrc::bad_magic);
    bad = bytes;
    bad[4] = 9;
    CHECK(code_of(bad) == FormatErrc::unsupported_version);
    bad.assign(bytes.begin(), bytes.end() - 3);
    CHECK(code_of(bad) == FormatErrc::truncated);
    bad = bytes;
    bad.push_back(1);
    CHECK(code_of(bad) == FormatErrc::trailing_data);
    CHECK(code_of(bytes) == FormatErrc::io);  // sentinel: no error
}

// ---------------------------------------------------------------------------
// sampler

TEST_CASE("sampler covers exactly the valid triplets of a 2x2 dataset") {
    std::vector<SampleRef> refs = {{"a1", "A", "chair"}, {"a2", "A", "chair"}, {"b1", "B", "chair"}, {"b2", "B", "chair"}};
    const auto valid = oracle::all_triplets({{"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"b2", "B"}});
    REQUIRE(valid.size() == 8);
    TripletSampler s(refs, 0.5, 3);
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto t = s.next();
        const auto& r = s.refs();
        const std::tuple<std::string, std::string, std::string> key{r[t.anchor].record_id, r[t.positive].record_id,
                                                                    r[t.negative].record_id};
        REQUIRE(valid.count(key) == 1);
        seen.insert(key);
    }
    CHECK(seen == valid);
}

TEST_CASE("sampler validity, determinism and class fraction") {
    std::mt19937_64 rng(5);
    std::vector<SampleRef> refs;
    for (int k = 0; k < 30; ++k) {
        const int views = 1 + static_cast<int>(rng() % 5);
        for (int v = 0; v < views; ++v)
            refs.push_back({"r" + std::to_string(k) + "_" + std::to_string(v), "i" + std::to_string(k), k % 3 ? "chair" : "table"});
    }
    TripletSampler a(refs, 0.5, 99), b(refs, 0.5, 99);
    const auto ba = a.next_batch(10000), bb = b.next_batch(10000);
    CHECK(ba == bb);
    for (const auto& t : ba) {
        const auto& r = a.refs();
        REQUIRE(satisfies_invariants(r[t.anchor], r[t.positive], r[t.negative]));
    }
    TripletSampler same(refs, 1.0, 7);
    for (const auto& t : same.next_batch(5000)) {
        const auto& r = same.refs();
        REQUIRE(r[t.anchor].class_label == r[t.negative].class_label);
    }
    TripletSampler other(refs, 0.0, 7);
    std::size_t cross = 0;
    for (const auto& t : other.next_batch(5000)) {
        const auto& r = other.refs();
        cross += r[t.anchor].class_label != r[t.negative].class_label;
    }
    CHECK(cross > 1000);
}

TEST_CASE("sampler anchors are uniform over eligible views") {
    std::vector<SampleRef> refs = {{"a1", "A", "c"}, {"a2", "A", "c"}, {"a3", "A", "c"}, {"b1", "B", "c"}, {"b2", "B", "c"},
                                   {"c1", "C", "c"}};
    TripletSampler s(refs, 0.5, 1);
    CHECK(s.eligible_anchor_count() == 5);
    std::map<std::string, int> count;
    for (const auto& t : s.next_batch(50000)) ++count[s.refs()[t.anchor].record_id];
    CHECK(count.count("c1") == 0);
    for (const auto& [id, n] : count) CHECK(n == doctest::Approx(10000).epsilon(0.05));
}

TEST_CASE("sampler preconditions") {
    CHECK_THROWS_AS(TripletSampler({{"a", "A", "c"}, {"b", "B", "c"}}, 0.5, 1), SamplerError);
    CHECK_THROWS_AS(TripletSampler({{"a", "A", "c"}, {"b", "A", "c"}}, 0.5, 1), SamplerError);
    CHECK_THROWS_AS(TripletSampler({{"a", "A", "c"}, {"a", "A", "c"}, {"b", "B", "c"}}, 0.5, 1), SamplerError);
    CHECK_THROWS_AS(TripletSampler({{"a", "A", "c"}, {"b", "A", "d"}, {"e", "B", "c"}}, 0.5, 1), SamplerError);
    CHECK_THROWS_AS(TripletSampler({{"a", "A", "c"}, {"b", "A", "c"}, {"e", "B", "c"}}, 1.5, 1), SamplerError);
    CHECK_NOTHROW(TripletSampler({{"a", "A", "c"}, {"b", "A", "c"}, {"e", "B", "c"}}, 1.0, 1));
}
