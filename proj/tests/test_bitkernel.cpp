#include <doctest.h>

#include "oracles.hpp"
#include "sofar/bitconv.hpp"
#include "sofar/engine.hpp"

using namespace sofar;

TEST_CASE("pack_signs layout and padding rule") {
    std::vector<float> v{1.0f, -1.0f, 1.0f};
    BitPlane p = pack_signs(std::span<const float>(v.data(), v.size()));
    CHECK(p.n == 3);
    CHECK(p.words.size() == 1);
    CHECK(p.get(0));
    CHECK(!p.get(1));
    CHECK(p.get(2));

    std::vector<float> ones(64, 1.0f);
    BitPlane q = pack_signs(std::span<const float>(ones.data(), ones.size()));
    CHECK(q.words.size() == 1);
    CHECK(q.words[0] == ~0ull);

    std::vector<float> w65(65, 1.0f);
    BitPlane r = pack_signs(std::span<const float>(w65.data(), w65.size()));
    CHECK(r.words.size() == 2);
    CHECK(r.words[1] == 1ull);  // one meaningful bit, pad bits zero
}

TEST_CASE("unpack(pack(x)) equals sign(x) with sign(0) = +1") {
    Rng rng(17);
    Tensor x = Tensor::randn(Shape{2, 3, 5, 5}, rng);
    x[0] = 0.0f;
    x[7] = -0.0f;  // negative zero still packs as +1 (>= 0 holds for -0.0f)
    BitPlane p = pack_signs(x);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(p.value(i) == binarize::sign_pm1(x[i]));
}

TEST_CASE("xnor-popcount dot product") {
    auto plane = [](std::initializer_list<float> v) {
        std::vector<float> vv(v);
        return pack_signs(std::span<const float>(vv.data(), vv.size()));
    };
    BitPlane a = plane({1, -1, 1});
    BitPlane b = plane({1, 1, -1});
    CHECK(xnor_popcount_dot(a, b) == -1);  // 1 - 1 - 1
    CHECK(xnor_popcount_dot(a, a) == 3);
    CHECK_THROWS_AS(xnor_popcount_dot(a, plane({1, 1})), Error);

    // random +-1 vectors against the float dot product, exactly
    Rng rng(23);
    const int64_t n = 1000;
    std::vector<float> xf(n), yf(n);
    for (auto& v : xf) v = rng.uniform() < 0.5 ? -1.0f : 1.0f;
    for (auto& v : yf) v = rng.uniform() < 0.5 ? -1.0f : 1.0f;
    double want = 0.0;
    for (int64_t i = 0; i < n; ++i) want += static_cast<double>(xf[i]) * yf[i];
    BitPlane px = pack_signs(std::span<const float>(xf.data(), xf.size()));
    BitPlane py = pack_signs(std::span<const float>(yf.data(), yf.size()));
    CHECK(static_cast<double>(xnor_popcount_dot(px, py)) == want);

    // dot(a,b) = n - 2 * hamming(a,b), and symmetry
    int64_t hamming = 0;
    for (int64_t i = 0; i < n; ++i) hamming += px.get(i) != py.get(i);
    CHECK(xnor_popcount_dot(px, py) == n - 2 * hamming);
    CHECK(xnor_popcount_dot(px, py) == xnor_popcount_dot(py, px));

    // a dot product touches ceil(n/64) words, far fewer than n element ops
    CHECK(static_cast<int64_t>(px.words.size()) == (n + 63) / 64);
    CHECK(static_cast<int64_t>(px.words.size()) < n);
}

TEST_CASE("binary conv: ones case and zero-input tie rule") {
    BinConvParams params;
    params.latent_weights = Tensor(Shape{1, 1, 1, 1}, 1.0f);
    pack_weights(params);
    REQUIRE(params.packed != nullptr);
    CHECK(params.scale[0] == 1.0f);

    Tensor input(Shape{1, 1, 3, 3}, 1.0f);
    Tensor out = binary_conv2d(input, params, 1, 0);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 1.0f);

    // all-zero input: signs are all +1 by the tie rule on both paths
    Tensor zeros(Shape{1, 1, 3, 3}, 0.0f);
    Tensor packed_out = binary_conv2d(zeros, params, 1, 0);
    Tensor ref = binary_conv2d_reference(zeros, params.latent_weights, ScaleMode::PerFilter, 1, 0);
    for (int64_t i = 0; i < ref.numel(); ++i) CHECK(packed_out[i] == ref[i]);
}

TEST_CASE("binary conv equals the float reference exactly, padded borders included") {
    Rng rng(29);
    Tensor w = Tensor::randn(Shape{4, 8, 3, 3}, rng);
    BinConvParams params;
    params.latent_weights = w;
    pack_weights(params);

    Tensor x = Tensor::randn(Shape{1, 8, 8, 8}, rng);
    Tensor got = binary_conv2d(x, params, 1, 1);
    Tensor want = binary_conv2d_reference(x, w, ScaleMode::PerFilter, 1, 1);
    REQUIRE(got.shape() == want.shape());
    double max_abs_diff = 0.0;
    for (int64_t i = 0; i < got.numel(); ++i)
        max_abs_diff = std::max(max_abs_diff,
                                static_cast<double>(std::fabs(got[i] - want[i])));
    CHECK(max_abs_diff == 0.0);
}

TEST_CASE("binary conv agrees with the graph BinConv2d forward") {
    Rng rng(37);
    Graph g;
    int in = g.add_input(Shape{2, 3, 6, 6}, "x");
    int sg = g.add_sign(in, "sign");
    int conv = g.add_conv2d(sg, 5, 3, 2, 1, Precision::Binary, "bconv");
    g.set_output_node(conv);
    g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng);

    Tensor x = Tensor::randn(Shape{2, 3, 6, 6}, rng);
    std::map<int, Tensor> in_map{{in, x}};
    ExecState st = run_forward(g, in_map, RunMode::Eval);

    BinConvParams params;
    params.latent_weights = g.params(conv).weight;
    pack_weights(params);
    Tensor packed_out = binary_conv2d(st.acts[static_cast<size_t>(sg)], params, 2, 1);
    const Tensor& graph_out = st.acts[static_cast<size_t>(conv)];
    REQUIRE(packed_out.shape() == graph_out.shape());
    for (int64_t i = 0; i < packed_out.numel(); ++i) CHECK(packed_out[i] == graph_out[i]);
}

TEST_CASE("randomized equivalence sweep") {
    Rng rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        const int cin = 1 + static_cast<int>(rng.below(16));
        const int cout = 1 + static_cast<int>(rng.below(16));
        const int hw = 3 + static_cast<int>(rng.below(10));
        const int kernel = rng.below(2) ? 3 : 1;
        const int stride = 1 + static_cast<int>(rng.below(2));
        const int padding = static_cast<int>(rng.below(2));
        if (hw + 2 * padding < kernel) continue;
        Tensor w = Tensor::randn(Shape{cout, cin, kernel, kernel}, rng);
        Tensor x = Tensor::randn(Shape{1, cin, hw, hw}, rng);
        BinConvParams params;
        params.latent_weights = w;
        pack_weights(params);
        Tensor got = binary_conv2d(x, params, stride, padding);
        Tensor want = binary_conv2d_reference(x, w, ScaleMode::PerFilter, stride, padding);
        REQUIRE(got.shape() == want.shape());
        for (int64_t i = 0; i < got.numel(); ++i) {
            if (got[i] != want[i]) {
                CAPTURE(trial);
                CAPTURE(i);
                REQUIRE(got[i] == want[i]);
            }
        }
    }
}

TEST_CASE("packed-cache errors") {
    BinConvParams params;
    params.latent_weights = Tensor(Shape{1, 1, 3, 3}, 0.5f);
    // no pack_weights call
    Tensor x(Shape{1, 1, 4, 4}, 1.0f);
    CHECK_THROWS_AS(binary_conv2d(x, params, 1, 1), Error);

    pack_weights(params);
    Tensor wrong_channels(Shape{1, 2, 4, 4}, 1.0f);
    CHECK_THROWS_AS(binary_conv2d(wrong_channels, params, 1, 1), ShapeError);
}
