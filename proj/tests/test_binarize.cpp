#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sofar/engine.hpp"

using namespace sofar;
namespace bz = sofar::binarize;

TEST_CASE("weight binarization: scale and signs") {
    // one filter of four taps
    Tensor w = Tensor::from(Shape{1, 1, 2, 2}, {0.5f, -0.3f, 0.1f, -0.1f});
    auto [wb, e] = bz::binarize_weights(w);
    REQUIRE(e.size() == 1);
    CHECK(e[0] == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(wb[0] == 0.25f);
    CHECK(wb[1] == -0.25f);
    CHECK(wb[2] == 0.25f);
    CHECK(wb[3] == -0.25f);

    // degenerate all-zero filter: E = 0, W_b = 0 (sign(0) = +1 times 0)
    Tensor z(Shape{1, 1, 2, 2}, 0.0f);
    auto [zb, ze] = bz::binarize_weights(z);
    CHECK(ze[0] == 0.0f);
    for (int64_t i = 0; i < 4; ++i) CHECK(zb[i] == 0.0f);

    // already binary
    Tensor pm = Tensor::from(Shape{1, 1, 1, 2}, {1.0f, -1.0f});
    auto [pb, pe] = bz::binarize_weights(pm);
    CHECK(pe[0] == 1.0f);
    CHECK(pb[0] == 1.0f);
    CHECK(pb[1] == -1.0f);

    CHECK_THROWS_AS(bz::binarize_weights(Tensor{}), Error);
}

TEST_CASE("weight scale is the per-filter mean absolute value") {
    Rng rng(11);
    Tensor w = Tensor::randn(Shape{6, 4, 3, 3}, rng);
    auto scales = bz::weight_scales(w);
    REQUIRE(scales.size() == 6);
    const int64_t per = 4 * 3 * 3;
    for (int64_t o = 0; o < 6; ++o) {
        double acc = 0.0;
        for (int64_t i = 0; i < per; ++i) acc += std::fabs(w[o * per + i]);
        CHECK(scales[static_cast<size_t>(o)] ==
              doctest::Approx(acc / static_cast<double>(per)).epsilon(1e-6));
    }
    // per-layer mode: a single scalar over the whole tensor
    auto layer = bz::weight_scales(w, ScaleMode::PerLayer);
    REQUIRE(layer.size() == 1);
    double all = 0.0;
    for (int64_t i = 0; i < w.numel(); ++i) all += std::fabs(w[i]);
    CHECK(layer[0] == doctest::Approx(all / static_cast<double>(w.numel())).epsilon(1e-6));

    // |W_b| takes exactly one magnitude per filter
    auto [wb, e] = bz::binarize_weights(w);
    for (int64_t o = 0; o < 6; ++o)
        for (int64_t i = 0; i < per; ++i)
            CHECK(std::fabs(wb[o * per + i]) == e[static_cast<size_t>(o)]);
}

TEST_CASE("straight-through weight gradient") {
    Tensor up(Shape{2, 1, 1, 2}, 1.0f);
    Tensor g = bz::weight_grad_ste(up, {0.25f, 0.5f});
    CHECK(g[0] == 0.25f);
    CHECK(g[1] == 0.25f);
    CHECK(g[2] == 0.5f);
    CHECK(g[3] == 0.5f);

    Tensor zeros(Shape{2, 1, 1, 2}, 0.0f);
    Tensor gz = bz::weight_grad_ste(zeros, {0.25f, 0.5f});
    for (int64_t i = 0; i < 4; ++i) CHECK(gz[i] == 0.0f);

    // random case against a scalar loop
    Rng rng(3);
    Tensor u = Tensor::randn(Shape{3, 2, 2, 2}, rng);
    std::vector<float> e{0.1f, 0.9f, 1.7f};
    Tensor got = bz::weight_grad_ste(u, e);
    const int64_t per = 8;
    for (int64_t o = 0; o < 3; ++o)
        for (int64_t i = 0; i < per; ++i)
            CHECK(got[o * per + i] ==
                  doctest::Approx(e[static_cast<size_t>(o)] * u[o * per + i]).epsilon(1e-7));

    CHECK_THROWS_AS(bz::weight_grad_ste(u, {0.1f, 0.2f}), ShapeError);
}

TEST_CASE("activation binarization") {
    Tensor a = Tensor::from(Shape{1, 1, 1, 3}, {-0.7f, 0.0f, 0.3f});
    Tensor b = bz::binarize_activations(a);
    CHECK(b[0] == -1.0f);
    CHECK(b[1] == 1.0f);  // sign(0) = +1
    CHECK(b[2] == 1.0f);

    Rng rng(8);
    Tensor r = Tensor::randn(Shape{2, 3, 4, 4}, rng);
    Tensor s = bz::binarize_activations(r);
    for (int64_t i = 0; i < s.numel(); ++i) CHECK((s[i] == 1.0f || s[i] == -1.0f));
    // idempotence
    Tensor ss = bz::binarize_activations(s);
    for (int64_t i = 0; i < s.numel(); ++i) CHECK(ss[i] == s[i]);

    Tensor pos = Tensor::rand_uniform(Shape{1, 1, 2, 8}, rng, 0.1f, 5.0f);
    Tensor bp = bz::binarize_activations(pos);
    for (int64_t i = 0; i < bp.numel(); ++i) CHECK(bp[i] == 1.0f);
}

TEST_CASE("piecewise activation gradient branches") {
    // g(A) = 2+2A on (-1,0), 2-2A on [0,1), 0 otherwise
    const float a_vals[] = {-2.0f, -1.0f, -0.5f, 0.0f, 0.25f, 1.0f, 2.0f};
    const float g_vals[] = {0.0f, 0.0f, 1.0f, 2.0f, 1.5f, 0.0f, 0.0f};
    for (size_t i = 0; i < 7; ++i) CHECK(bz::activation_grad_coeff(a_vals[i]) == g_vals[i]);

    Tensor a = Tensor::from(Shape{1, 1, 1, 2}, {-0.5f, 0.25f});
    Tensor up = Tensor::from(Shape{1, 1, 1, 2}, {2.0f, 4.0f});
    Tensor g = bz::activation_grad_piecewise(a, up);
    CHECK(g[0] == 2.0f);  // 2 * g(-0.5) = 2 * 1
    CHECK(g[1] == 6.0f);  // 4 * 1.5
    CHECK_THROWS_AS(bz::activation_grad_piecewise(a, Tensor(Shape{1, 1, 1, 3})), ShapeError);
}

TEST_CASE("g is continuous on (-1,1), peaks at 0, unit doubled mass") {
    CHECK(bz::activation_grad_coeff(0.0f) == 2.0f);
    // continuity probes around the interior seam at 0 and near the edges
    CHECK(bz::activation_grad_coeff(-1e-4f) == doctest::Approx(2.0f).epsilon(1e-3));
    CHECK(bz::activation_grad_coeff(1e-4f) == doctest::Approx(2.0f).epsilon(1e-3));
    for (float a = -0.999f; a < 1.0f; a += 0.0101f) {
        const float left = bz::activation_grad_coeff(a - 5e-4f);
        const float right = bz::activation_grad_coeff(a + 5e-4f);
        CHECK(std::fabs(left - right) < 3e-3f);
        CHECK(bz::activation_grad_coeff(a) <= 2.0f);
    }
    // trapezoid quadrature of g over [-1, 1] equals 2
    const int n = 4000;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double a = -1.0 + 2.0 * i / n;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * bz::activation_grad_coeff(static_cast<float>(a));
    }
    acc *= 2.0 / n;
    CHECK(acc == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("Sign node backward is exactly the piecewise formula") {
    Rng rng(21);
    Graph g;
    int in = g.add_input(Shape{2, 2, 3, 3}, "x");
    int sg = g.add_sign(in, "sign");
    g.set_output_node(sg);
    Tensor x = Tensor::rand_uniform(Shape{2, 2, 3, 3}, rng, -2.0f, 2.0f);
    Tensor up = Tensor::randn(Shape{2, 2, 3, 3}, rng);
    std::map<int, Tensor> in_map{{in, x}};
    ExecState st = run_forward(g, in_map, RunMode::Train);
    GradState gs = run_backward(g, st, &up);
    Tensor want = bz::activation_grad_piecewise(x, up);
    for (int64_t i = 0; i < want.numel(); ++i) CHECK(gs.act_grads[in][i] == want[i]);  // exact
}

TEST_CASE("BinConv2d weight gradient composes the STE rescale") {
    // dL/dW must equal E x (plain conv weight gradient), per filter
    Rng rng(31);
    Graph g;
    int in = g.add_input(Shape{1, 2, 4, 4}, "x");
    int conv = g.add_conv2d(in, 3, 3, 1, 1, Precision::Binary, "bconv");
    g.set_output_node(conv);
    g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng);
    Tensor x = bz::binarize_activations(Tensor::randn(Shape{1, 2, 4, 4}, rng));
    Tensor up = Tensor::randn(g.node(conv).out_shape, rng);
    std::map<int, Tensor> in_map{{in, x}};
    ExecState st = run_forward(g, in_map, RunMode::Train);
    GradState gs = run_backward(g, st, &up);

    Tensor dwb = ops::conv2d_backward_weight(up, x, g.params(conv).weight.shape(), 1, 1);
    auto scales = bz::weight_scales(g.params(conv).weight);
    Tensor want = bz::weight_grad_ste(dwb, scales);
    for (int64_t i = 0; i < want.numel(); ++i)
        CHECK(gs.param_grads[static_cast<size_t>(conv)].weight[i] == want[i]);
}

TEST_CASE("BinConv2d input gradient: the forward is linear in the input") {
    // with the weight signs frozen, d out / d input is an exact convolution
    // transpose; the difference quotient of a linear map equals it at any h
    Rng rng(55);
    Graph g;
    int in = g.add_input(Shape{1, 2, 5, 5}, "x");
    int conv = g.add_conv2d(in, 3, 3, 2, 1, Precision::Binary, "bconv");
    g.set_output_node(conv);
    g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng);

    Tensor x = Tensor::randn(Shape{1, 2, 5, 5}, rng);
    Tensor r = Tensor::rand_uniform(g.node(conv).out_shape, rng, -1.0f, 1.0f);
    std::map<int, Tensor> in_map{{in, x}};
    ExecState st = run_forward(g, in_map, RunMode::Train);
    GradState gs = run_backward(g, st, &r);

    auto loss = [&] {
        ExecState s = run_forward(g, in_map, RunMode::Train);
        const Tensor& out = s.acts[static_cast<size_t>(conv)];
        double acc = 0.0;
        for (int64_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(r[i]) * out[i];
        return acc;
    };
    for (int k = 0; k < 10; ++k) {
        const int64_t i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(x.numel())));
        const double fd = oracle::fd_grad(loss, in_map.at(in)[i], 0.25);
        CHECK(oracle::rel_err(gs.act_grads[in][i], fd) < 1e-5);
    }
}

TEST_CASE("per-layer scale mode flows through the conv node") {
    Rng rng(41);
    Graph g;
    int in = g.add_input(Shape{1, 2, 4, 4}, "x");
    int conv = g.add_conv2d(in, 2, 3, 1, 1, Precision::Binary, "bconv");
    g.node(conv).attrs.scale_mode = ScaleMode::PerLayer;
    g.set_output_node(conv);
    g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng);
    Tensor x = bz::binarize_activations(Tensor::randn(Shape{1, 2, 4, 4}, rng));
    std::map<int, Tensor> in_map{{in, x}};
    ExecState st = run_forward(g, in_map, RunMode::Eval);

    Tensor wsign = bz::binarize_activations(g.params(conv).weight);
    Tensor want = ops::conv2d_forward(x, wsign, 1, 1);
    ops::scale_channels_inplace(want, bz::weight_scales(g.params(conv).weight,
                                                        ScaleMode::PerLayer));
    for (int64_t i = 0; i < want.numel(); ++i) CHECK(st.acts[conv][i] == want[i]);
}
