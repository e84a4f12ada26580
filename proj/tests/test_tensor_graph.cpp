#include <doctest.h>

#include "oracles.hpp"
#include "sofar/engine.hpp"

using namespace sofar;

namespace {

// Scalar functional used by every gradient check: sum of r[i]*out[i] for a
// fixed random projection r, so no output coordinate cancels.
double projected(Graph& g, const std::map<int, Tensor>& inputs, int node, const Tensor& r,
                 RunMode mode = RunMode::Train) {
    ExecState st = run_forward(g, inputs, mode);
    const Tensor& out = st.acts[static_cast<size_t>(node)];
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(r[i]) * out[i];
    return acc;
}

void check_fd(Graph& g, std::map<int, Tensor>& inputs, int out_node, Tensor& target,
              int64_t samples, Rng& rng, double h = 1e-3, double tol = 1e-3,
              RunMode mode = RunMode::Train) {
    Tensor r = Tensor::rand_uniform(g.node(out_node).out_shape, rng, -1.0f, 1.0f);
    ExecState st = run_forward(g, inputs, mode);
    GradState gs = run_backward(g, st, &r, out_node);

    // locate the analytic gradient tensor for `target` (an input or parameter)
    const Tensor* analytic = nullptr;
    for (int id = 0; id < g.size(); ++id) {
        auto& p = g.params(id);
        auto& pg = gs.param_grads[static_cast<size_t>(id)];
        if (&p.weight == &target) analytic = &pg.weight;
        if (&p.bias == &target) analytic = &pg.bias;
        if (&p.gamma == &target) analytic = &pg.gamma;
        if (&p.beta == &target) analytic = &pg.beta;
    }
    for (auto& [id, t] : inputs)
        if (&t == &target) analytic = &gs.act_grads[static_cast<size_t>(id)];
    REQUIRE(analytic != nullptr);

    for (int64_t s = 0; s < samples; ++s) {
        const int64_t i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(target.numel())));
        auto loss = [&] { return projected(g, inputs, out_node, r, mode); };
        const double fd = oracle::fd_grad(loss, target[i], h);
        const double an = (*analytic)[i];
        INFO("coordinate ", i, ": analytic ", an, " fd ", fd);
        CHECK(oracle::rel_err(an, fd) < tol);
    }
}

}  // namespace

TEST_CASE("conv2d identity kernel") {
    Graph g;
    int in = g.add_input(Shape{1, 1, 2, 2}, "x");
    int conv = g.add_conv2d(in, 1, 1, 1, 0, Precision::Full, "conv");
    g.set_output_node(conv);
    g.params(conv).weight.fill(1.0f);
    std::map<int, Tensor> inputs{{in, Tensor(Shape{1, 1, 2, 2}, 1.0f)}};
    ExecState st = run_forward(g, inputs, RunMode::Eval);
    for (int64_t i = 0; i < 4; ++i) CHECK(st.acts[conv][i] == 1.0f);
}

TEST_CASE("join_mean basics") {
    CHECK(join_mean({Tensor::from(Shape{1, 1, 1, 2}, {1, 2}),
                     Tensor::from(Shape{1, 1, 1, 2}, {3, 4})})[0] == 2.0f);
    CHECK(join_mean({Tensor::from(Shape{1, 1, 1, 2}, {1, 2}),
                     Tensor::from(Shape{1, 1, 1, 2}, {3, 4})})[1] == 3.0f);
    // single input is the identity
    Tensor one = Tensor::from(Shape{1, 1, 1, 1}, {5});
    CHECK(join_mean({one})[0] == 5.0f);
    // three all-ones inputs stay ones
    std::vector<Tensor> ones(3, Tensor(Shape{2, 1, 2, 2}, 1.0f));
    Tensor m = join_mean(ones);
    for (int64_t i = 0; i < m.numel(); ++i) CHECK(m[i] == 1.0f);
    // element-wise mean of [2] and [4]
    CHECK(join_mean({Tensor::from(Shape{1, 1, 1, 1}, {2}),
                     Tensor::from(Shape{1, 1, 1, 1}, {4})})[0] == 3.0f);
    CHECK_THROWS_AS(join_mean({}), Error);
    CHECK_THROWS_AS(join_mean({Tensor(Shape{1, 1, 1, 2}), Tensor(Shape{1, 1, 2, 1})}),
                    ShapeError);
}

TEST_CASE("conv2d forward matches the nested-loop oracle") {
    Rng rng(42);
    for (auto [stride, padding] : {std::pair{1, 1}, std::pair{2, 0}, std::pair{2, 1}}) {
        Graph g;
        int in = g.add_input(Shape{1, 2, 4, 4}, "x");
        int conv = g.add_conv2d(in, 3, 3, stride, padding, Precision::Full, "conv");
        g.set_output_node(conv);
        g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng);
        Tensor x = Tensor::randn(Shape{1, 2, 4, 4}, rng);
        std::map<int, Tensor> inputs{{in, x}};
        ExecState st = run_forward(g, inputs, RunMode::Eval);
        Tensor want = oracle::naive_conv2d(x, g.params(conv).weight, stride, padding);
        REQUIRE(st.acts[conv].shape() == want.shape());
        for (int64_t i = 0; i < want.numel(); ++i)
            CHECK(st.acts[conv][i] == doctest::Approx(want[i]).epsilon(1e-5));
    }
}

TEST_CASE("backward: fan-out accumulation and join scaling") {
    Graph g;
    int in = g.add_input(Shape{1, 1, 2, 2}, "x");
    int add = g.add_add(in, in, "both");
    g.set_output_node(add);
    std::map<int, Tensor> inputs{{in, Tensor(Shape{1, 1, 2, 2}, 3.0f)}};
    ExecState st = run_forward(g, inputs, RunMode::Train);
    GradState gs = run_backward(g, st);  // seed of ones = d(sum)/d.
    for (int64_t i = 0; i < 4; ++i) CHECK(gs.act_grads[in][i] == 2.0f);

    Graph g2;
    int x = g2.add_input(Shape{1, 1, 1, 2}, "x");
    int y = g2.add_input(Shape{1, 1, 1, 2}, "y");
    int j = g2.add_join_mean({x, y}, "join");
    g2.set_output_node(j);
    std::map<int, Tensor> in2{{x, Tensor(Shape{1, 1, 1, 2}, 1.0f)},
                              {y, Tensor(Shape{1, 1, 1, 2}, 2.0f)}};
    ExecState st2 = run_forward(g2, in2, RunMode::Train);
    GradState gs2 = run_backward(g2, st2);
    for (int64_t i = 0; i < 2; ++i) {
        CHECK(gs2.act_grads[x][i] == 0.5f);
        CHECK(gs2.act_grads[y][i] == 0.5f);
    }
}

TEST_CASE("join_mean gradient is upstream / input count") {
    Rng rng(7);
    for (int k : {1, 3, 5}) {
        Graph g;
        std::vector<int> ins;
        std::map<int, Tensor> bound;
        for (int i = 0; i < k; ++i) {
            int id = g.add_input(Shape{1, 2, 3, 3}, "x" + std::to_string(i));
            ins.push_back(id);
            bound.emplace(id, Tensor::randn(Shape{1, 2, 3, 3}, rng));
        }
        int j = g.add_join_mean(ins, "join");
        g.set_output_node(j);
        ExecState st = run_forward(g, bound, RunMode::Train);
        Tensor seed = Tensor::randn(Shape{1, 2, 3, 3}, rng);
        GradState gs = run_backward(g, st, &seed);
        for (int id : ins)
            for (int64_t i = 0; i < seed.numel(); ++i)
                CHECK(gs.act_grads[id][i] ==
                      doctest::Approx(seed[i] / static_cast<float>(k)).epsilon(1e-6));
    }
}

TEST_CASE("finite differences: every differentiable node kind") {
    Rng rng(1234);
    const Shape s{2, 3, 5, 5};

    auto input_tensor = [&] {
        return Tensor::rand_uniform(s, rng, -1.5f, 1.5f);
    };

    SUBCASE("conv2d wrt input and weight") {
        Graph g;
        int in = g.add_input(s, "x");
        int conv = g.add_conv2d(in, 4, 3, 1, 1, Precision::Full, "conv");
        g.set_output_node(conv);
        g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng, 0.4f);
        std::map<int, Tensor> in_map{{in, input_tensor()}};
        check_fd(g, in_map, conv, in_map.at(in), 12, rng);
        check_fd(g, in_map, conv, g.params(conv).weight, 12, rng);
    }
    SUBCASE("batchnorm train mode wrt input, gamma, beta") {
        Graph g;
        int in = g.add_input(s, "x");
        int bn = g.add_batchnorm(in, "bn");
        g.set_output_node(bn);
        auto& p = g.params(bn);
        p.gamma = Tensor::rand_uniform(p.gamma.shape(), rng, 0.5f, 1.5f);
        p.beta = Tensor::randn(p.beta.shape(), rng, 0.3f);
        std::map<int, Tensor> in_map{{in, input_tensor()}};
        // train-mode outputs depend on batch statistics, not the running
        // estimates, so repeated probe passes need no stat reset
        check_fd(g, in_map, bn, in_map.at(in), 12, rng, 1e-3, 2e-3);
        check_fd(g, in_map, bn, p.gamma, 3, rng);
        check_fd(g, in_map, bn, p.beta, 3, rng);
    }
    SUBCASE("relu and tanh") {
        Graph g;
        int in = g.add_input(s, "x");
        int t = g.add_tanh(in, "tanh");
        int r = g.add_relu(t, "relu");
        g.set_output_node(r);
        // keep coordinates away from relu's kink
        Tensor x = input_tensor();
        for (int64_t i = 0; i < x.numel(); ++i)
            if (std::fabs(std::tanh(x[i])) < 0.05f) x[i] += 0.2f;
        std::map<int, Tensor> in_map{{in, x}};
        check_fd(g, in_map, r, in_map.at(in), 16, rng);
    }
    SUBCASE("pools") {
        Graph g;
        int in = g.add_input(s, "x");
        int mp = g.add_maxpool(in, 3, 2, 1, "maxpool");
        g.set_output_node(mp);
        std::map<int, Tensor> in_map{{in, input_tensor()}};
        check_fd(g, in_map, mp, in_map.at(in), 10, rng);

        Graph g2;
        int in2 = g2.add_input(Shape{2, 3, 6, 6}, "x");
        int ap = g2.add_avgpool(in2, 2, 2, "avgpool");
        int gp = g2.add_global_avgpool(ap, "gap");
        g2.set_output_node(gp);
        std::map<int, Tensor> in_map2{{in2, Tensor::randn(Shape{2, 3, 6, 6}, rng)}};
        check_fd(g2, in_map2, gp, in_map2.at(in2), 10, rng);
    }
    SUBCASE("linear wrt input, weight, bias") {
        Graph g;
        int in = g.add_input(Shape{2, 6, 1, 1}, "x");
        int fc = g.add_linear(in, 4, "fc");
        g.set_output_node(fc);
        g.params(fc).weight = Tensor::randn(g.params(fc).weight.shape(), rng, 0.5f);
        g.params(fc).bias = Tensor::randn(g.params(fc).bias.shape(), rng, 0.5f);
        std::map<int, Tensor> in_map{{in, Tensor::randn(Shape{2, 6, 1, 1}, rng)}};
        check_fd(g, in_map, fc, in_map.at(in), 8, rng);
        check_fd(g, in_map, fc, g.params(fc).weight, 8, rng);
        check_fd(g, in_map, fc, g.params(fc).bias, 4, rng);
    }
    SUBCASE("add, concat") {
        Graph g;
        int a = g.add_input(s, "a");
        int b = g.add_input(s, "b");
        int ad = g.add_add(a, b, "add");
        int cc = g.add_concat({ad, a}, "cat");
        g.set_output_node(cc);
        std::map<int, Tensor> in_map{{a, input_tensor()}, {b, input_tensor()}};
        check_fd(g, in_map, cc, in_map.at(a), 10, rng);
        check_fd(g, in_map, cc, in_map.at(b), 10, rng);
    }
    SUBCASE("softmax cross entropy wrt logits") {
        Graph g;
        int logits = g.add_input(Shape{4, 7, 1, 1}, "logits");
        int labels = g.add_input(Shape{4, 1, 1, 1}, "labels");
        int loss = g.add_softmax_cross_entropy(logits, labels);
        g.set_output_node(loss);
        Tensor lab(Shape{4, 1, 1, 1});
        for (int64_t i = 0; i < 4; ++i) lab[i] = static_cast<float>(i % 7);
        std::map<int, Tensor> in_map{{logits, Tensor::randn(Shape{4, 7, 1, 1}, rng)},
                                     {labels, lab}};
        check_fd(g, in_map, loss, in_map.at(logits), 12, rng);
    }
}

TEST_CASE("analytic gradients match finite differences on a mixed eval-mode graph") {
    // Conv2d -> BatchNorm(eval) -> Tanh -> AvgPool -> Linear, the composite
    // from the gradient contract.
    Rng rng(99);
    Graph g;
    int in = g.add_input(Shape{2, 2, 6, 6}, "x");
    int conv = g.add_conv2d(in, 3, 3, 1, 1, Precision::Full, "conv");
    int bn = g.add_batchnorm(conv, "bn");
    int th = g.add_tanh(bn, "tanh");
    int ap = g.add_avgpool(th, 2, 2, "pool");
    int fc = g.add_linear(ap, 5, "fc");
    g.set_output_node(fc);

    g.params(conv).weight = Tensor::randn(g.params(conv).weight.shape(), rng, 0.4f);
    g.params(fc).weight = Tensor::randn(g.params(fc).weight.shape(), rng, 0.3f);
    auto& bp = g.params(bn);
    bp.gamma = Tensor::rand_uniform(bp.gamma.shape(), rng, 0.6f, 1.4f);
    bp.beta = Tensor::randn(bp.beta.shape(), rng, 0.2f);
    bp.running_mean = Tensor::randn(bp.running_mean.shape(), rng, 0.3f);
    bp.running_var = Tensor::rand_uniform(bp.running_var.shape(), rng, 0.5f, 2.0f);

    std::map<int, Tensor> in_map{{in, Tensor::randn(Shape{2, 2, 6, 6}, rng)}};
    check_fd(g, in_map, fc, in_map.at(in), 15, rng, 1e-3, 1e-3, RunMode::Eval);
    check_fd(g, in_map, fc, g.params(conv).weight, 15, rng, 1e-3, 1e-3, RunMode::Eval);
    check_fd(g, in_map, fc, bp.gamma, 3, rng, 1e-3, 1e-3, RunMode::Eval);
}

TEST_CASE("linearity of Add, JoinMean and Concat") {
    Rng rng(5);
    const Shape s{1, 2, 3, 3};
    Tensor x = Tensor::randn(s, rng), y = Tensor::randn(s, rng);

    auto run2 = [&](NodeKind kind, const Tensor& a, const Tensor& b) {
        Graph g;
        int ia = g.add_input(s, "a");
        int ib = g.add_input(s, "b");
        int out = kind == NodeKind::Add        ? g.add_add(ia, ib)
                  : kind == NodeKind::JoinMean ? g.add_join_mean({ia, ib})
                                               : g.add_concat({ia, ib});
        g.set_output_node(out);
        std::map<int, Tensor> in_map{{ia, a}, {ib, b}};
        return run_forward(g, in_map, RunMode::Eval).acts[static_cast<size_t>(out)];
    };

    for (NodeKind kind : {NodeKind::Add, NodeKind::JoinMean, NodeKind::Concat}) {
        // linear in the first slot: f(2x, y) - f(0, y) == 2 (f(x, y) - f(0, y))
        Tensor x2 = x;
        for (int64_t i = 0; i < x.numel(); ++i) x2[i] *= 2.0f;
        Tensor f_x2 = run2(kind, x2, y);
        Tensor f_x = run2(kind, x, y);
        Tensor f_0 = run2(kind, Tensor(s), y);
        for (int64_t i = 0; i < f_x.numel(); ++i)
            CHECK(f_x2[i] - f_0[i] == doctest::Approx(2.0f * (f_x[i] - f_0[i])).epsilon(1e-5));
    }
}

TEST_CASE("determinism: identical seeds give bit-identical runs") {
    auto run_once = [] {
        Rng rng(2024);
        Graph g;
        int in = g.add_input(Shape{2, 3, 8, 8}, "x");
        int conv = g.add_conv2d(in, 4, 3, 1, 1, Precision::Full, "conv");
        int bn = g.add_batchnorm(conv, "bn");
        int rl = g.add_relu(bn, "relu");
        int gp = g.add_global_avgpool(rl, "gap");
        int fc = g.add_linear(gp, 3, "fc");
        g.set_output_node(fc);
        g.init_parameters(rng);
        std::map<int, Tensor> in_map{{in, Tensor::randn(Shape{2, 3, 8, 8}, rng)}};
        ExecState st = run_forward(g, in_map, RunMode::Train);
        return st.acts[static_cast<size_t>(fc)];
    };
    Tensor a = run_once(), b = run_once();
    REQUIRE(a.numel() == b.numel());
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);  // exact
}

TEST_CASE("batchnorm: batch statistics in train mode, running in eval") {
    Graph g;
    int in = g.add_input(Shape{2, 1, 1, 2}, "x");
    int bn = g.add_batchnorm(in, "bn");
    g.set_output_node(bn);
    auto& p = g.params(bn);

    // batch of {1, 2, 3, 4}: mean 2.5, biased var 1.25
    Tensor x = Tensor::from(Shape{2, 1, 1, 2}, {1, 2, 3, 4});
    std::map<int, Tensor> in_map{{in, x}};
    ExecState st = run_forward(g, in_map, RunMode::Train);
    const float inv_std = 1.0f / std::sqrt(1.25f + 1e-5f);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(st.acts[bn][i] ==
              doctest::Approx((x[i] - 2.5f) * inv_std).epsilon(1e-5));

    // running estimates blend with momentum 0.9 from (0, 1)
    CHECK(p.running_mean[0] == doctest::Approx(0.9f * 0.0f + 0.1f * 2.5f).epsilon(1e-6));
    CHECK(p.running_var[0] == doctest::Approx(0.9f * 1.0f + 0.1f * 1.25f).epsilon(1e-6));

    // eval mode normalizes with the running estimates, not the batch
    p.running_mean[0] = 1.0f;
    p.running_var[0] = 4.0f;
    ExecState ev = run_forward(g, in_map, RunMode::Eval);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(ev.acts[bn][i] ==
              doctest::Approx((x[i] - 1.0f) / std::sqrt(4.0f + 1e-5f)).epsilon(1e-5));
    // and leaves them untouched
    CHECK(p.running_mean[0] == 1.0f);
    CHECK(p.running_var[0] == 4.0f);
}

TEST_CASE("tensor and graph invariants") {
    // data length always equals the shape product
    Tensor t(Shape{2, 3, 4, 5});
    CHECK(t.numel() == 120);
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 1, 2}, std::vector<float>{1.0f}), ShapeError);

    // finite in, finite out through a full forward/backward
    Rng rng(3);
    Graph g;
    int in = g.add_input(Shape{2, 2, 4, 4}, "x");
    int conv = g.add_conv2d(in, 2, 3, 1, 1, Precision::Full, "conv");
    int bn = g.add_batchnorm(conv, "bn");
    int sg = g.add_sign(bn, "sign");
    int cv2 = g.add_conv2d(sg, 2, 3, 1, 1, Precision::Binary, "bconv");
    g.set_output_node(cv2);
    g.init_parameters(rng);
    std::map<int, Tensor> in_map{{in, Tensor::randn(Shape{2, 2, 4, 4}, rng)}};
    ExecState st = run_forward(g, in_map, RunMode::Train);
    for (const auto& a : st.acts) CHECK(a.all_finite());
    GradState gs = run_backward(g, st);
    for (const auto& a : gs.act_grads) CHECK(a.all_finite());

    // shape errors name the offending node
    Graph bad;
    int a = bad.add_input(Shape{1, 1, 2, 2}, "a");
    int b = bad.add_input(Shape{1, 2, 2, 2}, "b");
    try {
        bad.add_add(a, b, "badd");
        FAIL("expected shape error");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("badd") != std::string::npos);
    }

    // unbound input
    Graph g2;
    int x = g2.add_input(Shape{1, 1, 1, 1}, "x");
    int r = g2.add_relu(x, "relu");
    g2.set_output_node(r);
    std::map<int, Tensor> empty;
    CHECK_THROWS_AS(run_forward(g2, empty, RunMode::Eval), Error);

    // backward before forward
    ExecState stale;
    CHECK_THROWS_AS(run_backward(g2, stale), Error);
}
