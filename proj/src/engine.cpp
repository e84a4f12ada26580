#include "sofar/engine.hpp"

#include <cmath>

namespace sofar {

Tensor join_mean(const std::vector<Tensor>& inputs) {
    SOFAR_CHECK(!inputs.empty(), "join_mean: no inputs");
    const Shape s = inputs[0].shape();
    for (const auto& t : inputs)
        SOFAR_CHECK_SHAPE(t.shape() == s, "join_mean: shape mismatch " + s.str() + " vs " +
                                              t.shape().str());
    if (inputs.size() == 1) return inputs[0];
    Tensor out(s, 0.0f);
    for (const auto& t : inputs)
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += t[i];
    const float inv = 1.0f / static_cast<float>(inputs.size());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    return out;
}

ExecState run_forward(Graph& g, const std::map<int, Tensor>& inputs, RunMode mode) {
    const int n_nodes = g.size();
    ExecState st;
    st.mode = mode;
    st.acts.resize(static_cast<size_t>(n_nodes));
    st.bn.resize(static_cast<size_t>(n_nodes));
    st.pool_argmax.resize(static_cast<size_t>(n_nodes));
    st.softmax_probs.resize(static_cast<size_t>(n_nodes));
    st.conv_scales.resize(static_cast<size_t>(n_nodes));

    for (int id = 0; id < n_nodes; ++id) {
        const Node& node = g.node(id);
        auto& params = g.params(id);
        auto in = [&](size_t i) -> const Tensor& {
            return st.acts[static_cast<size_t>(node.inputs[i])];
        };
        Tensor out;
        switch (node.kind) {
            case NodeKind::Input: {
                auto it = inputs.find(id);
                SOFAR_CHECK(it != inputs.end(), "unbound input node '" + node.name + "'");
                SOFAR_CHECK_SHAPE(it->second.shape() == node.out_shape,
                                  "input '" + node.name + "': bound tensor " +
                                      it->second.shape().str() + " != declared " +
                                      node.out_shape.str());
                out = it->second;
                break;
            }
            case NodeKind::Conv2d:
                out = ops::conv2d_forward(in(0), params.weight, node.attrs.stride,
                                          node.attrs.padding);
                break;
            case NodeKind::BinConv2d: {
                // O = E * (A (*) sign(W)): convolve with the +-1 weights, then
                // scale per filter. Keeps the accumulation exactly integral
                // when the input is +-1, which the packed kernel relies on.
                auto scales = binarize::weight_scales(params.weight, node.attrs.scale_mode);
                Tensor wsign = binarize::binarize_activations(params.weight);
                out = ops::conv2d_forward(in(0), wsign, node.attrs.stride, node.attrs.padding);
                ops::scale_channels_inplace(out, scales);
                st.conv_scales[static_cast<size_t>(id)] = std::move(scales);
                break;
            }
            case NodeKind::BatchNorm:
                out = ops::batchnorm_forward(in(0), params.gamma, params.beta,
                                             params.running_mean, params.running_var,
                                             node.attrs.eps, node.attrs.momentum,
                                             mode == RunMode::Train,
                                             st.bn[static_cast<size_t>(id)]);
                break;
            case NodeKind::ReLU: {
                out = in(0);
                for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0f, out[i]);
                break;
            }
            case NodeKind::Tanh: {
                out = in(0);
                for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
                break;
            }
            case NodeKind::Sign:
                out = binarize::binarize_activations(in(0));
                break;
            case NodeKind::Add: {
                out = in(0);
                for (size_t k = 1; k < node.inputs.size(); ++k) {
                    const Tensor& b = in(k);
                    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
                }
                break;
            }
            case NodeKind::Concat: {
                out = Tensor(node.out_shape);
                const Shape os = node.out_shape;
                int64_t c_off = 0;
                for (size_t k = 0; k < node.inputs.size(); ++k) {
                    const Tensor& t = in(k);
                    const Shape ts = t.shape();
                    for (int64_t n = 0; n < ts.n; ++n)
                        for (int64_t c = 0; c < ts.c; ++c)
                            std::copy(t.data() + (n * ts.c + c) * ts.h * ts.w,
                                      t.data() + (n * ts.c + c + 1) * ts.h * ts.w,
                                      out.data() + (n * os.c + c_off + c) * os.h * os.w);
                    c_off += ts.c;
                }
                break;
            }
            case NodeKind::JoinMean: {
                std::vector<Tensor> ins;
                ins.reserve(node.inputs.size());
                for (size_t k = 0; k < node.inputs.size(); ++k) ins.push_back(in(k));
                out = join_mean(ins);
                break;
            }
            case NodeKind::MaxPool:
                out = ops::maxpool_forward(in(0), node.attrs.kernel, node.attrs.stride,
                                           node.attrs.padding,
                                           st.pool_argmax[static_cast<size_t>(id)]);
                break;
            case NodeKind::AvgPool:
                out = ops::avgpool_forward(in(0), node.attrs.kernel, node.attrs.stride);
                break;
            case NodeKind::GlobalAvgPool:
                out = ops::global_avgpool_forward(in(0));
                break;
            case NodeKind::Linear:
                out = ops::linear_forward(in(0), params.weight, params.bias);
                break;
            case NodeKind::SoftmaxCrossEntropy:
                out = ops::softmax_cross_entropy_forward(
                    in(0), in(1), st.softmax_probs[static_cast<size_t>(id)]);
                break;
        }
        SOFAR_CHECK_SHAPE(out.shape() == node.out_shape,
                          "node '" + node.name + "': produced " + out.shape().str() +
                              ", expected " + node.out_shape.str());
        st.acts[static_cast<size_t>(id)] = std::move(out);
    }
    st.valid = true;
    return st;
}

GradState run_backward(const Graph& g, const ExecState& state, const Tensor* seed,
                       int seed_node) {
    SOFAR_CHECK(state.valid && static_cast<int>(state.acts.size()) == g.size(),
                "run_backward called before run_forward");
    if (seed_node < 0) seed_node = g.loss_node() >= 0 ? g.loss_node() : g.output_node();
    SOFAR_CHECK(seed_node >= 0, "run_backward: no loss or output node designated");

    const int n_nodes = g.size();
    GradState gs;
    gs.act_grads.resize(static_cast<size_t>(n_nodes));
    gs.param_grads.resize(static_cast<size_t>(n_nodes));
    for (int id = 0; id < n_nodes; ++id) {
        gs.act_grads[static_cast<size_t>(id)] = Tensor(g.node(id).out_shape, 0.0f);
        const auto& p = g.params(id);
        auto& pg = gs.param_grads[static_cast<size_t>(id)];
        if (!p.weight.empty()) pg.weight = Tensor(p.weight.shape(), 0.0f);
        if (!p.bias.empty()) pg.bias = Tensor(p.bias.shape(), 0.0f);
        if (!p.gamma.empty()) pg.gamma = Tensor(p.gamma.shape(), 0.0f);
        if (!p.beta.empty()) pg.beta = Tensor(p.beta.shape(), 0.0f);
    }

    if (seed) {
        SOFAR_CHECK_SHAPE(seed->shape() == g.node(seed_node).out_shape,
                          "run_backward: seed shape mismatch");
        gs.act_grads[static_cast<size_t>(seed_node)] = *seed;
    } else {
        gs.act_grads[static_cast<size_t>(seed_node)].fill(1.0f);
    }

    for (int id = n_nodes - 1; id >= 0; --id) {
        const Node& node = g.node(id);
        const Tensor& gout = gs.act_grads[static_cast<size_t>(id)];
        if (node.kind == NodeKind::Input) continue;
        auto act_in = [&](size_t i) -> const Tensor& {
            return state.acts[static_cast<size_t>(node.inputs[i])];
        };
        auto grad_in = [&](size_t i) -> Tensor& {
            return gs.act_grads[static_cast<size_t>(node.inputs[i])];
        };
        auto accumulate = [](Tensor& dst, const Tensor& src) {
            for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
        };
        const auto& params = g.params(id);
        auto& pgrads = gs.param_grads[static_cast<size_t>(id)];

        switch (node.kind) {
            case NodeKind::Input:
                break;
            case NodeKind::Conv2d: {
                accumulate(grad_in(0),
                           ops::conv2d_backward_input(gout, params.weight, act_in(0).shape(),
                                                      node.attrs.stride, node.attrs.padding));
                Tensor dw = ops::conv2d_backward_weight(gout, act_in(0), params.weight.shape(),
                                                        node.attrs.stride, node.attrs.padding);
                accumulate(pgrads.weight, dw);
                break;
            }
            case NodeKind::BinConv2d: {
                // input grad flows through W_b = E*sign(W)
                const auto& scales = state.conv_scales[static_cast<size_t>(id)];
                Tensor gscaled = gout;
                ops::scale_channels_inplace(gscaled, scales);
                Tensor wsign = binarize::binarize_activations(params.weight);
                accumulate(grad_in(0),
                           ops::conv2d_backward_input(gscaled, wsign, act_in(0).shape(),
                                                      node.attrs.stride, node.attrs.padding));
                // dL/dW_b is the plain conv weight gradient; the latent update
                // is its straight-through rescale by E.
                Tensor dwb = ops::conv2d_backward_weight(gout, act_in(0), params.weight.shape(),
                                                         node.attrs.stride, node.attrs.padding);
                accumulate(pgrads.weight,
                           binarize::weight_grad_ste(dwb, scales, node.attrs.scale_mode));
                break;
            }
            case NodeKind::BatchNorm: {
                Tensor din = ops::batchnorm_backward(gout, params.gamma,
                                                     state.bn[static_cast<size_t>(id)],
                                                     params.running_var, node.attrs.eps,
                                                     pgrads.gamma, pgrads.beta);
                accumulate(grad_in(0), din);
                break;
            }
            case NodeKind::ReLU: {
                Tensor din(gout.shape());
                const Tensor& x = act_in(0);
                for (int64_t i = 0; i < din.numel(); ++i) din[i] = x[i] > 0.0f ? gout[i] : 0.0f;
                accumulate(grad_in(0), din);
                break;
            }
            case NodeKind::Tanh: {
                Tensor din(gout.shape());
                const Tensor& y = state.acts[static_cast<size_t>(id)];
                for (int64_t i = 0; i < din.numel(); ++i) din[i] = gout[i] * (1.0f - y[i] * y[i]);
                accumulate(grad_in(0), din);
                break;
            }
            case NodeKind::Sign:
                accumulate(grad_in(0), binarize::activation_grad_piecewise(act_in(0), gout));
                break;
            case NodeKind::Add:
                for (size_t k = 0; k < node.inputs.size(); ++k) accumulate(grad_in(k), gout);
                break;
            case NodeKind::Concat: {
                int64_t c_off = 0;
                const Shape os = node.out_shape;
                for (size_t k = 0; k < node.inputs.size(); ++k) {
                    Tensor& dst = grad_in(k);
                    const Shape ts = dst.shape();
                    for (int64_t n = 0; n < ts.n; ++n)
                        for (int64_t c = 0; c < ts.c; ++c) {
                            const float* src =
                                gout.data() + (n * os.c + c_off + c) * os.h * os.w;
                            float* d = dst.data() + (n * ts.c + c) * ts.h * ts.w;
                            for (int64_t i = 0; i < ts.h * ts.w; ++i) d[i] += src[i];
                        }
                    c_off += ts.c;
                }
                break;
            }
            case NodeKind::JoinMean: {
                const float inv = 1.0f / static_cast<float>(node.inputs.size());
                for (size_t k = 0; k < node.inputs.size(); ++k) {
                    Tensor& dst = grad_in(k);
                    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += gout[i] * inv;
                }
                break;
            }
            case NodeKind::MaxPool:
                accumulate(grad_in(0),
                           ops::maxpool_backward(gout, act_in(0).shape(),
                                                 state.pool_argmax[static_cast<size_t>(id)]));
                break;
            case NodeKind::AvgPool:
                accumulate(grad_in(0), ops::avgpool_backward(gout, act_in(0).shape(),
                                                             node.attrs.kernel,
                                                             node.attrs.stride));
                break;
            case NodeKind::GlobalAvgPool:
                accumulate(grad_in(0), ops::global_avgpool_backward(gout, act_in(0).shape()));
                break;
            case NodeKind::Linear: {
                accumulate(grad_in(0),
                           ops::linear_backward_input(gout, params.weight, act_in(0).shape()));
                ops::linear_backward_params(gout, act_in(0), pgrads.weight, pgrads.bias);
                break;
            }
            case NodeKind::SoftmaxCrossEntropy:
                accumulate(grad_in(0),
                           ops::softmax_cross_entropy_backward(
                               gout, state.softmax_probs[static_cast<size_t>(id)], act_in(1)));
                break;
        }
    }
    return gs;
}

}  // namespace sofar
