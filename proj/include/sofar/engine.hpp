#pragma once

#include <map>

#include "sofar/binarize.hpp"
#include "sofar/graph.hpp"
#include "sofar/ops.hpp"

namespace sofar {

enum class RunMode { Train, Eval };

// Everything the backward pass needs from a forward run: activations for every
// node plus kind-specific caches.
struct ExecState {
    RunMode mode = RunMode::Eval;
    bool valid = false;
    std::vector<Tensor> acts;
    std::vector<ops::BatchNormCache> bn;
    std::vector<std::vector<int64_t>> pool_argmax;
    std::vector<Tensor> softmax_probs;
    std::vector<std::vector<float>> conv_scales;  // E per BinConv2d node
};

struct GradState {
    std::vector<Tensor> act_grads;     // per node, same shape as activations
    std::vector<NodeParams> param_grads;
};

// Executes the graph in topological order. Every Input node must be bound.
// BatchNorm uses batch statistics in Train mode (and updates the running
// estimates), running statistics in Eval mode.
ExecState run_forward(Graph& g, const std::map<int, Tensor>& inputs, RunMode mode);

// Reverse-mode sweep seeded at `seed_node` (default: the graph's loss node)
// with `seed` (default: all ones, i.e. gradient of the elementwise sum of
// that node's output). Gradients accumulate by summation over fan-out.
GradState run_backward(const Graph& g, const ExecState& state, const Tensor* seed = nullptr,
                       int seed_node = -1);

// Element-wise mean of same-shaped tensors; identity for a single input.
Tensor join_mean(const std::vector<Tensor>& inputs);

}  // namespace sofar
