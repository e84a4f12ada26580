#pragma once

#include <map>
#include <string>
#include <vector>

#include "sofar/tensor.hpp"

namespace sofar {

enum class NodeKind {
    Input,
    Conv2d,
    BinConv2d,
    BatchNorm,
    ReLU,
    Tanh,
    Sign,
    Add,
    Concat,
    JoinMean,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    Linear,
    SoftmaxCrossEntropy,
};

const char* node_kind_name(NodeKind k);
NodeKind node_kind_from_name(const std::string& s);

enum class Precision { Full, Binary };

// Per-output-channel scale (one value per filter) versus one scalar for the
// whole layer.
enum class ScaleMode { PerFilter, PerLayer };

struct NodeAttrs {
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    int in_ch = 0;
    int out_ch = 0;
    bool bias = false;
    float eps = 1e-5f;
    float momentum = 0.9f;
    ScaleMode scale_mode = ScaleMode::PerFilter;
};

struct Node {
    int id = -1;
    NodeKind kind{};
    std::string name;  // hierarchical, e.g. "stage2.block0.col1.conv3"
    std::string role;  // one of stem | block | transition | classifier | loss | ""
    std::vector<int> inputs;
    NodeAttrs attrs;
    Shape out_shape{};
    Precision precision = Precision::Full;
    bool residual_add = false;  // set on Add nodes that realize a block-internal shortcut
};

// Learnable state attached to a node. Only the fields a given kind uses are
// non-empty.
struct NodeParams {
    Tensor weight;        // conv/linear
    Tensor bias;          // linear
    Tensor gamma, beta;   // batchnorm affine
    Tensor running_mean;  // batchnorm statistics
    Tensor running_var;
};

// Explicit DAG of typed compute nodes, stored in topological order (inputs of
// a node always precede it). Construction is via the add_* builders, which
// run shape inference eagerly so malformed wiring fails at build time.
class Graph {
public:
    int add_input(Shape s, const std::string& name, const std::string& role = "");
    int add_conv2d(int in, int out_ch, int kernel, int stride, int padding, Precision prec,
                   const std::string& name, const std::string& role = "");
    int add_batchnorm(int in, const std::string& name, const std::string& role = "");
    int add_relu(int in, const std::string& name = "");
    int add_tanh(int in, const std::string& name = "");
    int add_sign(int in, const std::string& name = "");
    int add_add(int a, int b, const std::string& name = "", bool residual = false);
    int add_concat(const std::vector<int>& ins, const std::string& name = "");
    int add_join_mean(const std::vector<int>& ins, const std::string& name = "");
    int add_maxpool(int in, int kernel, int stride, int padding, const std::string& name = "");
    int add_avgpool(int in, int kernel, int stride, const std::string& name = "");
    int add_global_avgpool(int in, const std::string& name = "");
    int add_linear(int in, int out_features, const std::string& name,
                   const std::string& role = "");
    int add_softmax_cross_entropy(int logits, int labels, const std::string& name = "loss");

    const std::vector<Node>& nodes() const { return nodes_; }
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    NodeParams& params(int id) { return params_[static_cast<size_t>(id)]; }
    const NodeParams& params(int id) const { return params_[static_cast<size_t>(id)]; }

    int output_node() const { return output_node_; }
    void set_output_node(int id) { output_node_ = id; }
    int loss_node() const { return loss_node_; }
    void set_loss_node(int id) { loss_node_ = id; }

    // Parameters in deterministic (node id, field) order, keyed by
    // "<node name>.<field>". Used by the optimizer and the checkpoint format.
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    std::vector<std::pair<std::string, Tensor*>> named_state();  // params + running stats

    void init_parameters(Rng& rng, bool glorot = false);

    // Re-runs shape inference over every node; throws ShapeError on the first
    // inconsistency. Cheap (no tensor math).
    void validate_shapes() const;

private:
    int push(Node n);
    Shape infer_shape(const Node& n) const;

    std::vector<Node> nodes_;
    std::vector<NodeParams> params_;
    int output_node_ = -1;
    int loss_node_ = -1;
};

Shape conv_output_shape(Shape in, int out_ch, int kernel, int stride, int padding);

}  // namespace sofar
