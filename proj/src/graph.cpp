#include "sofar/graph.hpp"

#include <cmath>

namespace sofar {

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return "Input";
        case NodeKind::Conv2d: return "Conv2d";
        case NodeKind::BinConv2d: return "BinConv2d";
        case NodeKind::BatchNorm: return "BatchNorm";
        case NodeKind::ReLU: return "ReLU";
        case NodeKind::Tanh: return "Tanh";
        case NodeKind::Sign: return "Sign";
        case NodeKind::Add: return "Add";
        case NodeKind::Concat: return "Concat";
        case NodeKind::JoinMean: return "JoinMean";
        case NodeKind::MaxPool: return "MaxPool";
        case NodeKind::AvgPool: return "AvgPool";
        case NodeKind::GlobalAvgPool: return "GlobalAvgPool";
        case NodeKind::Linear: return "Linear";
        case NodeKind::SoftmaxCrossEntropy: return "SoftmaxCrossEntropy";
    }
    return "?";
}

NodeKind node_kind_from_name(const std::string& s) {
    static const std::map<std::string, NodeKind> table = {
        {"Input", NodeKind::Input},
        {"Conv2d", NodeKind::Conv2d},
        {"BinConv2d", NodeKind::BinConv2d},
        {"BatchNorm", NodeKind::BatchNorm},
        {"ReLU", NodeKind::ReLU},
        {"Tanh", NodeKind::Tanh},
        {"Sign", NodeKind::Sign},
        {"Add", NodeKind::Add},
        {"Concat", NodeKind::Concat},
        {"JoinMean", NodeKind::JoinMean},
        {"MaxPool", NodeKind::MaxPool},
        {"AvgPool", NodeKind::AvgPool},
        {"GlobalAvgPool", NodeKind::GlobalAvgPool},
        {"Linear", NodeKind::Linear},
        {"SoftmaxCrossEntropy", NodeKind::SoftmaxCrossEntropy},
    };
    auto it = table.find(s);
    SOFAR_CHECK(it != table.end(), "unknown node kind '" + s + "'");
    return it->second;
}

Shape conv_output_shape(Shape in, int out_ch, int kernel, int stride, int padding) {
    int64_t oh = (in.h + 2 * padding - kernel) / stride + 1;
    int64_t ow = (in.w + 2 * padding - kernel) / stride + 1;
    SOFAR_CHECK_SHAPE(oh >= 1 && ow >= 1, "conv output would be empty for input " + in.str());
    return Shape{in.n, out_ch, oh, ow};
}

int Graph::push(Node n) {
    n.id = static_cast<int>(nodes_.size());
    for (int in : n.inputs)
        SOFAR_CHECK(in >= 0 && in < n.id,
                    "node '" + n.name + "' references input " + std::to_string(in) +
                        " that does not precede it");
    n.out_shape = infer_shape(n);
    nodes_.push_back(n);
    params_.emplace_back();
    return n.id;
}

Shape Graph::infer_shape(const Node& n) const {
    auto in_shape = [&](size_t i) { return nodes_[static_cast<size_t>(n.inputs[i])].out_shape; };
    switch (n.kind) {
        case NodeKind::Input:
            return n.out_shape;
        case NodeKind::Conv2d:
        case NodeKind::BinConv2d: {
            Shape s = in_shape(0);
            SOFAR_CHECK_SHAPE(s.c == n.attrs.in_ch,
                              "conv '" + n.name + "': input has " + std::to_string(s.c) +
                                  " channels, expected " + std::to_string(n.attrs.in_ch));
            return conv_output_shape(s, n.attrs.out_ch, n.attrs.kernel, n.attrs.stride,
                                     n.attrs.padding);
        }
        case NodeKind::BatchNorm:
        case NodeKind::ReLU:
        case NodeKind::Tanh:
        case NodeKind::Sign:
            return in_shape(0);
        case NodeKind::Add:
        case NodeKind::JoinMean: {
            Shape s = in_shape(0);
            for (size_t i = 1; i < n.inputs.size(); ++i)
                SOFAR_CHECK_SHAPE(in_shape(i) == s,
                                  std::string(node_kind_name(n.kind)) + " '" + n.name +
                                      "': input shapes differ: " + s.str() + " vs " +
                                      in_shape(i).str());
            return s;
        }
        case NodeKind::Concat: {
            Shape s = in_shape(0);
            int64_t c = s.c;
            for (size_t i = 1; i < n.inputs.size(); ++i) {
                Shape t = in_shape(i);
                SOFAR_CHECK_SHAPE(t.n == s.n && t.h == s.h && t.w == s.w,
                                  "Concat '" + n.name + "': non-channel extents differ: " +
                                      s.str() + " vs " + t.str());
                c += t.c;
            }
            return Shape{s.n, c, s.h, s.w};
        }
        case NodeKind::MaxPool:
        case NodeKind::AvgPool: {
            Shape s = in_shape(0);
            // floor division for odd extents
            int64_t oh = (s.h + 2 * n.attrs.padding - n.attrs.kernel) / n.attrs.stride + 1;
            int64_t ow = (s.w + 2 * n.attrs.padding - n.attrs.kernel) / n.attrs.stride + 1;
            SOFAR_CHECK_SHAPE(oh >= 1 && ow >= 1, "pool output would be empty");
            return Shape{s.n, s.c, oh, ow};
        }
        case NodeKind::GlobalAvgPool: {
            Shape s = in_shape(0);
            return Shape{s.n, s.c, 1, 1};
        }
        case NodeKind::Linear: {
            Shape s = in_shape(0);
            SOFAR_CHECK_SHAPE(s.c * s.h * s.w == n.attrs.in_ch,
                              "linear '" + n.name + "': input " + s.str() + " does not flatten to " +
                                  std::to_string(n.attrs.in_ch) + " features");
            return Shape{s.n, n.attrs.out_ch, 1, 1};
        }
        case NodeKind::SoftmaxCrossEntropy: {
            Shape logits = in_shape(0);
            Shape labels = in_shape(1);
            SOFAR_CHECK_SHAPE(labels.n == logits.n && labels.c == 1 && labels.h == 1 &&
                                  labels.w == 1,
                              "loss '" + n.name + "': labels must be (N,1,1,1)");
            return Shape{logits.n, 1, 1, 1};  // per-sample loss
        }
    }
    throw Error("unreachable");
}

int Graph::add_input(Shape s, const std::string& name, const std::string& role) {
    Node n;
    n.kind = NodeKind::Input;
    n.name = name;
    n.role = role;
    n.out_shape = s;
    return push(n);
}

int Graph::add_conv2d(int in, int out_ch, int kernel, int stride, int padding, Precision prec,
                      const std::string& name, const std::string& role) {
    Node n;
    n.kind = prec == Precision::Binary ? NodeKind::BinConv2d : NodeKind::Conv2d;
    n.name = name;
    n.role = role;
    n.inputs = {in};
    n.precision = prec;
    n.attrs.kernel = kernel;
    n.attrs.stride = stride;
    n.attrs.padding = padding;
    n.attrs.in_ch = static_cast<int>(node(in).out_shape.c);
    n.attrs.out_ch = out_ch;
    int id = push(n);
    params_[static_cast<size_t>(id)].weight =
        Tensor(Shape{out_ch, node(in).out_shape.c, kernel, kernel});
    return id;
}

int Graph::add_batchnorm(int in, const std::string& name, const std::string& role) {
    Node n;
    n.kind = NodeKind::BatchNorm;
    n.name = name;
    n.role = role;
    n.inputs = {in};
    int64_t c = node(in).out_shape.c;
    n.attrs.in_ch = n.attrs.out_ch = static_cast<int>(c);
    int id = push(n);
    auto& p = params_[static_cast<size_t>(id)];
    p.gamma = Tensor(Shape{1, c, 1, 1}, 1.0f);
    p.beta = Tensor(Shape{1, c, 1, 1}, 0.0f);
    p.running_mean = Tensor(Shape{1, c, 1, 1}, 0.0f);
    p.running_var = Tensor(Shape{1, c, 1, 1}, 1.0f);
    return id;
}

int Graph::add_relu(int in, const std::string& name) {
    Node n;
    n.kind = NodeKind::ReLU;
    n.name = name;
    n.inputs = {in};
    return push(n);
}

int Graph::add_tanh(int in, const std::string& name) {
    Node n;
    n.kind = NodeKind::Tanh;
    n.name = name;
    n.inputs = {in};
    return push(n);
}

int Graph::add_sign(int in, const std::string& name) {
    Node n;
    n.kind = NodeKind::Sign;
    n.name = name;
    n.inputs = {in};
    return push(n);
}

int Graph::add_add(int a, int b, const std::string& name, bool residual) {
    Node n;
    n.kind = NodeKind::Add;
    n.name = name;
    n.inputs = {a, b};
    n.residual_add = residual;
    return push(n);
}

int Graph::add_concat(const std::vector<int>& ins, const std::string& name) {
    SOFAR_CHECK(!ins.empty(), "Concat with no inputs");
    Node n;
    n.kind = NodeKind::Concat;
    n.name = name;
    n.inputs = ins;
    return push(n);
}

int Graph::add_join_mean(const std::vector<int>& ins, const std::string& name) {
    SOFAR_CHECK(!ins.empty(), "JoinMean with no inputs");
    Node n;
    n.kind = NodeKind::JoinMean;
    n.name = name;
    n.inputs = ins;
    return push(n);
}

int Graph::add_maxpool(int in, int kernel, int stride, int padding, const std::string& name) {
    Node n;
    n.kind = NodeKind::MaxPool;
    n.name = name;
    n.inputs = {in};
    n.attrs.kernel = kernel;
    n.attrs.stride = stride;
    n.attrs.padding = padding;
    return push(n);
}

int Graph::add_avgpool(int in, int kernel, int stride, const std::string& name) {
    Node n;
    n.kind = NodeKind::AvgPool;
    n.name = name;
    n.inputs = {in};
    n.attrs.kernel = kernel;
    n.attrs.stride = stride;
    return push(n);
}

int Graph::add_global_avgpool(int in, const std::string& name) {
    Node n;
    n.kind = NodeKind::GlobalAvgPool;
    n.name = name;
    n.inputs = {in};
    return push(n);
}

int Graph::add_linear(int in, int out_features, const std::string& name, const std::string& role) {
    Node n;
    n.kind = NodeKind::Linear;
    n.name = name;
    n.role = role;
    n.inputs = {in};
    Shape s = node(in).out_shape;
    n.attrs.in_ch = static_cast<int>(s.c * s.h * s.w);
    n.attrs.out_ch = out_features;
    n.attrs.bias = true;
    int id = push(n);
    auto& p = params_[static_cast<size_t>(id)];
    p.weight = Tensor(Shape{out_features, n.attrs.in_ch, 1, 1});
    p.bias = Tensor(Shape{1, out_features, 1, 1});
    return id;
}

int Graph::add_softmax_cross_entropy(int logits, int labels, const std::string& name) {
    Node n;
    n.kind = NodeKind::SoftmaxCrossEntropy;
    n.name = name;
    n.role = "loss";
    n.inputs = {logits, labels};
    int id = push(n);
    loss_node_ = id;
    return id;
}

std::vector<std::pair<std::string, Tensor*>> Graph::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& n : nodes_) {
        auto& p = params_[static_cast<size_t>(n.id)];
        if (!p.weight.empty()) out.emplace_back(n.name + ".weight", &p.weight);
        if (!p.bias.empty()) out.emplace_back(n.name + ".bias", &p.bias);
        if (!p.gamma.empty()) out.emplace_back(n.name + ".gamma", &p.gamma);
        if (!p.beta.empty()) out.emplace_back(n.name + ".beta", &p.beta);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Graph::named_state() {
    auto out = named_parameters();
    for (auto& n : nodes_) {
        auto& p = params_[static_cast<size_t>(n.id)];
        if (!p.running_mean.empty()) out.emplace_back(n.name + ".running_mean", &p.running_mean);
        if (!p.running_var.empty()) out.emplace_back(n.name + ".running_var", &p.running_var);
    }
    return out;
}

void Graph::init_parameters(Rng& rng, bool glorot) {
    for (auto& n : nodes_) {
        auto& p = params_[static_cast<size_t>(n.id)];
        if (p.weight.empty()) continue;
        int64_t fan_in, fan_out;
        if (n.kind == NodeKind::Linear) {
            fan_in = n.attrs.in_ch;
            fan_out = n.attrs.out_ch;
        } else {
            fan_in = static_cast<int64_t>(n.attrs.in_ch) * n.attrs.kernel * n.attrs.kernel;
            fan_out = static_cast<int64_t>(n.attrs.out_ch) * n.attrs.kernel * n.attrs.kernel;
        }
        double stddev = glorot ? std::sqrt(2.0 / static_cast<double>(fan_in + fan_out))
                               : std::sqrt(2.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < p.weight.numel(); ++i)
            p.weight[i] = static_cast<float>(rng.normal(0.0, stddev));
        if (!p.bias.empty()) p.bias.fill(0.0f);
    }
}

void Graph::validate_shapes() const {
    for (const auto& n : nodes_) {
        Shape s = infer_shape(n);
        SOFAR_CHECK_SHAPE(s == n.out_shape, "node '" + n.name + "': stored shape " +
                                                n.out_shape.str() + " != inferred " + s.str());
    }
}

}  // namespace sofar
