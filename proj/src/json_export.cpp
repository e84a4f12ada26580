#include "sofar/json_export.hpp"

#include <json.hpp>

namespace sofar {

using nlohmann::json;

std::string graph_to_json(const Graph& g) {
    json nodes = json::array();
    for (const auto& n : g.nodes()) {
        json jn;
        jn["id"] = n.id;
        jn["kind"] = node_kind_name(n.kind);
        jn["name"] = n.name;
        if (!n.role.empty()) jn["role"] = n.role;
        jn["inputs"] = n.inputs;
        jn["shape"] = {n.out_shape.n, n.out_shape.c, n.out_shape.h, n.out_shape.w};
        jn["precision"] = n.precision == Precision::Binary ? "binary" : "full";
        if (n.residual_add) jn["residual"] = true;
        switch (n.kind) {
            case NodeKind::Conv2d:
            case NodeKind::BinConv2d:
                jn["kernel"] = n.attrs.kernel;
                jn["stride"] = n.attrs.stride;
                jn["padding"] = n.attrs.padding;
                jn["out_channels"] = n.attrs.out_ch;
                jn["scale_mode"] =
                    n.attrs.scale_mode == ScaleMode::PerFilter ? "per_filter" : "per_layer";
                break;
            case NodeKind::MaxPool:
            case NodeKind::AvgPool:
                jn["kernel"] = n.attrs.kernel;
                jn["stride"] = n.attrs.stride;
                jn["padding"] = n.attrs.padding;
                break;
            case NodeKind::Linear:
                jn["out_features"] = n.attrs.out_ch;
                break;
            case NodeKind::BatchNorm:
                jn["eps"] = n.attrs.eps;
                jn["momentum"] = n.attrs.momentum;
                break;
            default:
                break;
        }
        nodes.push_back(std::move(jn));
    }
    json doc;
    doc["nodes"] = std::move(nodes);
    doc["output"] = g.output_node();
    if (g.loss_node() >= 0) doc["loss"] = g.loss_node();
    return doc.dump(2) + "\n";
}

Graph graph_from_json(const std::string& text) {
    json doc = json::parse(text);
    Graph g;
    for (const auto& jn : doc.at("nodes")) {
        const NodeKind kind = node_kind_from_name(jn.at("kind").get<std::string>());
        const std::string name = jn.value("name", "");
        const std::string role = jn.value("role", "");
        std::vector<int> inputs = jn.value("inputs", std::vector<int>{});
        int id = -1;
        switch (kind) {
            case NodeKind::Input: {
                auto s = jn.at("shape");
                id = g.add_input(Shape{s[0], s[1], s[2], s[3]}, name, role);
                break;
            }
            case NodeKind::Conv2d:
            case NodeKind::BinConv2d: {
                const Precision prec =
                    kind == NodeKind::BinConv2d ? Precision::Binary : Precision::Full;
                id = g.add_conv2d(inputs.at(0), jn.at("out_channels"), jn.at("kernel"),
                                  jn.at("stride"), jn.at("padding"), prec, name, role);
                if (jn.value("scale_mode", "per_filter") == std::string("per_layer"))
                    g.node(id).attrs.scale_mode = ScaleMode::PerLayer;
                break;
            }
            case NodeKind::BatchNorm:
                id = g.add_batchnorm(inputs.at(0), name, role);
                g.node(id).attrs.eps = jn.value("eps", 1e-5f);
                g.node(id).attrs.momentum = jn.value("momentum", 0.9f);
                break;
            case NodeKind::ReLU: id = g.add_relu(inputs.at(0), name); break;
            case NodeKind::Tanh: id = g.add_tanh(inputs.at(0), name); break;
            case NodeKind::Sign: id = g.add_sign(inputs.at(0), name); break;
            case NodeKind::Add:
                id = g.add_add(inputs.at(0), inputs.at(1), name, jn.value("residual", false));
                break;
            case NodeKind::Concat: id = g.add_concat(inputs, name); break;
            case NodeKind::JoinMean: id = g.add_join_mean(inputs, name); break;
            case NodeKind::MaxPool:
                id = g.add_maxpool(inputs.at(0), jn.at("kernel"), jn.at("stride"),
                                   jn.at("padding"), name);
                break;
            case NodeKind::AvgPool:
                id = g.add_avgpool(inputs.at(0), jn.at("kernel"), jn.at("stride"), name);
                break;
            case NodeKind::GlobalAvgPool: id = g.add_global_avgpool(inputs.at(0), name); break;
            case NodeKind::Linear:
                id = g.add_linear(inputs.at(0), jn.at("out_features"), name, role);
                break;
            case NodeKind::SoftmaxCrossEntropy:
                id = g.add_softmax_cross_entropy(inputs.at(0), inputs.at(1), name);
                break;
        }
        SOFAR_CHECK(id == jn.at("id").get<int>(),
                    "graph json: node ids are not a topological sequence");
        g.node(id).role = role;
    }
    if (doc.contains("output")) g.set_output_node(doc["output"]);
    if (doc.contains("loss")) g.set_loss_node(doc["loss"]);
    g.validate_shapes();
    return g;
}

}  // namespace sofar
