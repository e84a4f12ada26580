#include "sofar/archgen.hpp"

#include <algorithm>
#include <regex>

namespace sofar {

const char* family_name(Family f) {
    switch (f) {
        case Family::F: return "F";
        case Family::RF: return "RF";
        case Family::DF: return "DF";
        case Family::DRF: return "DRF";
        case Family::BiReal: return "Bi-Real";
        case Family::BinaryDenseNet: return "BinaryDenseNet";
    }
    return "?";
}

namespace {

enum class ResidualMode { None, All, IffEqual };

struct UnitCfg {
    UnitStyle style = UnitStyle::Plain;
    int kernel = 3, stride = 1, padding = 1;
    ScaleMode scale_mode = ScaleMode::PerFilter;
    bool drop_relu = false;  // dense families omit ReLU in the pretrain variant
};

// Appends fractal columns into a graph, collapsing neighboring joins by
// construction: the recursion returns the column tails that the enclosing
// join merges, so an F_c block ends in a single join with fan-in c.
struct BlockBuilder {
    Graph* g = nullptr;
    UnitCfg cfg;
    ResidualMode rmode = ResidualMode::None;
    int out_ch = 0;
    std::string prefix;
    std::string role = "block";
    std::vector<int> convs, joins, res_adds;
    int unit_idx = 0;
    int join_idx = 0;

    int conv_unit(int in, int stride_override = -1) {
        const int cin = static_cast<int>(g->node(in).out_shape.c);
        const int stride = stride_override > 0 ? stride_override : cfg.stride;
        bool residual = false;
        if (rmode == ResidualMode::All) {
            SOFAR_CHECK(cin == out_ch, "residual conv at '" + prefix +
                                           "' needs matching channels, got " +
                                           std::to_string(cin) + " -> " + std::to_string(out_ch));
            residual = true;
        } else if (rmode == ResidualMode::IffEqual) {
            residual = cin == out_ch;
        }
        const std::string idx = std::to_string(unit_idx++);
        int x = in;
        int conv;
        switch (cfg.style) {
            case UnitStyle::Plain:
                conv = g->add_conv2d(x, out_ch, cfg.kernel, stride, cfg.padding, Precision::Full,
                                     prefix + "conv" + idx, role);
                x = conv;
                break;
            case UnitStyle::Binary:
                x = g->add_sign(x, prefix + "sign" + idx);
                conv = g->add_conv2d(x, out_ch, cfg.kernel, stride, cfg.padding,
                                     Precision::Binary, prefix + "conv" + idx, role);
                g->node(conv).attrs.scale_mode = cfg.scale_mode;
                x = g->add_batchnorm(conv, prefix + "bn" + idx, role);
                break;
            case UnitStyle::FullPretrain:
                x = g->add_tanh(x, prefix + "tanh" + idx);
                conv = g->add_conv2d(x, out_ch, cfg.kernel, stride, cfg.padding, Precision::Full,
                                     prefix + "conv" + idx, role);
                x = conv;
                if (!cfg.drop_relu) x = g->add_relu(x, prefix + "relu" + idx);
                x = g->add_batchnorm(x, prefix + "bn" + idx, role);
                break;
        }
        convs.push_back(conv);
        if (residual) {
            x = g->add_add(x, in, prefix + "res" + idx, /*residual=*/true);
            res_adds.push_back(x);
        }
        return x;
    }

    int join(const std::vector<int>& tails) {
        if (tails.size() == 1) return tails[0];
        int j = g->add_join_mean(tails, prefix + "join" + std::to_string(join_idx++));
        joins.push_back(j);
        return j;
    }

    // Column tails of F_c applied to `in`; the caller owns the output join.
    std::vector<int> columns(int in, int c) {
        if (c == 1) return {conv_unit(in)};
        std::vector<int> tails_a = columns(in, c - 1);
        int a = join(tails_a);
        std::vector<int> tails = columns(a, c - 1);
        tails.push_back(conv_unit(in));
        return tails;
    }

    int build(int in, int c) { return join(columns(in, c)); }
};

BlockGraph make_block(const FractalSpec& spec, ResidualMode rmode) {
    SOFAR_CHECK(spec.columns >= 1, "fractal block needs columns >= 1");
    BlockGraph b;
    b.input = b.graph.add_input(Shape{1, spec.channels, 8, 8}, "in");
    BlockBuilder bb;
    bb.g = &b.graph;
    bb.cfg = UnitCfg{spec.style, spec.kernel, spec.stride, spec.padding, spec.scale_mode, false};
    bb.rmode = rmode;
    bb.out_ch = spec.channels;
    b.output = bb.build(b.input, spec.columns);
    b.graph.set_output_node(b.output);
    b.conv_ids = bb.convs;
    b.join_ids = bb.joins;
    b.residual_add_ids = bb.res_adds;
    return b;
}

std::vector<int> distribute_blocks(int total, int stages) {
    // Known layouts first; otherwise spread evenly, extra blocks to the
    // third stage, then second, fourth, first.
    if (stages == 4) {
        if (total == 4) return {1, 1, 1, 1};
        if (total == 9) return {2, 2, 3, 2};
        if (total == 23) return {6, 6, 6, 5};
        if (total == 32) return {6, 8, 12, 6};
        if (total == 46) return {12, 12, 12, 10};
        if (total == 64) return {12, 16, 24, 12};
        if (total == 16) return {4, 4, 4, 4};
    }
    std::vector<int> out(static_cast<size_t>(stages), total / stages);
    int rem = total % stages;
    const int order[4] = {2, 1, 3, 0};
    for (int i = 0; i < rem && i < 4; ++i) out[static_cast<size_t>(order[i] % stages)] += 1;
    return out;
}

std::vector<int> default_transitions(Family fam, int depth, bool imagenet) {
    if (fam == Family::BinaryDenseNet) {
        if (depth == 51) return {176, 224, 256};
        if (depth == 69) return imagenet ? std::vector<int>{160, 208, 240}
                                         : std::vector<int>{144, 192, 224};
    }
    return {192, 224, 256};
}

}  // namespace

BlockGraph build_fractal(const FractalSpec& spec) {
    SOFAR_CHECK(!spec.residual, "build_fractal expects shortcut_mode = none");
    return make_block(spec, ResidualMode::None);
}

BlockGraph build_residual_fractal(const FractalSpec& spec) {
    SOFAR_CHECK(spec.residual, "build_residual_fractal expects shortcut_mode = residual");
    return make_block(spec, ResidualMode::All);
}

BlockGraph build_dense_fractal_block(int columns, int growth, int input_channels,
                                     UnitStyle style) {
    SOFAR_CHECK(columns >= 1 && growth >= 1 && input_channels >= 1,
                "dense fractal block needs columns, growth and input channels >= 1");
    BlockGraph b;
    b.input = b.graph.add_input(Shape{1, input_channels, 8, 8}, "in");
    BlockBuilder bb;
    bb.g = &b.graph;
    bb.cfg.style = style;
    bb.cfg.drop_relu = true;
    bb.rmode = ResidualMode::IffEqual;
    bb.out_ch = growth;
    int joined = bb.build(b.input, columns);
    b.output = b.graph.add_concat({joined, b.input}, "cat");
    b.graph.set_output_node(b.output);
    b.conv_ids = bb.convs;
    b.join_ids = bb.joins;
    b.residual_add_ids = bb.res_adds;
    return b;
}

Graph assemble_network(const ArchSpec& spec, int batch) {
    SOFAR_CHECK(!spec.stage_blocks.empty(), "arch spec has no stages");
    SOFAR_CHECK(spec.base_channels >= 1, "arch spec needs base channels / growth >= 1");
    Graph g;
    const int res = spec.input_resolution;
    int x = g.add_input(Shape{batch, 3, res, res}, "data");

    // stem, always full precision
    const bool dense = spec.dense_family();
    const int stem_ch = dense ? (spec.stem_channels > 0 ? spec.stem_channels : 64)
                              : spec.base_channels;
    if (spec.imagenet_head) {
        x = g.add_conv2d(x, stem_ch, 7, 2, 3, Precision::Full, "stem.conv", "stem");
        x = g.add_relu(x, "stem.relu");
        x = g.add_batchnorm(x, "stem.bn", "stem");
        x = g.add_maxpool(x, 3, 2, 1, "stem.pool");
    } else {
        x = g.add_conv2d(x, stem_ch, 3, 1, 1, Precision::Full, "stem.conv", "stem");
        x = g.add_relu(x, "stem.relu");
        x = g.add_batchnorm(x, "stem.bn", "stem");
    }

    const int stages = static_cast<int>(spec.stage_blocks.size());
    UnitCfg unit_cfg;
    unit_cfg.style = spec.style;
    unit_cfg.scale_mode = spec.scale_mode;
    unit_cfg.drop_relu = dense;

    for (int s = 0; s < stages; ++s) {
        const std::string stage_prefix = "stage" + std::to_string(s + 1) + ".";
        if (spec.family == Family::RF || spec.family == Family::F) {
            const int ch = spec.base_channels << s;
            for (int bi = 0; bi < spec.stage_blocks[static_cast<size_t>(s)]; ++bi) {
                BlockBuilder bb;
                bb.g = &g;
                bb.cfg = unit_cfg;
                bb.rmode =
                    spec.family == Family::RF ? ResidualMode::All : ResidualMode::None;
                bb.out_ch = ch;
                bb.prefix = stage_prefix + "block" + std::to_string(bi) + ".";
                x = bb.build(x, spec.columns);
            }
        } else if (spec.family == Family::BiReal) {
            const int ch = spec.base_channels << s;
            for (int u = 0; u < spec.stage_blocks[static_cast<size_t>(s)]; ++u) {
                const std::string up = stage_prefix + "unit" + std::to_string(u) + ".";
                const int cin = static_cast<int>(g.node(x).out_shape.c);
                const int stride = (s > 0 && u == 0) ? 2 : 1;
                int shortcut = x;
                if (cin != ch || stride != 1) {
                    // full-precision downsampling path
                    shortcut = g.add_conv2d(x, ch, 1, stride, 0, Precision::Full,
                                            up + "down.conv", "transition");
                    shortcut = g.add_batchnorm(shortcut, up + "down.bn", "transition");
                }
                int m = x;
                if (spec.style == UnitStyle::Binary) {
                    m = g.add_sign(m, up + "sign");
                    int conv = g.add_conv2d(m, ch, 3, stride, 1, Precision::Binary, up + "conv",
                                            "block");
                    g.node(conv).attrs.scale_mode = spec.scale_mode;
                    m = g.add_batchnorm(conv, up + "bn", "block");
                } else {
                    m = g.add_tanh(m, up + "tanh");
                    m = g.add_conv2d(m, ch, 3, stride, 1, Precision::Full, up + "conv", "block");
                    m = g.add_relu(m, up + "relu");
                    m = g.add_batchnorm(m, up + "bn", "block");
                }
                x = g.add_add(m, shortcut, up + "res", /*residual=*/true);
            }
        } else {
            // dense families: BinaryDenseNet conv units or DRF/DF fractal blocks
            const int k = spec.base_channels;
            for (int bi = 0; bi < spec.stage_blocks[static_cast<size_t>(s)]; ++bi) {
                const std::string bp = stage_prefix + "block" + std::to_string(bi) + ".";
                int new_features;
                if (spec.family == Family::BinaryDenseNet) {
                    int m = x;
                    if (spec.style == UnitStyle::Binary) {
                        m = g.add_sign(m, bp + "sign");
                        int conv = g.add_conv2d(m, k, 3, 1, 1, Precision::Binary, bp + "conv",
                                                "block");
                        g.node(conv).attrs.scale_mode = spec.scale_mode;
                        m = g.add_batchnorm(conv, bp + "bn", "block");
                    } else {
                        m = g.add_tanh(m, bp + "tanh");
                        m = g.add_conv2d(m, k, 3, 1, 1, Precision::Full, bp + "conv", "block");
                        m = g.add_batchnorm(m, bp + "bn", "block");
                    }
                    new_features = m;
                } else {
                    BlockBuilder bb;
                    bb.g = &g;
                    bb.cfg = unit_cfg;
                    bb.rmode = spec.family == Family::DRF ? ResidualMode::IffEqual
                                                          : ResidualMode::None;
                    bb.out_ch = k;
                    bb.prefix = bp;
                    new_features = bb.build(x, spec.columns);
                }
                x = g.add_concat({new_features, x}, bp + "cat");
            }
        }
        if (s + 1 < stages) {
            const std::string tp = "trans" + std::to_string(s + 1) + ".";
            if (dense) {
                SOFAR_CHECK(static_cast<int>(spec.transition_channels.size()) >= stages - 1,
                            "dense arch needs transition channel plan");
                const int tch = spec.transition_channels[static_cast<size_t>(s)];
                x = g.add_avgpool(x, 2, 2, tp + "pool");
                x = g.add_conv2d(x, tch, 1, 1, 0, Precision::Full, tp + "conv", "transition");
                x = g.add_batchnorm(x, tp + "bn", "transition");
            } else if (spec.family != Family::BiReal) {
                const int tch = spec.base_channels << (s + 1);
                x = g.add_conv2d(x, tch, 1, 2, 0, Precision::Full, tp + "conv", "transition");
                x = g.add_batchnorm(x, tp + "bn", "transition");
            }
        }
    }

    x = g.add_global_avgpool(x, "gap");
    x = g.add_linear(x, spec.num_classes, "fc", "classifier");
    g.set_output_node(x);

    if (spec.named_depth > 0) {
        const int d = count_depth(g);
        SOFAR_CHECK(d == spec.named_depth,
                    "preset drift: '" + spec.name + "' names depth " +
                        std::to_string(spec.named_depth) + " but the assembled graph has " +
                        std::to_string(d));
    }
    return g;
}

ArchSpec parse_arch_name(const std::string& name, int input_resolution, int num_classes) {
    static const std::regex fractal_re(
        R"(^(F|RF|DF|DRF)-c(\d+)d(\d+)\s+(ResNet|DenseNet)(\d+)\((\d+)\)$)");
    static const std::regex bireal_re(R"(^Bi-?[Rr]eal\s+ResNet(\d+)\((\d+)\)$)");
    static const std::regex bdn_re(R"(^BinaryDenseNet(\d+)\((\d+)\)$)");

    ArchSpec spec;
    spec.input_resolution = input_resolution;
    spec.imagenet_head = input_resolution > 64;
    spec.num_classes = num_classes > 0 ? num_classes : (spec.imagenet_head ? 1000 : 100);
    spec.name = name;

    std::smatch m;
    if (std::regex_match(name, m, fractal_re)) {
        const std::string fam = m[1];
        spec.columns = std::stoi(m[2]);
        const int d = std::stoi(m[3]);
        const std::string body = m[4];
        spec.named_depth = std::stoi(m[5]);
        spec.base_channels = std::stoi(m[6]);
        if (spec.columns < 1 || d != (1 << (spec.columns - 1)))
            throw ConfigError("arch name '" + name + "': d must equal 2^(c-1)");
        const bool dense_fam = fam == "DF" || fam == "DRF";
        if (dense_fam != (body == "DenseNet"))
            throw ConfigError("arch name '" + name + "': family does not match body type");
        spec.family = fam == "F"    ? Family::F
                      : fam == "RF" ? Family::RF
                      : fam == "DF" ? Family::DF
                                    : Family::DRF;
        const int per_block = 1 << (spec.columns - 1);
        const int body_depth = spec.named_depth - 5;  // stem + 3 transitions + classifier
        if (body_depth <= 0 || body_depth % per_block != 0)
            throw ConfigError("arch name '" + name + "': depth is not reachable with c=" +
                              std::to_string(spec.columns));
        spec.stage_blocks = distribute_blocks(body_depth / per_block, 4);
        if (dense_fam) {
            spec.stem_channels = 64;
            spec.transition_channels =
                default_transitions(spec.family, spec.named_depth, spec.imagenet_head);
        }
        return spec;
    }
    if (std::regex_match(name, m, bireal_re)) {
        spec.family = Family::BiReal;
        spec.named_depth = std::stoi(m[1]);
        spec.base_channels = std::stoi(m[2]);
        const int convs = spec.named_depth - 2;
        if (convs <= 0 || convs % 2 != 0)
            throw ConfigError("unsupported Bi-Real depth in '" + name + "'");
        spec.stage_blocks = distribute_blocks(convs, 4);
        spec.name = "Bi-Real ResNet" + std::to_string(spec.named_depth) + "(" +
                    std::to_string(spec.base_channels) + ")";
        return spec;
    }
    if (std::regex_match(name, m, bdn_re)) {
        spec.family = Family::BinaryDenseNet;
        spec.named_depth = std::stoi(m[1]);
        spec.base_channels = std::stoi(m[2]);  // growth rate
        spec.stem_channels = 64;
        const int convs = spec.named_depth - 5;
        if (convs <= 0) throw ConfigError("unsupported BinaryDenseNet depth in '" + name + "'");
        spec.stage_blocks = distribute_blocks(convs, 4);
        spec.transition_channels =
            default_transitions(spec.family, spec.named_depth, spec.imagenet_head);
        return spec;
    }
    throw ConfigError("cannot parse arch name '" + name +
                      "'; expected FAMILY-c<n>d<n> (ResNet|DenseNet)<depth>(<channels>), "
                      "Bi-Real ResNet<depth>(<channels>) or BinaryDenseNet<depth>(<channels>)");
}

std::string format_arch_name(const ArchSpec& spec) {
    switch (spec.family) {
        case Family::BiReal:
            return "Bi-Real ResNet" + std::to_string(spec.named_depth) + "(" +
                   std::to_string(spec.base_channels) + ")";
        case Family::BinaryDenseNet:
            return "BinaryDenseNet" + std::to_string(spec.named_depth) + "(" +
                   std::to_string(spec.base_channels) + ")";
        default: {
            const int d = 1 << (spec.columns - 1);
            const bool dense_fam = spec.family == Family::DF || spec.family == Family::DRF;
            return std::string(family_name(spec.family)) + "-c" + std::to_string(spec.columns) +
                   "d" + std::to_string(d) + (dense_fam ? " DenseNet" : " ResNet") +
                   std::to_string(spec.named_depth) + "(" + std::to_string(spec.base_channels) +
                   ")";
        }
    }
}

int count_depth(const Graph& g) {
    std::vector<int> depth(static_cast<size_t>(g.size()), 0);
    for (const auto& n : g.nodes()) {
        int d = 0;
        for (int in : n.inputs) d = std::max(d, depth[static_cast<size_t>(in)]);
        const bool counts = n.kind == NodeKind::Conv2d || n.kind == NodeKind::BinConv2d ||
                            n.kind == NodeKind::Linear;
        depth[static_cast<size_t>(n.id)] = d + (counts ? 1 : 0);
    }
    int out = g.output_node() >= 0 ? g.output_node() : g.size() - 1;
    return depth[static_cast<size_t>(out)];
}

ArchSpec strip_residuals(const ArchSpec& spec) {
    ArchSpec out = spec;
    std::string from, to;
    if (spec.family == Family::RF) {
        out.family = Family::F;
        from = "RF-";
        to = "F-";
    } else if (spec.family == Family::DRF) {
        out.family = Family::DF;
        from = "DRF-";
        to = "DF-";
    } else {
        throw Error("strip_residuals: family " + std::string(family_name(spec.family)) +
                    " has no residual connections to strip");
    }
    if (out.name.rfind(from, 0) == 0) out.name = to + out.name.substr(from.size());
    return out;
}

std::vector<std::string> preset_names() {
    return {
        "Bi-Real ResNet18(64)",      "Bi-Real ResNet34(64)",      "RF-c3d4 ResNet21(53)",
        "RF-c4d8 ResNet37(41)",      "RF-c5d16 ResNet69(31)",     "RF-c3d4 ResNet41(48)",
        "RF-c4d8 ResNet77(35)",      "DRF-c2d2 DenseNet51(53)",   "DRF-c2d2 DenseNet69(48)",
        "BinaryDenseNet51(32)",      "BinaryDenseNet69(32)",      "RF-c3d4 ResNet21(50)",
        "RF-c4d8 ResNet37(36)",      "RF-c5d16 ResNet69(26)",     "RF-c3d4 ResNet41(45)",
        "RF-c4d8 ResNet77(32)",      "RF-c5d16 ResNet149(22)",    "DRF-c2d2 DenseNet51(48)",
        "DRF-c2d2 DenseNet69(44)",   "DRF-c3d4 DenseNet97(38)",   "DRF-c3d4 DenseNet133(36)",
    };
}

}  // namespace sofar
