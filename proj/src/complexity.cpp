#include "sofar/complexity.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace sofar {

ComplexityReport analyze(const Graph& g) {
    ComplexityReport r;
    for (const auto& n : g.nodes()) {
        LayerCost lc;
        lc.name = n.name;
        lc.kind = node_kind_name(n.kind);
        switch (n.kind) {
            case NodeKind::Conv2d:
            case NodeKind::BinConv2d: {
                const auto& a = n.attrs;
                lc.binary = n.kind == NodeKind::BinConv2d;
                lc.params = static_cast<int64_t>(a.out_ch) * a.in_ch * a.kernel * a.kernel;
                lc.mults = lc.params * n.out_shape.h * n.out_shape.w;
                break;
            }
            case NodeKind::Linear: {
                lc.params = static_cast<int64_t>(n.attrs.out_ch) * n.attrs.in_ch;
                lc.aux_params = n.attrs.bias ? n.attrs.out_ch : 0;
                lc.mults = lc.params;
                break;
            }
            case NodeKind::BatchNorm:
                lc.aux_params = 4 * static_cast<int64_t>(n.attrs.out_ch);  // affine + stats
                break;
            default:
                continue;  // elementwise/pool layers carry no multiplications
        }
        if (lc.params == 0 && lc.aux_params == 0) continue;
        if (lc.binary) {
            r.binary_param_count += lc.params;
            r.binary_mults += lc.mults;
        } else {
            r.float_param_count += lc.params;
            r.float_mults += lc.mults;
        }
        r.aux_float_param_count += lc.aux_params;
        r.layers.push_back(std::move(lc));
    }
    return r;
}

ComplexityReport param_bits(const Graph& g) { return analyze(g); }
ComplexityReport flops(const Graph& g) { return analyze(g); }

std::string report_table(const ComplexityReport& r) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-34s %-10s %-4s %14s %16s\n", "layer", "kind", "prec",
                  "params", "mults");
    os << buf;
    for (const auto& l : r.layers) {
        std::snprintf(buf, sizeof(buf), "%-34s %-10s %-4s %14lld %16lld\n", l.name.c_str(),
                      l.kind.c_str(), l.binary ? "bin" : "fp32",
                      static_cast<long long>(l.params), static_cast<long long>(l.mults));
        os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "totals: float params %lld, binary params %lld, aux float %lld\n",
                  static_cast<long long>(r.float_param_count),
                  static_cast<long long>(r.binary_param_count),
                  static_cast<long long>(r.aux_float_param_count));
    os << buf;
    std::snprintf(buf, sizeof(buf), "storage: %.2f Mbit (%.2f Mbit with batchnorm/bias)\n",
                  static_cast<double>(r.param_bits()) / 1e6,
                  static_cast<double>(r.param_bits_with_aux()) / 1e6);
    os << buf;
    std::snprintf(buf, sizeof(buf), "compute: %.4g Flops (%lld float + %lld binary mults)\n",
                  r.flops(), static_cast<long long>(r.float_mults),
                  static_cast<long long>(r.binary_mults));
    os << buf;
    return os.str();
}

std::string report_csv(const ComplexityReport& r) {
    std::ostringstream os;
    os << "layer,kind,precision,params,aux_params,mults\n";
    for (const auto& l : r.layers)
        os << l.name << ',' << l.kind << ',' << (l.binary ? "binary" : "float") << ',' << l.params
           << ',' << l.aux_params << ',' << l.mults << '\n';
    return os.str();
}

std::string report_json(const ComplexityReport& r) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"float_params\": " << r.float_param_count << ",\n";
    os << "  \"binary_params\": " << r.binary_param_count << ",\n";
    os << "  \"aux_float_params\": " << r.aux_float_param_count << ",\n";
    os << "  \"param_bits\": " << r.param_bits() << ",\n";
    os << "  \"float_mults\": " << r.float_mults << ",\n";
    os << "  \"binary_mults\": " << r.binary_mults << ",\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", r.flops());
    os << "  \"flops\": " << buf << "\n";
    os << "}\n";
    return os.str();
}

const std::vector<GoldenRow>& golden_table() {
    static const std::vector<GoldenRow> table = {
        // ImageNet, 224x224
        {"Bi-Real ResNet18(64)", 224, 33.18, 1.64e8},
        {"RF-c3d4 ResNet21(53)", 224, 32.63, 1.46e8},
        {"RF-c4d8 ResNet37(41)", 224, 32.24, 1.28e8},
        {"RF-c5d16 ResNet69(31)", 224, 32.16, 1.14e8},
        {"Bi-Real ResNet34(64)", 224, 43.28, 1.93e8},
        {"RF-c3d4 ResNet41(48)", 224, 42.61, 1.64e8},
        {"RF-c4d8 ResNet77(35)", 224, 41.53, 1.44e8},
        {"BinaryDenseNet51(32)", 224, 34.80, 2.70e8},
        {"DRF-c2d2 DenseNet51(53)", 224, 34.53, 2.97e8},
        {"BinaryDenseNet69(32)", 224, 41.95, 2.82e8},
        {"DRF-c2d2 DenseNet69(48)", 224, 41.52, 3.06e8},
        // CIFAR-100, 32x32
        {"Bi-Real ResNet18(64)", 32, 18.18, 1.67e7},
        {"RF-c3d4 ResNet21(50)", 32, 18.07, 1.53e7},
        {"RF-c4d8 ResNet37(36)", 32, 17.57, 1.42e7},
        {"RF-c5d16 ResNet69(26)", 32, 17.63, 1.38e7},
        {"Bi-Real ResNet34(64)", 32, 28.28, 2.61e7},
        {"RF-c3d4 ResNet41(45)", 32, 27.64, 2.28e7},
        {"RF-c4d8 ResNet77(32)", 32, 27.94, 2.24e7},
        {"RF-c5d16 ResNet149(22)", 32, 26.35, 2.08e7},
        {"BinaryDenseNet51(32)", 32, 17.65, 5.13e7},
        {"DRF-c2d2 DenseNet51(48)", 32, 17.51, 5.32e7},
        {"DRF-c3d4 DenseNet97(38)", 32, 17.32, 5.46e7},
        {"BinaryDenseNet69(32)", 32, 23.70, 5.50e7},
        {"DRF-c2d2 DenseNet69(44)", 32, 23.33, 5.67e7},
        {"DRF-c3d4 DenseNet133(36)", 32, 23.70, 6.02e7},
    };
    return table;
}

GoldenCheck check_golden(const GoldenRow& row) {
    GoldenCheck c;
    c.row = row;
    ArchSpec spec = parse_arch_name(row.arch, row.input_resolution);
    Graph g = assemble_network(spec);
    ComplexityReport r = analyze(g);
    c.got_mbit = static_cast<double>(r.param_bits()) / 1e6;
    c.got_flops = r.flops();
    c.mbit_err = std::fabs(c.got_mbit - row.mbit) / row.mbit;
    c.flops_err = std::fabs(c.got_flops - row.flops) / row.flops;
    c.pass = c.mbit_err <= 0.05 && c.flops_err <= 0.05;
    return c;
}

ArchSpec scale_channels(const ArchSpec& arch, const ComplexityReport& reference,
                        BudgetMetric metric) {
    auto measure = [&](int base) {
        ArchSpec s = arch;
        s.base_channels = base;
        s.named_depth = 0;  // channel scaling must not trip the depth check
        Graph g = assemble_network(s);
        ComplexityReport r = analyze(g);
        return metric == BudgetMetric::ParamBits ? static_cast<double>(r.param_bits())
                                                 : r.flops();
    };
    const double budget = metric == BudgetMetric::ParamBits
                              ? static_cast<double>(reference.param_bits())
                              : reference.flops();
    SOFAR_CHECK(measure(8) <= budget,
                "scale_channels: budget is below the smallest feasible network (8 channels)");
    int lo = 8, hi = 8;
    while (measure(hi * 2) <= budget) {
        hi *= 2;
        lo = hi;
        if (hi > (1 << 16)) break;
    }
    hi *= 2;
    while (lo + 1 < hi) {
        int mid = lo + (hi - lo) / 2;
        if (measure(mid) <= budget)
            lo = mid;
        else
            hi = mid;
    }
    ArchSpec out = arch;
    out.base_channels = lo;
    out.named_depth = 0;
    out.name.clear();
    return out;
}

}  // namespace sofar
