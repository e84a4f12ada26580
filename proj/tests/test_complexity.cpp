#include <doctest.h>

#include <cstdio>

#include "sofar/complexity.hpp"

using namespace sofar;

namespace {

Graph single_conv_graph(Precision prec, int hw_in = 8, int kernel = 3, int pad = 1) {
    Graph g;
    int in = g.add_input(Shape{1, 16, hw_in, hw_in}, "x");
    int conv = g.add_conv2d(in, 16, kernel, 1, pad, prec, "conv", "block");
    g.set_output_node(conv);
    return g;
}

}  // namespace

TEST_CASE("single conv storage and compute counts") {
    // binary 3x3, 16 -> 16: 2304 one-bit parameters
    ComplexityReport rb = analyze(single_conv_graph(Precision::Binary));
    CHECK(rb.binary_param_count == 2304);
    CHECK(rb.float_param_count == 0);
    CHECK(rb.param_bits() == 2304);

    // same conv in full precision: x32
    ComplexityReport rf = analyze(single_conv_graph(Precision::Full));
    CHECK(rf.float_param_count == 2304);
    CHECK(rf.param_bits() == 73728);

    // on an 8x8 output map: 2304 * 64 float multiplications
    CHECK(rf.float_mults == 147456);
    CHECK(rf.flops() == doctest::Approx(147456.0));
    // binarized: divided by exactly 64
    CHECK(rb.binary_mults == 147456);
    CHECK(rb.flops() == doctest::Approx(2304.0));

    // binarizing divides the bit contribution by exactly 32
    CHECK(rf.param_bits() == 32 * rb.param_bits());
}

TEST_CASE("report decomposition is exact") {
    ArchSpec spec = parse_arch_name("RF-c3d4 ResNet21(50)", 32);
    ComplexityReport r = analyze(assemble_network(spec));
    int64_t fp = 0, bp = 0, fm = 0, bm = 0, aux = 0;
    for (const auto& l : r.layers) {
        (l.binary ? bp : fp) += l.params;
        (l.binary ? bm : fm) += l.mults;
        aux += l.aux_params;
    }
    CHECK(fp == r.float_param_count);
    CHECK(bp == r.binary_param_count);
    CHECK(fm == r.float_mults);
    CHECK(bm == r.binary_mults);
    CHECK(aux == r.aux_float_param_count);
}

TEST_CASE("golden complexity table within +-5%") {
    for (const auto& row : golden_table()) {
        GoldenCheck c = check_golden(row);
        std::printf("%-28s @%3d  Mbit %6.2f (want %6.2f, %+5.2f%%)  Flops %9.4g (want %9.4g, "
                    "%+5.2f%%)  %s\n",
                    row.arch.c_str(), row.input_resolution, c.got_mbit, row.mbit,
                    100.0 * (c.got_mbit - row.mbit) / row.mbit, c.got_flops, row.flops,
                    100.0 * (c.got_flops - row.flops) / row.flops, c.pass ? "ok" : "MISS");
        if (!c.pass) {
            // per-layer diff for any miss
            ArchSpec spec = parse_arch_name(row.arch, row.input_resolution);
            std::printf("%s\n", report_table(analyze(assemble_network(spec))).c_str());
        }
        CHECK(c.pass);
    }
}

TEST_CASE("metrics are monotone in base channels and block count") {
    ArchSpec spec = parse_arch_name("RF-c3d4 ResNet21(50)", 32);
    spec.named_depth = 0;
    auto measure = [&](int base) {
        ArchSpec s = spec;
        s.base_channels = base;
        ComplexityReport r = analyze(assemble_network(s));
        return std::pair{r.param_bits(), r.flops()};
    };
    auto [bits_prev, flops_prev] = measure(8);
    for (int b : {12, 16, 24, 40}) {
        auto [bits, flops] = measure(b);
        CHECK(bits > bits_prev);
        CHECK(flops > flops_prev);
        bits_prev = bits;
        flops_prev = flops;
    }

    ArchSpec more_blocks = spec;
    more_blocks.stage_blocks = {2, 2, 3, 2};
    ComplexityReport r1 = analyze(assemble_network(spec));
    ComplexityReport r9 = analyze(assemble_network(more_blocks));
    CHECK(r9.param_bits() > r1.param_bits());
    CHECK(r9.flops() > r1.flops());
}

TEST_CASE("channel scaling against a reference budget") {
    // the published RF-c3d4 ResNet21 was scaled to the Bi-Real ResNet18(64)
    // storage budget: the largest feasible base is 53
    ArchSpec baseline = parse_arch_name("Bi-Real ResNet18(64)", 224);
    ComplexityReport budget = analyze(assemble_network(baseline));

    ArchSpec target = parse_arch_name("RF-c3d4 ResNet21(53)", 224);
    ArchSpec scaled = scale_channels(target, budget, BudgetMetric::ParamBits);
    CHECK(scaled.base_channels >= 51);
    CHECK(scaled.base_channels <= 55);
    CHECK(scaled.base_channels == 53);

    // doubling the budget strictly increases the feasible channel count
    ComplexityReport doubled = budget;
    doubled.float_param_count *= 2;
    doubled.binary_param_count *= 2;
    ArchSpec scaled2 = scale_channels(target, doubled, BudgetMetric::ParamBits);
    CHECK(scaled2.base_channels > scaled.base_channels);

    // infeasible budget
    ComplexityReport tiny;
    tiny.float_param_count = 100;
    CHECK_THROWS_AS(scale_channels(target, tiny, BudgetMetric::ParamBits), Error);

    // flops metric is supported and monotone as well
    ArchSpec by_flops = scale_channels(target, budget, BudgetMetric::Flops);
    CHECK(by_flops.base_channels >= scaled.base_channels);
}

TEST_CASE("report renderers include every layer") {
    ArchSpec spec = parse_arch_name("RF-c3d4 ResNet21(50)", 32);
    ComplexityReport r = analyze(assemble_network(spec));
    std::string table = report_table(r);
    std::string csv = report_csv(r);
    CHECK(table.find("stem.conv") != std::string::npos);
    CHECK(table.find("fc") != std::string::npos);
    CHECK(csv.find("layer,kind,precision,params,aux_params,mults") == 0);
    size_t rows = 0;
    for (char ch : csv) rows += ch == '\n';
    CHECK(rows == r.layers.size() + 1);
    std::string json = report_json(r);
    CHECK(json.find("\"param_bits\"") != std::string::npos);
}
