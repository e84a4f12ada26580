#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sofar/archgen.hpp"
#include "sofar/graph.hpp"

namespace sofar {

struct LayerCost {
    std::string name;
    std::string kind;
    bool binary = false;
    int64_t params = 0;        // conv/linear weight elements
    int64_t aux_params = 0;    // batchnorm affine+stats, biases (always float)
    int64_t mults = 0;         // multiplications for one input sample
};

// Storage is measured in bits: 32 per float parameter, 1 per binary
// parameter. Compute is float multiplications plus binary multiplications
// divided by 64 (XNOR/popcount word width). The derived scales E are
// recomputable from the latent weights and excluded.
struct ComplexityReport {
    int64_t float_param_count = 0;     // conv/linear weights kept full precision
    int64_t binary_param_count = 0;    // binary conv weights
    int64_t aux_float_param_count = 0; // batchnorm affine+stats and biases
    int64_t float_mults = 0;
    int64_t binary_mults = 0;
    std::vector<LayerCost> layers;

    // weight storage, the quantity the printed tables report
    int64_t param_bits() const { return 32 * float_param_count + binary_param_count; }
    // weight storage including batchnorm/bias bookkeeping
    int64_t param_bits_with_aux() const { return param_bits() + 32 * aux_float_param_count; }
    double flops() const {
        return static_cast<double>(float_mults) + static_cast<double>(binary_mults) / 64.0;
    }
};

// Walks the graph once and fills both the storage and the compute fields.
ComplexityReport analyze(const Graph& g);

ComplexityReport param_bits(const Graph& g);                  // storage fields
ComplexityReport flops(const Graph& g);                       // compute fields

std::string report_table(const ComplexityReport& r);          // aligned text table
std::string report_csv(const ComplexityReport& r);            // per-layer CSV
std::string report_json(const ComplexityReport& r);

struct GoldenRow {
    std::string arch;
    int input_resolution = 224;
    double mbit = 0.0;   // printed parameter storage, Mbit
    double flops = 0.0;  // printed multiply count
};

// The published complexity numbers these generators are expected to
// reproduce within +-5%.
const std::vector<GoldenRow>& golden_table();

struct GoldenCheck {
    GoldenRow row;
    double got_mbit = 0.0;
    double got_flops = 0.0;
    double mbit_err = 0.0;   // relative
    double flops_err = 0.0;  // relative
    bool pass = false;
};

GoldenCheck check_golden(const GoldenRow& row);

// Largest base channel count (>= 8) whose metric stays within the reference
// budget. Monotone integer search.
enum class BudgetMetric { ParamBits, Flops };
ArchSpec scale_channels(const ArchSpec& arch, const ComplexityReport& reference,
                        BudgetMetric metric);

}  // namespace sofar
